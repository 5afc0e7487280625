"""Corpus-level BLEU with clipped n-gram precision and brevity penalty.

Scores are on a 0-100 scale. The combination is done in log space::

    log BLEU = min(1 - r/c, 0) + sum_n w_n * log p_n

where p_n pools clipped matches and candidate n-gram totals over the whole
corpus before dividing.
"""

import math
from collections import Counter
from dataclasses import dataclass

from .errors import EmptyCorpus, MalformedLine, UnknownPreset

PRESETS = {
    "bleu1": (1.0, 0.0, 0.0, 0.0),
    "bleu2": (0.5, 0.5, 0.0, 0.0),
    "bleu3": (1 / 3, 1 / 3, 1 / 3, 0.0),
    "bleu4": (0.25, 0.25, 0.25, 0.25),
}


@dataclass(frozen=True)
class BleuConfig:
    weights: tuple = PRESETS["bleu4"]
    smoothing: str = "none"
    epsilon: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not self.weights:
            raise ValueError("need at least one n-gram weight")
        if any(w < 0 or not math.isfinite(w) for w in self.weights) or not any(w > 0 for w in self.weights):
            raise ValueError(f"weights must be non-negative with at least one positive: {self.weights}")
        if self.smoothing not in ("none", "floor"):
            raise ValueError(f"unknown smoothing {self.smoothing!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def max_n(self):
        return len(self.weights)


@dataclass(frozen=True)
class BleuReport:
    score: float
    precisions: tuple
    brevity_penalty: float
    candidate_length: int
    reference_length: int
    matches: tuple = ()
    totals: tuple = ()


def preset(name, smoothing="none"):
    key = str(name).lower().replace("-", "")
    if key in ("1", "2", "3", "4"):
        key = "bleu" + key
    if key not in PRESETS:
        raise UnknownPreset(f"unknown BLEU preset {name!r}; choose from {', '.join(PRESETS)}")
    return BleuConfig(PRESETS[key], smoothing)


def ngrams(tokens, n):
    if n < 1:
        raise ValueError("n must be >= 1")
    tokens = tuple(tokens)
    return Counter(tokens[i : i + n] for i in range(len(tokens) - n + 1))


def modified_precision(candidate, references, n):
    """(clipped matches, candidate n-gram total) for one candidate."""
    counts = ngrams(candidate, n)
    max_ref = Counter()
    for ref in references:
        max_ref |= ngrams(ref, n)
    clipped = sum(min(count, max_ref[g]) for g, count in counts.items())
    return clipped, sum(counts.values())


def brevity_penalty(c, r):
    if c < 1:
        raise ValueError("candidate length must be >= 1")
    if c > r:
        return 1.0
    return math.exp(1.0 - r / c)


def closest_ref_length(candidate_len, references):
    return min((abs(len(ref) - candidate_len), len(ref)) for ref in references)[1]


def corpus_stats(candidates, max_n):
    """Pool (matches, totals, c, r) over ``candidates``, an iterable of
    (candidate tokens, [reference tokens, ...]) pairs."""
    matches = [0] * max_n
    totals = [0] * max_n
    c = r = 0
    n_entries = 0
    for candidate, references in candidates:
        if not references:
            raise ValueError("every candidate needs at least one reference")
        n_entries += 1
        c += len(candidate)
        r += closest_ref_length(len(candidate), references)
        for n in range(1, max_n + 1):
            m, t = modified_precision(candidate, references, n)
            matches[n - 1] += m
            totals[n - 1] += t
    if n_entries == 0:
        raise EmptyCorpus("no candidates to score")
    return matches, totals, c, r


def score_from_stats(matches, totals, c, r, config):
    # an order with no candidate n-grams at all has nothing to mismatch: p_n = 1
    precisions = tuple(m / t if t else 1.0 for m, t in zip(matches, totals))
    if c == 0:
        return BleuReport(0.0, precisions, 0.0, c, r, tuple(matches), tuple(totals))
    bp = brevity_penalty(c, r)
    log_bleu = min(1.0 - r / c, 0.0)
    for w, p in zip(config.weights, precisions):
        if w == 0:
            continue
        if p == 0:
            if config.smoothing == "none":
                return BleuReport(0.0, precisions, bp, c, r, tuple(matches), tuple(totals))
            p = config.epsilon
        log_bleu += w * math.log(p)
    return BleuReport(100.0 * math.exp(log_bleu), precisions, bp, c, r, tuple(matches), tuple(totals))


def bleu_score(candidates, config=None):
    config = config or BleuConfig()
    matches, totals, c, r = corpus_stats(candidates, config.max_n)
    return score_from_stats(matches, totals, c, r, config)


def parse_weights(text):
    """``"1"``..``"4"`` or ``"custom:w1,w2,..."`` -> (label, weights)."""
    if text.startswith("custom:"):
        weights = tuple(float(x) for x in text[len("custom:") :].split(","))
        return "CUSTOM", weights
    cfg = preset(text)
    return f"BLEU-{text[-1]}", cfg.weights


def read_candidates_tsv(text):
    """``image_id<TAB>candidate<TAB>ref1<TAB>ref2...`` -> list of (id, cand, refs)."""
    rows = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) < 3:
            raise MalformedLine(line_no, "expected image id, candidate and at least one reference")
        rows.append((fields[0], fields[1].split(), [f.split() for f in fields[2:]]))
    return rows


def write_candidates_tsv(rows):
    return "".join("\t".join([image_id, " ".join(cand), *(" ".join(r) for r in refs)]) + "\n" for image_id, cand, refs in rows)


def format_table(reports):
    """Render ``{label: (weights, BleuReport)}`` in the N-GRAM / WEIGHTS / SCORE layout."""
    header = f"{'N-GRAM':<8}{'WEIGHTS':<26}{'SCORE':>9}  {'BP':>7} {'c':>6} {'r':>6}  " + " ".join(
        f"{'p' + str(i):>7}" for i in range(1, 5)
    )
    lines = [header]
    for label, (weights, rep) in reports.items():
        w = ", ".join(f"{x:.4g}" for x in weights)
        ps = " ".join(f"{p:7.4f}" for p in rep.precisions)
        lines.append(
            f"{label:<8}{w:<26}{rep.score:9.4f}  {rep.brevity_penalty:7.4f} "
            f"{rep.candidate_length:6d} {rep.reference_length:6d}  {ps}"
        )
    return "\n".join(lines) + "\n"
