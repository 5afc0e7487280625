"""Caption text preparation: token-file parsing, cleaning, vocabulary.

The token file has one caption per line::

    1000268201_693b08cb0e.jpg#0<TAB>A child in a pink dress is climbing up ...

Cleaned captions are wrapped in ``startseq`` / ``endseq`` sentinels and can be
persisted as a plain descriptions file (``<image_id> <tok> <tok> ...``).
"""

import logging
import os
import string
from collections import Counter
from dataclasses import dataclass, field

from .errors import MalformedLine

log = logging.getLogger(__name__)

START = "startseq"
END = "endseq"
PAD_INDEX = 0

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


@dataclass(frozen=True)
class RawCaptionRecord:
    image_id: str
    caption_index: int
    text: str


@dataclass
class CaptionSet:
    """image_id -> list of sentinel-wrapped token sequences, in insertion order."""

    entries: dict = field(default_factory=dict)
    dropped: int = field(default=0, compare=False)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, image_id):
        return self.entries[image_id]

    def n_captions(self):
        return sum(len(caps) for caps in self.entries.values())

    def max_length(self):
        """Length (with sentinels) of the longest caption; 0 when empty."""
        return max((len(c) for caps in self.entries.values() for c in caps), default=0)

    def subset(self, image_ids):
        keep = set(image_ids)
        return CaptionSet({k: v for k, v in self.entries.items() if k in keep})


def parse_token_file(raw_text):
    """Parse ``<name>.<ext>#<k>\\t<caption>`` lines into records.

    Blank lines are skipped. Raises MalformedLine with the 1-based line number
    on the first bad line.
    """
    records = []
    for line_no, line in enumerate(raw_text.splitlines(), start=1):
        if not line.strip():
            continue
        name_part, tab, text = line.partition("\t")
        if not tab:
            raise MalformedLine(line_no, "missing tab separator")
        name, hash_, k = name_part.strip().rpartition("#")
        if not hash_:
            raise MalformedLine(line_no, "missing '#' caption index")
        if not k.isdigit():
            raise MalformedLine(line_no, f"caption index {k!r} is not a number")
        image_id = os.path.splitext(name)[0]
        if not image_id:
            raise MalformedLine(line_no, "empty image name")
        text = text.strip()
        if not text:
            raise MalformedLine(line_no, "empty caption")
        records.append(RawCaptionRecord(image_id, int(k), text))
    return records


def clean_caption(text):
    # lowercase, strip 's, drop punctuation, drop tokens with digits, drop len <= 1
    tokens = []
    for word in text.lower().split():
        if word.endswith("'s"):
            word = word[:-2]
        word = word.translate(_PUNCT_TABLE)
        if any(ch.isdigit() for ch in word):
            continue
        if len(word) <= 1:
            continue
        tokens.append(word)
    return tokens


def build_caption_set(records):
    grouped = {}
    for rec in records:
        grouped.setdefault(rec.image_id, []).append(rec)
    entries = {}
    dropped = 0
    for image_id, recs in grouped.items():
        caps = []
        for rec in sorted(recs, key=lambda r: r.caption_index):
            tokens = clean_caption(rec.text)
            if not tokens:
                dropped += 1
                continue
            caps.append([START, *tokens, END])
        if caps:
            entries[image_id] = caps
    if dropped:
        log.warning("dropped %d caption(s) that cleaned to zero tokens", dropped)
    return CaptionSet(entries, dropped=dropped)


@dataclass
class Vocabulary:
    word_to_index: dict
    index_to_word: dict

    @classmethod
    def from_words(cls, words):
        """Index ``words`` 1, 2, 3, ... in the order given."""
        w2i = {w: i for i, w in enumerate(words, start=1)}
        return cls(w2i, {i: w for w, i in w2i.items()})

    @property
    def size(self):
        return len(self.word_to_index) + 1

    def words(self):
        return [self.index_to_word[i] for i in range(1, self.size)]

    @property
    def start_index(self):
        return self.word_to_index[START]

    @property
    def end_index(self):
        return self.word_to_index[END]

    def encode(self, tokens):
        # out-of-vocabulary words (below min_count) are skipped
        return [self.word_to_index[t] for t in tokens if t in self.word_to_index]

    def decode(self, indices):
        return [self.index_to_word[i] for i in indices]

    def __contains__(self, word):
        return word in self.word_to_index


def build_vocabulary(captions, min_count=1):
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    counts = Counter(tok for caps in captions.entries.values() for cap in caps for tok in cap)
    words = {w for w, n in counts.items() if n >= min_count}
    words.update((START, END))
    return Vocabulary.from_words(sorted(words))


def write_descriptions_file(captions):
    lines = [" ".join([image_id, *cap]) for image_id, caps in captions.entries.items() for cap in caps]
    return "".join(line + "\n" for line in lines)


def read_descriptions_file(text):
    entries = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) < 3:
            raise MalformedLine(line_no, "expected an image id and at least two sentinel tokens")
        image_id, tokens = fields[0], fields[1:]
        if tokens[0] != START or tokens[-1] != END:
            raise MalformedLine(line_no, f"caption must be wrapped in {START} ... {END}")
        entries.setdefault(image_id, []).append(tokens)
    return CaptionSet(entries)


def read_split_ids(text):
    """One image id per line; extensions are stripped so ``x.jpg`` matches ``x``."""
    return [os.path.splitext(line.strip())[0] for line in text.splitlines() if line.strip()]
