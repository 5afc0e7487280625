from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mergecap.dataloader import StreamStats, expand_caption, prefetch, stream_epoch
from mergecap.errors import CaptionTooLong, CaptionTooShort, MissingFeature
from mergecap.feature_store import FeatureStore, synth_features
from mergecap.text_prep import END, START, CaptionSet, build_vocabulary


class TestExpandCaption:
    def test_hand_expansion(self):
        feat = np.arange(3.0)
        samples = expand_caption([1, 5, 7, 2], feat, 6)
        assert [s.input_seq.tolist() for s in samples] == [
            [0, 0, 0, 0, 0, 1],
            [0, 0, 0, 0, 1, 5],
            [0, 0, 0, 1, 5, 7],
        ]
        assert [s.target_index for s in samples] == [5, 7, 2]
        assert all(s.feature is feat for s in samples)

    def test_minimal(self):
        (s,) = expand_caption([1, 2], np.zeros(2), 4)
        assert s.input_seq.tolist() == [0, 0, 0, 1] and s.target_index == 2

    def test_too_long(self):
        with pytest.raises(CaptionTooLong):
            expand_caption([1, 3, 3, 2], np.zeros(2), 3)

    def test_too_short(self):
        with pytest.raises(CaptionTooShort):
            expand_caption([1], np.zeros(2), 3)

    @given(st.lists(st.integers(1, 50), min_size=2, max_size=12), st.integers(0, 5))
    def test_right_alignment(self, caption, extra):
        max_len = len(caption) + extra
        for k, s in enumerate(expand_caption(caption, np.zeros(1), max_len), start=1):
            assert np.all(s.input_seq[: max_len - k] == 0)
            assert s.input_seq[max_len - k :].tolist() == caption[:k]
            assert s.target_index == caption[k] >= 1


def _corpus(lengths_per_image):
    """Captions made of filler words so caption i of image j has the given length."""
    entries = {}
    for j, lengths in enumerate(lengths_per_image):
        entries[f"im{j:04d}"] = [[START] + ["word"] * (L - 2) + [END] for L in lengths]
    return CaptionSet(entries)


def test_two_images_batch_sizes():
    cs = _corpus([[4], [3]])
    vocab = build_vocabulary(cs)
    store = synth_features(list(cs), 4, 0)
    batches = list(stream_epoch(cs, store, vocab, 6, images_per_batch=1, epoch_seed=0))
    assert sorted(len(b) for b in batches) == [2, 3]
    for b in batches:
        assert b.features.shape == (len(b), 4)
        assert b.seqs.shape == (len(b), 6)
        assert len(set(b.image_ids)) == 1
        assert np.all(b.features == store[b.image_ids[0]])


def test_empty_and_missing():
    vocab = build_vocabulary(CaptionSet())
    assert list(stream_epoch(CaptionSet(), FeatureStore(4), vocab, 5)) == []
    cs = _corpus([[3]])
    with pytest.raises(MissingFeature):
        stream_epoch(cs, FeatureStore(4), build_vocabulary(cs), 5)


def _triples(batches):
    return Counter(
        (image_id, tuple(seq), int(t)) for b in batches for image_id, seq, t in zip(b.image_ids, b.seqs.tolist(), b.targets)
    )


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.lists(st.integers(2, 7), min_size=1, max_size=3), min_size=1, max_size=8),
    st.integers(1, 4),
    st.integers(0, 1000),
)
def test_sample_conservation_and_multiset(lengths, ipb, seed):
    cs = _corpus(lengths)
    vocab = build_vocabulary(cs)
    store = synth_features(list(cs), 3, 1)
    stats = StreamStats()
    batches = list(stream_epoch(cs, store, vocab, 8, ipb, seed, stats=stats))
    expected = sum(L - 1 for ls in lengths for L in ls)
    assert sum(len(b) for b in batches) == expected == stats.samples
    assert _triples(batches) == _triples(stream_epoch(cs, store, vocab, 8, 1, seed + 1))
    # memory contract: never more than the expansion of one batch of images
    per_image = sorted((sum(L - 1 for L in ls) for ls in lengths), reverse=True)
    assert stats.peak_resident <= sum(per_image[:ipb])
    assert stats.resident == 0


def test_seed_changes_order_and_no_shuffle():
    cs = _corpus([[3]] * 20)
    vocab = build_vocabulary(cs)
    store = synth_features(list(cs), 2, 0)
    order = lambda seed, **kw: [b.image_ids[0] for b in stream_epoch(cs, store, vocab, 4, 1, seed, **kw)]  # noqa: E731
    assert order(1) == order(1)
    assert order(1) != order(2)
    assert order(1, shuffle=False) == list(cs)


def test_targets_never_padding():
    cs = _corpus([[5, 3], [4]])
    vocab = build_vocabulary(cs)
    store = synth_features(list(cs), 2, 0)
    for b in stream_epoch(cs, store, vocab, 6, 2, 0):
        assert np.all(b.targets >= 1) and np.all(b.targets < vocab.size)
        assert np.all((b.seqs >= 0) & (b.seqs < vocab.size))


def test_prefetch_preserves_order_and_errors():
    assert list(prefetch(iter(range(10)), capacity=2)) == list(range(10))

    def boom():
        yield 1
        raise MissingFeature("x")

    out = []
    with pytest.raises(MissingFeature):
        for item in prefetch(boom()):
            out.append(item)
    assert out == [1]
