"""Progressive loading of training samples.

Each caption of length L expands into L-1 (prefix -> next word) samples.
Expansion happens lazily, a few images at a time, so the expanded epoch is
never held in memory at once.
"""

import queue
import threading
from dataclasses import dataclass

import numpy as np

from .errors import CaptionTooLong, CaptionTooShort, MissingFeature
from .nn_core import one_hot  # noqa: F401  re-exported: targets are one-hot words

__all__ = [
    "Batch",
    "StreamStats",
    "TrainSample",
    "encode_caption_set",
    "expand_caption",
    "one_hot",
    "prefetch",
    "stream_epoch",
]


@dataclass(frozen=True)
class TrainSample:
    feature: np.ndarray
    input_seq: np.ndarray
    target_index: int


@dataclass(frozen=True)
class Batch:
    features: np.ndarray
    seqs: np.ndarray
    targets: np.ndarray
    image_ids: tuple = ()

    def __len__(self):
        return len(self.targets)


@dataclass
class StreamStats:
    """Instrumentation for the memory contract: samples built but not yet released."""

    resident: int = 0
    peak_resident: int = 0
    samples: int = 0
    batches: int = 0

    def hold(self, n):
        self.resident += n
        self.peak_resident = max(self.peak_resident, self.resident)

    def release(self, n):
        self.resident -= n


def expand_caption(encoded_caption, feature, max_len):
    L = len(encoded_caption)
    if L < 2:
        raise CaptionTooShort(f"caption of length {L} needs at least the two sentinels")
    if L > max_len:
        raise CaptionTooLong(f"caption of length {L} exceeds max_len {max_len}")
    samples = []
    for k in range(1, L):
        seq = np.zeros(max_len, dtype=np.int64)
        seq[max_len - k :] = encoded_caption[:k]
        samples.append(TrainSample(feature, seq, int(encoded_caption[k])))
    return samples


def encode_caption_set(captions, vocab):
    """image_id -> list of index lists."""
    return {image_id: [vocab.encode(cap) for cap in caps] for image_id, caps in captions.entries.items()}


def _image_order(image_ids, epoch_seed, shuffle):
    if not shuffle:
        return list(image_ids)
    perm = np.random.default_rng(epoch_seed).permutation(len(image_ids))
    return [image_ids[i] for i in perm]


def stream_epoch(captions, features, vocab, max_len, images_per_batch=1, epoch_seed=0, shuffle=True, stats=None):
    """Yield Batches covering every (prefix, next word) sample of one epoch.

    Feature coverage is checked before the first batch, so a missing id fails
    fast instead of mid-epoch.
    """
    if images_per_batch < 1:
        raise ValueError("images_per_batch must be >= 1")
    image_ids = list(captions.entries)
    for image_id in image_ids:
        if image_id not in features:
            raise MissingFeature(image_id)
    return _stream(captions, features, vocab, max_len, images_per_batch, _image_order(image_ids, epoch_seed, shuffle), stats)


def _stream(captions, features, vocab, max_len, images_per_batch, order, stats):
    stats = stats if stats is not None else StreamStats()
    for start in range(0, len(order), images_per_batch):
        group = order[start : start + images_per_batch]
        samples, owners = [], []
        for image_id in group:
            feature = features[image_id]
            for cap in captions.entries[image_id]:
                expanded = expand_caption(vocab.encode(cap), feature, max_len)
                stats.hold(len(expanded))
                samples.extend(expanded)
                owners.extend([image_id] * len(expanded))
        if not samples:
            continue
        batch = Batch(
            features=np.stack([s.feature for s in samples]),
            seqs=np.stack([s.input_seq for s in samples]),
            targets=np.array([s.target_index for s in samples], dtype=np.int64),
            image_ids=tuple(owners),
        )
        n = len(samples)
        del samples
        stats.samples += n
        stats.batches += 1
        yield batch
        stats.release(n)


_DONE = object()


def prefetch(batches, capacity=2):
    """Produce ``batches`` on a background thread through a bounded queue.

    Order is preserved; exceptions from the producer are re-raised here.
    """
    q = queue.Queue(maxsize=capacity)
    stop = threading.Event()

    def produce():
        try:
            for item in batches:
                while not stop.is_set():
                    try:
                        q.put(item, timeout=0.1)
                        break
                    except queue.Full:
                        continue
                if stop.is_set():
                    return
            q.put(_DONE)
        except BaseException as exc:  # handed to the consumer
            q.put(exc)

    worker = threading.Thread(target=produce, daemon=True)
    worker.start()
    try:
        while True:
            item = q.get()
            if item is _DONE:
                return
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()
        worker.join(timeout=1.0)
