"""Binary checkpoint format.

All integers little-endian::

    b"MCPT" | version u32
    feature_dim, max_len, embed_dim, hidden_dim, vocab_size, reserved  (6 x u32) | dropout f32
    word count u32 | per word: len u16 + utf-8     (word k has index k+1)
    tensor count u32 | per tensor: name_len u16 + name + ndim u8 + ndim x u32 + f32 data
    epoch u32 | loss f32
"""

import struct
from dataclasses import dataclass

import numpy as np

from ._io import atomic_write_bytes
from .captioner import PARAM_NAMES, MergeModel, ModelConfig
from .errors import BadMagic, BadVersion, FormatError, ShapeHeaderMismatch, TruncatedFile
from .text_prep import Vocabulary

MAGIC = b"MCPT"
VERSION = 1

_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_F32 = struct.Struct("<f")
_CONFIG = struct.Struct("<6If")
_F32_DTYPE = np.dtype("<f4")


@dataclass
class Checkpoint:
    config: ModelConfig
    vocab: Vocabulary
    params: dict
    epoch: int = 0
    loss: float = 0.0
    version: int = VERSION

    def model(self):
        return MergeModel(self.config, self.params, self.vocab)


def save_checkpoint(model, epoch=0, loss=0.0):
    cfg = model.config
    if model.vocab is None:
        raise ValueError("model has no vocabulary attached; checkpoints must be self-contained")
    out = [MAGIC, _U32.pack(VERSION)]
    out.append(
        _CONFIG.pack(cfg.feature_dim, cfg.max_len, cfg.embed_dim, cfg.hidden_dim, cfg.vocab_size, 0, cfg.dropout_rate)
    )
    words = model.vocab.words()
    out.append(_U32.pack(len(words)))
    for w in words:
        raw = w.encode("utf-8")
        out += [_U16.pack(len(raw)), raw]
    out.append(_U32.pack(len(PARAM_NAMES)))
    for name in PARAM_NAMES:
        arr = model.params[name]
        raw = name.encode("ascii")
        out += [_U16.pack(len(raw)), raw, _U8.pack(arr.ndim)]
        out += [_U32.pack(d) for d in arr.shape]
        out.append(np.ascontiguousarray(arr, dtype=_F32_DTYPE).tobytes())
    out += [_U32.pack(epoch), _F32.pack(loss)]
    return b"".join(out)


def save_checkpoint_file(path, model, epoch=0, loss=0.0):
    atomic_write_bytes(path, save_checkpoint(model, epoch, loss))


class _Reader:
    def __init__(self, data):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise TruncatedFile(f"file ends inside {what} (need {n} bytes at offset {self.pos})")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, st, what):
        return st.unpack(self.take(st.size, what))


def load_checkpoint(data):
    r = _Reader(bytes(data))
    if len(r.data) < 4 or bytes(r.data[:4]) != MAGIC:
        raise BadMagic(f"not a checkpoint (magic {bytes(r.data[:4])!r})")
    r.pos = 4
    (version,) = r.unpack(_U32, "version")
    if version != VERSION:
        raise BadVersion(f"unsupported checkpoint version {version}")
    feature_dim, max_len, embed_dim, hidden_dim, vocab_size, _reserved, dropout = r.unpack(_CONFIG, "config")
    config = ModelConfig(
        vocab_size=vocab_size,
        feature_dim=feature_dim,
        max_len=max_len,
        embed_dim=embed_dim,
        hidden_dim=hidden_dim,
        dropout_rate=float(np.float32(dropout)),
    )

    (n_words,) = r.unpack(_U32, "vocabulary count")
    if n_words + 1 != vocab_size:
        raise ShapeHeaderMismatch(f"{n_words} vocabulary words for vocab_size {vocab_size}")
    words = []
    for _ in range(n_words):
        (n,) = r.unpack(_U16, "word length")
        words.append(bytes(r.take(n, "word")).decode("utf-8"))
    vocab = Vocabulary.from_words(words)

    expected = config.param_shapes()
    (n_tensors,) = r.unpack(_U32, "tensor count")
    params = {}
    for _ in range(n_tensors):
        (n,) = r.unpack(_U16, "tensor name length")
        name = bytes(r.take(n, "tensor name")).decode("ascii")
        (ndim,) = r.unpack(_U8, f"{name} rank")
        shape = tuple(r.unpack(_U32, f"{name} shape")[0] for _ in range(ndim))
        if name not in expected:
            raise ShapeHeaderMismatch(f"unknown tensor {name!r}")
        if shape != expected[name]:
            raise ShapeHeaderMismatch(f"{name}: stored shape {shape}, config implies {expected[name]}")
        count = int(np.prod(shape))
        raw = r.take(count * _F32_DTYPE.itemsize, f"{name} data")
        params[name] = np.frombuffer(raw, dtype=_F32_DTYPE).astype(np.float32).reshape(shape)
    missing = [n for n in PARAM_NAMES if n not in params]
    if missing:
        raise ShapeHeaderMismatch(f"missing tensors: {', '.join(missing)}")
    (epoch,) = r.unpack(_U32, "epoch")
    (loss,) = r.unpack(_F32, "loss")
    if r.pos != len(r.data):
        raise FormatError(f"{len(r.data) - r.pos} trailing bytes after checkpoint")
    return Checkpoint(config, vocab, {n: params[n] for n in PARAM_NAMES}, epoch, loss, version)


def load_checkpoint_file(path):
    with open(path, "rb") as fh:
        return load_checkpoint(fh.read())
