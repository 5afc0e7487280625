"""Per-image feature vectors and their binary on-disk format.

Layout (all integers little-endian)::

    b"MFV1" | version u32 (=1) | dim u32 | count u32
    count x ( id_len u16 | id utf-8 | dim x f32 )
"""

import hashlib
import struct

import numpy as np

from .errors import BadMagic, BadVersion, DimMismatch, DuplicateId, TruncatedRecord

MAGIC = b"MFV1"
VERSION = 1
DEFAULT_DIM = 4096

_HEADER = struct.Struct("<4sIII")
_ID_LEN = struct.Struct("<H")
_F32 = np.dtype("<f4")


class FeatureStore:
    """Ordered mapping image_id -> float32 vector of length ``dim``."""

    def __init__(self, dim=DEFAULT_DIM, vectors=None):
        if dim < 1:
            raise ValueError(f"feature dim must be >= 1, got {dim}")
        self.dim = int(dim)
        self.vectors = {}
        for image_id, vec in (vectors or {}).items():
            self.add(image_id, vec)

    def add(self, image_id, vector):
        if image_id in self.vectors:
            raise DuplicateId(image_id)
        vec = np.asarray(vector, dtype=np.float32)
        if vec.shape != (self.dim,):
            raise DimMismatch(f"vector for {image_id!r} has shape {vec.shape}, store dim is {self.dim}")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"vector for {image_id!r} has non-finite components")
        vec.setflags(write=False)
        self.vectors[image_id] = vec

    def __len__(self):
        return len(self.vectors)

    def __contains__(self, image_id):
        return image_id in self.vectors

    def __getitem__(self, image_id):
        return self.vectors[image_id]

    def ids(self):
        return list(self.vectors)

    def __eq__(self, other):
        if not isinstance(other, FeatureStore):
            return NotImplemented
        if self.dim != other.dim or list(self.vectors) != list(other.vectors):
            return False
        # bit-level comparison, so -0.0 != 0.0 here
        return all(self.vectors[k].tobytes() == other.vectors[k].tobytes() for k in self.vectors)

    def __repr__(self):
        return f"FeatureStore(dim={self.dim}, n={len(self)})"


def write_store(store):
    parts = [_HEADER.pack(MAGIC, VERSION, store.dim, len(store))]
    for image_id, vec in store.vectors.items():
        raw_id = image_id.encode("utf-8")
        if len(raw_id) > 0xFFFF:
            raise ValueError(f"image id too long: {len(raw_id)} bytes")
        parts.append(_ID_LEN.pack(len(raw_id)))
        parts.append(raw_id)
        parts.append(vec.astype(_F32, copy=False).tobytes())
    return b"".join(parts)


def read_store(data):
    data = memoryview(bytes(data))
    if len(data) < 4 or bytes(data[:4]) != MAGIC:
        raise BadMagic(f"not a feature store (magic {bytes(data[:4])!r})")
    if len(data) < _HEADER.size:
        raise TruncatedRecord("header truncated")
    _, version, dim, count = _HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise BadVersion(f"unsupported feature store version {version}")
    if dim < 1:
        raise DimMismatch("header declares dim 0")
    vec_bytes = dim * _F32.itemsize
    pos = _HEADER.size
    store = FeatureStore(dim)
    for rec in range(count):
        if pos + _ID_LEN.size > len(data):
            raise TruncatedRecord(f"record {rec} of {count}: missing id length")
        (id_len,) = _ID_LEN.unpack_from(data, pos)
        pos += _ID_LEN.size
        if pos + id_len + vec_bytes > len(data):
            raise TruncatedRecord(f"record {rec} of {count}: expected {id_len + vec_bytes} bytes")
        image_id = bytes(data[pos : pos + id_len]).decode("utf-8")
        pos += id_len
        vec = np.frombuffer(data, dtype=_F32, count=dim, offset=pos).astype(np.float32)
        pos += vec_bytes
        store.add(image_id, vec)
    if pos != len(data):
        # a longer record than the header dim promises shows up as trailing bytes
        raise DimMismatch(f"{len(data) - pos} trailing bytes after {count} records of dim {dim}")
    return store


def _id_key(image_id, seed):
    digest = hashlib.blake2b(f"{seed}\x00{image_id}".encode("utf-8"), digest_size=16).digest()
    return int.from_bytes(digest, "little")


def synth_vector(image_id, dim, seed):
    """Deterministic pseudo-random vector in [0, 1) for one image id.

    Philox is counter based: component k is a pure function of
    (seed, image_id, k), so the prefix does not depend on ``dim``.
    """
    rng = np.random.Generator(np.random.Philox(key=_id_key(image_id, seed)))
    return rng.random(dim, dtype=np.float32)


def synth_features(image_ids, dim=DEFAULT_DIM, seed=0):
    store = FeatureStore(dim)
    for image_id in image_ids:
        if image_id in store:
            raise DuplicateId(image_id)
        store.add(image_id, synth_vector(image_id, dim, seed))
    return store
