"""QBEF: a minimal binary container for feature matrices and embeddings.

Layout (little-endian, no padding)::

    magic      4s   b"QBEF"
    version    u16  1
    kind       u8   0 fbank, 1 mfcc, 2 external, 3 embedding
    dims       u32
    frames     u32
    shift_ms   f32
    window_ms  f32
    payload    frames * dims f32, row-major
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .audio import FeatureMatrix
from .errors import BadMagicError, FormatError, SizeMismatchError, VersionMismatchError

MAGIC = b"QBEF"
VERSION = 1
HEADER = struct.Struct("<4sHBIIff")
KIND_CODES = {"fbank": 0, "mfcc": 1, "external": 2, "embedding": 3}
CODE_KINDS = {v: k for k, v in KIND_CODES.items()}


def write_features(matrix: FeatureMatrix, path) -> None:
    header = HEADER.pack(MAGIC, VERSION, KIND_CODES[matrix.kind], matrix.dims,
                         matrix.frames, matrix.shift_ms, matrix.window_ms)
    with open(path, "wb") as f:
        f.write(header)
        f.write(matrix.data.astype("<f4", copy=False).tobytes())


def read_features(path) -> FeatureMatrix:
    with open(path, "rb") as f:
        size = os.fstat(f.fileno()).st_size
        head = f.read(HEADER.size)
        if len(head) < 4 or head[:4] != MAGIC:
            raise BadMagicError(f"{path}: not a QBEF file")
        if len(head) < HEADER.size:
            raise SizeMismatchError(f"{path}: header truncated")
        _, version, code, dims, frames, shift_ms, window_ms = HEADER.unpack(head)
        if version != VERSION:
            raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
        if code not in CODE_KINDS:
            raise FormatError(f"{path}: unknown kind code {code}")
        expected = frames * dims * 4
        # check against the real file size before touching the payload
        if size - HEADER.size != expected:
            raise SizeMismatchError(
                f"{path}: header promises {expected} payload bytes, file has {size - HEADER.size}")
        payload = f.read(expected)
    data = np.frombuffer(payload, dtype="<f4").reshape(frames, dims)
    return FeatureMatrix(data.astype(np.float32), shift_ms, window_ms, CODE_KINDS[code])


def write_embeddings(vectors, path, hop_ms: float = 0.0, window_ms: float = 0.0) -> None:
    """Store a stack of embeddings (one per row) as an ``embedding`` QBEF file.

    For per-window AWE dumps, ``hop_ms``/``window_ms`` record the sliding
    window geometry: row ``r`` belongs to the window starting at ``r * hop_ms``.
    """
    stack = np.atleast_2d(np.asarray(vectors, dtype=np.float32))
    write_features(FeatureMatrix(stack, hop_ms, window_ms, "embedding"), path)


def read_embeddings(path) -> np.ndarray:
    m = read_features(path)
    if m.kind != "embedding":
        raise FormatError(f"{path}: expected embedding file, found {m.kind!r}")
    return np.array(m.data)
