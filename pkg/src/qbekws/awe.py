"""Stage-2 sliding-window matching over acoustic word embeddings.

An embedder is any callable ``embedder(segment, start_frame) -> vector``
taking a fixed-length FeatureMatrix window and the window's first frame in
the content it was cut from. The reference embedder ignores the position;
precomputed embedders use it as a lookup key. Embedders must be pure so
windows can be embedded concurrently.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import FeatureMatrix
from .errors import DimensionMismatchError, EmbedderError, EmptyInputError, ZeroNormError

WINDOW_S = 0.8
HOP_S = 0.1
SMOOTH_K = 3


@dataclass(frozen=True)
class Segment:
    start_frame: int
    end_frame: int  # inclusive
    embedding: np.ndarray


@dataclass(frozen=True)
class SegmentSequence:
    segments: list
    window_frames: int
    hop_frames: int

    def __len__(self):
        return len(self.segments)

    def embeddings(self) -> np.ndarray:
        return np.stack([s.embedding for s in self.segments])


@dataclass(frozen=True)
class ScoreSeries:
    raw: np.ndarray
    smoothed: np.ndarray
    hop_ms: float

    @property
    def best(self) -> float:
        return float(self.smoothed.min())


def seconds_to_frames(seconds: float, shift_ms: float) -> int:
    return int(round(seconds * 1000.0 / shift_ms))


def pad_or_clip(features: FeatureMatrix, target_frames: int) -> FeatureMatrix:
    """Center-clip or zero-pad to exactly ``target_frames`` frames.

    Padding is split evenly with any odd frame going after.
    """
    if target_frames <= 0:
        raise ValueError("target_frames must be positive")
    n = features.frames
    if n == 0:
        raise EmptyInputError("cannot pad an empty feature matrix")
    if n >= target_frames:
        off = (n - target_frames) // 2
        return features.slice(off, off + target_frames)
    before = (target_frames - n) // 2
    after = target_frames - n - before
    return features.with_data(np.pad(features.data, ((before, after), (0, 0))))


def reference_embedder(segment: FeatureMatrix, start_frame: int = 0) -> np.ndarray:
    """Deterministic stand-in for a trained embedder: L2-normalized [mean, std] pooling."""
    x = segment.data.astype(np.float64)
    v = np.concatenate([x.mean(axis=0), x.std(axis=0)])
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


class PrecomputedEmbedder:
    """Look up per-window embeddings produced by an external model.

    ``table`` row ``r`` holds the embedding of the window that starts at
    content frame ``r * hop_frames``.
    """

    def __init__(self, table, hop_frames: int):
        self.table = np.atleast_2d(np.asarray(table, dtype=np.float64))
        self.hop_frames = int(hop_frames)

    def __call__(self, segment: FeatureMatrix, start_frame: int = 0) -> np.ndarray:
        row, rem = divmod(int(start_frame), self.hop_frames)
        if rem or not 0 <= row < len(self.table):
            raise KeyError(f"no precomputed embedding for window at frame {start_frame}")
        return self.table[row]


class ConstantEmbedder:
    """Returns one fixed embedding, e.g. an externally computed speaker vector."""

    def __init__(self, vector):
        self.vector = np.asarray(vector, dtype=np.float64).reshape(-1)

    def __call__(self, segment: FeatureMatrix, start_frame: int = 0) -> np.ndarray:
        return self.vector


def segment_content(content: FeatureMatrix, window_s: float = WINDOW_S, hop_s: float = HOP_S,
                    embedder=reference_embedder, offset: int = 0) -> SegmentSequence:
    """Cut ``content`` into fixed windows at a fixed hop and embed each one.

    Content shorter than one window yields a single zero-padded segment.
    ``offset`` is added to the start frames handed to the embedder, for when
    ``content`` is itself a slice of a longer utterance.
    """
    win = seconds_to_frames(window_s, content.shift_ms)
    hop = max(1, seconds_to_frames(hop_s, content.shift_ms))
    if content.frames == 0:
        raise EmptyInputError("content has no frames")
    n = 1 if content.frames <= win else 1 + (content.frames - win) // hop
    segments = []
    for k in range(n):
        lo = k * hop
        window = pad_or_clip(content.slice(lo, lo + win), win)
        try:
            emb = np.asarray(embedder(window, offset + lo), dtype=np.float64).reshape(-1)
        except Exception as e:
            raise EmbedderError(k, e) from e
        hi = min(lo + win, content.frames) - 1
        segments.append(Segment(offset + lo, offset + hi, emb))
    return SegmentSequence(segments, win, hop)


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if u.shape != v.shape:
        raise DimensionMismatchError(f"dimension mismatch: {u.size} vs {v.size}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroNormError("cosine is undefined for a zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def awe_cost(template, segments: SegmentSequence) -> tuple[np.ndarray, float]:
    """Per-window cosine distance ``1 - cos(template, window)`` and its minimum."""
    raw = np.array([1.0 - cosine(template, s.embedding) for s in segments.segments])
    if raw.size == 0:
        raise EmptyInputError("no segments to score")
    return raw, float(raw.min())


def moving_average(raw, k: int = SMOOTH_K) -> np.ndarray:
    """Mean of every ``k`` consecutive scores (length ``n - k + 1``).

    When ``k`` exceeds the series length the single global mean is returned.
    """
    x = np.asarray(raw, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be >= 1")
    if x.size == 0:
        raise EmptyInputError("cannot smooth an empty series")
    if k == 1:
        return x.copy()
    windows = np.lib.stride_tricks.sliding_window_view(x, min(k, x.size))
    # clamp away rounding so a window mean never leaves its own [min, max]
    return np.clip(windows.mean(axis=1), windows.min(axis=1), windows.max(axis=1))


def score_series(template, segments: SegmentSequence, k: int = SMOOTH_K,
                 shift_ms: float = 10.0) -> ScoreSeries:
    raw, _ = awe_cost(template, segments)
    return ScoreSeries(raw, moving_average(raw, k), segments.hop_frames * shift_ms)
