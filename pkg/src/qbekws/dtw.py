"""Endpoint-anchored DTW and subsequence DTW over frame feature sequences.

Both searches use the step set {(1,0), (0,1), (1,1)} with unit weights and
the Euclidean frame distance. Paths are lists of ``(i, j)`` pairs where ``i``
indexes the first argument (query / master) and ``j`` the second (content).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.spatial.distance import cdist

from .audio import FeatureMatrix
from .errors import DimensionMismatchError, EmptyInputError

AlignmentPath = list  # list[tuple[int, int]]

# backpointer codes
_ORIGIN, _DIAG, _HORIZ, _VERT = 0, 1, 2, 3


@dataclass(frozen=True)
class SdtwResult:
    cost: float
    start_frame: int
    end_frame: int
    path: AlignmentPath
    raw_cost: float = 0.0

    @property
    def span(self) -> tuple[int, int]:
        return self.start_frame, self.end_frame


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, FeatureMatrix):
        x = x.data
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ValueError(f"expected a T x D sequence, got shape {a.shape}")
    return a


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise EmptyInputError("DTW inputs must have at least one frame")
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")


def frame_distance(u, v) -> float:
    """Euclidean distance between two frame vectors."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if u.shape != v.shape:
        raise DimensionMismatchError(f"dimension mismatch: {u.size} vs {v.size}")
    return float(np.sqrt(np.sum((u - v) ** 2)))


def distance_matrix(a, b) -> np.ndarray:
    a, b = _as_matrix(a), _as_matrix(b)
    _check_pair(a, b)
    return cdist(a, b, metric="euclidean")


@njit(cache=True)
def _accumulate(dist, free_start):
    # Lexicographic DP on (accumulated cost, start column). Among exact ties the
    # predecessor checked first wins: diagonal, then (i, j-1), then (i-1, j).
    n, m = dist.shape
    acc = np.empty((n, m))
    start = np.empty((n, m), dtype=np.int64)
    step = np.empty((n, m), dtype=np.int8)
    for i in range(n):
        for j in range(m):
            best = np.inf
            best_start = m
            best_step = _ORIGIN
            if i == 0 and (j == 0 or free_start):
                best = 0.0
                best_start = j
            if i > 0 and j > 0:
                c = acc[i - 1, j - 1]
                s = start[i - 1, j - 1]
                if c < best or (c == best and s < best_start):
                    best, best_start, best_step = c, s, _DIAG
            if j > 0:
                c = acc[i, j - 1]
                s = start[i, j - 1]
                if c < best or (c == best and s < best_start):
                    best, best_start, best_step = c, s, _HORIZ
            if i > 0:
                c = acc[i - 1, j]
                s = start[i - 1, j]
                if c < best or (c == best and s < best_start):
                    best, best_start, best_step = c, s, _VERT
            acc[i, j] = best + dist[i, j]
            start[i, j] = best_start
            step[i, j] = best_step
    return acc, start, step


@njit(cache=True)
def _backtrace(step, i, j):
    out = np.empty((i + j + 1, 2), dtype=np.int64)
    k = 0
    while True:
        out[k, 0] = i
        out[k, 1] = j
        k += 1
        code = step[i, j]
        if code == _ORIGIN:
            break
        if code == _DIAG:
            i -= 1
            j -= 1
        elif code == _HORIZ:
            j -= 1
        else:
            i -= 1
    return out[:k][::-1]


def _to_path(arr: np.ndarray) -> AlignmentPath:
    return [(int(i), int(j)) for i, j in arr]


def dtw_align(a, b) -> tuple[float, AlignmentPath]:
    """Align ``a`` to ``b`` with both endpoints anchored.

    Returns the minimal accumulated frame distance and a path realizing it.
    """
    a, b = _as_matrix(a), _as_matrix(b)
    _check_pair(a, b)
    acc, _, step = _accumulate(cdist(a, b, metric="euclidean"), False)
    n, m = acc.shape
    return float(acc[n - 1, m - 1]), _to_path(_backtrace(step, n - 1, m - 1))


def sdtw_search(query, content) -> SdtwResult:
    """Find the content subsequence that best matches the whole query.

    The query may start and end anywhere along the content axis. The returned
    cost is the accumulated distance divided by the query length. Among equal
    costs the earliest start wins, then the shortest span.
    """
    q, c = _as_matrix(query), _as_matrix(content)
    _check_pair(q, c)
    acc, start, step = _accumulate(cdist(q, c, metric="euclidean"), True)
    last = acc[-1]
    # lexsort keys are applied last-to-first: cost, then start, then end
    end = int(np.lexsort((np.arange(last.size), start[-1], last))[0])
    raw = float(last[end])
    path = _to_path(_backtrace(step, q.shape[0] - 1, end))
    return SdtwResult(
        cost=raw / q.shape[0],
        start_frame=int(start[-1, end]),
        end_frame=end,
        path=path,
        raw_cost=raw,
    )


def path_cost(a, b, path: AlignmentPath) -> float:
    """Summed frame distance along ``path``."""
    a, b = _as_matrix(a), _as_matrix(b)
    idx = np.asarray(path, dtype=np.int64)
    return float(np.sqrt(((a[idx[:, 0]] - b[idx[:, 1]]) ** 2).sum(axis=1)).sum())


def is_valid_path(path: AlignmentPath, n_query: int) -> bool:
    """Check step set, monotonicity and query-axis coverage of a path."""
    if not path or path[0][0] != 0 or path[-1][0] != n_query - 1:
        return False
    for (i0, j0), (i1, j1) in zip(path, path[1:]):
        if (i1 - i0, j1 - j0) not in ((1, 0), (0, 1), (1, 1)):
            return False
    return True
