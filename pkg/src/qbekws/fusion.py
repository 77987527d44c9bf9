"""Combine several enrollment examples of a keyword into one template."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import FeatureMatrix
from .dtw import dtw_align
from .errors import DimensionMismatchError, EmptyInputError


@dataclass(frozen=True)
class FusionReport:
    master_index: int
    # DTW cost of each template against the master; the master's own entry is 0
    per_template_cost: list


def _order_free_mean(stack: np.ndarray) -> np.ndarray:
    # sorting first makes the float sum independent of input order
    return np.sort(stack, axis=0).mean(axis=0)


def fuse_frame_templates(templates, master_index: int | None = 0, *, mode: str = "per_template",
                         seed: int | None = None) -> tuple[FeatureMatrix, FusionReport]:
    """DTW-align every template to a master and average the aligned frames.

    The output has the master's length. In ``per_template`` mode each
    template first contributes one vector per master frame (the mean of its
    frames aligned there), and frame ``m`` is the mean of the master frame
    and those per-template vectors. ``flat`` mode pools the master frame and
    every aligned frame from every template into one mean.

    ``master_index=None`` picks the master at random from ``seed``.
    """
    templates = list(templates)
    if not templates:
        raise EmptyInputError("need at least one template")
    dims = {t.dims for t in templates}
    if len(dims) != 1:
        raise DimensionMismatchError(f"templates have differing dims {sorted(dims)}")
    if mode not in ("per_template", "flat"):
        raise ValueError(f"unknown fusion mode {mode!r}")
    if master_index is None:
        master_index = int(np.random.default_rng(seed).integers(len(templates)))
    if not 0 <= master_index < len(templates):
        raise IndexError(f"master_index {master_index} out of range")

    master = templates[master_index]
    base = master.data.astype(np.float64)
    n_master = master.frames
    # pooled[m] collects the vectors averaged into master frame m
    pooled = [[base[m]] for m in range(n_master)]
    costs = []
    for k, tmpl in enumerate(templates):
        if k == master_index:
            costs.append(0.0)
            continue
        cost, path = dtw_align(master, tmpl)
        costs.append(cost)
        frames = tmpl.data.astype(np.float64)
        aligned = [[] for _ in range(n_master)]
        for m, j in path:
            aligned[m].append(frames[j])
        for m in range(n_master):
            if mode == "flat":
                pooled[m].extend(aligned[m])
            else:
                pooled[m].append(np.mean(aligned[m], axis=0))

    fused = np.stack([_order_free_mean(np.stack(p)) for p in pooled])
    return master.with_data(fused), FusionReport(master_index, costs)


def fuse_embeddings(embeddings) -> np.ndarray:
    """Coordinate-wise arithmetic mean of fixed-dimension embeddings."""
    vecs = [np.asarray(e, dtype=np.float64).reshape(-1) for e in embeddings]
    if not vecs:
        raise EmptyInputError("need at least one embedding")
    if len({v.size for v in vecs}) != 1:
        raise DimensionMismatchError("embeddings have differing dimensions")
    stack = np.stack(vecs)
    if not np.all(np.isfinite(stack)):
        raise ValueError("embeddings must be finite")
    return _order_free_mean(stack)
