"""Cosine speaker gate and threshold calibration from scored trials (EER, minDCF)."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import FeatureMatrix
from .awe import cosine
from .errors import EmptyInputError, TrialSetError, ZeroNormError
from .fusion import fuse_embeddings

SV_SEGMENT_S = 2.0


@dataclass(frozen=True)
class Trial:
    score: float
    label: bool  # True for a target (same-speaker) trial

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError("trial score must be finite")


@dataclass(frozen=True)
class CalibrationResult:
    eer: float
    threshold_eer: float
    min_dcf: float
    threshold_mindcf: float
    operating_threshold: float
    # every trial had the same score, so neither threshold means anything
    degenerate: bool = False

    def as_dict(self) -> dict:
        return {
            "eer": self.eer,
            "threshold_eer": self.threshold_eer,
            "min_dcf": self.min_dcf,
            "threshold_mindcf": self.threshold_mindcf,
            "operating_threshold": self.operating_threshold,
            "degenerate": self.degenerate,
        }


def sv_enroll(embeddings) -> np.ndarray:
    """Speaker template: mean of the enrollment embeddings."""
    embeddings = list(embeddings)
    if not embeddings:
        raise EmptyInputError("need at least one enrollment embedding")
    for e in embeddings:
        if not np.any(np.asarray(e)):
            raise ZeroNormError("enrollment embedding is the zero vector")
    template = fuse_embeddings(embeddings)
    if not np.any(template):
        raise ZeroNormError("enrollment embeddings average to the zero vector")
    return template


def sv_score(test, template) -> float:
    """Cosine similarity in [-1, 1]; the gate accepts when it is >= t3."""
    return cosine(test, template)


def cut_sv_segment(content: FeatureMatrix, start_frame: int, end_frame: int,
                   target_frames: int) -> FeatureMatrix:
    """Fixed-length window centred on an inclusive frame span.

    The span grows (or shrinks) symmetrically to ``target_frames``, odd frame
    after. Parts of the window that fall outside the content are zero-filled
    rather than shifted inward.
    """
    if target_frames <= 0:
        raise ValueError("target_frames must be positive")
    if not 0 <= start_frame <= end_frame < content.frames:
        raise ValueError(f"invalid span [{start_frame}, {end_frame}] for {content.frames} frames")
    length = end_frame - start_frame + 1
    lo = start_frame - (target_frames - length) // 2
    hi = lo + target_frames  # exclusive
    out = np.zeros((target_frames, content.dims), dtype=np.float32)
    src_lo, src_hi = max(lo, 0), min(hi, content.frames)
    if src_hi > src_lo:
        out[src_lo - lo:src_hi - lo] = content.data[src_lo:src_hi]
    return content.with_data(out)


def _split(trials) -> tuple[np.ndarray, np.ndarray]:
    trials = list(trials)
    tar = np.sort(np.array([t.score for t in trials if t.label], dtype=np.float64))
    non = np.sort(np.array([t.score for t in trials if not t.label], dtype=np.float64))
    if tar.size == 0 or non.size == 0:
        raise TrialSetError("need at least one target and one non-target trial")
    return tar, non


def _operating_points(tar: np.ndarray, non: np.ndarray):
    """Error rates at every distinct score, plus a final reject-everything point.

    A trial is accepted when ``score >= threshold``.
    """
    allscores = np.concatenate([tar, non])
    thr = np.unique(allscores)
    thr = np.append(thr, np.nextafter(thr[-1], np.inf))
    frr = np.searchsorted(tar, thr, side="left") / tar.size
    far = (non.size - np.searchsorted(non, thr, side="left")) / non.size
    return thr, frr, far


def compute_eer(trials) -> tuple[float, float]:
    """Equal error rate and the (interpolated) threshold where FAR meets FRR."""
    thr, frr, far = _operating_points(*_split(trials))
    diff = far - frr
    k = int(np.argmax(diff <= 0))  # first crossing; diff[0] > 0 always
    if diff[k] == 0:
        return float(far[k]), float(thr[k])
    w = diff[k - 1] / (diff[k - 1] - diff[k])
    eer = far[k - 1] + w * (far[k] - far[k - 1])
    return float(eer), float(thr[k - 1] + w * (thr[k] - thr[k - 1]))


def compute_min_dcf(trials, p_target: float = 0.01, c_miss: float = 1.0,
                    c_fa: float = 1.0) -> tuple[float, float]:
    """Normalized minimum detection cost and the lowest threshold attaining it."""
    thr, frr, far = _operating_points(*_split(trials))
    dcf = c_miss * frr * p_target + c_fa * far * (1 - p_target)
    dcf = dcf / min(c_miss * p_target, c_fa * (1 - p_target))
    k = int(np.argmin(dcf))
    return float(dcf[k]), float(thr[k])


def calibrate(trials, p_target: float = 0.01, c_miss: float = 1.0,
              c_fa: float = 1.0) -> CalibrationResult:
    """Operating threshold = mean of the EER and minDCF thresholds."""
    trials = list(trials)
    eer, t_eer = compute_eer(trials)
    dcf, t_dcf = compute_min_dcf(trials, p_target, c_miss, c_fa)
    degenerate = len({t.score for t in trials}) == 1
    return CalibrationResult(eer, t_eer, dcf, t_dcf, (t_eer + t_dcf) / 2, degenerate)


def trials_from_arrays(scores, labels) -> list:
    return [Trial(float(s), bool(l)) for s, l in zip(scores, labels)]


def write_trials(trials, path) -> None:
    lines = [f"{t.score!r}\t{'target' if t.label else 'nontarget'}" for t in trials]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_trials(path) -> list:
    out = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            score, label = line.split("\t")
        except ValueError:
            raise ValueError(f"{path}:{n}: expected 'score<TAB>label'") from None
        if label not in ("target", "nontarget"):
            raise ValueError(f"{path}:{n}: unknown label {label!r}")
        out.append(Trial(float(score), label == "target"))
    return out
