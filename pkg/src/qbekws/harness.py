"""Challenge metric (MR + alpha * FAR), dev-set splicing, threshold search, SV trials."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioBuffer, FramingConfig, load_wav, num_frames, write_wav
from .awe import reference_embedder
from .errors import EmptyInputError, QbeError
from .pipeline import PipelineConfig, decide, detect, stage_statistics
from .profile import EnrollmentProfile, Thresholds
from .qbef import read_features, write_features
from .speaker import Trial, sv_enroll, sv_score

ALPHA = 9.0


@dataclass(frozen=True)
class EvalMetrics:
    mr: float
    far: float
    alpha: float
    score: float
    n_pos: int = 0
    n_neg: int = 0
    misses: int = 0
    false_alarms: int = 0

    @classmethod
    def from_rates(cls, mr: float, far: float, alpha: float = ALPHA, **counts) -> EvalMetrics:
        return cls(mr, far, alpha, mr + alpha * far, **counts)

    @classmethod
    def from_counts(cls, misses: int, n_pos: int, false_alarms: int, n_neg: int,
                    alpha: float = ALPHA) -> EvalMetrics:
        if n_pos <= 0 or n_neg <= 0:
            raise EmptyInputError("need at least one positive and one negative utterance")
        return cls.from_rates(misses / n_pos, false_alarms / n_neg, alpha, n_pos=n_pos,
                              n_neg=n_neg, misses=misses, false_alarms=false_alarms)

    def as_dict(self) -> dict:
        return {"mr": self.mr, "far": self.far, "alpha": self.alpha, "score": self.score,
                "n_pos": self.n_pos, "n_neg": self.n_neg, "misses": self.misses,
                "false_alarms": self.false_alarms}


def metrics_from_decisions(labels, finals, alpha: float = ALPHA) -> EvalMetrics:
    labels = [bool(x) for x in labels]
    finals = [bool(x) for x in finals]
    n_pos = sum(labels)
    misses = sum(1 for lab, f in zip(labels, finals) if lab and not f)
    false_alarms = sum(1 for lab, f in zip(labels, finals) if not lab and f)
    return EvalMetrics.from_counts(misses, n_pos, false_alarms, len(labels) - n_pos, alpha)


def metrics_from_report(lines, alpha: float = ALPHA) -> EvalMetrics:
    """Recompute MR/FAR from serialized decision lines (dicts or JSON strings)."""
    rows = [json.loads(x) if isinstance(x, str) else x for x in lines]
    return metrics_from_decisions([r["label"] for r in rows], [r["final"] for r in rows], alpha)


@dataclass(frozen=True)
class DevUtterance:
    uid: str
    data: object  # AudioBuffer or FeatureMatrix
    label: bool
    span: tuple | None = None  # inclusive (start_frame, end_frame) of the keyword


@dataclass
class DevSet:
    utterances: list
    seed: int | None = None
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.utterances)

    @property
    def labels(self) -> list:
        return [u.label for u in self.utterances]


def _concat(pieces):
    if isinstance(pieces[0], AudioBuffer):
        return AudioBuffer(np.concatenate([p.samples for p in pieces]), pieces[0].sample_rate)
    return pieces[0].with_data(np.concatenate([p.data for p in pieces]))


def _silence(like, gap_s: float):
    if isinstance(like, AudioBuffer):
        return AudioBuffer(np.zeros(int(round(gap_s * like.sample_rate))), like.sample_rate)
    n = int(round(gap_s * 1000.0 / like.shift_ms))
    return like.with_data(np.zeros((n, like.dims), dtype=np.float32))


def _length(x) -> int:
    return len(x.samples) if isinstance(x, AudioBuffer) else x.frames


def _frame_span(first: int, length: int, like, framing) -> tuple:
    if not isinstance(like, AudioBuffer):
        return first, first + length - 1
    hop = framing.shift_samples(like.sample_rate)
    start = int(round(first / hop))
    n = max(1, num_frames(length, framing, like.sample_rate))
    return start, start + n - 1


def build_dev_set(positives, negatives, n_splices: int, gap_s: float = 0.2, seed: int = 0,
                  framing=None) -> DevSet:
    """Splice keyword utterances between fillers to make a labelled dev set.

    Yields ``n_splices`` positives (filler, gap, keyword, gap, filler) and
    ``n_splices`` negatives (filler, gap, filler), shuffled. Inputs are all
    AudioBuffers or all FeatureMatrices; spans are always in frames.
    Gaps are zero samples (audio) or zero frames (features).
    """
    positives, negatives = list(positives), list(negatives)
    if not positives or not negatives:
        raise EmptyInputError("need at least one positive and one negative source")
    if n_splices < 1:
        raise ValueError("n_splices must be >= 1")
    framing = framing or FramingConfig()
    rng = np.random.default_rng(seed)
    gap = _silence(negatives[0], gap_s)

    items = []
    for i in range(n_splices):
        kw = positives[rng.integers(len(positives))]
        left = negatives[rng.integers(len(negatives))]
        right = negatives[rng.integers(len(negatives))]
        first = _length(left) + _length(gap)
        span = _frame_span(first, _length(kw), kw, framing)
        items.append((_concat([left, gap, kw, gap, right]), True, span))
    for i in range(n_splices):
        left = negatives[rng.integers(len(negatives))]
        right = negatives[rng.integers(len(negatives))]
        items.append((_concat([left, gap, right]), False, None))

    order = rng.permutation(len(items))
    utts = [DevUtterance(f"dev{k:04d}", *items[j]) for k, j in enumerate(order)]
    return DevSet(utts, seed, {"n_splices": n_splices, "gap_s": gap_s})


def save_dev_set(devset: DevSet, folder) -> Path:
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    entries = []
    for u in devset.utterances:
        if isinstance(u.data, AudioBuffer):
            name = f"{u.uid}.wav"
            write_wav(u.data, folder / name)
        else:
            name = f"{u.uid}.qbef"
            write_features(u.data, folder / name)
        entries.append({"uid": u.uid, "file": name, "label": u.label,
                        "span": None if u.span is None else list(u.span)})
    manifest = {"seed": devset.seed, "info": devset.info, "utterances": entries}
    path = folder / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def load_dev_set(folder) -> DevSet:
    folder = Path(folder)
    if folder.is_file():
        folder = folder.parent
    manifest = json.loads((folder / "manifest.json").read_text())
    utts = []
    for e in manifest["utterances"]:
        p = folder / e["file"]
        data = load_wav(p) if p.suffix == ".wav" else read_features(p)
        span = None if e.get("span") is None else tuple(e["span"])
        utts.append(DevUtterance(e["uid"], data, bool(e["label"]), span))
    return DevSet(utts, manifest.get("seed"), manifest.get("info", {}))


def _check_devset(devset: DevSet) -> None:
    labels = devset.labels
    if not any(labels) or all(labels):
        raise EmptyInputError("dev set needs at least one positive and one negative utterance")


def run_devset(profile: EnrollmentProfile, devset: DevSet, thresholds: Thresholds | None = None,
               config: PipelineConfig | None = None, *, awe_embedder=reference_embedder,
               sv_embedder=reference_embedder) -> list:
    """Detect on every utterance; returns ``(uid, label, DecisionRecord)`` triples."""
    return [(u.uid, u.label, detect(profile, u.data, config, thresholds,
                                    awe_embedder=awe_embedder, sv_embedder=sv_embedder))
            for u in devset.utterances]


def evaluate(profile: EnrollmentProfile, devset: DevSet, thresholds: Thresholds | None = None,
             alpha: float = ALPHA, config: PipelineConfig | None = None, *,
             awe_embedder=reference_embedder, sv_embedder=reference_embedder) -> EvalMetrics:
    _check_devset(devset)
    rows = run_devset(profile, devset, thresholds, config,
                      awe_embedder=awe_embedder, sv_embedder=sv_embedder)
    return metrics_from_decisions([r[1] for r in rows], [r[2].final for r in rows], alpha)


@dataclass(frozen=True)
class GridSpec:
    """Threshold grids; ``None`` selects the default for that axis."""

    t1: tuple | None = None
    t2: tuple | None = None
    t3: tuple | None = None
    t1_points: int = 40

    def resolve(self, stage1_costs) -> tuple:
        if self.t1 is not None:
            t1 = np.asarray(self.t1, dtype=np.float64)
        else:
            c = np.asarray(stage1_costs, dtype=np.float64)
            t1 = np.linspace(c.min(), c.max(), self.t1_points)
        t2 = np.round(np.arange(41) * 0.05, 10) if self.t2 is None else np.asarray(self.t2, float)
        t3 = np.round(np.arange(41) * 0.05 - 1.0, 10) if self.t3 is None else np.asarray(self.t3, float)
        grids = tuple(np.unique(g) for g in (t1, t2, t3))
        if any(g.size == 0 for g in grids):
            raise ValueError("threshold grids must be nonempty")
        return grids


def collect_stats(profile: EnrollmentProfile, devset: DevSet, config: PipelineConfig | None = None,
                  *, awe_embedder=reference_embedder, sv_embedder=reference_embedder) -> list:
    """Per-utterance stage statistics with all gates open (tuning cache)."""
    return [stage_statistics(profile, u.data, config, awe_embedder=awe_embedder,
                             sv_embedder=sv_embedder) for u in devset.utterances]


def tune_from_stats(stats, labels, grid: GridSpec | None = None,
                    alpha: float = ALPHA) -> tuple[Thresholds, EvalMetrics]:
    """Exhaustive (t1, t2, t3) sweep over cached statistics.

    Picks the lowest score; ties go to lower FAR, then lower MR, then the
    lexicographically smallest (t1, t2, t3).
    """
    labels = np.asarray(labels, dtype=bool)
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise EmptyInputError("dev set needs at least one positive and one negative utterance")
    c1 = np.array([s.cost1 for s in stats])
    c2 = np.array([s.cost2 for s in stats])
    sv = np.array([s.sv_score for s in stats])
    t1, t2, t3 = (grid or GridSpec()).resolve(c1)

    p1 = (c1[:, None] <= t1[None, :]).astype(np.float64)
    p2 = (c2[:, None] <= t2[None, :]).astype(np.float64)
    p3 = (sv[:, None] >= t3[None, :]).astype(np.float64)
    hits = np.einsum("ua,ub,uc->abc", p1[labels], p2[labels], p3[labels])
    alarms = np.einsum("ua,ub,uc->abc", p1[~labels], p2[~labels], p3[~labels])
    misses = np.rint(n_pos - hits).astype(np.int64)
    alarms = np.rint(alarms).astype(np.int64)
    # same arithmetic as EvalMetrics.from_counts so scores compare exactly
    mr = misses / n_pos
    far = alarms / n_neg
    score = mr + alpha * far

    flat = np.arange(score.size)
    best = np.lexsort((flat, mr.ravel(), far.ravel(), score.ravel()))[0]
    a, b, c = np.unravel_index(best, score.shape)
    th = Thresholds(float(t1[a]), float(t2[b]), float(t3[c]))
    return th, EvalMetrics.from_counts(int(misses[a, b, c]), n_pos, int(alarms[a, b, c]), n_neg, alpha)


def tune_thresholds(profile: EnrollmentProfile, devset: DevSet, grid: GridSpec | None = None,
                    alpha: float = ALPHA, config: PipelineConfig | None = None, *,
                    awe_embedder=reference_embedder,
                    sv_embedder=reference_embedder) -> tuple[Thresholds, EvalMetrics]:
    _check_devset(devset)
    stats = collect_stats(profile, devset, config, awe_embedder=awe_embedder,
                          sv_embedder=sv_embedder)
    return tune_from_stats(stats, devset.labels, grid, alpha)


def generate_sv_trials(embeddings_by_speaker: dict, seed: int = 0,
                       n_nontarget: int | None = None) -> list:
    """Score same-speaker pairs (targets) and sampled cross-speaker pairs.

    Each pair (a, b) is scored as ``sv_score(b, sv_enroll([a]))``. Non-targets
    default to ten per target trial, capped at the number of cross pairs.
    """
    speakers = sorted(embeddings_by_speaker)
    if len(speakers) < 2:
        raise QbeError("need at least two speakers to build trials")
    embs = {s: [np.asarray(e, dtype=np.float64) for e in embeddings_by_speaker[s]] for s in speakers}
    for s in speakers:
        if len(embs[s]) < 2:
            raise QbeError(f"speaker {s!r} needs at least two embeddings")

    targets = []
    for s in speakers:
        for a, b in itertools.combinations(embs[s], 2):
            targets.append(Trial(sv_score(b, sv_enroll([a])), True))

    cross = [(s, i, t, j)
             for s, t in itertools.combinations(speakers, 2)
             for i in range(len(embs[s])) for j in range(len(embs[t]))]
    n = min(len(cross), 10 * len(targets) if n_nontarget is None else n_nontarget)
    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(len(cross), size=n, replace=False))
    nontargets = []
    for k in picks:
        s, i, t, j = cross[k]
        nontargets.append(Trial(sv_score(embs[t][j], sv_enroll([embs[s][i]])), False))
    return targets + nontargets


def span_iou(a: tuple, b: tuple) -> float:
    """Intersection over union of two inclusive frame spans."""
    inter = min(a[1], b[1]) - max(a[0], b[0]) + 1
    if inter <= 0:
        return 0.0
    union = max(a[1], b[1]) - min(a[0], b[0]) + 1
    return inter / union


def decisions_from_stats(stats, thresholds: Thresholds) -> list:
    return [decide(s, thresholds) for s in stats]

