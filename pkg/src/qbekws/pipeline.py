"""Speaker-dependent keyword spotting: enrollment and the three-gate detector.

Detection runs stage 1 (SDTW against the fused frame template), then stage 2
(sliding-window AWE cosine cost around the stage-1 span), then the speaker
gate on a fixed-length segment cut at the stage-1 span. Each stage only runs
when every earlier stage passed, and the utterance is positive only when all
three pass.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from .audio import AudioBuffer, FeatureMatrix, FramingConfig, extract
from .awe import (
    HOP_S,
    SMOOTH_K,
    WINDOW_S,
    pad_or_clip,
    reference_embedder,
    score_series,
    seconds_to_frames,
    segment_content,
)
from .dtw import sdtw_search
from .errors import EmptyInputError, FeatureMismatchError
from .fusion import fuse_embeddings, fuse_frame_templates
from .profile import EnrollmentProfile, Thresholds
from .speaker import SV_SEGMENT_S, cut_sv_segment, sv_enroll, sv_score


@dataclass(frozen=True)
class PipelineConfig:
    stage1_kind: str = "mfcc"
    stage2_kind: str = "fbank"
    sv_kind: str = "fbank"
    framing: FramingConfig = field(default_factory=FramingConfig)
    window_s: float = WINDOW_S
    hop_s: float = HOP_S
    smooth_k: int = SMOOTH_K
    stage2_margin_s: float = 0.4
    sv_segment_s: float = SV_SEGMENT_S
    n_sv_utterances: int = 3
    fusion_mode: str = "per_template"
    master_index: int | None = 0
    master_seed: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict | None) -> PipelineConfig:
        if not d:
            return cls()
        known = {f.name for f in fields(cls)}
        kw = {k: v for k, v in d.items() if k in known}
        if isinstance(kw.get("framing"), dict):
            kw["framing"] = FramingConfig(**kw["framing"])
        return cls(**kw)


@dataclass(frozen=True)
class UtteranceFeatures:
    """Per-stage views of one utterance; missing views fall back to ``keyword``."""

    keyword: FeatureMatrix
    awe: FeatureMatrix | None = None
    sv: FeatureMatrix | None = None

    @property
    def awe_view(self) -> FeatureMatrix:
        return self.awe if self.awe is not None else self.keyword

    @property
    def sv_view(self) -> FeatureMatrix:
        return self.sv if self.sv is not None else self.keyword


def prepare(utt, config: PipelineConfig) -> UtteranceFeatures:
    if isinstance(utt, UtteranceFeatures):
        return utt
    if isinstance(utt, FeatureMatrix):
        return UtteranceFeatures(utt)
    if isinstance(utt, AudioBuffer):
        cache = {}

        def view(kind):
            if kind not in cache:
                cache[kind] = extract(utt, kind, config.framing)
            return cache[kind]

        return UtteranceFeatures(view(config.stage1_kind), view(config.stage2_kind),
                                 view(config.sv_kind))
    raise TypeError(f"cannot build features from {type(utt).__name__}")


@dataclass(frozen=True)
class Stage1Outcome:
    cost: float
    start_frame: int
    end_frame: int
    passed: bool


@dataclass(frozen=True)
class Stage2Outcome:
    best_cost: float
    passed: bool


@dataclass(frozen=True)
class SvOutcome:
    score: float
    passed: bool


@dataclass(frozen=True)
class DecisionRecord:
    stage1: Stage1Outcome
    stage2: Stage2Outcome | None = None
    sv: SvOutcome | None = None

    @property
    def final(self) -> bool:
        return bool(self.stage1.passed and self.stage2 is not None and self.stage2.passed
                    and self.sv is not None and self.sv.passed)

    def to_json(self, utt_id: str, label: bool | None = None) -> dict:
        """One machine-readable report line."""
        line = {"utt": utt_id}
        if label is not None:
            line["label"] = bool(label)
        line["stage1"] = asdict(self.stage1)
        line["stage2"] = None if self.stage2 is None else asdict(self.stage2)
        line["sv"] = None if self.sv is None else asdict(self.sv)
        line["final"] = self.final
        return line

    @classmethod
    def from_json(cls, line: dict) -> DecisionRecord:
        s2, sv = line.get("stage2"), line.get("sv")
        return cls(Stage1Outcome(**line["stage1"]),
                   None if s2 is None else Stage2Outcome(**s2),
                   None if sv is None else SvOutcome(**sv))


@dataclass(frozen=True)
class StageStats:
    """All three stage statistics computed with every gate open."""

    cost1: float
    start_frame: int
    end_frame: int
    cost2: float
    sv_score: float


def enroll(speaker_id: str, keyword_utterances, sv_utterances=None,
           config: PipelineConfig | None = None, thresholds: Thresholds | None = None, *,
           awe_embedder=reference_embedder, sv_embedder=reference_embedder,
           awe_embeddings=None, sv_embeddings=None) -> EnrollmentProfile:
    """Build a profile from keyword utterances of one speaker.

    The speaker template uses ``sv_utterances`` when given, otherwise the
    first ``config.n_sv_utterances`` keyword utterances. Precomputed
    ``awe_embeddings`` / ``sv_embeddings`` (one per utterance) bypass the
    corresponding embedder.
    """
    config = config or PipelineConfig()
    views = [prepare(u, config) for u in keyword_utterances]
    if not views:
        raise EmptyInputError("need at least one keyword utterance")
    _check_consistent([v.keyword for v in views], "keyword")
    _check_consistent([v.awe_view for v in views], "stage-2")

    raw = [v.keyword for v in views]
    fused, _ = fuse_frame_templates(raw, config.master_index, mode=config.fusion_mode,
                                    seed=config.master_seed)

    if awe_embeddings is None:
        win = seconds_to_frames(config.window_s, views[0].awe_view.shift_ms)
        awe_embeddings = [awe_embedder(pad_or_clip(v.awe_view, win), 0) for v in views]
    awe_template = fuse_embeddings(awe_embeddings)

    if sv_embeddings is None:
        if sv_utterances is None:
            sv_views = views[:config.n_sv_utterances]
        else:
            sv_views = [prepare(u, config) for u in sv_utterances]
        sv_embeddings = [sv_embedder(v.sv_view, 0) for v in sv_views]
    sv_template = sv_enroll(sv_embeddings)

    return EnrollmentProfile(speaker_id, fused, raw, awe_template, sv_template,
                             thresholds or Thresholds(), config.to_dict())


def _check_consistent(mats, what: str) -> None:
    sig = {(m.kind, m.dims) for m in mats}
    if len(sig) != 1:
        raise FeatureMismatchError(f"inconsistent {what} features: {sorted(sig)}")


class _Detector:
    """Holds the per-call context so the three stages can run lazily."""

    def __init__(self, profile, test, config, awe_embedder, sv_embedder):
        self.profile = profile
        self.config = config or PipelineConfig.from_dict(profile.settings)
        self.feats = prepare(test, self.config)
        self.awe_embedder = awe_embedder
        self.sv_embedder = sv_embedder
        kw = self.feats.keyword
        tmpl = profile.keyword_template
        if kw.frames == 0:
            raise EmptyInputError("test utterance has no frames")
        if (kw.kind, kw.dims) != (tmpl.kind, tmpl.dims):
            raise FeatureMismatchError(
                f"test features {kw.kind}/{kw.dims} do not match profile {tmpl.kind}/{tmpl.dims}")

    def stage1(self):
        r = sdtw_search(self.profile.keyword_template, self.feats.keyword)
        return r.cost, r.start_frame, r.end_frame

    def stage2(self, start: int, end: int) -> float:
        view = self.feats.awe_view
        cfg = self.config
        margin = seconds_to_frames(cfg.stage2_margin_s, view.shift_ms)
        hop = max(1, seconds_to_frames(cfg.hop_s, view.shift_ms))
        last = view.frames - 1
        lo = max(0, min(start, last) - margin)
        lo -= lo % hop  # keep window starts on the global hop grid
        hi = min(last, end + margin)
        segs = segment_content(view.slice(lo, hi + 1), cfg.window_s, cfg.hop_s,
                               self.awe_embedder, offset=lo)
        return score_series(self.profile.awe_template, segs, cfg.smooth_k, view.shift_ms).best

    def sv(self, start: int, end: int) -> float:
        view = self.feats.sv_view
        last = view.frames - 1
        start, end = min(start, last), min(end, last)
        target = seconds_to_frames(self.config.sv_segment_s, view.shift_ms)
        seg = cut_sv_segment(view, start, end, target)
        lo = start - (target - (end - start + 1)) // 2
        return sv_score(self.sv_embedder(seg, lo), self.profile.sv_template)


def detect(profile: EnrollmentProfile, test, config: PipelineConfig | None = None,
           thresholds: Thresholds | None = None, *, awe_embedder=reference_embedder,
           sv_embedder=reference_embedder) -> DecisionRecord:
    """Run the cascade on one utterance, stopping at the first failed gate."""
    th = thresholds or profile.thresholds
    d = _Detector(profile, test, config, awe_embedder, sv_embedder)
    cost, start, end = d.stage1()
    s1 = Stage1Outcome(cost, start, end, cost <= th.t1)
    if not s1.passed:
        return DecisionRecord(s1)
    best = d.stage2(start, end)
    s2 = Stage2Outcome(best, best <= th.t2)
    if not s2.passed:
        return DecisionRecord(s1, s2)
    score = d.sv(start, end)
    return DecisionRecord(s1, s2, SvOutcome(score, score >= th.t3))


def stage_statistics(profile: EnrollmentProfile, test, config: PipelineConfig | None = None, *,
                     awe_embedder=reference_embedder, sv_embedder=reference_embedder) -> StageStats:
    """Compute every stage regardless of thresholds (gates open), for caching."""
    d = _Detector(profile, test, config, awe_embedder, sv_embedder)
    cost, start, end = d.stage1()
    return StageStats(cost, start, end, d.stage2(start, end), d.sv(start, end))


def decide(stats: StageStats, thresholds: Thresholds) -> DecisionRecord:
    """Apply thresholds to cached statistics; same result as ``detect``."""
    s1 = Stage1Outcome(stats.cost1, stats.start_frame, stats.end_frame, stats.cost1 <= thresholds.t1)
    if not s1.passed:
        return DecisionRecord(s1)
    s2 = Stage2Outcome(stats.cost2, stats.cost2 <= thresholds.t2)
    if not s2.passed:
        return DecisionRecord(s1, s2)
    return DecisionRecord(s1, s2, SvOutcome(stats.sv_score, stats.sv_score >= thresholds.t3))
