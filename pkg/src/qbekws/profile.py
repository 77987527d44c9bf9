"""Enrollment profiles: thresholds plus the per-speaker templates, and their on-disk form.

A saved profile is a JSON document (``<name>.json``) next to QBEF blobs that
it references by relative path::

    <name>.keyword.qbef   fused frame-level template
    <name>.raw<k>.qbef    enrollment templates before fusion
    <name>.awe.qbef       fused AWE template (1 x D embedding)
    <name>.sv.qbef        speaker template (1 x D embedding)
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import FeatureMatrix
from .errors import MissingBlobError, ProfileError
from .qbef import read_embeddings, read_features, write_embeddings, write_features

PROFILE_FORMAT = "qbekws-profile"
PROFILE_VERSION = 1


@dataclass(frozen=True)
class Thresholds:
    """Stage-1 SDTW cost ceiling, stage-2 AWE cost ceiling, SV cosine floor."""

    t1: float = float("inf")
    t2: float = 2.0
    t3: float = -1.0

    def __post_init__(self):
        if self.t1 < 0 or self.t2 < 0:
            raise ValueError("t1 and t2 must be nonnegative")
        if not -1.0 <= self.t3 <= 1.0:
            raise ValueError("t3 must lie in [-1, 1]")

    def as_dict(self) -> dict:
        return {"t1": self.t1, "t2": self.t2, "t3": self.t3}


def _as_embedding(v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=np.float32).reshape(-1)
    if a.size == 0 or not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be a finite nonempty vector")
    if not np.any(a):
        raise ValueError(f"{name} is the zero vector")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EnrollmentProfile:
    speaker_id: str
    keyword_template: FeatureMatrix
    raw_templates: list
    awe_template: np.ndarray
    sv_template: np.ndarray
    thresholds: Thresholds = field(default_factory=Thresholds)
    # pipeline settings used at enrollment (see pipeline.PipelineConfig)
    settings: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "awe_template", _as_embedding(self.awe_template, "awe_template"))
        object.__setattr__(self, "sv_template", _as_embedding(self.sv_template, "sv_template"))
        object.__setattr__(self, "raw_templates", list(self.raw_templates))

    def with_thresholds(self, thresholds: Thresholds) -> EnrollmentProfile:
        return EnrollmentProfile(self.speaker_id, self.keyword_template, self.raw_templates,
                                 self.awe_template, self.sv_template, thresholds, dict(self.settings))

    def __eq__(self, other):
        if not isinstance(other, EnrollmentProfile):
            return NotImplemented
        return (self.speaker_id == other.speaker_id
                and self.keyword_template == other.keyword_template
                and len(self.raw_templates) == len(other.raw_templates)
                and all(a == b for a, b in zip(self.raw_templates, other.raw_templates))
                and self.awe_template.tobytes() == other.awe_template.tobytes()
                and self.sv_template.tobytes() == other.sv_template.tobytes()
                and self.thresholds == other.thresholds
                and self.settings == other.settings)

    __hash__ = None


def save_profile(profile: EnrollmentProfile, path) -> Path:
    """Write ``profile`` as ``path`` (JSON) plus sibling QBEF blobs."""
    # re-run invariant checks: a profile may have been built around __post_init__
    _as_embedding(profile.awe_template, "awe_template")
    _as_embedding(profile.sv_template, "sv_template")

    path = Path(path)
    stem = path.name[:-5] if path.name.endswith(".json") else path.name
    folder = path.parent
    folder.mkdir(parents=True, exist_ok=True)

    blobs = {
        "keyword_template": f"{stem}.keyword.qbef",
        "raw_templates": [f"{stem}.raw{k}.qbef" for k in range(len(profile.raw_templates))],
        "awe_template": f"{stem}.awe.qbef",
        "sv_template": f"{stem}.sv.qbef",
    }
    write_features(profile.keyword_template, folder / blobs["keyword_template"])
    for tmpl, name in zip(profile.raw_templates, blobs["raw_templates"]):
        write_features(tmpl, folder / name)
    write_embeddings(profile.awe_template, folder / blobs["awe_template"])
    write_embeddings(profile.sv_template, folder / blobs["sv_template"])

    doc = {
        "format": PROFILE_FORMAT,
        "version": PROFILE_VERSION,
        "speaker_id": profile.speaker_id,
        "feature_kind": profile.keyword_template.kind,
        "feature_dims": profile.keyword_template.dims,
        **blobs,
        "thresholds": profile.thresholds.as_dict(),
        "settings": profile.settings,
    }
    path.write_text(json.dumps(doc, indent=2, allow_nan=True))
    return path


def load_profile(path) -> EnrollmentProfile:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ProfileError(f"{path}: unreadable profile metadata: {e}") from e
    if not isinstance(doc, dict) or doc.get("format") != PROFILE_FORMAT:
        raise ProfileError(f"{path}: not a {PROFILE_FORMAT} document")
    if doc.get("version") != PROFILE_VERSION:
        raise ProfileError(f"{path}: unsupported profile version {doc.get('version')!r}")

    def blob(name):
        p = path.parent / name
        if not p.is_file():
            raise MissingBlobError(f"{path}: referenced blob {name} is missing")
        return p

    try:
        keyword = read_features(blob(doc["keyword_template"]))
        raw = [read_features(blob(n)) for n in doc["raw_templates"]]
        awe = read_embeddings(blob(doc["awe_template"]))[0]
        sv = read_embeddings(blob(doc["sv_template"]))[0]
        thresholds = Thresholds(**doc["thresholds"])
        return EnrollmentProfile(str(doc["speaker_id"]), keyword, raw, awe, sv,
                                 thresholds, dict(doc.get("settings") or {}))
    except (KeyError, TypeError, ValueError) as e:
        raise ProfileError(f"{path}: corrupt profile metadata: {e!r}") from e
