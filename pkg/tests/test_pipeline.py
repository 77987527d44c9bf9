import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qbekws.audio import FeatureMatrix
from qbekws.errors import FeatureMismatchError
from qbekws.pipeline import (
    DecisionRecord,
    PipelineConfig,
    UtteranceFeatures,
    decide,
    detect,
    enroll,
    stage_statistics,
)
from qbekws.profile import Thresholds

OPEN = Thresholds(np.inf, np.inf, -1.0)


def fm(x, kind="fbank"):
    return FeatureMatrix(np.asarray(x, dtype=float), kind=kind)


@pytest.fixture(scope="module")
def world():
    r = np.random.default_rng(7)
    kw = r.normal(size=(40, 6))
    utts = [fm(kw + 0.05 * r.normal(size=kw.shape)) for _ in range(3)]
    profile = enroll("spk", utts)
    return r, kw, profile


def embed_with_noise(content, r, at, kw):
    x = r.normal(size=(content, kw.shape[1])) * 2.0
    x[at:at + kw.shape[0]] = kw
    return fm(x)


def test_self_match_costs_zero():
    r = np.random.default_rng(0)
    u = fm(r.normal(size=(30, 4)))
    p = enroll("a", [u, u, u])
    assert p.keyword_template == u
    rec = detect(p, u, thresholds=OPEN)
    assert rec.stage1.cost == 0.0
    assert (rec.stage1.start_frame, rec.stage1.end_frame) == (0, 29)
    assert rec.stage2.best_cost == pytest.approx(0.0, abs=1e-9)
    assert rec.sv.score > 0.9  # whole-utterance template vs padded 2 s segment
    assert rec.final


def test_mixed_feature_kinds_rejected():
    r = np.random.default_rng(1)
    a = fm(r.normal(size=(20, 4)), "fbank")
    b = fm(r.normal(size=(20, 4)), "mfcc")
    with pytest.raises(FeatureMismatchError):
        enroll("a", [a, b])
    p = enroll("a", [a])
    with pytest.raises(FeatureMismatchError):
        detect(p, b)
    with pytest.raises(FeatureMismatchError):
        detect(p, fm(r.normal(size=(20, 5))))


def test_gates(world):
    r, kw, p = world
    test = embed_with_noise(200, r, 70, kw)
    assert detect(p, test, thresholds=OPEN).final
    rec = detect(p, test, thresholds=Thresholds(0.0, 2.0, -1.0))
    assert not rec.final and rec.stage2 is None and rec.sv is None
    rec = detect(p, test, thresholds=Thresholds(np.inf, 0.0, -1.0))
    assert not rec.final and rec.stage2 is not None and rec.sv is None
    rec = detect(p, test, thresholds=Thresholds(np.inf, np.inf, 1.0))
    assert not rec.final and rec.sv is not None and not rec.sv.passed


@pytest.mark.parametrize("at", [0, 33, 160])
def test_planted_span_is_located(world, at):
    r, kw, p = world
    test = embed_with_noise(200, r, at, kw)
    rec = detect(p, test, thresholds=OPEN)
    assert abs(rec.stage1.start_frame - at) <= 2
    assert abs(rec.stage1.end_frame - (at + kw.shape[0] - 1)) <= 2


def test_stage_views_are_independent():
    r = np.random.default_rng(3)
    kw, awe = r.normal(size=(25, 4)), r.normal(size=(25, 8))
    u = UtteranceFeatures(fm(kw, "mfcc"), fm(awe, "fbank"))
    p = enroll("a", [u, u])
    assert p.keyword_template.kind == "mfcc"
    rec = detect(p, u, thresholds=OPEN)
    assert rec.stage1.cost == 0.0 and rec.final


def test_audio_inputs(world):
    from qbekws.synth import make_corpus

    c = make_corpus(3, n_enroll=3, n_keywords=1, n_fillers=1)
    p = enroll("s", c.enrollment)
    assert p.keyword_template.kind == "mfcc"
    assert p.settings["stage2_kind"] == "fbank"
    rec = detect(p, c.keywords[0], thresholds=OPEN)
    assert rec.final
    assert rec.stage1.cost < detect(p, c.fillers[0], thresholds=OPEN).stage1.cost


def test_precomputed_embeddings():
    r = np.random.default_rng(4)
    u = fm(r.normal(size=(20, 3)))
    p = enroll("a", [u], awe_embeddings=[np.array([1.0, 0.0])],
               sv_embeddings=[np.array([0.0, 2.0]), np.array([0.0, 4.0])])
    assert p.awe_template.tolist() == [1.0, 0.0]
    assert p.sv_template.tolist() == [0.0, 3.0]


def test_record_json_roundtrip(world):
    r, kw, p = world
    for th in (OPEN, Thresholds(0.0, 1.0, 0.0), Thresholds(np.inf, 0.0, 0.0)):
        rec = detect(p, embed_with_noise(120, r, 10, kw), thresholds=th)
        line = json.loads(json.dumps(rec.to_json("u1", True)))
        assert line["utt"] == "u1" and line["label"] is True and line["final"] == rec.final
        assert DecisionRecord.from_json(line) == rec


def test_config_roundtrip():
    cfg = PipelineConfig(stage1_kind="fbank", smooth_k=5)
    assert PipelineConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(45, 150),
       t1=st.floats(0, 5), t2=st.floats(0, 1.0), t3=st.floats(-1, 1),
       d1=st.floats(0, 2), d2=st.floats(0, 1), d3=st.floats(0, 1))
def test_cascade_invariants(world, seed, n, t1, t2, t3, d1, d2, d3):
    _, kw, p = world
    r = np.random.default_rng(seed)
    test = embed_with_noise(n, r, int(r.integers(0, n - kw.shape[0])), kw)
    th = Thresholds(t1, t2, t3)
    rec = detect(p, test, thresholds=th)
    # short-circuit structure
    if not rec.stage1.passed:
        assert rec.stage2 is None and rec.sv is None
    elif not rec.stage2.passed:
        assert rec.sv is None
    assert rec.final == (rec.stage1.passed and rec.stage2 is not None and rec.stage2.passed
                         and rec.sv is not None and rec.sv.passed)
    # cached statistics reproduce the direct run
    stats = stage_statistics(p, test)
    assert decide(stats, th) == rec
    assert detect(p, test, thresholds=th) == rec
    # loosening any gate never turns a positive into a negative
    looser = Thresholds(t1 + d1, t2 + d2, max(-1.0, t3 - d3))
    if rec.final:
        assert detect(p, test, thresholds=looser).final
