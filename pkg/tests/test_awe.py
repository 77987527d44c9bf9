import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from qbekws.audio import FeatureMatrix
from qbekws.awe import (
    ConstantEmbedder,
    PrecomputedEmbedder,
    Segment,
    SegmentSequence,
    awe_cost,
    moving_average,
    pad_or_clip,
    reference_embedder,
    segment_content,
)
from qbekws.errors import EmbedderError, ZeroNormError


def fm(x):
    return FeatureMatrix(np.asarray(x, dtype=np.float32), 10.0, 25.0, "fbank")


def seq(*vecs):
    return SegmentSequence([Segment(k, k, np.asarray(v, float)) for k, v in enumerate(vecs)], 80, 10)


def test_pad_or_clip_cases():
    x = fm(np.arange(100, dtype=float).reshape(-1, 1) + 1)
    assert pad_or_clip(x.slice(0, 80), 80) == x.slice(0, 80)
    clipped = pad_or_clip(x, 80)
    assert clipped.data.ravel().tolist() == list(range(11, 91))  # frames 10..89
    padded = pad_or_clip(x.slice(0, 60), 80)
    assert padded.frames == 80
    assert not padded.data[:10].any() and not padded.data[70:].any()
    assert padded.data[10:70].ravel().tolist() == list(range(1, 61))
    odd = pad_or_clip(x.slice(0, 5), 8)  # 3 pad frames: 1 before, 2 after
    assert odd.data.ravel().tolist() == [0, 1, 2, 3, 4, 5, 0, 0]
    with pytest.raises(ValueError):
        pad_or_clip(x, 0)


def test_segment_counts(rng):
    s = segment_content(fm(rng.normal(size=(80, 4))), 0.8, 0.1)
    assert len(s) == 1
    s = segment_content(fm(rng.normal(size=(100, 4))), 0.8, 0.1)
    assert [g.start_frame for g in s.segments] == [0, 10, 20]
    assert len(s) == 1 + (100 - 80) // 10
    s = segment_content(fm(rng.normal(size=(30, 4))), 0.8, 0.1)
    assert len(s) == 1 and s.segments[0].end_frame == 29


def test_segment_offset_passed_to_embedder(rng):
    seen = []

    def spy(seg, start):
        seen.append((seg.frames, start))
        return np.ones(3)

    segment_content(fm(rng.normal(size=(100, 2))), embedder=spy, offset=40)
    assert seen == [(80, 40), (80, 50), (80, 60)]


def test_embedder_failure_reports_window():
    def flaky(seg, start):
        if start == 10:
            raise RuntimeError("boom")
        return np.ones(2)

    with pytest.raises(EmbedderError) as info:
        segment_content(fm(np.ones((100, 2))), embedder=flaky)
    assert info.value.window_index == 1


def test_precomputed_embedder_lookup(rng):
    table = rng.normal(size=(3, 6))
    s = segment_content(fm(rng.normal(size=(100, 2))), embedder=PrecomputedEmbedder(table, 10))
    assert np.array_equal(s.embeddings(), table)
    with pytest.raises(EmbedderError):
        segment_content(fm(rng.normal(size=(120, 2))), embedder=PrecomputedEmbedder(table, 10))
    assert np.array_equal(ConstantEmbedder([1, 2])(None), [1.0, 2.0])


def test_awe_cost_examples(rng):
    t = rng.normal(size=8)
    raw, best = awe_cost(t, seq(rng.normal(size=8), t, rng.normal(size=8)))
    assert raw[1] == pytest.approx(0.0, abs=1e-12) and best == raw.min()
    raw, best = awe_cost([1, 0, 0], seq([0, 1, 0], [0, 0, 3]))
    assert raw.tolist() == [1.0, 1.0]
    raw, best = awe_cost(t, seq(t, -t))
    assert raw[0] == pytest.approx(0.0, abs=1e-12) and raw[1] == pytest.approx(2.0)
    assert best == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ZeroNormError):
        awe_cost(np.zeros(8), seq(t))
    with pytest.raises(ZeroNormError):
        awe_cost(t, seq(np.zeros(8)))


vec = arrays(np.float64, 6, elements=st.floats(-10, 10, allow_nan=False)).filter(
    lambda v: np.linalg.norm(v) > 1e-3)


@settings(max_examples=80, deadline=None)
@given(t=vec, segs=st.lists(vec, min_size=1, max_size=6), scale=st.floats(0.01, 100))
def test_awe_cost_range_and_scale_invariance(t, segs, scale):
    raw, best = awe_cost(t, seq(*segs))
    assert np.all((raw >= 0) & (raw <= 2))
    assert best == raw.min()
    raw2, _ = awe_cost(scale * t, seq(*[scale * s for s in segs]))
    assert np.allclose(raw, raw2, atol=1e-9)


def test_moving_average_examples():
    x = [0.3, 0.9, 0.1, 0.4]
    assert moving_average(x, 1).tolist() == x
    assert moving_average([0, 1, 2], 2).tolist() == [0.5, 1.5]
    for k in (1, 2, 3, 7):
        assert moving_average([0.1] * 5, k).tolist() == [0.1] * (5 - k + 1 if k <= 5 else 1)
    assert moving_average([1.0, 3.0], 5).tolist() == [2.0]
    with pytest.raises(ValueError):
        moving_average(x, 0)


@settings(max_examples=80, deadline=None)
@given(x=st.lists(st.floats(0, 2), min_size=1, max_size=30), k=st.integers(1, 10))
def test_smoothing_bounds(x, k):
    s = moving_average(x, k)
    assert len(s) == (len(x) - k + 1 if k <= len(x) else 1)
    assert min(x) <= s.min() and s.max() <= max(x)


def test_reference_embedder_properties(rng):
    const = fm(np.tile([1.0, -2.0, 3.0], (80, 1)))
    e = reference_embedder(const)
    assert np.array_equal(e[3:], np.zeros(3))
    assert np.linalg.norm(e) == pytest.approx(1.0)
    assert np.allclose(e[:3], np.array([1, -2, 3]) / np.sqrt(14))
    seg = fm(rng.normal(size=(80, 5)))
    assert np.array_equal(reference_embedder(seg), reference_embedder(fm(seg.data.copy())))
    rev = fm(seg.data[::-1])
    assert np.allclose(reference_embedder(seg), reference_embedder(rev), atol=1e-12)


def test_planted_window_scores_zero(rng):
    template = fm(rng.normal(size=(80, 6)))
    content = fm(np.concatenate([rng.normal(size=(30, 6)) + 3, template.data, rng.normal(size=(40, 6))]))
    t_emb = reference_embedder(pad_or_clip(template, 80))
    # with hop 0.1 s windows start every 10 frames; frame 30 is a window start
    raw, best = awe_cost(t_emb, segment_content(content, 0.8, 0.1))
    assert best == pytest.approx(0.0, abs=1e-12)
    assert int(np.argmin(raw)) == 3
