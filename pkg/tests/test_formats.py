import json

import numpy as np
import pytest

from qbekws.audio import FeatureMatrix
from qbekws.errors import BadMagicError, MissingBlobError, ProfileError, SizeMismatchError, VersionMismatchError
from qbekws.profile import EnrollmentProfile, Thresholds, load_profile, save_profile
from qbekws.qbef import HEADER, read_embeddings, read_features, write_embeddings, write_features


def fbank_like(rng, frames=98, dims=64):
    return FeatureMatrix(rng.normal(size=(frames, dims)), 10.0, 25.0, "fbank")


def test_roundtrip_bit_exact(tmp_path, rng):
    m = fbank_like(rng)
    write_features(m, tmp_path / "a.qbef")
    back = read_features(tmp_path / "a.qbef")
    assert back == m
    assert back.data.tobytes() == m.data.tobytes()
    assert (tmp_path / "a.qbef").stat().st_size == HEADER.size + 98 * 64 * 4


def test_zero_frame_roundtrip(tmp_path):
    m = FeatureMatrix(np.zeros((0, 13)), 10.0, 25.0, "mfcc")
    write_features(m, tmp_path / "z.qbef")
    back = read_features(tmp_path / "z.qbef")
    assert back == m and back.frames == 0 and back.dims == 13


def test_truncated_payload(tmp_path, rng):
    p = tmp_path / "t.qbef"
    write_features(fbank_like(rng), p)
    p.write_bytes(p.read_bytes()[:-10])
    with pytest.raises(SizeMismatchError):
        read_features(p)


def test_trailing_bytes_rejected(tmp_path, rng):
    p = tmp_path / "t.qbef"
    write_features(fbank_like(rng, 3, 2), p)
    p.write_bytes(p.read_bytes() + b"\0\0\0\0")
    with pytest.raises(SizeMismatchError):
        read_features(p)


def test_bad_magic_and_version(tmp_path, rng):
    p = tmp_path / "m.qbef"
    write_features(fbank_like(rng, 2, 2), p)
    raw = bytearray(p.read_bytes())
    p.write_bytes(b"XXXX" + bytes(raw[4:]))
    with pytest.raises(BadMagicError):
        read_features(p)
    raw[4] = 9
    p.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatchError):
        read_features(p)


def test_huge_header_counts_do_not_overread(tmp_path):
    p = tmp_path / "h.qbef"
    p.write_bytes(HEADER.pack(b"QBEF", 1, 2, 0xFFFFFFFF, 0xFFFFFFFF, 10.0, 25.0))
    with pytest.raises(SizeMismatchError):
        read_features(p)


def test_embeddings_roundtrip(tmp_path, rng):
    e = rng.normal(size=(5, 16)).astype(np.float32)
    write_embeddings(e, tmp_path / "e.qbef", hop_ms=100, window_ms=800)
    assert read_embeddings(tmp_path / "e.qbef").tobytes() == e.tobytes()
    meta = read_features(tmp_path / "e.qbef")
    assert (meta.kind, meta.shift_ms, meta.window_ms) == ("embedding", 100.0, 800.0)


def make_profile(rng, lengths=(40, 55, 47)):
    raws = [FeatureMatrix(rng.normal(size=(n, 8)), kind="mfcc") for n in lengths]
    return EnrollmentProfile(
        "spk1", raws[0], raws, rng.normal(size=12), rng.normal(size=12),
        Thresholds(3.5, 0.4, 0.25), {"stage1_kind": "mfcc", "hop_s": 0.1},
    )


def test_profile_roundtrip_variable_lengths(tmp_path, rng):
    prof = make_profile(rng)
    save_profile(prof, tmp_path / "p.json")
    back = load_profile(tmp_path / "p.json")
    assert back == prof
    assert [t.frames for t in back.raw_templates] == [40, 55, 47]
    doc = json.loads((tmp_path / "p.json").read_text())
    assert doc["speaker_id"] == "spk1" and doc["thresholds"]["t2"] == 0.4


def test_profile_infinite_threshold_roundtrip(tmp_path, rng):
    prof = make_profile(rng).with_thresholds(Thresholds())
    save_profile(prof, tmp_path / "p.json")
    assert load_profile(tmp_path / "p.json").thresholds.t1 == float("inf")


def test_zero_sv_template_rejected(tmp_path, rng):
    raws = [FeatureMatrix(rng.normal(size=(10, 4)))]
    with pytest.raises(ValueError):
        save_profile(EnrollmentProfile("s", raws[0], raws, np.ones(4), np.zeros(4)),
                     tmp_path / "p.json")


def test_profile_missing_blob(tmp_path, rng):
    save_profile(make_profile(rng), tmp_path / "p.json")
    (tmp_path / "p.awe.qbef").unlink()
    with pytest.raises(MissingBlobError):
        load_profile(tmp_path / "p.json")


@pytest.mark.parametrize("mutate", [
    lambda d: "{not json",
    lambda d: json.dumps({**d, "format": "other"}),
    lambda d: json.dumps({k: v for k, v in d.items() if k != "thresholds"}),
    lambda d: json.dumps({**d, "thresholds": {"t1": -1, "t2": 0, "t3": 0}}),
])
def test_profile_corrupt_metadata(tmp_path, rng, mutate):
    p = tmp_path / "p.json"
    save_profile(make_profile(rng), p)
    p.write_text(mutate(json.loads(p.read_text())))
    with pytest.raises(ProfileError):
        load_profile(p)
