import math

import numpy as np
import pytest

from squatcoach.errors import DegenerateGeometry
from squatcoach.geometry import (JointFrame, Point2, bar_shift, body_thigh_angle,
                                 centerline_x, compute_frame, dorsiflexion,
                                 extract_features, knee_hip_ratio, torso_angle)
from squatcoach.labels import SquatLabel
from squatcoach.synthgen import GenConfig, generate_clip, joint_synthesis, synthesize_frame


def upright_frame(t=0):
    return JointFrame(
        timestamp_ms=t,
        pelvis=Point2(100, 100), spine_navel=Point2(100, 40), knee=Point2(100, 160),
        ankle=Point2(100, 220), forefoot=Point2(100, 220), bar=Point2(100, 20),
    )


@pytest.mark.parametrize("knee,expected", [
    (Point2(100, 160), 180.0),   # collinear, fully upright
    (Point2(160, 100), 90.0),    # perpendicular
    (Point2(160, 160), 135.0),   # dot-product hand computation
])
def test_body_thigh_angle(knee, expected):
    got = body_thigh_angle(Point2(100, 100), Point2(100, 40), knee)
    assert got == pytest.approx(expected, abs=1e-9)


def test_body_thigh_angle_degenerate():
    with pytest.raises(DegenerateGeometry):
        body_thigh_angle(Point2(1, 1), Point2(1, 1), Point2(2, 2))
    with pytest.raises(DegenerateGeometry) as err:
        body_thigh_angle(Point2(1, 1), Point2(2, 2), Point2(1, 1))
    assert "knee" in str(err.value)


@pytest.mark.parametrize("ankle,forefoot,expected", [
    ((100, 200), (140, 200), 120.0),
    ((0, 0), (0, 0), 0.0),
    ((97, 210), (151, 214), 124.0),
])
def test_centerline_x(ankle, forefoot, expected):
    assert centerline_x(Point2(*ankle), Point2(*forefoot)) == expected


@pytest.mark.parametrize("knee,expected", [
    ((100, 140), 0.0),    # vertical tibia
    ((160, 140), 45.0),   # unit slope
    ((100, 260), 0.0),    # vertical line, orientation-free fold
])
def test_dorsiflexion(knee, expected):
    assert dorsiflexion(Point2(*knee), Point2(100, 200)) == pytest.approx(expected)


def test_dorsiflexion_degenerate():
    with pytest.raises(DegenerateGeometry):
        dorsiflexion(Point2(5, 5), Point2(5, 5))


@pytest.mark.parametrize("navel,expected", [
    ((100, 40), 0.0),
    ((160, 40), 45.0),
    ((160, 100), 90.0),
])
def test_torso_angle(navel, expected):
    assert torso_angle(Point2(100, 100), Point2(*navel)) == pytest.approx(expected)


def test_knee_hip_ratio():
    assert knee_hip_ratio(34, 32, 11, 10) == pytest.approx(2.0)
    assert knee_hip_ratio(32, 32, 12, 10) == 0.0
    # guarded zero denominator carries the fallback
    assert knee_hip_ratio(33, 30, 10, 10, fallback=1.25) == 1.25
    assert knee_hip_ratio(33, 30, 10, 10) == 0.0


@pytest.mark.parametrize("bar_x,expected", [(120, 0.0), (135, 15.0), (105, 15.0)])
def test_bar_shift(bar_x, expected):
    assert bar_shift(Point2(bar_x, 80), 120.0) == expected


def test_extract_single_upright_frame():
    feats = extract_features([upright_frame()])
    f = feats[0]
    assert (f.bt, f.df, f.torso, f.khr, f.bs) == (180.0, 0.0, 0.0, 0.0, 0.0)


def test_extract_khr_from_two_frames():
    f0 = synthesize_frame(0, bt=150.0, df=0.0, torso=0.0, bs=0.0)
    f1 = synthesize_frame(33, bt=150.0, df=2.0, torso=1.0, bs=0.0)
    feats = extract_features([f0, f1])
    assert feats[0].khr == 0.0
    assert feats[1].khr == pytest.approx(2.0, abs=1e-9)


def test_extract_carries_khr_over_flat_torso():
    frames = [
        synthesize_frame(0, 150, 0.0, 5.0, 0.0),
        synthesize_frame(33, 150, 2.0, 6.0, 0.0),   # khr 2
        synthesize_frame(66, 150, 4.0, 6.0, 0.0),   # torso flat: carry 2
    ]
    feats = extract_features(frames)
    assert feats[2].khr == pytest.approx(feats[1].khr)


def test_extract_degenerate_reports_frame_index():
    bad = JointFrame(timestamp_ms=33, pelvis=Point2(1, 1), spine_navel=Point2(1, 1),
                     knee=Point2(2, 2), ankle=Point2(0, 0), forefoot=Point2(1, 0),
                     bar=Point2(0, 0))
    with pytest.raises(DegenerateGeometry) as err:
        extract_features([upright_frame(0), bad])
    assert err.value.frame_index == 1


def test_extract_features_round_trip_oracle():
    """Joint synthesis followed by extraction reproduces the generator's
    analytic curves within 1e-6."""
    clip = generate_clip(SquatLabel.GOOD, GenConfig(noise_scale=0.0), seed=123)
    frames = clip.clip.frames
    feats = extract_features(joint_synthesis(frames))
    assert len(feats) == len(frames)
    for a, b in zip(frames, feats):
        assert abs(a.bt - b.bt) < 1e-6
        assert abs(a.df - b.df) < 1e-6
        assert abs(a.torso - b.torso) < 1e-6
        assert abs(a.bs - b.bs) < 1e-6


def _translate(frame, dx, dy):
    def mv(p):
        return Point2(p.x + dx, p.y + dy)
    return JointFrame(frame.timestamp_ms, mv(frame.pelvis), mv(frame.spine_navel),
                      mv(frame.knee), mv(frame.ankle), mv(frame.forefoot), mv(frame.bar))


def test_translation_invariance():
    clip = generate_clip(SquatLabel.GOOD, seed=9)
    joints = joint_synthesis(clip.clip.frames)
    moved = [_translate(f, 37.5, -12.25) for f in joints]
    for a, b in zip(extract_features(joints), extract_features(moved)):
        assert (a.bt, a.df, a.torso, a.khr, a.bs) == (b.bt, b.df, b.torso, b.khr, b.bs)


def test_mirror_fold_invariance():
    """Reflecting x about the centerline leaves every feature unchanged."""
    clip = generate_clip(SquatLabel.EXCESSIVE_KNEE_DOMINANT, seed=11)
    joints = joint_synthesis(clip.clip.frames)

    def mirror(frame):
        cx = centerline_x(frame.ankle, frame.forefoot)

        def mv(p):
            return Point2(2 * cx - p.x, p.y)
        return JointFrame(frame.timestamp_ms, mv(frame.pelvis), mv(frame.spine_navel),
                          mv(frame.knee), mv(frame.ankle), mv(frame.forefoot), mv(frame.bar))

    mirrored = [mirror(f) for f in joints]
    for a, b in zip(extract_features(joints), extract_features(mirrored)):
        assert a.bt == pytest.approx(b.bt, abs=1e-9)
        assert a.df == pytest.approx(b.df, abs=1e-9)
        assert a.torso == pytest.approx(b.torso, abs=1e-9)
        assert a.bs == pytest.approx(b.bs, abs=1e-9)


def test_feature_ranges_on_random_poses():
    rng = np.random.default_rng(7)
    for _ in range(300):
        frame = synthesize_frame(
            0,
            bt=rng.uniform(0, 180), df=rng.uniform(0, 90),
            torso=rng.uniform(0, 90), bs=rng.uniform(0, 200),
        )
        f = compute_frame(frame)
        assert 0.0 <= f.bt <= 180.0
        assert 0.0 <= f.df <= 90.0
        assert 0.0 <= f.torso <= 90.0
        assert f.bs >= 0.0
        assert math.isfinite(f.khr)


def test_extract_features_deterministic_and_length_preserving():
    clip = generate_clip(SquatLabel.GOOD, seed=21)
    joints = joint_synthesis(clip.clip.frames)
    a = extract_features(joints)
    b = extract_features(joints)
    assert a == b
    assert len(a) == len(joints)
