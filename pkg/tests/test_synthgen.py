import numpy as np
import pytest

from squatcoach.errors import InfeasiblePose
from squatcoach.labels import SquatLabel as L
from squatcoach.preprocess import detect_outliers
from squatcoach.synthgen import (BS_FLATNESS_BOUND, GenConfig, generate_clip,
                                 generate_corpus, generate_session_stream,
                                 joint_synthesis, synthesize_frame, template_curves)

NOISELESS = GenConfig(noise_scale=0.0)


def curves_of(clip):
    frames = clip.clip.frames
    return {k: np.array([getattr(f, k) for f in frames])
            for k in ("bt", "df", "torso", "khr", "bs")}


def rise_start(bt, eps=0.75):
    lim = bt.min() + eps
    return max(i for i, v in enumerate(bt) if v <= lim)


def fall_start(df, eps=0.5):
    lim = df.max() - eps
    return max(i for i, v in enumerate(df) if v >= lim)


def midrange_crossings(khr):
    k = khr[1:]  # skip the first-frame zero convention
    mid = (k.max() + k.min()) / 2.0
    signs = np.sign(k - mid)
    signs = signs[signs != 0]
    return int((np.diff(signs) != 0).sum())


def relation_flags(label: L, clip, ref_curves) -> dict:
    """Per-label ordering relations of one clip against the good-squat
    template at the same length. Keys are stable so tests can aggregate."""
    c = curves_of(clip)
    n = len(c["bt"])
    q, fifth = n // 4, n // 5
    ref = ref_curves
    if label == L.GOOD:
        return {
            "bt_min_df_max_same_frame": int(np.argmin(c["bt"])) == int(np.argmax(c["df"])),
            "bs_flat": (c["bs"].max() - c["bs"].min()) <= BS_FLATNESS_BOUND,
            "khr_single_midrange_crossing": midrange_crossings(c["khr"]) == 1,
        }
    if label == L.TOO_SHALLOW:
        return {
            "bt_min_higher": c["bt"].min() > ref["bt"].min(),
            "df_max_lower": c["df"].max() < ref["df"].max(),
        }
    if label == L.HIP_RISING_TOO_FAST:
        return {
            "bt_rises_later": rise_start(c["bt"]) > rise_start(ref["bt"]),
            "df_falls_earlier": fall_start(c["df"]) < fall_start(ref["df"]),
            "late_khr_bigger": np.abs(c["khr"][-fifth:]).mean() > np.abs(ref["khr"][-fifth:]).mean(),
        }
    if label == L.EXCESSIVE_HIP_DOMINANT:
        return {
            "bt_min_earlier": np.argmin(c["bt"]) < np.argmin(ref["bt"]),
            "df_peak_later": np.argmax(c["df"]) > np.argmax(ref["df"]),
            "early_bs_bigger": c["bs"][:q].mean() > ref["bs"][:q].mean(),
        }
    if label == L.EXCESSIVE_KNEE_DOMINANT:
        return {
            "early_df_bigger": c["df"][:q].mean() > ref["df"][:q].mean(),
            "early_khr_bigger": c["khr"][1:q].mean() > ref["khr"][1:q].mean(),
            "early_bs_flatter": (c["bs"][:q].max() - c["bs"][:q].min())
                                 < (ref["bs"][:q].max() - ref["bs"][:q].min()),
            "late_bs_bigger": c["bs"][-q:].mean() > ref["bs"][-q:].mean(),
            "bt_min_lower": c["bt"].min() < ref["bt"].min(),
        }
    raise ValueError(label)


CHECKED_LABELS = (L.GOOD, L.TOO_SHALLOW, L.HIP_RISING_TOO_FAST,
                  L.EXCESSIVE_HIP_DOMINANT, L.EXCESSIVE_KNEE_DOMINANT)


@pytest.mark.parametrize("label", CHECKED_LABELS)
def test_noiseless_templates_satisfy_relations(label):
    clip = generate_clip(label, NOISELESS, seed=500 + label)
    ref = template_curves(L.GOOD, len(clip.clip.frames))
    flags = relation_flags(label, clip, ref)
    assert all(flags.values()), flags


def test_noiseless_tilt_pair_relation():
    c3 = generate_clip(L.POSTERIOR_PELVIC_TILT, NOISELESS, seed=1)
    c4 = generate_clip(L.ANTERIOR_PELVIC_TILT, NOISELESS, seed=2)
    b3, b4 = curves_of(c3), curves_of(c4)
    assert b3["df"][np.argmin(b3["bt"])] < b4["df"][np.argmin(b4["bt"])]


def test_relations_hold_on_noisy_clips():
    """The ordering relations survive the default noise on at least 95% of
    seeds (spot-checked here on 200 seeds per label; the full 1000-seed
    measurement backs the chosen noise defaults)."""
    n = 200
    for label in CHECKED_LABELS:
        failures = {}
        for seed in range(n):
            clip = generate_clip(label, seed=seed)
            ref = template_curves(L.GOOD, len(clip.clip.frames))
            for name, ok in relation_flags(label, clip, ref).items():
                failures[name] = failures.get(name, 0) + (0 if ok else 1)
        for name, count in failures.items():
            assert count / n <= 0.05, (label, name, count / n)
    fails = sum(
        1 for seed in range(n)
        if not (lambda a, b: a["df"][np.argmin(a["bt"])] < b["df"][np.argmin(b["bt"])])(
            curves_of(generate_clip(L.POSTERIOR_PELVIC_TILT, seed=seed)),
            curves_of(generate_clip(L.ANTERIOR_PELVIC_TILT, seed=seed + n)))
    )
    assert fails / n <= 0.05


def test_zero_noise_good_squat_extrema_align():
    clip = generate_clip(L.GOOD, NOISELESS, seed=77)
    c = curves_of(clip)
    assert int(np.argmin(c["bt"])) == int(np.argmax(c["df"]))


def test_clips_are_clean_and_under_threshold():
    for label in L:
        for seed in (0, 1, 2):
            clip = generate_clip(label, seed=seed)
            c = curves_of(clip)
            assert c["bt"].max() < 140.0
            assert detect_outliers(clip.clip) == []
            n = len(c["bt"])
            assert 30 <= n <= 70
            assert 0.0 <= c["torso"].min() and c["torso"].max() <= 90.0


def test_duration_distribution():
    lengths = [len(generate_clip(L.GOOD, seed=s).clip.frames) for s in range(400)]
    assert 43.0 < np.mean(lengths) < 48.0
    assert 3.5 < np.std(lengths) < 7.5
    assert min(lengths) >= 30 and max(lengths) <= 70


def test_corpus_deterministic_and_counted():
    counts = {L.GOOD: 10}
    a = generate_corpus(counts, seed=5)
    b = generate_corpus(counts, seed=5)
    assert len(a) == 10 and all(c.label == L.GOOD for c in a)
    assert [c.clip.clip_id for c in a] == [c.clip.clip_id for c in b]
    assert all(x.clip.frames == y.clip.frames for x, y in zip(a, b))
    c = generate_corpus(counts, seed=6)
    assert [x.clip.clip_id for x in c] != [x.clip.clip_id for x in a]


def test_corpus_mixed_counts():
    corpus = generate_corpus({L.GOOD: 3, L.TOO_SHALLOW: 2}, seed=0)
    labels = [c.label for c in corpus]
    assert labels.count(L.GOOD) == 3 and labels.count(L.TOO_SHALLOW) == 2


def test_margin_scales_template_separation():
    ref = template_curves(L.GOOD, 45)
    for label in (L.TOO_SHALLOW, L.EXCESSIVE_KNEE_DOMINANT, L.ANTERIOR_PELVIC_TILT):
        gaps = []
        for margin in (0.25, 1.0):
            t = template_curves(label, 45, margin=margin)
            gaps.append(max(np.abs(t[k] - ref[k]).max() for k in ("bt", "df", "bs")))
        assert gaps[0] < gaps[1], label


def test_synthesize_upright_collinear():
    frame = synthesize_frame(0, bt=180.0, df=0.0, torso=0.0, bs=0.0)
    assert frame.ankle.x == frame.knee.x == frame.pelvis.x == frame.spine_navel.x
    assert frame.knee.y < frame.ankle.y
    assert frame.pelvis.y < frame.knee.y


def test_synthesize_infeasible():
    with pytest.raises(InfeasiblePose):
        synthesize_frame(0, bt=150.0, df=95.0, torso=10.0, bs=0.0)
    with pytest.raises(InfeasiblePose):
        synthesize_frame(0, bt=190.0, df=10.0, torso=10.0, bs=0.0)
    with pytest.raises(InfeasiblePose):
        synthesize_frame(0, bt=150.0, df=10.0, torso=10.0, bs=-1.0)


def test_round_trip_all_labels():
    from squatcoach.geometry import extract_features
    for label in L:
        clip = generate_clip(label, seed=31 + label)
        feats = extract_features(joint_synthesis(clip.clip.frames))
        for a, b in zip(clip.clip.frames, feats):
            assert abs(a.bt - b.bt) < 1e-6
            assert abs(a.df - b.df) < 1e-6
            assert abs(a.torso - b.torso) < 1e-6
            assert abs(a.bs - b.bs) < 1e-6


def test_session_stream_shape():
    stream, clips = generate_session_stream([L.GOOD, L.TOO_SHALLOW], seed=3)
    ts = [f.timestamp_ms for f in stream]
    assert all(b > a for a, b in zip(ts, ts[1:]))
    # starts and ends racked: bar far from the centerline
    assert abs(stream[0].bar.x - stream[-1].bar.x) < 1.0
    assert len(clips) == 2
