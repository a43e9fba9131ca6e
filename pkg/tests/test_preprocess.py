import numpy as np
import pytest

from squatcoach.errors import StratificationError, TooShort
from squatcoach.geometry import FeatureFrame
from squatcoach.labels import SquatLabel
from squatcoach.preprocess import (CleanClip, Excluded, FeatureTensor, OutlierThresholds,
                                   RawClip, TENSOR_CHANNELS, assemble_tensor,
                                   detect_outliers, resample, sanitize, split_dataset,
                                   transform)


def make_clip(bt=None, df=None, khr=None, bs=None, n=None, clip_id="c0", label=None):
    series = {"bt": bt, "df": df, "khr": khr, "bs": bs}
    n = n or max(len(v) for v in series.values() if v is not None)
    defaults = {"bt": 120.0, "df": 20.0, "khr": 1.0, "bs": 5.0}
    frames = []
    for i in range(n):
        vals = {k: (series[k][i] if series[k] is not None else defaults[k])
                for k in defaults}
        frames.append(FeatureFrame(timestamp_ms=i * 33, torso=15.0, **vals))
    return RawClip(clip_id, frames, label=label)


def test_detect_outliers_single_df():
    clip = make_clip(df=[30, 65, 34])
    assert detect_outliers(clip) == [(1, "df")]


def test_detect_outliers_strict_exceedance_at_bounds():
    clip = make_clip(bt=[180.0] * 3, df=[60.0] * 3, khr=[30.0, -30.0, 30.0], bs=[150.0] * 3)
    assert detect_outliers(clip) == []


def test_detect_outliers_composition():
    bt = [120.0] * 12
    bs = [5.0] * 12
    bt[3] = 181.0
    bs[9] = 200.0
    flags = detect_outliers(make_clip(bt=bt, bs=bs))
    assert flags == [(3, "bt"), (9, "bs")]


def test_detect_outliers_khr_magnitude():
    clip = make_clip(khr=[0.0, -31.0, 0.0])
    assert detect_outliers(clip) == [(1, "khr")]


def test_sanitize_neighbor_mean():
    clip = make_clip(df=[30.0, 65.0, 34.0])
    out = sanitize(clip)
    assert isinstance(out, CleanClip)
    assert [f.df for f in out.clip.frames] == [30.0, 32.0, 34.0]
    assert out.repairs == [(1, "df", 65.0, 32.0)]


def test_sanitize_boundary_copies_adjacent():
    out = sanitize(make_clip(bs=[200.0, 7.0, 8.0]))
    assert [f.bs for f in out.clip.frames] == [7.0, 7.0, 8.0]
    out = sanitize(make_clip(bs=[7.0, 8.0, 200.0]))
    assert [f.bs for f in out.clip.frames] == [7.0, 8.0, 8.0]


def test_sanitize_excludes_on_two_flags():
    clip = make_clip(df=[30.0, 65.0, 34.0, 61.0])
    out = sanitize(clip)
    assert isinstance(out, Excluded)
    assert out.outliers == [(1, "df"), (3, "df")]


def test_sanitize_identity_without_flags():
    clip = make_clip(df=[30.0, 31.0, 34.0])
    out = sanitize(clip)
    assert isinstance(out, CleanClip)
    assert out.clip.frames == clip.frames
    assert out.repairs == []


def test_sanitize_never_touches_unflagged_readings():
    rng = np.random.default_rng(3)
    for _ in range(50):
        df = rng.uniform(0, 55, size=12)
        hot = int(rng.integers(1, 11))
        df[hot] = 75.0
        clip = make_clip(df=list(df))
        out = sanitize(clip)
        for i, frame in enumerate(out.clip.frames):
            if i != hot:
                assert frame.df == clip.frames[i].df


def test_resample_linear_ramp():
    out = resample([0.0, 1.0, 2.0, 3.0])
    assert out[0] == 0.0 and out[-1] == 3.0
    for k in range(50):
        assert out[k] == pytest.approx(3.0 * k / 49.0, abs=1e-12)


def test_resample_constant_and_identity():
    assert np.allclose(resample([5.0] * 45), 5.0)
    x = np.random.default_rng(0).normal(size=50)
    assert np.array_equal(resample(x), x)


def test_resample_too_short():
    with pytest.raises(TooShort):
        resample([1.0])


def test_resample_bounds_and_monotonicity():
    rng = np.random.default_rng(11)
    for _ in range(100):
        x = rng.normal(size=rng.integers(2, 90))
        out = resample(x)
        assert out.min() >= x.min() - 1e-12 and out.max() <= x.max() + 1e-12
        mono = np.sort(x)
        assert np.all(np.diff(resample(mono)) >= -1e-12)


def test_transform_v():
    x = resample([3.0, 5.0, 4.0, 4.0], target_len=4)
    v = transform(x, "v")
    assert list(v) == [0.0, 2.0, -1.0, 0.0]


def test_transform_vrc():
    x = np.array([2.0, 4.0, 6.0])
    assert list(transform(x, "vrc")) == [0.0, 1.0, 0.5]


def test_transform_vrc_guard():
    x = np.array([0.0, 4.0, 6.0])
    vrc = transform(x, "vrc")
    assert vrc[1] == 0.0  # previous value under the epsilon
    assert vrc[2] == 0.5


def test_transform_z():
    assert np.allclose(transform(np.full(50, 3.3), "z"), 0.0)
    x = resample([1.0, 2.0, 3.0])
    z = transform(x, "z")
    assert z.mean() == pytest.approx(0.0, abs=1e-9)
    assert z.std() == pytest.approx(1.0, abs=1e-9)


def test_telescoping_and_z_properties_random():
    rng = np.random.default_rng(42)
    for _ in range(200):
        x = rng.normal(scale=rng.uniform(0.1, 30), size=50) + rng.uniform(-50, 50)
        v = transform(x, "v")
        assert v.sum() == pytest.approx(x[-1] - x[0], abs=1e-9)
        z = transform(x, "z")
        assert z.mean() == pytest.approx(0.0, abs=1e-9)
        assert z.std() == pytest.approx(1.0, abs=1e-9)


def test_assemble_tensor_constant_clip():
    clip = make_clip(n=40)
    tensor = assemble_tensor(sanitize(clip))
    assert tensor.data.shape == (12, 50)
    assert np.allclose(tensor.data, 0.0)  # V, VRC, and Z all vanish


def test_assemble_tensor_matches_hand_composition():
    rng = np.random.default_rng(5)
    clip = make_clip(bt=list(rng.uniform(70, 139, size=37)),
                     df=list(rng.uniform(0, 55, size=37)),
                     khr=list(rng.uniform(-5, 5, size=37)),
                     bs=list(rng.uniform(0, 40, size=37)))
    tensor = assemble_tensor(sanitize(clip))
    assert tensor.clip_id == clip.clip_id
    for kind_i, kind in enumerate(("v", "vrc", "z")):
        for ch_i, ch in enumerate(("bt", "df", "khr", "bs")):
            row = tensor.data[kind_i * 4 + ch_i]
            expected = transform(resample(clip.channel(ch)), kind)
            assert np.array_equal(row, expected)
            assert TENSOR_CHANNELS[kind_i * 4 + ch_i] == f"{ch}_{kind}"


def test_tensor_v_vrc_rows_start_at_zero():
    rng = np.random.default_rng(6)
    clip = make_clip(bt=list(rng.uniform(70, 139, 33)), df=list(rng.uniform(1, 50, 33)),
                     khr=list(rng.uniform(0.5, 4, 33)), bs=list(rng.uniform(1, 30, 33)))
    tensor = assemble_tensor(sanitize(clip))
    assert np.all(tensor.data[:8, 0] == 0.0)


def test_pipeline_determinism():
    rng = np.random.default_rng(9)
    clip = make_clip(df=list(rng.uniform(0, 50, size=41)))
    a = assemble_tensor(sanitize(clip))
    b = assemble_tensor(sanitize(clip))
    assert np.array_equal(a.data, b.data)


def _tensor(label, i):
    data = np.zeros((12, 50))
    return FeatureTensor(f"t-{label}-{i}", data, label=SquatLabel(label))


def test_split_counts_100():
    tensors = [_tensor(1, i) for i in range(100)]
    splits = split_dataset(tensors, seed=4)
    assert (len(splits["train"]), len(splits["val"]), len(splits["test"])) == (80, 10, 10)


def test_split_is_exact_partition_and_stratified():
    tensors = [_tensor(l, i) for l in (1, 2, 3) for i in range(30)]
    splits = split_dataset(tensors, seed=1)
    ids = [t.clip_id for part in splits.values() for t in part]
    assert len(ids) == len(set(ids)) == 90
    for part, expect in (("train", 24), ("val", 3), ("test", 3)):
        for l in (1, 2, 3):
            assert sum(1 for t in splits[part] if int(t.label) == l) == expect


def test_split_deterministic():
    tensors = [_tensor(1, i) for i in range(40)]
    a = split_dataset(tensors, seed=7)
    b = split_dataset(tensors, seed=7)
    assert [t.clip_id for t in a["test"]] == [t.clip_id for t in b["test"]]


def test_split_rejects_small_classes():
    tensors = [_tensor(1, i) for i in range(9)]
    with pytest.raises(StratificationError):
        split_dataset(tensors, seed=0)
