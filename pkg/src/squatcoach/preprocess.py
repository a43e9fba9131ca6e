"""Outlier handling, length-50 resampling, and the 12-channel tensor.

A raw clip carries variable-length per-frame features. The pipeline is:
flag outliers -> repair (one outlier) or exclude (two or more) -> resample
each base channel to 50 samples -> derive the V / VRC / Z variants of the
four base channels, giving a fixed 12 x 50 tensor per rep.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import StratificationError, TooShort
from .geometry import FeatureFrame
from .labels import SquatLabel

TARGET_LEN = 50

# Base feature channels that feed the tensor (torso is only used for KHR).
BASE_CHANNELS = ("bt", "df", "khr", "bs")

# Fixed tensor row order: the V block, then VRC, then Z.
TENSOR_CHANNELS = (
    "bt_v", "df_v", "khr_v", "bs_v",
    "bt_vrc", "df_vrc", "khr_vrc", "bs_vrc",
    "bt_z", "df_z", "khr_z", "bs_z",
)

VRC_EPSILON = 1e-9   # |previous value| below this makes the VRC ratio 0
ZSCORE_EPSILON = 1e-12  # population std below this zeroes the Z channel


@dataclass(frozen=True)
class OutlierThresholds:
    """A reading is an outlier on strict exceedance of these bounds."""

    bt_max: float = 180.0
    df_max: float = 60.0
    khr_max: float = 30.0   # applied to |khr|
    bs_max: float = 150.0


@dataclass
class RawClip:
    """One squat rep as an ordered run of feature frames."""

    clip_id: str
    frames: list[FeatureFrame]
    label: Optional[SquatLabel] = None

    def channel(self, name: str) -> np.ndarray:
        return np.array([getattr(f, name) for f in self.frames], dtype=float)

    def __len__(self) -> int:
        return len(self.frames)


@dataclass
class CleanClip:
    clip: RawClip
    repairs: list[tuple[int, str, float, float]] = field(default_factory=list)


@dataclass
class Excluded:
    clip_id: str
    reason: str
    outliers: list[tuple[int, str]] = field(default_factory=list)


@dataclass
class FeatureTensor:
    """12 named channels x 50 timesteps for one rep, fixed row order."""

    clip_id: str
    data: np.ndarray  # shape (12, 50)
    label: Optional[SquatLabel] = None

    def channel(self, name: str) -> np.ndarray:
        return self.data[TENSOR_CHANNELS.index(name)]


def detect_outliers(
    clip: RawClip, thresholds: OutlierThresholds = OutlierThresholds()
) -> list[tuple[int, str]]:
    """All (frame index, channel) readings strictly exceeding the thresholds."""
    flags = []
    for i, f in enumerate(clip.frames):
        if f.bt > thresholds.bt_max:
            flags.append((i, "bt"))
        if f.df > thresholds.df_max:
            flags.append((i, "df"))
        if abs(f.khr) > thresholds.khr_max:
            flags.append((i, "khr"))
        if f.bs > thresholds.bs_max:
            flags.append((i, "bs"))
    return flags


def sanitize(
    clip: RawClip, thresholds: OutlierThresholds = OutlierThresholds()
):
    """Repair a single outlier by neighbor interpolation, or exclude the clip.

    Returns a CleanClip (zero outliers: unchanged; exactly one: the flagged
    reading replaced by the mean of its neighbors on that channel, boundary
    readings copy the single adjacent value) or Excluded when two or more
    readings are flagged.
    """
    flags = detect_outliers(clip, thresholds)
    if len(flags) >= 2:
        return Excluded(clip.clip_id, "multiple outliers", flags)
    if not flags:
        return CleanClip(clip)

    idx, channel = flags[0]
    values = clip.channel(channel)
    if idx == 0:
        repaired = values[1]
    elif idx == len(values) - 1:
        repaired = values[-2]
    else:
        repaired = (values[idx - 1] + values[idx + 1]) / 2.0
    old = values[idx]
    frames = list(clip.frames)
    frames[idx] = replace(frames[idx], **{channel: float(repaired)})
    fixed = RawClip(clip.clip_id, frames, clip.label)
    return CleanClip(fixed, repairs=[(idx, channel, float(old), float(repaired))])


def resample(series: Sequence[float], target_len: int = TARGET_LEN) -> np.ndarray:
    """Linear interpolation onto target_len points; endpoints preserved."""
    values = np.asarray(series, dtype=float)
    if values.size < 2:
        raise TooShort(f"need at least 2 samples to resample, got {values.size}")
    src = np.arange(values.size, dtype=float)
    grid = np.linspace(0.0, values.size - 1, target_len)
    return np.interp(grid, src, values)


def transform(series: np.ndarray, kind: str) -> np.ndarray:
    """V (first difference), VRC (relative change), or Z (standardization).

    V[0] and VRC[0] are 0 by convention. VRC divides by the previous value
    and is 0 when that value is below VRC_EPSILON in magnitude. Z uses the
    population standard deviation and is all zeros for a constant series.
    """
    x = np.asarray(series, dtype=float)
    if kind == "v":
        v = np.zeros_like(x)
        v[1:] = x[1:] - x[:-1]
        return v
    if kind == "vrc":
        out = np.zeros_like(x)
        prev = x[:-1]
        ok = np.abs(prev) >= VRC_EPSILON
        out[1:][ok] = (x[1:] - prev)[ok] / prev[ok]
        return out
    if kind == "z":
        std = x.std()  # population (divide by N)
        if std < ZSCORE_EPSILON:
            return np.zeros_like(x)
        return (x - x.mean()) / std
    raise ValueError(f"unknown transform kind {kind!r}")


def assemble_tensor(clean: CleanClip, target_len: int = TARGET_LEN) -> FeatureTensor:
    """Resample the 4 base channels and emit the 12 transformed channels."""
    clip = clean.clip
    base = {name: resample(clip.channel(name), target_len) for name in BASE_CHANNELS}
    rows = [transform(base[name], kind) for kind in ("v", "vrc", "z") for name in BASE_CHANNELS]
    return FeatureTensor(clip.clip_id, np.stack(rows), label=clip.label)


def clip_to_tensor(clip: RawClip, thresholds: OutlierThresholds = OutlierThresholds()):
    """Sanitize then assemble; returns FeatureTensor or Excluded."""
    outcome = sanitize(clip, thresholds)
    if isinstance(outcome, Excluded):
        return outcome
    return assemble_tensor(outcome)


def split_dataset(
    tensors: Sequence[FeatureTensor],
    seed: int,
    ratios: tuple[int, int, int] = (8, 1, 1),
    key=None,
) -> dict[str, list[FeatureTensor]]:
    """Deterministic stratified train/val/test split.

    Stratifies on ``key(tensor)`` (defaults to the tensor label). Each
    stratum is shuffled with the seed and cut 8:1:1; val and test take
    floor(n/10) each and train keeps the rest, so the partition is exact.
    """
    if key is None:
        key = lambda t: t.label
    total = sum(ratios)
    groups: dict[object, list[FeatureTensor]] = {}
    for t in tensors:
        groups.setdefault(key(t), []).append(t)

    rng = np.random.default_rng(seed)
    out = {"train": [], "val": [], "test": []}
    for cls in sorted(groups, key=str):
        members = groups[cls]
        n = len(members)
        if n < total:
            raise StratificationError(f"class {cls!r} has {n} examples, need >= {total}")
        order = rng.permutation(n)
        n_val = int(n * ratios[1] / total)
        n_test = int(n * ratios[2] / total)
        shuffled = [members[i] for i in order]
        out["test"].extend(shuffled[:n_test])
        out["val"].extend(shuffled[n_test:n_test + n_val])
        out["train"].extend(shuffled[n_test + n_val:])
    return out
