"""Labeled synthetic squat clips and a planar-linkage joint synthesizer.

Each label owns a template: piecewise half-cosine curves for the body-thigh
angle (bt), dorsiflexion (df), bar shift (bs), and a target knee-hip-ratio
curve. The torso curve is not drawn directly; it is integrated from the df
increments divided by the target ratio, so the KHR derived the same way the
feature extractor derives it reproduces the target exactly and stays far
from the outlier bound.

Label separations are scaled by a margin parameter (0 collapses every label
onto the good-squat template, 1 is the default full separation). Noise is a
shared smooth time warp plus per-channel amplitude jitter; bt and df receive
no independent additive wiggle so that the good squat's "bt minimum and df
maximum on the same frame" property survives noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import InfeasiblePose
from .geometry import FeatureFrame, JointFrame, Point2, khr_series
from .labels import SquatLabel
from .preprocess import RawClip

# -- linkage constants (pixels) ----------------------------------------------

THIGH_LEN = 60.0
TIBIA_LEN = 60.0
TORSO_LEN = 60.0
FOOT_LEN = 40.0
BAR_ABOVE_NAVEL = 30.0
ANKLE = Point2(300.0, 400.0)

# -- template constants -------------------------------------------------------

BT_TOP = 139.2          # clip boundary value, just under the 140 record threshold
STAND_BT = 165.0        # standing posture between reps
STAND_DF = 3.0
STAND_TORSO = 6.0
STAND_BS = 6.0
RACK_BS = 300.0         # bar on the rack, far from the centerline

# Documented flatness bound for the good squat's bar-shift curve.
BS_FLATNESS_BOUND = 9.0

# Default per-channel noise magnitudes, all multiplied by GenConfig.noise_scale.
WARP_SD = 0.012          # shared smooth time warp
BT_DEPTH_SCALE_SD = 0.05
BT_OFFSET_SD = 0.2       # clipped so bt stays below 140
DF_DEPTH_SCALE_SD = 0.04
DF_OFFSET_SD = 0.3
KHR_SCALE_SD = 0.06
KHR_WIGGLE_SD = 0.10
BS_SCALE_SD = 0.08
BS_WIGGLE_SD = 0.5
TORSO_BASE = 10.0
TORSO_BASE_SD = 1.5

KHR_CLAMP = (0.35, 8.0)  # keeps the integrated torso curve tame


@dataclass(frozen=True)
class GenConfig:
    duration_mean: float = 45.3
    duration_sd: float = 5.3
    duration_range: tuple[int, int] = (30, 70)
    frame_rate: float = 30.0
    noise_scale: float = 1.0
    margin: float = 1.0
    seed: int = 0


@dataclass
class SyntheticClip:
    clip: RawClip
    label: SquatLabel
    params: dict = field(default_factory=dict)


def _cosine_piecewise(anchors: Sequence[tuple[float, float]], u: np.ndarray) -> np.ndarray:
    """Half-cosine easing between (phase, value) anchors; C0, flat at anchors."""
    us = np.array([a[0] for a in anchors])
    vs = np.array([a[1] for a in anchors])
    out = np.empty_like(u, dtype=float)
    idx = np.clip(np.searchsorted(us, u, side="right") - 1, 0, len(us) - 2)
    u0, u1 = us[idx], us[idx + 1]
    v0, v1 = vs[idx], vs[idx + 1]
    s = np.where(u1 > u0, (u - u0) / np.where(u1 > u0, u1 - u0, 1.0), 0.0)
    out = v0 + (v1 - v0) * (1.0 - np.cos(np.pi * np.clip(s, 0.0, 1.0))) / 2.0
    out[u <= us[0]] = vs[0]
    out[u >= us[-1]] = vs[-1]
    return out


def _lerp(a: float, b: float, m: float) -> float:
    return a + (b - a) * m


def label_anchors(label: SquatLabel, margin: float = 1.0) -> dict:
    """Anchor tables per label; margin scales the value and phase deviations
    that define each label's ordering relations (smaller margin pulls every
    label toward the good-squat template)."""
    m = margin
    good = {
        "bt": [(0.0, BT_TOP), (0.5, 70.0), (1.0, BT_TOP)],
        "df": [(0.0, 6.0), (0.5, 40.0), (1.0, 6.0)],
        "khr": [(0.0, 3.0), (0.35, 2.6), (0.65, 1.0), (1.0, 1.2)],
        "bs": [(0.0, 5.0), (0.25, 10.0), (0.5, 6.0), (0.75, 9.0), (1.0, 6.0)],
    }
    if label == SquatLabel.GOOD:
        return good
    if label == SquatLabel.TOO_SHALLOW:
        # Less body and knee flexion: higher bt minimum, lower df peak.
        return {
            **good,
            "bt": [(0.0, BT_TOP), (0.5, _lerp(70.0, 97.0, m)), (1.0, BT_TOP)],
            "df": [(0.0, 6.0), (0.5, _lerp(40.0, 26.0, m)), (1.0, 6.0)],
        }
    if label == SquatLabel.POSTERIOR_PELVIC_TILT:
        # Knees harder to bend at depth: lower df at the bottom, bt unchanged.
        return {
            **good,
            "df": [(0.0, 6.0), (0.5, _lerp(40.0, 32.0, m)), (1.0, 6.0)],
        }
    if label == SquatLabel.ANTERIOR_PELVIC_TILT:
        return {
            **good,
            "df": [(0.0, 6.0), (0.5, _lerp(40.0, 46.0, m)), (1.0, 6.0)],
        }
    if label == SquatLabel.HIP_RISING_TOO_FAST:
        # bt lingers at the bottom (rise starts late), df drops early,
        # the ratio swings up again in the final stretch.
        return {
            **good,
            "bt": [(0.0, BT_TOP), (_lerp(0.5, 0.42, m), 72.0),
                   (_lerp(0.5, 0.62, m), 72.0), (1.0, BT_TOP)],
            "df": [(0.0, 6.0), (_lerp(0.5, 0.40, m), 40.0), (1.0, 6.0)],
            "khr": [(0.0, 3.0), (0.35, 2.6), (0.6, 0.9), (0.8, 0.9),
                    (1.0, _lerp(1.2, 2.8, m))],
        }
    if label == SquatLabel.EXCESSIVE_HIP_DOMINANT:
        # Early fold: bt bottoms out early, df peaks late, bar drifts early.
        return {
            **good,
            "bt": [(0.0, BT_TOP), (_lerp(0.5, 0.38, m), 70.0), (1.0, BT_TOP)],
            "df": [(0.0, 6.0), (_lerp(0.5, 0.62, m), 40.0), (1.0, 6.0)],
            "bs": [(0.0, _lerp(5.0, 24.0, m)), (0.2, _lerp(10.0, 28.0, m)),
                   (0.45, 10.0), (0.75, 9.0), (1.0, 6.0)],
        }
    if label == SquatLabel.EXCESSIVE_KNEE_DOMINANT:
        # Knees shoot forward first: steep early df, high early ratio,
        # flat early bar path that blows out late, deeper bt minimum.
        return {
            "bt": [(0.0, BT_TOP), (_lerp(0.5, 0.55, m), _lerp(70.0, 62.0, m)),
                   (1.0, BT_TOP)],
            "df": [(0.0, _lerp(6.0, 8.0, m)), (_lerp(0.5, 0.2, m), _lerp(40.0, 34.0, m)),
                   (_lerp(0.5, 0.55, m), _lerp(40.0, 42.0, m)), (1.0, 6.0)],
            "khr": [(0.0, _lerp(3.0, 4.3, m)), (0.3, _lerp(2.6, 3.4, m)),
                    (0.65, 1.0), (1.0, 1.2)],
            "bs": [(0.0, 6.5), (_lerp(0.0, 0.3, m), 6.5), (0.55, 12.0),
                   (0.8, _lerp(9.0, 34.0, m)), (1.0, _lerp(6.0, 30.0, m))],
        }
    raise ValueError(f"unknown label {label!r}")


def template_curves(label: SquatLabel, length: int, margin: float = 1.0) -> dict[str, np.ndarray]:
    """Noiseless template curves for a label at a given clip length.

    Returns bt, df, khr (derived, first value 0), torso and bs arrays.
    """
    anchors = label_anchors(label, margin)
    u = np.linspace(0.0, 1.0, length)
    bt = _cosine_piecewise(anchors["bt"], u)
    df = _cosine_piecewise(anchors["df"], u)
    khr_target = _cosine_piecewise(anchors["khr"], u)
    bs = _cosine_piecewise(anchors["bs"], u)
    torso = _integrate_torso(df, khr_target, TORSO_BASE)
    return {"bt": bt, "df": df, "khr": np.array(khr_series(df, torso)),
            "torso": torso, "bs": bs}


def _integrate_torso(df: np.ndarray, khr_target: np.ndarray, base: float) -> np.ndarray:
    """Torso curve whose deviations are df deviations over the target ratio."""
    steps = np.zeros_like(df)
    steps[1:] = np.diff(df) / khr_target[1:]
    torso = base + np.cumsum(steps)
    # Keep the curve inside the physical [0, 90] band; a constant shift
    # changes neither the derived ratio nor any deviation-based channel.
    low, high = torso.min(), torso.max()
    if low < 2.0:
        torso = torso + (2.0 - low)
    if torso.max() > 88.0:
        raise ValueError("torso excursion exceeds the feasible band")
    return torso


def _smooth_wiggle(u: np.ndarray, rng: np.random.Generator, sd: float) -> np.ndarray:
    """Low-frequency sum of sines; smooth, zero-mean-ish, seeded."""
    if sd == 0.0:
        return np.zeros_like(u)
    out = np.zeros_like(u)
    for j in (1, 2, 3):
        out += rng.normal(0.0, sd / j) * np.sin(2.0 * np.pi * j * u + rng.uniform(0, 2 * np.pi))
    return out


def _time_warp(u: np.ndarray, rng: np.random.Generator, sd: float) -> np.ndarray:
    """Monotone warp of [0,1] onto itself, shared by all channels of a clip."""
    if sd == 0.0:
        return u
    w = u.copy()
    budget = 0.0
    for j in (1, 2, 3):
        c = rng.normal(0.0, sd / j)
        budget += abs(c) * math.pi * j
        w = w + c * np.sin(np.pi * j * u)
    if budget >= 0.9:  # would risk non-monotonicity; fall back to identity
        return u
    return np.clip(w, 0.0, 1.0)


def _sample_duration(rng: np.random.Generator, config: GenConfig) -> int:
    lo, hi = config.duration_range
    while True:
        n = int(round(rng.normal(config.duration_mean, config.duration_sd)))
        if lo <= n <= hi:
            return n


def generate_clip(label: SquatLabel, config: GenConfig = GenConfig(),
                  seed: Optional[int] = None) -> SyntheticClip:
    """One labeled synthetic rep: variable length, bt under 140 throughout."""
    label = SquatLabel(label)
    rng = np.random.default_rng(config.seed if seed is None else seed)
    length = _sample_duration(rng, config)
    anchors = label_anchors(label, config.margin)
    ns = config.noise_scale

    u = np.linspace(0.0, 1.0, length)
    w = _time_warp(u, rng, WARP_SD * ns)

    bt = _cosine_piecewise(anchors["bt"], w)
    df = _cosine_piecewise(anchors["df"], w)
    khr_target = _cosine_piecewise(anchors["khr"], w)
    bs = _cosine_piecewise(anchors["bs"], w)

    # Amplitude jitter. bt/df use affine maps anchored at the clip boundary so
    # the good squat's symmetric extremum ordering survives, and bt stays
    # strictly below the 140-degree record threshold.
    bt_off = float(np.clip(rng.normal(0.0, BT_OFFSET_SD * ns), -0.6, 0.6))
    bt = (BT_TOP + bt_off) + (bt - BT_TOP) * (1.0 + rng.normal(0.0, BT_DEPTH_SCALE_SD * ns))
    df0 = anchors["df"][0][1]
    df = (df0 + rng.normal(0.0, DF_OFFSET_SD * ns)) + (df - df0) * (
        1.0 + rng.normal(0.0, DF_DEPTH_SCALE_SD * ns))
    df = np.clip(df, 0.0, 55.0)

    khr_target = khr_target * (1.0 + rng.normal(0.0, KHR_SCALE_SD * ns))
    khr_target += _smooth_wiggle(u, rng, KHR_WIGGLE_SD * ns)
    khr_target = np.clip(khr_target, *KHR_CLAMP)

    bs = bs * (1.0 + rng.normal(0.0, BS_SCALE_SD * ns))
    bs += _smooth_wiggle(u, rng, BS_WIGGLE_SD * ns)
    bs = np.clip(bs, 0.3, None)

    torso = _integrate_torso(df, khr_target, TORSO_BASE + rng.normal(0.0, TORSO_BASE_SD * ns))
    khr = khr_series(df, torso)

    frames = [
        FeatureFrame(
            timestamp_ms=round(i * 1000.0 / config.frame_rate),
            bt=float(bt[i]), df=float(df[i]), torso=float(torso[i]),
            khr=float(khr[i]), bs=float(bs[i]),
        )
        for i in range(length)
    ]
    clip_id = f"syn-{int(label)}-{rng.integers(1 << 31):08x}"
    clip = RawClip(clip_id, frames, label=label)
    return SyntheticClip(clip, label, params={"length": length, "margin": config.margin,
                                              "noise_scale": ns})


def generate_corpus(counts: dict[SquatLabel, int], config: GenConfig = GenConfig(),
                    seed: Optional[int] = None) -> list[SyntheticClip]:
    """Deterministic labeled corpus; per-clip seeds are derived by counter."""
    base = config.seed if seed is None else seed
    clips = []
    for label in sorted(counts, key=int):
        for i in range(counts[label]):
            sub = np.random.default_rng([base, int(label), i]).integers(1 << 63)
            clips.append(generate_clip(label, config, seed=int(sub)))
    return clips


# -- joint synthesis ----------------------------------------------------------

def _dir(theta_deg: float) -> tuple[float, float]:
    """Unit vector at theta degrees from vertical-up, tilting toward +x.

    Image coordinates: y grows downward, so up is -y.
    """
    t = math.radians(theta_deg)
    return math.sin(t), -math.cos(t)


def synthesize_frame(timestamp_ms: int, bt: float, df: float, torso: float,
                     bs: float) -> JointFrame:
    """Joint positions of a planar five-joint linkage realizing the angles."""
    if not (0.0 <= df <= 90.0):
        raise InfeasiblePose(f"dorsiflexion {df} outside [0, 90]")
    if not (0.0 <= torso <= 90.0):
        raise InfeasiblePose(f"torso angle {torso} outside [0, 90]")
    if not (0.0 <= bt <= 180.0):
        raise InfeasiblePose(f"body-thigh angle {bt} outside [0, 180]")
    if bs < 0.0:
        raise InfeasiblePose(f"bar shift {bs} negative")

    ankle = ANKLE
    forefoot = Point2(ankle.x + FOOT_LEN, ankle.y)
    center_x = (ankle.x + forefoot.x) / 2.0

    kx, ky = _dir(df)
    knee = Point2(ankle.x + TIBIA_LEN * kx, ankle.y + TIBIA_LEN * ky)

    tx, ty = _dir(torso + bt)  # thigh direction seen from the pelvis
    pelvis = Point2(knee.x - THIGH_LEN * tx, knee.y - THIGH_LEN * ty)

    nx, ny = _dir(torso)
    navel = Point2(pelvis.x + TORSO_LEN * nx, pelvis.y + TORSO_LEN * ny)

    bar = Point2(center_x + bs, navel.y - BAR_ABOVE_NAVEL)
    return JointFrame(timestamp_ms=timestamp_ms, pelvis=pelvis, spine_navel=navel,
                      knee=knee, ankle=ankle, forefoot=forefoot, bar=bar)


def joint_synthesis(frames: Sequence[FeatureFrame]) -> list[JointFrame]:
    """Joint stream whose extracted bt/df/torso/bs reproduce the inputs."""
    return [synthesize_frame(f.timestamp_ms, f.bt, f.df, f.torso, f.bs) for f in frames]


# -- scripted session streams --------------------------------------------------

def _ease(a: float, b: float, k: int, n: int) -> float:
    s = (1.0 - math.cos(math.pi * (k + 1) / n)) / 2.0
    return a + (b - a) * s


def generate_session_stream(
    rep_labels: Sequence[SquatLabel],
    config: GenConfig = GenConfig(),
    seed: Optional[int] = None,
    bad_reps: Sequence[int] = (),
    rack_hold: int = 8,
    walk_frames: int = 12,
    stand_frames: int = 8,
    ramp_frames: int = 5,
) -> tuple[list[JointFrame], list[SyntheticClip]]:
    """A full scripted set as a joint stream: rack, walkout, reps, re-rack.

    Reps listed in ``bad_reps`` get two dorsiflexion spikes injected so the
    extracted clip trips the multiple-outlier rule. Returns the stream and
    the per-rep synthetic clips (spiked where applicable).
    """
    base = config.seed if seed is None else seed
    rng = np.random.default_rng([base, 0x5e55])
    clips = []
    for i, label in enumerate(rep_labels):
        clip = generate_clip(label, config, seed=int(rng.integers(1 << 63)))
        if i in bad_reps:
            frames = list(clip.clip.frames)
            n = len(frames)
            for j, spike in ((n // 3, 72.0), (2 * n // 3, 76.0)):
                frames[j] = replace(frames[j], df=spike)
            clip = SyntheticClip(RawClip(clip.clip.clip_id, frames, clip.label),
                                 clip.label, {**clip.params, "injected_outliers": 2})
        clips.append(clip)

    feature_rows: list[tuple[float, float, float, float]] = []  # bt, df, torso, bs

    def hold(bt, df, torso, bs, n):
        feature_rows.extend([(bt, df, torso, bs)] * n)

    def glide(a, b, n):
        for k in range(n):
            feature_rows.append(tuple(_ease(a[i], b[i], k, n) for i in range(4)))

    stand = (STAND_BT, STAND_DF, STAND_TORSO, STAND_BS)
    hold(STAND_BT, STAND_DF, STAND_TORSO, RACK_BS, rack_hold)
    glide((STAND_BT, STAND_DF, STAND_TORSO, RACK_BS), stand, walk_frames)
    hold(*stand, stand_frames)

    for clip in clips:
        f0, fN = clip.clip.frames[0], clip.clip.frames[-1]
        glide(stand, (141.0, f0.df, f0.torso, f0.bs), ramp_frames)
        feature_rows.extend((f.bt, f.df, f.torso, f.bs) for f in clip.clip.frames)
        glide((141.0, fN.df, fN.torso, fN.bs), stand, ramp_frames)
        hold(*stand, stand_frames)

    glide(stand, (STAND_BT, STAND_DF, STAND_TORSO, RACK_BS), walk_frames)
    hold(STAND_BT, STAND_DF, STAND_TORSO, RACK_BS, rack_hold)

    stream = [
        synthesize_frame(round(i * 1000.0 / config.frame_rate), bt, df, torso, bs)
        for i, (bt, df, torso, bs) in enumerate(feature_rows)
    ]
    return stream, clips
