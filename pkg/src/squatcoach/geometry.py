"""Squat features from 2-D joint coordinates.

Coordinates are image pixels: x grows rightward, y grows downward.
Four per-frame features drive everything downstream:

* ``bt``   body-thigh angle, interior angle at the pelvis between the
           spine-navel and knee directions, degrees in [0, 180]
* ``df``   dorsiflexion, angle of the tibia against the vertical
           centerline through the mid-foot, degrees in [0, 90]
* ``khr``  knee-hip ratio, frame-to-frame dorsiflexion deviation divided
           by torso-angle deviation
* ``bs``   bar shift, horizontal deviation of the bar marker from the
           centerline, pixels

The torso angle (pelvis to spine-navel line against vertical) is carried
per frame because KHR is defined through it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import DegenerateGeometry

# Torso deviations smaller than this are treated as zero when forming KHR;
# the ratio then carries the previous frame's value (0 on the first frame).
KHR_EPSILON = 1e-6


@dataclass(frozen=True)
class Point2:
    x: float
    y: float


@dataclass(frozen=True)
class JointFrame:
    """One sagittal-view skeleton sample plus the bar marker."""

    timestamp_ms: int
    pelvis: Point2
    spine_navel: Point2
    knee: Point2
    ankle: Point2
    forefoot: Point2
    bar: Point2


@dataclass(frozen=True)
class FeatureFrame:
    """Per-frame feature values, angles in degrees, bar shift in pixels."""

    timestamp_ms: int
    bt: float
    df: float
    torso: float
    khr: float
    bs: float


def body_thigh_angle(pelvis: Point2, spine_navel: Point2, knee: Point2) -> float:
    """Interior angle at the pelvis between pelvis->spine_navel and pelvis->knee."""
    ux, uy = spine_navel.x - pelvis.x, spine_navel.y - pelvis.y
    vx, vy = knee.x - pelvis.x, knee.y - pelvis.y
    if ux == 0.0 and uy == 0.0:
        raise DegenerateGeometry(("pelvis", "spine_navel"))
    if vx == 0.0 and vy == 0.0:
        raise DegenerateGeometry(("pelvis", "knee"))
    # atan2 of cross/dot is numerically stable near 0 and 180 degrees.
    cross = ux * vy - uy * vx
    dot = ux * vx + uy * vy
    return math.degrees(math.atan2(abs(cross), dot))


def centerline_x(ankle: Point2, forefoot: Point2) -> float:
    """x of the vertical centerline: midpoint of ankle and forefoot x."""
    return (ankle.x + forefoot.x) / 2.0


def _line_vs_vertical(dx: float, dy: float, joints) -> float:
    """Unsigned angle of a line against the vertical, folded into [0, 90]."""
    if dx == 0.0 and dy == 0.0:
        raise DegenerateGeometry(joints)
    return math.degrees(math.atan2(abs(dx), abs(dy)))


def dorsiflexion(knee: Point2, ankle: Point2) -> float:
    """Angle between the tibia (ankle->knee) and the vertical, in [0, 90]."""
    return _line_vs_vertical(knee.x - ankle.x, knee.y - ankle.y, ("ankle", "knee"))


def torso_angle(pelvis: Point2, spine_navel: Point2) -> float:
    """Angle between the pelvis->spine_navel line and the vertical, in [0, 90]."""
    return _line_vs_vertical(
        spine_navel.x - pelvis.x, spine_navel.y - pelvis.y, ("pelvis", "spine_navel")
    )


def knee_hip_ratio(
    df_curr: float,
    df_prev: float,
    torso_curr: float,
    torso_prev: float,
    fallback: float = 0.0,
) -> float:
    """Dorsiflexion deviation over torso deviation between two frames.

    When the torso deviation magnitude is below ``KHR_EPSILON`` the ratio is
    undefined; ``fallback`` is returned instead (callers pass the previous
    frame's KHR, 0 for the first frame).
    """
    dt = torso_curr - torso_prev
    if abs(dt) < KHR_EPSILON:
        return fallback
    return (df_curr - df_prev) / dt


def bar_shift(bar: Point2, centerline: float) -> float:
    """Absolute horizontal deviation of the bar from the centerline, pixels."""
    return abs(bar.x - centerline)


def compute_frame(frame: JointFrame, df_prev=None, torso_prev=None, khr_prev=0.0) -> FeatureFrame:
    """Features for a single joint frame given the previous frame's angles."""
    bt = body_thigh_angle(frame.pelvis, frame.spine_navel, frame.knee)
    df = dorsiflexion(frame.knee, frame.ankle)
    torso = torso_angle(frame.pelvis, frame.spine_navel)
    if df_prev is None:
        khr = 0.0
    else:
        khr = knee_hip_ratio(df, df_prev, torso, torso_prev, fallback=khr_prev)
    bs = bar_shift(frame.bar, centerline_x(frame.ankle, frame.forefoot))
    return FeatureFrame(timestamp_ms=frame.timestamp_ms, bt=bt, df=df, torso=torso, khr=khr, bs=bs)


def extract_features(frames: Sequence[JointFrame]) -> list[FeatureFrame]:
    """Compute one FeatureFrame per JointFrame, in order.

    The centerline is recomputed every frame. KHR of the first frame is 0;
    a zero torso deviation carries the previous KHR forward. Degenerate
    geometry is re-raised with the offending frame index attached.
    """
    if not frames:
        raise ValueError("empty frame sequence")
    out: list[FeatureFrame] = []
    df_prev = torso_prev = None
    khr_prev = 0.0
    for i, frame in enumerate(frames):
        try:
            feat = compute_frame(frame, df_prev, torso_prev, khr_prev)
        except DegenerateGeometry as err:
            raise DegenerateGeometry(err.joints, frame_index=i) from None
        out.append(feat)
        df_prev, torso_prev, khr_prev = feat.df, feat.torso, feat.khr
    return out


def khr_series(df: Sequence[float], torso: Sequence[float]) -> list[float]:
    """KHR values for aligned dorsiflexion/torso series, same rules as
    extract_features (first value 0, guarded denominator carries forward)."""
    khr = [0.0]
    for t in range(1, len(df)):
        khr.append(knee_hip_ratio(df[t], df[t - 1], torso[t], torso[t - 1], fallback=khr[-1]))
    return khr
