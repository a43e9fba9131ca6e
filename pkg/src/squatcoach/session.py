"""Live-set state machine: rack detection, rep segmentation, event emission.

Phases: Idle (not armed) -> Armed (rack position captured) -> Running (bar
off the rack) -> Recording (body-thigh angle under 140 degrees). A rep's
frames are exactly the frames processed while Recording. Clips with two or
more outlier readings, or clips too short to resample, surface as DataError
instead of RepCompleted and do not count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional

from .errors import InvalidTransition, StreamOrderError
from .geometry import FeatureFrame, JointFrame, compute_frame
from .preprocess import OutlierThresholds, detect_outliers, RawClip

IDLE = "idle"
ARMED = "armed"
RUNNING = "running"
RECORDING = "recording"


@dataclass(frozen=True)
class SessionConfig:
    bt_record_threshold: float = 140.0
    rack_displacement: float = 10.0
    frame_rate_hint: float = 30.0
    thresholds: OutlierThresholds = field(default_factory=OutlierThresholds)


@dataclass(frozen=True)
class SessionEvent:
    kind: str  # set_started | rep_started | rep_completed | data_error | set_completed
    timestamp_ms: int
    clip: Optional[RawClip] = None
    outliers: Optional[list] = None
    reason: Optional[str] = None
    count: Optional[int] = None
    joints: Optional[list[JointFrame]] = None


@dataclass
class SessionState:
    config: SessionConfig = field(default_factory=SessionConfig)
    phase: str = IDLE
    rack_x: Optional[float] = None
    squat_count: int = 0
    rep_index: int = 0
    clip_frames: list[FeatureFrame] = field(default_factory=list)
    clip_joints: list[JointFrame] = field(default_factory=list)
    last_timestamp_ms: Optional[int] = None
    session_id: str = "session"


def arm(state: SessionState, first: JointFrame) -> SessionState:
    """Capture the rack position from the first frame's bar x."""
    if state.phase != IDLE:
        raise InvalidTransition(f"cannot arm from phase {state.phase!r}")
    state.phase = ARMED
    state.rack_x = first.bar.x
    return state


def step(state: SessionState, joint: JointFrame, feat: FeatureFrame) -> list[SessionEvent]:
    """Advance the machine by one frame; returns the events it emitted.

    Transitions cascade within a frame: leaving the rack and immediately
    dipping under the record threshold both apply, as do completing a rep
    and re-racking on the same frame.
    """
    if state.phase == IDLE:
        raise InvalidTransition("step before arm")
    if state.last_timestamp_ms is not None and joint.timestamp_ms <= state.last_timestamp_ms:
        raise StreamOrderError(
            f"timestamp {joint.timestamp_ms} not after {state.last_timestamp_ms}")
    state.last_timestamp_ms = joint.timestamp_ms

    cfg = state.config
    events: list[SessionEvent] = []
    t = joint.timestamp_ms

    if state.phase == ARMED and abs(joint.bar.x - state.rack_x) > cfg.rack_displacement:
        state.phase = RUNNING
        events.append(SessionEvent("set_started", t))

    if state.phase == RUNNING and feat.bt < cfg.bt_record_threshold:
        state.phase = RECORDING
        state.clip_frames = []
        state.clip_joints = []
        events.append(SessionEvent("rep_started", t))

    if state.phase == RECORDING:
        if feat.bt < cfg.bt_record_threshold:
            state.clip_frames.append(feat)
            state.clip_joints.append(joint)
        else:
            events.append(_finish_rep(state, t))
            state.phase = RUNNING

    if state.phase == RUNNING and abs(joint.bar.x - state.rack_x) <= cfg.rack_displacement:
        state.phase = ARMED
        events.append(SessionEvent("set_completed", t, count=state.squat_count))

    return events


def _finish_rep(state: SessionState, t: int) -> SessionEvent:
    state.rep_index += 1
    clip = RawClip(f"{state.session_id}-rep{state.rep_index:03d}", state.clip_frames)
    joints = state.clip_joints
    state.clip_frames = []
    state.clip_joints = []

    flags = detect_outliers(clip, state.config.thresholds)
    if len(flags) >= 2:
        return SessionEvent("data_error", t, clip=clip, outliers=flags,
                            reason="multiple outliers")
    if len(clip) < 2:
        return SessionEvent("data_error", t, clip=clip, outliers=flags,
                            reason="too short")
    state.squat_count += 1
    return SessionEvent("rep_completed", t, clip=clip, outliers=flags, joints=joints)


def run_session(
    frames: Iterable[JointFrame],
    config: SessionConfig = SessionConfig(),
    grade_clip: Optional[Callable[[RawClip], object]] = None,
    session_id: str = "session",
) -> Iterator[tuple[SessionEvent, Optional[object]]]:
    """Drive a session over a frame source, yielding (event, graded or None).

    Features are extracted frame by frame with the live KHR carry rule.
    When a grading callable is supplied, every rep_completed event is
    immediately followed by its graded result; grading failures surface as
    data_error events rather than aborting the stream.
    """
    state = SessionState(config=config, session_id=session_id)
    df_prev = torso_prev = None
    khr_prev = 0.0
    armed = False
    for joint in frames:
        if not armed:
            arm(state, joint)
            armed = True
        feat = compute_frame(joint, df_prev, torso_prev, khr_prev)
        df_prev, torso_prev, khr_prev = feat.df, feat.torso, feat.khr
        for event in step(state, joint, feat):
            if event.kind == "rep_completed" and grade_clip is not None:
                started = time.perf_counter()
                try:
                    graded = grade_clip(event.clip)
                except Exception as err:  # surfaces as a data error, stream continues
                    yield SessionEvent("data_error", event.timestamp_ms, clip=event.clip,
                                       reason=f"pipeline failure: {err}"), None
                    continue
                if graded is None:
                    yield SessionEvent("data_error", event.timestamp_ms, clip=event.clip,
                                       reason="clip rejected by preprocessing"), None
                    continue
                graded.pipeline_ms = (time.perf_counter() - started) * 1000.0
                yield event, graded
            else:
                yield event, None


def count_completed_dips(bt_series, bar_x_series, rack_x, config=SessionConfig()) -> int:
    """Brute-force oracle: completed downward 140-degree crossings while the
    bar is away from the rack. Used by tests to cross-check squat_count."""
    count = 0
    below = False
    for bt, bx in zip(bt_series, bar_x_series):
        away = abs(bx - rack_x) > config.rack_displacement
        if not below and away and bt < config.bt_record_threshold:
            below = True
        elif below and bt >= config.bt_record_threshold:
            below = False
            count += 1
    return count
