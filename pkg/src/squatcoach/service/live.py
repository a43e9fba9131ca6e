"""Live session loop: wire messages, subscriber fan-out, persistence.

One asyncio task drives the frame source through the session state machine
and publishes typed envelopes. Every envelope carries a per-session
monotone sequence number. Subscribers get bounded buffers: when a slow
consumer falls behind, the oldest frame/feature_point messages are dropped
(and the drop is flagged in-stream); rep and status messages are never
dropped. A subscriber joining mid-set first receives a state snapshot.
"""

from __future__ import annotations

import asyncio
import logging
from collections import deque
from typing import AsyncIterator, Optional

from ..diagnosis import DEDUCTIONS, DiagnosisPipeline
from ..geometry import JointFrame, compute_frame
from ..labels import SquatLabel
from ..session import ARMED, IDLE, RECORDING, RUNNING, SessionConfig, SessionState, arm, step
from .formats import graded_to_dict, event_to_record, joint_frame_to_record
from .storage import Storage

log = logging.getLogger(__name__)

DROPPABLE = {"frame", "feature_point"}

STATUS_BY_PHASE = {IDLE: "idle", ARMED: "armed", RUNNING: "running", RECORDING: "predicting"}


class SubscriberChannel:
    """Bounded per-connection buffer with drop-oldest-droppable policy."""

    def __init__(self, max_buffer: int = 512):
        self.max_buffer = max_buffer
        self._items: deque = deque()
        self._wakeup = asyncio.Event()
        self.dropped = 0
        self.closed = False

    def push(self, msg: dict):
        if len(self._items) >= self.max_buffer:
            for i, held in enumerate(self._items):
                if held["type"] in DROPPABLE:
                    del self._items[i]
                    self.dropped += 1
                    break
            # nothing droppable: the buffer grows, critical messages survive
        if self.dropped and msg["type"] not in DROPPABLE:
            msg = {**msg, "dropped_before": self.dropped}
            self.dropped = 0
        self._items.append(msg)
        self._wakeup.set()

    def close(self):
        self.closed = True
        self._wakeup.set()

    async def pop(self) -> Optional[dict]:
        while not self._items:
            if self.closed:
                return None
            self._wakeup.clear()
            await self._wakeup.wait()
        return self._items.popleft()


class Broadcaster:
    """Fan-out with per-session sequence numbers and a join snapshot."""

    def __init__(self, session_id: str):
        self.session_id = session_id
        self.seq = 0
        self.subscribers: list[SubscriberChannel] = []
        self.snapshot_state = {"status": "idle", "squat_count": 0, "scores": [],
                               "last_score": None, "last_issues": []}

    def envelope(self, kind: str, t_ms: int, **payload) -> dict:
        self.seq += 1
        return {"seq": self.seq, "session": self.session_id, "type": kind,
                "t_ms": t_ms, **payload}

    def publish(self, kind: str, t_ms: int, **payload) -> dict:
        msg = self.envelope(kind, t_ms, **payload)
        for sub in self.subscribers:
            sub.push(msg)
        return msg

    def subscribe(self, max_buffer: int = 512) -> SubscriberChannel:
        chan = SubscriberChannel(max_buffer)
        chan.push(self.envelope("snapshot", 0, **self.snapshot_state))
        self.subscribers.append(chan)
        return chan

    def unsubscribe(self, chan: SubscriberChannel):
        chan.close()
        if chan in self.subscribers:
            self.subscribers.remove(chan)

    def close(self):
        for sub in list(self.subscribers):
            sub.close()


async def play_stream(frames, frame_rate: float, max_speed: bool = False) -> AsyncIterator[JointFrame]:
    """File playback source: yields frames at the configured rate."""
    dt = 1.0 / frame_rate if frame_rate > 0 else 0.0
    for frame in frames:
        yield frame
        # yield control even at max speed so subscribers drain concurrently
        await asyncio.sleep(0.0 if max_speed or not dt else dt)


class LiveRunner:
    """Drives one live session and broadcasts its message stream."""

    def __init__(
        self,
        source: AsyncIterator[JointFrame],
        pipeline: Optional[DiagnosisPipeline],
        storage: Optional[Storage],
        session_id: str = "live",
        config: SessionConfig = SessionConfig(),
        ui_rate: float = 15.0,
        frame_rate: float = 30.0,
        broadcaster: Optional[Broadcaster] = None,
    ):
        self.source = source
        self.pipeline = pipeline
        self.storage = storage
        self.session_id = session_id
        self.config = config
        self.ui_rate = ui_rate
        self.frame_rate = frame_rate
        self._owns_broadcaster = broadcaster is None
        self.broadcaster = broadcaster if broadcaster is not None else Broadcaster(session_id)
        self.broadcaster.session_id = session_id
        self.events: list[dict] = []
        self.squats = []
        self.sets_saved = 0
        self.done = asyncio.Event()

    def _publish(self, kind, t_ms, **payload):
        msg = self.broadcaster.publish(kind, t_ms, **payload)
        if kind not in DROPPABLE:
            self.events.append({k: v for k, v in msg.items() if k != "session"})
        return msg

    def _status(self, status: str, t_ms: int):
        self.broadcaster.snapshot_state["status"] = status
        self._publish("status_change", t_ms, status=status)

    async def run(self):
        state = SessionState(config=self.config, session_id=self.session_id)
        df_prev = torso_prev = None
        khr_prev = 0.0
        last_ui_emit = None
        ui_interval = 1000.0 / self.ui_rate if self.ui_rate > 0 else 0.0
        try:
            async for joint in self.source:
                if state.phase == IDLE:
                    arm(state, joint)
                    self._status(STATUS_BY_PHASE[state.phase], joint.timestamp_ms)
                feat = compute_frame(joint, df_prev, torso_prev, khr_prev)
                df_prev, torso_prev, khr_prev = feat.df, feat.torso, feat.khr

                phase_before = state.phase
                events = step(state, joint, feat)

                t = joint.timestamp_ms
                if last_ui_emit is None or t - last_ui_emit >= ui_interval:
                    last_ui_emit = t
                    self.broadcaster.publish("frame", t, joints=joint_frame_to_record(joint))
                    self.broadcaster.publish(
                        "feature_point", t, bt=feat.bt, df=feat.df, khr=feat.khr,
                        bs=feat.bs, torso=feat.torso)

                for event in events:
                    self._handle_event(event, state)
                if state.phase != phase_before and not any(
                        e.kind in ("rep_completed", "data_error") for e in events):
                    self._status(STATUS_BY_PHASE[state.phase], t)
        finally:
            if self._owns_broadcaster:
                self.broadcaster.close()
            self.done.set()

    def _handle_event(self, event, state):
        t = event.timestamp_ms
        snap = self.broadcaster.snapshot_state
        if event.kind == "set_started":
            snap.update(squat_count=0, scores=[], last_score=None, last_issues=[])
            self._publish("set_started", t)
            self._status("running", t)
        elif event.kind == "rep_started":
            self._publish("rep_started", t, rep_index=state.rep_index + 1)
            self._status("predicting", t)
        elif event.kind == "rep_completed":
            self._complete_rep(event, state)
        elif event.kind == "data_error":
            self._publish("data_error", t, reason=event.reason,
                          outliers=[list(o) for o in (event.outliers or [])])
            self._status("running", t)
        elif event.kind == "set_completed":
            self._publish("set_completed", t, count=event.count)
            self._status("armed", t)
            self._persist_set()

    def _complete_rep(self, event, state):
        t = event.timestamp_ms
        graded = None
        if self.pipeline is not None:
            try:
                graded = self.pipeline.grade_clip(event.clip)
            except Exception as err:
                log.exception("grading failed for %s", event.clip.clip_id)
                self._publish("data_error", t, reason=f"pipeline failure: {err}")
                self._status("running", t)
                return
        if graded is None and self.pipeline is not None:
            self._publish("data_error", t, reason="clip rejected by preprocessing")
            self._status("running", t)
            return

        snap = self.broadcaster.snapshot_state
        snap["squat_count"] = state.squat_count
        payload = {"rep_index": state.rep_index, "count": state.squat_count}
        if graded is not None:
            self.squats.append(graded)
            doc = graded_to_dict(graded)
            deductions = {str(i): DEDUCTIONS[SquatLabel(i)] for i in doc["issues"]}
            payload.update(clip_id=graded.clip_id, issues=doc["issues"],
                           score=graded.score, deductions=deductions,
                           advice=doc["advice"], probabilities=doc["probabilities"],
                           model_versions=doc["model_versions"],
                           latency_ms=graded.pipeline_ms or graded.inference_ms)
            snap["scores"] = snap.get("scores", []) + [graded.score]
            snap["last_score"] = graded.score
            snap["last_issues"] = doc["issues"]
        else:
            payload.update(clip_id=event.clip.clip_id)
        self._publish("rep_completed", t, **payload)
        self._status("running", t)
        if self.storage is not None:
            try:
                self.storage.archive.add_clip(
                    event.clip, session_id=self.session_id, rep_index=state.rep_index,
                    graded=graded, joints=event.joints, frame_rate=self.frame_rate)
            except Exception:
                log.exception("failed to archive clip %s", event.clip.clip_id)

    def _persist_set(self):
        if self.storage is None:
            return
        self.sets_saved += 1
        sid = self.session_id if self.sets_saved == 1 else (
            f"{self.session_id}-set{self.sets_saved}")
        try:
            self.storage.save_session(sid, self.config, list(self.events), list(self.squats))
        except Exception:
            log.exception("failed to persist session %s", sid)
        self.events = []
        self.squats = []
