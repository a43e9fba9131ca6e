"""Text-based persisted formats: joint streams, clip archives, sessions.

Everything is line-delimited JSON or CSV so records stay auditable with
standard tools; docs/FORMATS.md holds the exact grammars. All files carry
a format name and a major version, and readers reject versions they do
not know while ignoring unknown fields inside known record shapes.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

from ..diagnosis import AdviceEntry, DiagnosisResult, GradedSquat
from ..errors import FormatError
from ..geometry import FeatureFrame, JointFrame, Point2
from ..labels import SquatLabel
from ..preprocess import RawClip

JOINT_STREAM_FORMAT = "squatcoach-joint-stream"
SESSION_FORMAT = "squatcoach-session"
ARCHIVE_FORMAT = "squatcoach-clip-archive"
FORMAT_VERSION = 1

JOINT_NAMES = ("pelvis", "spine_navel", "knee", "ankle", "forefoot", "bar")
FEATURE_CSV_HEADER = ["timestamp_ms", "bt", "df", "torso", "khr", "bs"]


def _check_header(obj: dict, expected_format: str):
    if obj.get("format") != expected_format:
        raise FormatError(f"expected format {expected_format!r}, got {obj.get('format')!r}")
    if obj.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported {expected_format} version {obj.get('version')!r}; "
                          f"this build reads version {FORMAT_VERSION}")


# -- joint streams --------------------------------------------------------------

def joint_frame_to_record(frame: JointFrame) -> dict:
    rec = {"t": frame.timestamp_ms}
    for name in JOINT_NAMES:
        p = getattr(frame, name)
        rec[name] = [p.x, p.y]
    return rec


def joint_frame_from_record(rec: dict) -> JointFrame:
    try:
        points = {name: Point2(float(rec[name][0]), float(rec[name][1]))
                  for name in JOINT_NAMES}
        return JointFrame(timestamp_ms=int(rec["t"]), **points)
    except (KeyError, IndexError, TypeError, ValueError) as err:
        raise FormatError(f"bad joint record {rec!r}: {err}") from err


def dump_joint_stream(frames: Sequence[JointFrame], frame_rate: float = 30.0) -> str:
    header = {"format": JOINT_STREAM_FORMAT, "version": FORMAT_VERSION,
              "frame_rate": frame_rate,
              "coords": "image pixels, +x right, +y down"}
    lines = [json.dumps(header)]
    lines.extend(json.dumps(joint_frame_to_record(f)) for f in frames)
    return "\n".join(lines) + "\n"


def parse_joint_stream(text: str) -> tuple[list[JointFrame], dict]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError("empty joint stream")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as err:
        raise FormatError(f"bad joint stream header: {err}") from err
    _check_header(header, JOINT_STREAM_FORMAT)
    frames = []
    last_t = None
    for ln in lines[1:]:
        frame = joint_frame_from_record(json.loads(ln))
        if last_t is not None and frame.timestamp_ms <= last_t:
            raise FormatError(f"timestamps not strictly increasing at t={frame.timestamp_ms}")
        last_t = frame.timestamp_ms
        frames.append(frame)
    return frames, header


def write_joint_stream(path, frames: Sequence[JointFrame], frame_rate: float = 30.0):
    Path(path).write_text(dump_joint_stream(frames, frame_rate))


def read_joint_stream(path) -> tuple[list[JointFrame], dict]:
    return parse_joint_stream(Path(path).read_text())


# -- feature tables --------------------------------------------------------------

def dump_feature_table(frames: Sequence[FeatureFrame]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FEATURE_CSV_HEADER)
    for f in frames:
        writer.writerow([f.timestamp_ms, repr(f.bt), repr(f.df), repr(f.torso),
                         repr(f.khr), repr(f.bs)])
    return buf.getvalue()


def parse_feature_table(text: str) -> list[FeatureFrame]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != FEATURE_CSV_HEADER:
        raise FormatError(f"bad feature table header {header!r}")
    frames = []
    for row in reader:
        if not row:
            continue
        t, bt, df, torso, khr, bs = row
        frames.append(FeatureFrame(timestamp_ms=int(t), bt=float(bt), df=float(df),
                                   torso=float(torso), khr=float(khr), bs=float(bs)))
    return frames


# -- graded squats / diagnosis ----------------------------------------------------

def graded_to_dict(graded: GradedSquat) -> dict:
    return {
        "clip_id": graded.clip_id,
        "issues": graded.result.sorted_issues(),
        "score": graded.score,
        "probabilities": graded.result.probabilities,
        "model_versions": graded.result.model_versions,
        "advice": [asdict(a) for a in graded.advice],
        "inference_ms": graded.inference_ms,
        "pipeline_ms": graded.pipeline_ms,
        "label": graded.label,
    }


def graded_from_dict(doc: dict) -> GradedSquat:
    result = DiagnosisResult(
        issues={SquatLabel(i) for i in doc["issues"]},
        probabilities=doc["probabilities"],
        model_versions=doc["model_versions"],
    )
    advice = [AdviceEntry(**a) for a in doc["advice"]]
    return GradedSquat(doc["clip_id"], result, doc["score"], advice,
                       inference_ms=doc["inference_ms"],
                       pipeline_ms=doc.get("pipeline_ms", 0.0),
                       label=doc.get("label"))


# -- clip archive -----------------------------------------------------------------

class ClipArchive:
    """Directory of rep clips: clips.jsonl metadata + per-clip CSV features
    and optional joint sub-streams.

    The metadata frame count must equal the feature-table row count; that
    invariant is enforced on write and on read.
    """

    def __init__(self, root):
        self.root = Path(root)

    @property
    def manifest_path(self) -> Path:
        return self.root / "clips.jsonl"

    def create(self):
        (self.root / "features").mkdir(parents=True, exist_ok=True)
        marker = self.root / "archive.json"
        if not marker.exists():
            marker.write_text(json.dumps(
                {"format": ARCHIVE_FORMAT, "version": FORMAT_VERSION}))
        if not self.manifest_path.exists():
            self.manifest_path.write_text("")
        return self

    def _check(self):
        marker = self.root / "archive.json"
        if not marker.exists():
            raise FormatError(f"{self.root} is not a clip archive")
        _check_header(json.loads(marker.read_text()), ARCHIVE_FORMAT)

    def list_clips(self) -> list[dict]:
        self._check()
        out = []
        for ln in self.manifest_path.read_text().splitlines():
            if ln.strip():
                out.append(json.loads(ln))
        return out

    def clip_ids(self) -> set:
        return {m["clip_id"] for m in self.list_clips()}

    def add_clip(
        self,
        clip: RawClip,
        session_id: str = "",
        rep_index: int = 0,
        graded: Optional[GradedSquat] = None,
        joints: Optional[Sequence[JointFrame]] = None,
        frame_rate: float = 30.0,
    ) -> dict:
        from ..errors import DuplicateId
        self._check()
        if clip.clip_id in self.clip_ids():
            raise DuplicateId(f"clip {clip.clip_id!r} already archived")
        meta = {
            "clip_id": clip.clip_id,
            "session_id": session_id,
            "rep_index": rep_index,
            "label": int(clip.label) if clip.label is not None else None,
            "n_frames": len(clip.frames),
            "has_joints": joints is not None,
            "graded": graded_to_dict(graded) if graded else None,
        }
        (self.root / "features" / f"{clip.clip_id}.csv").write_text(
            dump_feature_table(clip.frames))
        if joints is not None:
            if len(joints) != len(clip.frames):
                raise FormatError("joint sub-stream length differs from the feature table")
            (self.root / "joints").mkdir(exist_ok=True)
            write_joint_stream(self.root / "joints" / f"{clip.clip_id}.jsonl",
                               joints, frame_rate)
        with self.manifest_path.open("a") as fh:
            fh.write(json.dumps(meta) + "\n")
        return meta

    def load_clip(self, clip_id: str) -> tuple[dict, RawClip, Optional[list[JointFrame]]]:
        from ..errors import NotFound
        self._check()
        meta = next((m for m in self.list_clips() if m["clip_id"] == clip_id), None)
        if meta is None:
            raise NotFound(f"clip {clip_id!r}")
        frames = parse_feature_table(
            (self.root / "features" / f"{clip_id}.csv").read_text())
        if len(frames) != meta["n_frames"]:
            raise FormatError(
                f"clip {clip_id!r}: manifest says {meta['n_frames']} frames, "
                f"feature table has {len(frames)}")
        label = SquatLabel(meta["label"]) if meta.get("label") else None
        joints = None
        if meta.get("has_joints"):
            joints, _ = read_joint_stream(self.root / "joints" / f"{clip_id}.jsonl")
        return meta, RawClip(clip_id, frames, label=label), joints

    def load_labeled_clips(self) -> list[RawClip]:
        return [self.load_clip(m["clip_id"])[1] for m in self.list_clips()]


# -- session records ---------------------------------------------------------------

def event_to_record(event) -> dict:
    rec = {"kind": event.kind, "t_ms": event.timestamp_ms}
    if event.reason is not None:
        rec["reason"] = event.reason
    if event.count is not None:
        rec["count"] = event.count
    if event.clip is not None:
        rec["clip_id"] = event.clip.clip_id
    return rec


def session_record_to_dict(session_id: str, config, events: list, squats: list) -> dict:
    return {
        "format": SESSION_FORMAT,
        "version": FORMAT_VERSION,
        "session_id": session_id,
        "config": {
            "bt_record_threshold": config.bt_record_threshold,
            "rack_displacement": config.rack_displacement,
            "frame_rate_hint": config.frame_rate_hint,
        },
        "events": events,
        "squats": [graded_to_dict(g) for g in squats],
    }


def session_record_from_dict(doc: dict) -> dict:
    _check_header(doc, SESSION_FORMAT)
    return {
        "session_id": doc["session_id"],
        "config": doc["config"],
        "events": doc["events"],
        "squats": [graded_from_dict(g) for g in doc["squats"]],
    }
