"""Durable storage rooted at a data directory.

Layout: ``<root>/archive`` holds the clip archive, ``<root>/sessions``
holds one JSON document per completed session. Reads return exactly what
was written; write failures surface as PersistError with the cause.
"""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import DuplicateId, NotFound, PersistError
from .formats import ClipArchive, session_record_from_dict, session_record_to_dict


class Storage:
    def __init__(self, root):
        self.root = Path(root)
        try:
            (self.root / "sessions").mkdir(parents=True, exist_ok=True)
            self.archive = ClipArchive(self.root / "archive").create()
        except OSError as err:
            raise PersistError(f"cannot initialize storage at {self.root}: {err}") from err

    def _session_path(self, session_id: str) -> Path:
        return self.root / "sessions" / f"{session_id}.json"

    def save_session(self, session_id: str, config, events: list, squats: list) -> str:
        path = self._session_path(session_id)
        if path.exists():
            raise DuplicateId(f"session {session_id!r} already persisted")
        doc = session_record_to_dict(session_id, config, events, squats)
        try:
            path.write_text(json.dumps(doc))
        except OSError as err:
            raise PersistError(f"cannot write session {session_id!r}: {err}; "
                               "check disk space and retry") from err
        return session_id

    def load_session(self, session_id: str) -> dict:
        path = self._session_path(session_id)
        if not path.exists():
            raise NotFound(f"session {session_id!r}")
        return session_record_from_dict(json.loads(path.read_text()))

    def list_sessions(self) -> list[dict]:
        out = []
        for path in sorted((self.root / "sessions").glob("*.json")):
            doc = json.loads(path.read_text())
            out.append({
                "session_id": doc["session_id"],
                "n_reps": len(doc.get("squats", [])),
                "n_events": len(doc.get("events", [])),
            })
        return out
