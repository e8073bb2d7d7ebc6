"""File-based persistence: problems, event-sourced sessions, ratings.

Layout under the data directory:

    problems.jsonl                 one imported problem per line
    ratings.jsonl                  append-only rating records
    sessions/<id>/events.jsonl     append-only session event log
    sessions/<id>/snapshot.json    state snapshot, rewritten atomically

Replaying a session's event log through the engine's fold primitives
reconstructs the snapshot exactly; the snapshot exists only to make crash
inspection cheap.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from pathlib import Path

from .. import engine as engine_mod
from .. import template
from ..datagen.jobs import DatasetRecord, KIND_SCAFFOLD
from ..datagen.records import DatagenError, ScaffoldingProblem, parse_scaffold_response
from ..engine import GuardrailConfig, Session
from .. import evalkit

EVENT_STARTED = "session_started"
EVENT_STUDENT = "student_message"
EVENT_TUTOR = "tutor_turn"
EVENT_ABORTED = "aborted"


class StoreError(Exception):
    code = "StoreError"


class UnknownId(StoreError):
    code = "UnknownId"


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


class ProblemStore:
    def __init__(self, data_dir: Path):
        self.path = Path(data_dir) / "problems.jsonl"
        self._problems: dict[str, ScaffoldingProblem] = {}
        self._lock = threading.Lock()
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            data = json.loads(line)
            problem = parse_scaffold_response(json.dumps(data["payload"], ensure_ascii=False))
            self._problems[data["id"]] = problem

    def import_jsonl(self, jsonl: str) -> list[str]:
        """Import scaffold records (dataset envelopes or bare payloads).

        The whole batch is validated before anything is written, so a bad
        line never leaves a partial import behind.
        """
        parsed: list[tuple[str, dict, ScaffoldingProblem]] = []
        for line_no, line in enumerate(jsonl.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatagenError(f"line {line_no}: invalid JSON: {exc}") from None
            if "payload" in data:
                record = DatasetRecord.from_json(line)
                if record.kind != KIND_SCAFFOLD:
                    raise DatagenError(f"line {line_no}: record kind {record.kind!r} is not importable")
                payload, problem_id = record.payload, record.id
            else:
                payload, problem_id = data, uuid.uuid4().hex[:12]
            problem = parse_scaffold_response(json.dumps(payload, ensure_ascii=False))
            parsed.append((problem_id, payload, problem))

        with self._lock:
            with self.path.open("a", encoding="utf-8") as handle:
                for problem_id, payload, problem in parsed:
                    self._problems[problem_id] = problem
                    handle.write(json.dumps({"id": problem_id, "payload": payload}, ensure_ascii=False) + "\n")
        return [problem_id for problem_id, _, _ in parsed]

    def get(self, problem_id: str) -> ScaffoldingProblem:
        try:
            return self._problems[problem_id]
        except KeyError:
            raise UnknownId(f"unknown problem id {problem_id!r}") from None

    def list_all(self) -> list[tuple[str, ScaffoldingProblem]]:
        return list(self._problems.items())


def _turn_event_payload(entry: engine_mod.TranscriptEntry) -> dict:
    turn = entry.turn
    return {
        "turn": template.turn_to_dict(turn),
        "raw": entry.raw,
        "retrieved_locators": list(entry.retrieved_locators),
        "repairs_used": entry.repairs_used,
    }


def session_to_snapshot(session: Session) -> dict:
    return {
        "id": session.id,
        "problem_text": session.problem_text,
        "problem_id": session.problem_id,
        "status": session.status,
        "config": session.config.to_dict(),
        "progress": {
            "subproblem_index": session.progress.subproblem_index,
            "total_known": session.progress.total_known,
            "terminal": session.progress.terminal,
        },
        "attempts": {str(k): v for k, v in session.attempts.items()},
        "current_subproblem": session.current_subproblem,
        "step_in_pending": session.step_in_pending,
        "transcript": engine_mod.transcript(session),
    }


class SessionStore:
    """Event log plus snapshot per session; replay rebuilds live state."""

    def __init__(self, data_dir: Path):
        self.root = Path(data_dir) / "sessions"
        self.root.mkdir(parents=True, exist_ok=True)

    def _dir(self, session_id: str) -> Path:
        return self.root / session_id

    def events_path(self, session_id: str) -> Path:
        return self._dir(session_id) / "events.jsonl"

    def snapshot_path(self, session_id: str) -> Path:
        return self._dir(session_id) / "snapshot.json"

    def exists(self, session_id: str) -> bool:
        return self.events_path(session_id).exists()

    def list_ids(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if (p / "events.jsonl").exists())

    def append_event(self, session_id: str, event: dict) -> None:
        directory = self._dir(session_id)
        directory.mkdir(parents=True, exist_ok=True)
        path = self.events_path(session_id)
        seq = 0
        if path.exists():
            with path.open("r", encoding="utf-8") as handle:
                seq = sum(1 for line in handle if line.strip())
        with path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps({"seq": seq, **event}, ensure_ascii=False) + "\n")

    def write_snapshot(self, session: Session) -> None:
        _atomic_write(self.snapshot_path(session.id), json.dumps(session_to_snapshot(session), ensure_ascii=False, indent=1))

    def record_started(self, session: Session, problem_id: str = "") -> None:
        self.append_event(
            session.id,
            {
                "type": EVENT_STARTED,
                "session_id": session.id,
                "problem_text": session.problem_text,
                "problem_id": problem_id,
                "config": session.config.to_dict(),
            },
        )

    def record_student(self, session_id: str, text: str) -> None:
        self.append_event(session_id, {"type": EVENT_STUDENT, "text": text})

    def record_tutor(self, session_id: str, entry: engine_mod.TranscriptEntry) -> None:
        self.append_event(session_id, {"type": EVENT_TUTOR, **_turn_event_payload(entry)})

    def record_aborted(self, session_id: str, reason: str) -> None:
        self.append_event(session_id, {"type": EVENT_ABORTED, "reason": reason})

    def load_events(self, session_id: str) -> list[dict]:
        path = self.events_path(session_id)
        if not path.exists():
            raise UnknownId(f"unknown session id {session_id!r}")
        events = []
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                events.append(json.loads(line))
        return events

    def replay(self, session_id: str, problem_store: ProblemStore | None = None) -> Session:
        """Rebuild a session purely from its event log."""
        events = self.load_events(session_id)
        if not events or events[0].get("type") != EVENT_STARTED:
            raise StoreError(f"session {session_id} log does not begin with {EVENT_STARTED}")
        head = events[0]
        config = GuardrailConfig.from_dict(head.get("config") or {})
        problem = None
        problem_id = head.get("problem_id") or ""
        if problem_id and problem_store is not None:
            try:
                problem = problem_store.get(problem_id)
            except UnknownId:
                problem = None
        session = Session.start(problem if problem is not None else head["problem_text"], config, session_id=head["session_id"])
        session.problem_id = problem_id
        for event in events[1:]:
            kind = event.get("type")
            if kind == EVENT_STUDENT:
                session.apply_student(event["text"])
            elif kind == EVENT_TUTOR:
                turn_data = event["turn"]
                parsed, _ = template.parse_turn(json.dumps(turn_data, ensure_ascii=False), lenient=False)
                session.apply_tutor(
                    parsed.turn,
                    raw=event.get("raw") or "",
                    retrieved_locators=tuple(event.get("retrieved_locators") or ()),
                    repairs_used=int(event.get("repairs_used") or 0),
                )
            elif kind == EVENT_ABORTED:
                session.apply_abort(event.get("reason") or "aborted")
            else:
                raise StoreError(f"unknown event type {kind!r} in session {session_id}")
        return session


class RatingStore:
    def __init__(self, data_dir: Path):
        self.path = Path(data_dir) / "ratings.jsonl"
        self._lock = threading.Lock()

    def add(self, rating: evalkit.RatingRecord) -> str:
        rating_id = uuid.uuid4().hex[:12]
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(json.dumps({"rating_id": rating_id, **rating.to_dict()}, ensure_ascii=False) + "\n")
        return rating_id

    def load_all(self) -> list[evalkit.RatingRecord]:
        if not self.path.exists():
            return []
        return evalkit.load_ratings(self.path)
