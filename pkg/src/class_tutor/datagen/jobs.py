"""Generation jobs: prompt, call, parse, retry, persist as JSONL.

Each dataset line is an envelope ``{"id", "kind", "source", "payload",
"generator"}`` where the payload is the wire-format object itself, so a
persisted record re-parses with the same code path that validated it at
generation time. Items that still fail after their retry budget are
reported in the summary and never persisted.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .. import template
from ..backend import BackendError, ChatMessage, ROLE_USER
from ..template import TemplateVersion
from . import prompts
from .records import (
    DatagenError,
    MockConversation,
    ScaffoldingProblem,
    SectionSpec,
    lint_conversation,
    parse_dialogue_response,
    parse_scaffold_response,
)

KIND_SCAFFOLD = "scaffold"
KIND_DIALOGUE = "dialogue"


@dataclass
class GenerationJob:
    kind: str
    inputs: list
    output_path: Path
    retries_per_item: int = 1
    template_version: TemplateVersion = TemplateVersion.V2
    bloom: bool = False
    parallelism: int = 1

    def __post_init__(self):
        if self.kind not in (KIND_SCAFFOLD, KIND_DIALOGUE):
            raise DatagenError(f"unknown job kind {self.kind!r}")
        if self.retries_per_item < 0:
            raise DatagenError("retries_per_item must be >= 0")
        self.output_path = Path(self.output_path)


@dataclass
class ItemResult:
    index: int
    ok: bool
    attempts: int
    record_id: str | None = None
    error: str | None = None


@dataclass
class JobSummary:
    ok: int
    failed: int
    output_path: str
    items: list[ItemResult] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "failed": self.failed,
            "output_path": self.output_path,
            "items": [
                {
                    "index": item.index,
                    "ok": item.ok,
                    "attempts": item.attempts,
                    "record_id": item.record_id,
                    "error": item.error,
                }
                for item in self.items
            ],
        }


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    kind: str
    source: dict
    payload: dict
    generator: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "id": self.id,
                "kind": self.kind,
                "source": self.source,
                "payload": self.payload,
                "generator": self.generator,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "DatasetRecord":
        data = json.loads(line)
        missing = [key for key in ("id", "kind", "payload") if key not in data]
        if missing:
            raise DatagenError(f"dataset line missing keys {missing}")
        return cls(
            id=str(data["id"]),
            kind=str(data["kind"]),
            source=data.get("source") or {},
            payload=data["payload"],
            generator=data.get("generator") or {},
        )


def _record_id(kind: str, payload: dict) -> str:
    digest = hashlib.sha256((kind + json.dumps(payload, sort_keys=True, ensure_ascii=True)).encode("utf-8"))
    return digest.hexdigest()[:12]


def _generator_stamp(backend) -> dict:
    info = backend.describe() if hasattr(backend, "describe") else {}
    return {
        "model": info.get("model", "unknown"),
        "temperature": info.get("temperature", 0.0),
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }


def _generate_one(job: GenerationJob, item, backend) -> tuple[dict, dict, int]:
    """Returns (source, payload, attempts). Raises the last error when the
    retry budget is exhausted."""
    if job.kind == KIND_SCAFFOLD:
        section: SectionSpec = item
        prompt = prompts.build_scaffold_prompt(section, bloom=job.bloom)
        source = section.to_dict()
    else:
        problem, problem_id = item
        prompt = prompts.build_dialogue_prompt(problem, job.template_version)
        source = {"problem_id": problem_id}

    last_error: Exception | None = None
    attempts = 0
    for _ in range(job.retries_per_item + 1):
        attempts += 1
        try:
            completion = backend.complete([ChatMessage(role=ROLE_USER, content=prompt)])
            if job.kind == KIND_SCAFFOLD:
                record = parse_scaffold_response(completion)
                return source, record.to_payload(), attempts
            conversation = parse_dialogue_response(
                completion,
                problem=problem.problem if isinstance(problem, ScaffoldingProblem) else str(problem),
                source_problem_id=problem_id,
            )
            return source, conversation.to_payload(), attempts
        except (template.TemplateError, DatagenError, BackendError) as exc:
            last_error = exc
    raise last_error if last_error else DatagenError("no attempt made")


def run_job(job: GenerationJob, backend) -> JobSummary:
    """Run a generation job, writing one JSONL line per successful item.

    Items may be processed concurrently (``job.parallelism``); output
    writes go through a single writer in input order so reruns with a
    scripted backend are byte-stable.
    """
    results: list[ItemResult] = [None] * len(job.inputs)  # type: ignore[list-item]
    lines: list[str | None] = [None] * len(job.inputs)

    def work(index: int, item) -> None:
        try:
            source, payload, attempts = _generate_one(job, item, backend)
        except Exception as exc:
            attempts = job.retries_per_item + 1
            results[index] = ItemResult(index=index, ok=False, attempts=attempts, error=f"{type(exc).__name__}: {exc}")
            return
        record = DatasetRecord(
            id=_record_id(job.kind, payload),
            kind=job.kind,
            source=source,
            payload=payload,
            generator=_generator_stamp(backend),
        )
        lines[index] = record.to_json()
        results[index] = ItemResult(index=index, ok=True, attempts=attempts, record_id=record.id)

    if job.parallelism > 1:
        with ThreadPoolExecutor(max_workers=job.parallelism) as pool:
            for index, item in enumerate(job.inputs):
                pool.submit(work, index, item)
    else:
        for index, item in enumerate(job.inputs):
            work(index, item)

    job.output_path.parent.mkdir(parents=True, exist_ok=True)
    with job.output_path.open("w", encoding="utf-8") as handle:
        for line in lines:
            if line is not None:
                handle.write(line + "\n")

    ok = sum(1 for r in results if r and r.ok)
    return JobSummary(
        ok=ok,
        failed=len(job.inputs) - ok,
        output_path=str(job.output_path),
        items=[r for r in results if r is not None],
    )


def load_dataset(path: str | Path) -> list[DatasetRecord]:
    records = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(DatasetRecord.from_json(line))
        except (json.JSONDecodeError, DatagenError) as exc:
            raise DatagenError(f"line {line_no}: {exc}") from None
    return records


@dataclass
class ValidationIssue:
    line: int
    record_id: str | None
    error: str


@dataclass
class ValidationReport:
    total: int
    valid: int
    issues: list[ValidationIssue] = field(default_factory=list)
    advisories: list[tuple[int, str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "valid": self.valid,
            "ok": self.ok,
            "issues": [{"line": i.line, "record_id": i.record_id, "error": i.error} for i in self.issues],
            "advisories": [{"line": line, "code": code, "message": msg} for line, code, msg in self.advisories],
        }


def validate_dataset(path: str | Path) -> ValidationReport:
    """Re-parse every record of a dataset file through the ingest path.

    Schema errors make the record invalid; conversation lint findings are
    reported as advisories, not failures.
    """
    issues: list[ValidationIssue] = []
    advisories: list[tuple[int, str, str]] = []
    total = 0
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        total += 1
        record_id = None
        try:
            record = DatasetRecord.from_json(line)
            record_id = record.id
            if record.kind == KIND_SCAFFOLD:
                parse_scaffold_response(json.dumps(record.payload, ensure_ascii=False))
            elif record.kind == KIND_DIALOGUE:
                payload = record.payload
                turns = payload.get("turns")
                if turns is None:
                    raise DatagenError("dialogue payload has no turns")
                conversation = parse_dialogue_response(
                    json.dumps(turns, ensure_ascii=False),
                    problem=payload.get("problem"),
                    source_problem_id=str(payload.get("source_problem_id", "")),
                )
                for advisory in lint_conversation(conversation):
                    advisories.append((line_no, advisory.code, advisory.message))
            else:
                raise DatagenError(f"unknown record kind {record.kind!r}")
        except (json.JSONDecodeError, DatagenError, template.TemplateError) as exc:
            issues.append(ValidationIssue(line=line_no, record_id=record_id, error=str(exc)))
    return ValidationReport(total=total, valid=total - len(issues), issues=issues, advisories=advisories)
