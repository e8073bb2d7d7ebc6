"""Live tutoring sessions: prompt assembly, reply repair, state tracking.

A session is single-writer: one in-flight student message at a time.
State transitions are factored into ``apply_*`` methods on
:class:`Session` so the live path and event-log replay share the same
code; with a scripted backend an entire session is a pure function of
(problem, script, config).
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field

from . import protocol, retrieval, template
from .backend import ChatMessage, ROLE_ASSISTANT, ROLE_SYSTEM, ROLE_USER
from .datagen import prompts
from .datagen.records import ScaffoldingProblem
from .protocol import EvaluationCode, SessionProgress, TutorTurn
from .retrieval import InvertedIndex, ScoredPassage
from .template import TemplateVersion

STATUS_ACTIVE = "active"
STATUS_FINISHED = "finished"
STATUS_ABORTED = "aborted"

SPEAKER_STUDENT = "student"
SPEAKER_TUTOR = "tutor"
SPEAKER_SYSTEM = "system"

REPAIR_INSTRUCTION = (
    "Your previous reply was not valid JSON matching the required structure. "
    "Reply again with ONLY the JSON object."
)

STEP_IN_DIRECTIVE = (
    "The student has made multiple unsuccessful attempts at this subproblem. "
    "Step in to provide the solution now, mark the current subproblem finished, "
    "and move on to the next subproblem."
)

# Evaluations that count as a failed attempt at the current subproblem.
_ATTEMPT_EVALS = {EvaluationCode.INCORRECT, EvaluationCode.PARTIALLY_CORRECT}


class EngineError(Exception):
    code = "EngineError"


class SessionFinished(EngineError):
    code = "SessionFinished"


class EmptyProblem(EngineError):
    code = "EmptyProblem"


class RepairBudgetExhausted(EngineError):
    code = "RepairBudgetExhausted"

    def __init__(self, message: str, session: "Session"):
        super().__init__(message)
        self.session = session


@dataclass(frozen=True)
class GuardrailConfig:
    max_attempts: int = 3
    max_repair_retries: int = 2
    top_k_passages: int = 2
    max_history_turns: int = 20
    prompt_version: TemplateVersion = TemplateVersion.V1

    def __post_init__(self):
        if min(self.max_attempts, self.max_repair_retries, self.max_history_turns) < 0:
            raise ValueError("guardrail values must be >= 0")
        if self.top_k_passages < 1:
            raise ValueError("top_k_passages must be >= 1")

    def to_dict(self) -> dict:
        return {
            "max_attempts": self.max_attempts,
            "max_repair_retries": self.max_repair_retries,
            "top_k_passages": self.top_k_passages,
            "max_history_turns": self.max_history_turns,
            "prompt_version": self.prompt_version.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GuardrailConfig":
        version = data.get("prompt_version", TemplateVersion.V1)
        return cls(
            max_attempts=int(data.get("max_attempts", 3)),
            max_repair_retries=int(data.get("max_repair_retries", 2)),
            top_k_passages=int(data.get("top_k_passages", 2)),
            max_history_turns=int(data.get("max_history_turns", 20)),
            prompt_version=TemplateVersion(version),
        )


@dataclass(frozen=True)
class TutorReply:
    utterance: str
    turn: TutorTurn
    retrieved: tuple[ScoredPassage, ...]
    repairs_used: int


@dataclass
class TranscriptEntry:
    speaker: str
    text: str
    turn: TutorTurn | None = None
    raw: str | None = None
    retrieved_locators: tuple[str, ...] = ()
    repairs_used: int = 0
    aborted: bool = False


@dataclass
class Session:
    """Mutable tutoring session state.

    Only the ``apply_*`` methods mutate state; they are the event-fold
    primitives shared by live handling and persistence replay.
    """

    id: str
    problem_text: str
    config: GuardrailConfig
    problem: ScaffoldingProblem | None = None
    problem_id: str = ""
    progress: SessionProgress = field(default_factory=SessionProgress)
    attempts: dict[int, int] = field(default_factory=dict)
    transcript: list[TranscriptEntry] = field(default_factory=list)
    status: str = STATUS_ACTIVE
    current_subproblem: str = ""
    step_in_pending: bool = False

    @classmethod
    def start(cls, problem, config: GuardrailConfig, session_id: str | None = None) -> "Session":
        if isinstance(problem, ScaffoldingProblem):
            text = problem.problem
            scaffold = problem
        else:
            text = str(problem).strip()
            scaffold = None
        if not text:
            raise EmptyProblem("problem text must be nonempty")
        total = len(scaffold.subproblems) if scaffold else None
        return cls(
            id=session_id or uuid.uuid4().hex,
            problem_text=text,
            problem=scaffold,
            config=config,
            progress=SessionProgress(subproblem_index=1, total_known=total),
        )

    @property
    def active(self) -> bool:
        return self.status == STATUS_ACTIVE

    def attempts_at_current(self) -> int:
        return self.attempts.get(self.progress.subproblem_index, 0)

    def apply_student(self, text: str) -> None:
        self.transcript.append(TranscriptEntry(speaker=SPEAKER_STUDENT, text=text))

    def apply_tutor(
        self,
        turn: TutorTurn,
        raw: str,
        retrieved_locators: tuple[str, ...] = (),
        repairs_used: int = 0,
    ) -> None:
        """Fold one valid tutor turn into the session state."""
        index = self.progress.subproblem_index
        if turn.evaluation in _ATTEMPT_EVALS:
            self.attempts[index] = self.attempts.get(index, 0) + 1
        self.step_in_pending = self.attempts.get(index, 0) >= self.config.max_attempts
        self.progress = protocol.next_state(self.progress, turn.state)
        if self.progress.subproblem_index != index:
            self.step_in_pending = False
        if turn.subproblem:
            self.current_subproblem = turn.subproblem
        if self.progress.terminal:
            self.status = STATUS_FINISHED
        self.transcript.append(
            TranscriptEntry(
                speaker=SPEAKER_TUTOR,
                text=turn.utterance,
                turn=turn,
                raw=raw,
                retrieved_locators=retrieved_locators,
                repairs_used=repairs_used,
            )
        )

    def apply_abort(self, reason: str) -> None:
        self.status = STATUS_ABORTED
        self.transcript.append(TranscriptEntry(speaker=SPEAKER_SYSTEM, text=reason, aborted=True))


class TutorEngine:
    """Drives sessions against a backend, an optional passage index and the
    guardrail config."""

    def __init__(self, backend, index: InvertedIndex | None = None, config: GuardrailConfig | None = None):
        self.backend = backend
        self.index = index
        self.config = config or GuardrailConfig()

    # ------------------------------------------------------------------
    # Prompt assembly
    # ------------------------------------------------------------------

    def _retrieve(self, session: Session) -> list[ScoredPassage]:
        if self.index is None:
            return []
        query = session.problem_text
        # Before the tutor names a subproblem there is nothing to narrow by.
        if session.current_subproblem:
            query = f"{query} {session.current_subproblem}"
        try:
            return retrieval.search(self.index, query, self.config.top_k_passages)
        except retrieval.EmptyQuery:
            return []

    def build_prompt(self, session: Session, student_text: str) -> tuple[list[ChatMessage], list[ScoredPassage]]:
        """Assemble the message list for one backend round.

        System prompt with retrieved passages, then the most recent
        transcript entries (bounded by ``max_history_turns``), then the
        new student message. After repeated failed attempts the step-in
        directive is appended to the system prompt.
        """
        passages = self._retrieve(session)
        passages_text = "\n\n".join(p.passage.text for p in passages)
        system_text = prompts.build_inference_system_prompt(passages_text, self.config.prompt_version)
        if session.step_in_pending:
            system_text = f"{system_text}\n\n{STEP_IN_DIRECTIVE}"
        messages = [ChatMessage(role=ROLE_SYSTEM, content=system_text)]
        history = session.transcript[-self.config.max_history_turns:] if self.config.max_history_turns else []
        for entry in history:
            if entry.speaker == SPEAKER_STUDENT:
                messages.append(ChatMessage(role=ROLE_USER, content=entry.text))
            elif entry.speaker == SPEAKER_TUTOR:
                messages.append(ChatMessage(role=ROLE_ASSISTANT, content=entry.raw or entry.text))
        messages.append(ChatMessage(role=ROLE_USER, content=student_text))
        return messages, passages

    # ------------------------------------------------------------------
    # Backend rounds
    # ------------------------------------------------------------------

    def _one_round(self, session: Session, student_text: str) -> TutorReply:
        """One backend exchange with the parse/validate repair loop."""
        messages, passages = self.build_prompt(session, student_text)
        repairs = 0
        last_error = "no reply"
        while True:
            completion = self.backend.complete(messages)
            try:
                parsed, _ = template.parse_turn(completion, lenient=True)
            except template.TemplateError as exc:
                parsed = None
                last_error = f"{exc.code}: {exc}"
            if parsed is not None and parsed.kind in ("v1", "v2") and parsed.turn is not None:
                violations = protocol.validate_turn(parsed.turn)
                if not violations:
                    return TutorReply(
                        utterance=parsed.turn.utterance,
                        turn=parsed.turn,
                        retrieved=tuple(passages),
                        repairs_used=repairs,
                    )
                last_error = "InvalidTurn: " + "; ".join(v.message for v in violations)
            elif parsed is not None:
                last_error = "UnexpectedShape: completion was not a single turn object"
            if repairs >= self.config.max_repair_retries:
                raise RepairBudgetExhausted(
                    f"no valid reply after {repairs + 1} attempts ({last_error})", session
                )
            repairs += 1
            messages = messages + [
                ChatMessage(role=ROLE_ASSISTANT, content=completion.text or "(empty reply)"),
                ChatMessage(role=ROLE_USER, content=REPAIR_INSTRUCTION),
            ]

    # ------------------------------------------------------------------
    # Public session operations
    # ------------------------------------------------------------------

    def start_session(self, problem, session_id: str | None = None) -> tuple[Session, TutorReply]:
        """Open a session and produce the opening tutor reply.

        The opening round sends the conventional request on the student's
        behalf; parse failures beyond the repair budget abort the session.
        """
        session = Session.start(problem, self.config, session_id)
        opening = f"{prompts.OPENING_STUDENT_PREFIX}{session.problem_text}"
        try:
            reply = self._one_round(session, opening)
        except RepairBudgetExhausted:
            session.apply_student(opening)
            session.apply_abort("tutor reply unusable: repair budget exhausted")
            raise
        session.apply_student(opening)
        self._fold_reply(session, reply)
        return session, reply

    def student_message(self, session: Session, text: str) -> TutorReply:
        """Process one student message and return the validated reply."""
        if not session.active:
            raise SessionFinished(f"session is {session.status}")
        if not text or not text.strip():
            raise EngineError("student message must be nonempty")
        try:
            reply = self._one_round(session, text)
        except RepairBudgetExhausted:
            session.apply_student(text)
            session.apply_abort("tutor reply unusable: repair budget exhausted")
            raise
        session.apply_student(text)
        self._fold_reply(session, reply)
        return reply

    def _fold_reply(self, session: Session, reply: TutorReply) -> None:
        session.apply_tutor(
            reply.turn,
            raw=template.serialize_turn(reply.turn),
            retrieved_locators=tuple(p.passage.locator for p in reply.retrieved),
            repairs_used=reply.repairs_used,
        )


def transcript(session: Session) -> list[dict]:
    """Lossless ordered transcript with per-turn decision metadata."""
    entries = []
    for entry in session.transcript:
        item: dict = {"speaker": entry.speaker, "text": entry.text}
        if entry.turn is not None:
            item["meta"] = {
                "evaluation": entry.turn.evaluation.value,
                "actions": list(entry.turn.actions),
                "state": entry.turn.state.value,
                "subproblem": entry.turn.subproblem,
                "thoughts": entry.turn.thoughts,
                "retrieved_locators": list(entry.retrieved_locators),
                "repairs_used": entry.repairs_used,
            }
        if entry.aborted:
            item["aborted"] = True
        entries.append(item)
    return entries
