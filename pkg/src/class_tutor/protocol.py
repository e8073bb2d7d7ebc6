"""Reply taxonomy and subproblem state machine for structured tutor turns.

Two wire formats exist. The current one carries a single evaluation letter
(a-g), numeric action codes (1-12) and a subproblem state letter (w-z); the
legacy one carries combined decision tokens such as ``a1`` or ``g2``. The
current format is canonical inside the package; legacy turns are upgraded
on ingest via :func:`upgrade_legacy`.

Everything here is an immutable value object with pure functions over it,
safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum


class ProtocolError(Exception):
    """Base error for malformed protocol values."""


class TerminalSession(ProtocolError):
    """A transition was requested on already-terminal progress."""


class EmptyDecisionSet(ProtocolError):
    """A legacy turn carried no decision tokens."""


class EvaluationCode(str, Enum):
    """Classification of the student's latest response."""

    INCORRECT = "a"
    CORRECT = "b"
    PARTIALLY_CORRECT = "c"
    UNCLEAR = "d"
    OFF_TOPIC = "e"
    INQUIRY = "f"
    NOT_APPLICABLE = "g"

    @classmethod
    def parse(cls, raw: str) -> "EvaluationCode":
        """Parse a single-letter wire code; rejects anything but a-g."""
        text = raw.strip() if isinstance(raw, str) else raw
        try:
            return cls(text)
        except (ValueError, TypeError):
            raise ProtocolError(f"unknown evaluation code {raw!r}") from None


class SubproblemState(str, Enum):
    """Where the session stands relative to the current subproblem.

    ``w`` no subproblem applies, ``x`` one is in progress, ``y`` finished
    and the session advances to the next, ``z`` finished with no next
    subproblem (the whole problem is done).
    """

    NOT_APPLICABLE = "w"
    IN_PROGRESS = "x"
    ADVANCE = "y"
    FINISHED = "z"

    @classmethod
    def parse(cls, raw: str) -> "SubproblemState":
        text = raw.strip() if isinstance(raw, str) else raw
        try:
            return cls(text)
        except (ValueError, TypeError):
            raise ProtocolError(f"unknown subproblem state {raw!r}") from None


class LegacyDecisionCode(str, Enum):
    """Combined thought/decision tokens of the legacy reply format."""

    A1 = "a1"
    A2 = "a2"
    A3 = "a3"
    A4 = "a4"
    B1 = "b1"
    B2 = "b2"
    C1 = "c1"
    C2 = "c2"
    C3 = "c3"
    D1 = "d1"
    D2 = "d2"
    E1 = "e1"
    E2 = "e2"
    F1 = "f1"
    F2 = "f2"
    G1 = "g1"
    G2 = "g2"
    H = "h"

    @classmethod
    def parse(cls, raw: str) -> "LegacyDecisionCode":
        text = raw.strip() if isinstance(raw, str) else raw
        try:
            return cls(text)
        except (ValueError, TypeError):
            raise ProtocolError(f"unknown decision token {raw!r}") from None


MIN_ACTION = 1
MAX_ACTION = 12

# Evaluation letter -> the action codes a tutor turn may carry under it.
_ALLOWED_ACTIONS: dict[EvaluationCode, frozenset[int]] = {
    EvaluationCode.INCORRECT: frozenset({1, 2}),
    EvaluationCode.CORRECT: frozenset({3}),
    EvaluationCode.PARTIALLY_CORRECT: frozenset({4, 5}),
    EvaluationCode.UNCLEAR: frozenset({6}),
    EvaluationCode.OFF_TOPIC: frozenset({7}),
    EvaluationCode.INQUIRY: frozenset({8, 9, 10, 11}),
    EvaluationCode.NOT_APPLICABLE: frozenset({12}),
}

# Single representative action used when upgrading legacy turns, whose
# sub-codes have no one-to-one counterpart.
_UPGRADE_ACTION: dict[EvaluationCode, int] = {
    EvaluationCode.INCORRECT: 1,
    EvaluationCode.CORRECT: 3,
    EvaluationCode.PARTIALLY_CORRECT: 4,
    EvaluationCode.UNCLEAR: 6,
    EvaluationCode.OFF_TOPIC: 7,
    EvaluationCode.INQUIRY: 11,
    EvaluationCode.NOT_APPLICABLE: 12,
}

# Short human-readable labels for operator surfaces (REPL, metadata panel).
EVALUATION_LABELS: dict[EvaluationCode, str] = {
    EvaluationCode.INCORRECT: "incorrect",
    EvaluationCode.CORRECT: "correct",
    EvaluationCode.PARTIALLY_CORRECT: "partially correct",
    EvaluationCode.UNCLEAR: "unclear",
    EvaluationCode.OFF_TOPIC: "off-topic",
    EvaluationCode.INQUIRY: "inquiry",
    EvaluationCode.NOT_APPLICABLE: "n/a",
}

ACTION_LABELS: dict[int, str] = {
    1: "flag mistake and hint",
    2: "step in with solution",
    3: "confirm and check completeness",
    4: "credit correct parts, fix the rest",
    5: "step in with solution",
    6: "ask for clarification",
    7: "redirect to topic",
    8: "give hint",
    9: "give solution, close subproblem",
    10: "reopen previous subproblem",
    11: "answer the inquiry",
    12: "n/a",
}


def parse_action(raw) -> int:
    """Parse one action code; rejects values outside 1..12."""
    try:
        value = int(str(raw).strip())
    except (ValueError, TypeError):
        raise ProtocolError(f"action code {raw!r} is not an integer") from None
    if not MIN_ACTION <= value <= MAX_ACTION:
        raise ProtocolError(f"action code {value} outside {MIN_ACTION}..{MAX_ACTION}")
    return value


def parse_actions(raw: str) -> tuple[int, ...]:
    """Parse a comma-separated action list, e.g. ``"1,2"``.

    Order is preserved; duplicates and empty lists are rejected.
    """
    tokens = [t for t in (piece.strip() for piece in str(raw).split(",")) if t]
    if not tokens:
        raise ProtocolError(f"empty action list {raw!r}")
    actions = tuple(parse_action(t) for t in tokens)
    if len(set(actions)) != len(actions):
        raise ProtocolError(f"duplicate action codes in {raw!r}")
    return actions


def actions_to_wire(actions: tuple[int, ...]) -> str:
    return ",".join(str(a) for a in actions)


def parse_decisions(raw: str) -> tuple[LegacyDecisionCode, ...]:
    """Parse a comma-separated legacy decision list, e.g. ``"a1,a2,a3"``."""
    tokens = [t for t in (piece.strip() for piece in str(raw).split(",")) if t]
    if not tokens:
        raise EmptyDecisionSet(f"empty decision list {raw!r}")
    decisions = tuple(LegacyDecisionCode.parse(t) for t in tokens)
    if len(set(decisions)) != len(decisions):
        raise ProtocolError(f"duplicate decision tokens in {raw!r}")
    return decisions


def decisions_to_wire(decisions: tuple[LegacyDecisionCode, ...]) -> str:
    return ",".join(d.value for d in decisions)


def allowed_actions(evaluation: EvaluationCode) -> frozenset[int]:
    """Action codes permitted for a given evaluation letter. Total function."""
    return _ALLOWED_ACTIONS[evaluation]


@dataclass(frozen=True)
class TutorTurn:
    """One structured tutor reply in the canonical (current) format.

    Element-level legality (each action in 1..12, no duplicates) is checked
    at construction; business rules (action/evaluation compatibility,
    nonempty utterance) are checked by :func:`validate_turn` so invalid
    turns can be inspected rather than silently dropped.
    """

    thoughts: str
    evaluation: EvaluationCode
    actions: tuple[int, ...]
    state: SubproblemState
    subproblem: str
    utterance: str

    def __post_init__(self):
        for a in self.actions:
            if not isinstance(a, int) or not MIN_ACTION <= a <= MAX_ACTION:
                raise ProtocolError(f"action code {a!r} outside {MIN_ACTION}..{MAX_ACTION}")
        if len(set(self.actions)) != len(self.actions):
            raise ProtocolError(f"duplicate action codes {self.actions!r}")


@dataclass(frozen=True)
class LegacyTutorTurn:
    """One structured tutor reply in the legacy decision-token format."""

    decisions: tuple[LegacyDecisionCode, ...]
    subproblem: str
    utterance: str
    thoughts: str | None = None

    def __post_init__(self):
        if not self.decisions:
            raise EmptyDecisionSet("legacy turn has no decisions")
        if len(set(self.decisions)) != len(self.decisions):
            raise ProtocolError(f"duplicate decision tokens {self.decisions!r}")


@dataclass(frozen=True)
class SessionProgress:
    """Cursor over the sequence of subproblems. Index is 1-based."""

    subproblem_index: int = 1
    total_known: int | None = None
    terminal: bool = False


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


def validate_turn(turn: TutorTurn) -> list[Violation]:
    """Check a turn against the taxonomy. Empty list means valid.

    Never raises: callers decide whether violations are fatal.
    """
    violations: list[Violation] = []
    if not turn.actions:
        violations.append(Violation("EmptyActions", "turn carries no action codes"))
    else:
        allowed = allowed_actions(turn.evaluation)
        for a in turn.actions:
            if a not in allowed:
                violations.append(
                    Violation(
                        "IncompatibleAction",
                        f"action {a} not allowed under evaluation "
                        f"'{turn.evaluation.value}' (allowed: {sorted(allowed)})",
                    )
                )
    if not turn.utterance:
        violations.append(Violation("EmptyUtterance", "turn utterance is empty"))
    if not isinstance(turn.state, SubproblemState):
        violations.append(Violation("IllegalState", f"state {turn.state!r} is not a legal code"))
    return violations


def next_state(progress: SessionProgress, state: SubproblemState) -> SessionProgress:
    """Advance the subproblem cursor for one tutor turn.

    ``x``/``w`` leave progress unchanged, ``y`` moves to the next
    subproblem, ``z`` marks the session terminal (index unchanged).
    Terminal progress is absorbing: further transitions raise.
    """
    if progress.terminal:
        raise TerminalSession("session already terminal")
    if state is SubproblemState.ADVANCE:
        return replace(progress, subproblem_index=progress.subproblem_index + 1)
    if state is SubproblemState.FINISHED:
        return replace(progress, terminal=True)
    return progress


def upgrade_legacy(
    turn: LegacyTutorTurn,
    state: SubproblemState = SubproblemState.IN_PROGRESS,
) -> TutorTurn:
    """Convert a legacy turn to the canonical format.

    The evaluation is the letter prefix of the first decision token
    (``h`` maps to the n/a evaluation). The action set collapses to a
    single representative compatible action since legacy sub-codes have
    no one-to-one counterparts; detail survives in ``thoughts``.
    """
    if not turn.decisions:
        raise EmptyDecisionSet("legacy turn has no decisions")
    prefix = turn.decisions[0].value[0]
    if prefix == "h":
        evaluation = EvaluationCode.NOT_APPLICABLE
    else:
        evaluation = EvaluationCode(prefix)
    return TutorTurn(
        thoughts=turn.thoughts or "",
        evaluation=evaluation,
        actions=(_UPGRADE_ACTION[evaluation],),
        state=state,
        subproblem=turn.subproblem,
        utterance=turn.utterance,
    )
