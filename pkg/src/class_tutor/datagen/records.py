"""Typed records of the two synthetic datasets and their response parsers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .. import protocol, template
from ..protocol import SubproblemState, TutorTurn
from ..template import RawCompletion

SCAFFOLD_KEY_PROBLEM = "Problem"
SCAFFOLD_KEY_SUBPROBLEMS = "SubProblems"
SCAFFOLD_KEY_SUBPROBLEMS_ALT = "Subproblems"
SCAFFOLD_KEY_FACTS = "Facts"
SCAFFOLD_KEY_SOLUTION = "Solution"

SUBPROBLEM_KEYS = ("Question", "Answer", "Hint", "Incorrect Response", "Feedback")


class DatagenError(Exception):
    """Base error for dataset records; carries a stable machine code."""

    code = "DatagenError"


class MissingKey(DatagenError):
    code = "MissingKey"

    def __init__(self, key: str, where: str = "$"):
        super().__init__(f"missing key {key!r} at {where}")
        self.key = key


class EmptyList(DatagenError):
    code = "EmptyList"

    def __init__(self, key: str):
        super().__init__(f"list {key!r} is empty")
        self.key = key


class NotAnArray(DatagenError):
    code = "NotAnArray"


class EmptyConversation(DatagenError):
    code = "EmptyConversation"


class ConversationInvalid(DatagenError):
    code = "ConversationInvalid"

    def __init__(self, problems: list[tuple[int, list[protocol.Violation]]]):
        detail = "; ".join(
            f"turn {index}: " + ", ".join(v.code for v in violations) for index, violations in problems
        )
        super().__init__(f"conversation has invalid turns ({detail})")
        self.problems = problems


@dataclass(frozen=True)
class SectionSpec:
    """One course section: the unit the scaffolding dataset is keyed by."""

    chapter: str
    section_name: str
    learning_objectives: tuple[str, ...]

    def __post_init__(self):
        objectives = tuple(obj.strip() for obj in self.learning_objectives)
        if not objectives or any(not obj for obj in objectives):
            raise DatagenError("learning_objectives must be nonempty strings")
        object.__setattr__(self, "learning_objectives", objectives)

    def to_dict(self) -> dict:
        return {
            "chapter": self.chapter,
            "section_name": self.section_name,
            "learning_objectives": list(self.learning_objectives),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SectionSpec":
        try:
            return cls(
                chapter=str(data.get("chapter", "")),
                section_name=str(data["section_name"]),
                learning_objectives=tuple(data["learning_objectives"]),
            )
        except KeyError as exc:
            raise MissingKey(exc.args[0]) from None


def load_sections(path: str | Path) -> list[SectionSpec]:
    """Load the sections file: a JSON array of section objects."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise NotAnArray("sections file must contain a JSON array")
    return [SectionSpec.from_dict(item) for item in data]


@dataclass(frozen=True)
class Subproblem:
    question: str
    answer: str
    hint: str
    incorrect_response: str
    feedback: str

    def __post_init__(self):
        for name in ("question", "answer", "hint", "incorrect_response", "feedback"):
            if not getattr(self, name):
                raise DatagenError(f"subproblem field {name} must be nonempty")

    def to_payload(self) -> dict:
        return {
            "Question": self.question,
            "Answer": self.answer,
            "Hint": self.hint,
            "Incorrect Response": self.incorrect_response,
            "Feedback": self.feedback,
        }


@dataclass(frozen=True)
class ScaffoldingProblem:
    """A generated problem with its decomposition, facts and solution."""

    problem: str
    subproblems: tuple[Subproblem, ...]
    facts: tuple[str, ...]
    solution: str
    source: SectionSpec | None = None

    def __post_init__(self):
        if not self.problem:
            raise DatagenError("problem must be nonempty")
        if not self.solution:
            raise DatagenError("solution must be nonempty")
        if not self.subproblems:
            raise EmptyList(SCAFFOLD_KEY_SUBPROBLEMS)
        if not self.facts:
            raise EmptyList(SCAFFOLD_KEY_FACTS)

    def to_payload(self) -> dict:
        """Wire-format object, same keys the generation prompt asks for."""
        return {
            SCAFFOLD_KEY_PROBLEM: self.problem,
            SCAFFOLD_KEY_SUBPROBLEMS: [sp.to_payload() for sp in self.subproblems],
            SCAFFOLD_KEY_FACTS: list(self.facts),
            SCAFFOLD_KEY_SOLUTION: self.solution,
        }


def _subproblem_from_dict(data: dict, index: int) -> Subproblem:
    values = {}
    for key in SUBPROBLEM_KEYS:
        if key not in data or data[key] is None:
            raise MissingKey(key, where=f"$.SubProblems[{index}]")
        values[key] = str(data[key])
    return Subproblem(
        question=values["Question"],
        answer=values["Answer"],
        hint=values["Hint"],
        incorrect_response=values["Incorrect Response"],
        feedback=values["Feedback"],
    )


def parse_scaffold_response(raw: RawCompletion | str, source: SectionSpec | None = None) -> ScaffoldingProblem:
    """Parse a model completion into a scaffolding record.

    The JSON block is extracted and repaired like any other completion;
    both ``SubProblems`` and ``Subproblems`` key spellings are accepted.
    """
    text = raw.text if isinstance(raw, RawCompletion) else raw
    block = template.extract_json_block(text)
    value, _ = template.loads_lenient(block)
    if not isinstance(value, dict):
        raise template.FieldTypeMismatch("scaffold response must be a JSON object")

    if SCAFFOLD_KEY_PROBLEM not in value:
        raise MissingKey(SCAFFOLD_KEY_PROBLEM)
    if SCAFFOLD_KEY_SOLUTION not in value:
        raise MissingKey(SCAFFOLD_KEY_SOLUTION)
    sub_key = SCAFFOLD_KEY_SUBPROBLEMS if SCAFFOLD_KEY_SUBPROBLEMS in value else SCAFFOLD_KEY_SUBPROBLEMS_ALT
    if sub_key not in value:
        raise MissingKey(SCAFFOLD_KEY_SUBPROBLEMS)
    if SCAFFOLD_KEY_FACTS not in value:
        raise MissingKey(SCAFFOLD_KEY_FACTS)

    raw_subproblems = value[sub_key]
    if not isinstance(raw_subproblems, list):
        raise template.FieldTypeMismatch(f"{sub_key} must be an array")
    if not raw_subproblems:
        raise EmptyList(SCAFFOLD_KEY_SUBPROBLEMS)
    raw_facts = value[SCAFFOLD_KEY_FACTS]
    if not isinstance(raw_facts, list):
        raise template.FieldTypeMismatch(f"{SCAFFOLD_KEY_FACTS} must be an array")
    facts = tuple(str(fact) for fact in raw_facts if str(fact).strip())
    if not facts:
        raise EmptyList(SCAFFOLD_KEY_FACTS)

    return ScaffoldingProblem(
        problem=str(value[SCAFFOLD_KEY_PROBLEM]),
        subproblems=tuple(
            _subproblem_from_dict(item, i) if isinstance(item, dict) else _bad_subproblem(item, i)
            for i, item in enumerate(raw_subproblems)
        ),
        facts=facts,
        solution=str(value[SCAFFOLD_KEY_SOLUTION]),
        source=source,
    )


def _bad_subproblem(item, index: int):
    raise template.FieldTypeMismatch(f"SubProblems[{index}] must be an object, got {type(item).__name__}")


@dataclass(frozen=True)
class MockConversation:
    """An ordered mock student-tutor dialogue over one problem.

    Per-turn validity is enforced at construction; whether the dialogue
    actually reaches a terminal state is a lint concern
    (see :func:`lint_conversation`), since generated data may legitimately
    be cut off and should still be inspectable.
    """

    problem: str
    turns: tuple[tuple[str, TutorTurn], ...]
    source_problem_id: str = ""

    def __post_init__(self):
        if not self.turns:
            raise EmptyConversation("conversation has no turns")

    def to_wire(self) -> str:
        """The conversation as the mock-dialogue JSON array wire format."""
        return template.serialize_conversation(self.turns)

    def to_payload(self) -> dict:
        return {
            "problem": self.problem,
            "source_problem_id": self.source_problem_id,
            "turns": json.loads(self.to_wire()),
        }


_OPENING_PREFIXES = ("Help me with Q. ", "Help me with Q: ", "Help with Q: ", "Q. ", "Q: ")


def _derive_problem(turns) -> str:
    if not turns:
        return ""
    first = turns[0].student
    for prefix in _OPENING_PREFIXES:
        if first.startswith(prefix):
            return first[len(prefix):]
    return first


def parse_dialogue_response(
    raw: RawCompletion | str,
    *,
    problem: str | None = None,
    source_problem_id: str = "",
) -> MockConversation:
    """Parse a mock-conversation completion into a typed record.

    Every turn must individually satisfy the reply taxonomy; offending
    turn indices are collected into :class:`ConversationInvalid`. When no
    problem text is supplied it is recovered from the opening student
    message.
    """
    parsed, _ = template.parse_turn(raw, lenient=True)
    if parsed.kind != "conversation":
        raise NotAnArray("dialogue response must be a JSON array of turns")
    turns = parsed.conversation or ()
    if not turns:
        raise EmptyConversation("dialogue response array is empty")

    invalid: list[tuple[int, list[protocol.Violation]]] = []
    for i, convo_turn in enumerate(turns):
        violations = protocol.validate_turn(convo_turn.turn)
        if violations:
            invalid.append((i, violations))
    if invalid:
        raise ConversationInvalid(invalid)

    return MockConversation(
        problem=problem if problem is not None else _derive_problem(turns),
        turns=tuple((t.student, t.turn) for t in turns),
        source_problem_id=source_problem_id,
    )


@dataclass(frozen=True)
class Advisory:
    code: str
    message: str


def lint_conversation(conv: MockConversation) -> list[Advisory]:
    """Non-fatal quality checks on a structurally valid conversation.

    ``NoIncorrectResponses``: the dialogue never exercises mistake
    handling. ``NoTerminalState``: the final turn does not finish the
    problem. ``SubproblemCursorSkips``: the subproblem text changes on a
    turn that does not advance the cursor, i.e. the dialogue jumped
    subproblems without a corresponding state transition.
    """
    advisories: list[Advisory] = []
    wrong_evals = {protocol.EvaluationCode.INCORRECT, protocol.EvaluationCode.PARTIALLY_CORRECT}
    if not any(turn.evaluation in wrong_evals for _, turn in conv.turns):
        advisories.append(Advisory("NoIncorrectResponses", "no turn evaluates an incorrect or partially correct answer"))
    if conv.turns[-1][1].state is not SubproblemState.FINISHED:
        advisories.append(Advisory("NoTerminalState", "conversation does not end with the problem finished"))
    previous_text: str | None = None
    for i, (_, turn) in enumerate(conv.turns):
        if (
            previous_text is not None
            and turn.subproblem != previous_text
            and turn.state not in (SubproblemState.ADVANCE, SubproblemState.FINISHED)
        ):
            advisories.append(
                Advisory("SubproblemCursorSkips", f"turn {i} changes subproblem without advancing the cursor")
            )
        previous_text = turn.subproblem
    return advisories


def replay_states(conv: MockConversation) -> protocol.SessionProgress:
    """Run the conversation's states through the cursor state machine."""
    progress = protocol.SessionProgress()
    for _, turn in conv.turns:
        progress = protocol.next_state(progress, turn.state)
    return progress
