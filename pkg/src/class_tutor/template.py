"""Extract, parse, validate and canonically re-serialize tutor reply JSON.

Model completions rarely arrive as clean JSON: replies get wrapped in
prose, keys show up single-quoted, objects end with trailing commas, and
some sources double every quote character (CSV-style escaping). This
module pulls the first balanced JSON block out of a completion, loads it
with a bounded set of repairs, and maps it onto the typed turn structures
of :mod:`class_tutor.protocol`. Every accepted repair is reported in the
parse diagnostics so strict round-trips stay distinguishable from lenient
ingest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from . import protocol
from .protocol import LegacyTutorTurn, TutorTurn

# Canonical wire keys of the current reply format, in serialization order.
KEY_THOUGHTS = "Thoughts of Tutorbot"
KEY_EVALUATION = "Evaluation of Student Response"
KEY_ACTIONS = "Action Based on Evaluation"
KEY_STATE = "Subproblem State"
KEY_SUBPROBLEM = "Subproblem"
KEY_UTTERANCE = "Tutorbot"
KEY_STUDENT = "Student"

V2_KEY_ORDER = (
    KEY_THOUGHTS,
    KEY_EVALUATION,
    KEY_ACTIONS,
    KEY_STATE,
    KEY_SUBPROBLEM,
    KEY_UTTERANCE,
)

# Legacy format keys; the decision key appears under two spellings.
KEY_DECISION = "Decision"
KEY_DECISION_LONG = "Decision by Tutorbot"

_V1_KNOWN_KEYS = {KEY_STUDENT, KEY_THOUGHTS, KEY_DECISION, KEY_DECISION_LONG, KEY_SUBPROBLEM, KEY_UTTERANCE}
_V2_KNOWN_KEYS = {KEY_STUDENT, *V2_KEY_ORDER}


class TemplateError(Exception):
    """Base error for completion parsing; carries a stable machine code."""

    code = "TemplateError"

    def __init__(self, message: str, location: str | None = None):
        super().__init__(message)
        self.location = location


class NoJsonFound(TemplateError):
    code = "NoJsonFound"


class UnbalancedBraces(TemplateError):
    code = "UnbalancedBraces"


class MalformedJson(TemplateError):
    code = "MalformedJson"


class UnknownSchema(TemplateError):
    code = "UnknownSchema"


class MissingKey(TemplateError):
    code = "MissingKey"


class FieldTypeMismatch(TemplateError):
    code = "FieldTypeMismatch"


class InvalidCode(TemplateError):
    code = "InvalidCode"


class InvalidTurn(TemplateError):
    code = "InvalidTurn"

    def __init__(self, violations: list[protocol.Violation]):
        super().__init__("; ".join(v.message for v in violations))
        self.violations = violations


class TemplateVersion(str, Enum):
    V1 = "v1"
    V2 = "v2"


@dataclass(frozen=True)
class RawCompletion:
    """Full, untrusted model output, possibly with prose around the JSON."""

    text: str


@dataclass(frozen=True)
class Warning:
    code: str
    message: str
    location: str | None = None


@dataclass
class ParseDiagnostics:
    """What the parser had to tolerate. Empty warnings == strictly well-formed."""

    warnings: list[Warning] = field(default_factory=list)
    repaired: bool = False

    def add(self, code: str, message: str, location: str | None = None) -> None:
        self.warnings.append(Warning(code, message, location))


@dataclass(frozen=True)
class ConversationTurn:
    """One exchange of a mock conversation: student text plus tutor turn.

    ``turn`` is always canonical-format; when the source record was
    legacy, the original is kept in ``legacy``.
    """

    student: str
    turn: TutorTurn
    legacy: LegacyTutorTurn | None = None


@dataclass(frozen=True)
class ParsedTurn:
    """Typed result of parsing one completion.

    ``kind`` is ``"v2"`` (current format, ``turn`` set), ``"v1"`` (legacy;
    ``legacy`` holds the original and ``turn`` the upgraded form) or
    ``"conversation"`` (a whole mock-conversation array).
    """

    kind: str
    turn: TutorTurn | None = None
    legacy: LegacyTutorTurn | None = None
    conversation: tuple[ConversationTurn, ...] | None = None


def extract_json_block(raw: RawCompletion | str) -> str:
    """Return the first balanced top-level ``{...}`` or ``[...]`` substring.

    Scans left to right, respecting double-quoted string literals and
    backslash escapes, so braces inside strings never count. Raises
    :class:`NoJsonFound` when no opener exists and
    :class:`UnbalancedBraces` when the text ends before the block closes
    (or a closer mismatches its opener).
    """
    text = raw.text if isinstance(raw, RawCompletion) else raw
    if not isinstance(text, str):
        raise NoJsonFound("completion is not text")
    start = None
    for i, ch in enumerate(text):
        if ch in "{[":
            start = i
            break
    if start is None:
        raise NoJsonFound("no JSON object or array in completion")

    stack: list[str] = []
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch in "{[":
            stack.append(ch)
        elif ch in "}]":
            if not stack or (ch == "}") != (stack[-1] == "{"):
                raise UnbalancedBraces(f"mismatched {ch!r} at offset {i}")
            stack.pop()
            if not stack:
                return text[start : i + 1]
    raise UnbalancedBraces("completion ends inside a JSON block")


def _collapse_doubled_quotes(text: str) -> str:
    return text.replace('""', '"')


def _rewrite_tolerant(text: str) -> tuple[str, set[str]]:
    """Rewrite single-quoted strings and trailing commas into strict JSON.

    Returns the rewritten text plus the set of repair codes actually used.
    Only these two tolerances are handled; anything else still has to pass
    ``json.loads``.
    """
    out: list[str] = []
    used: set[str] = set()
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == '"':
            # Copy a double-quoted string verbatim.
            out.append(ch)
            i += 1
            while i < n:
                c = text[i]
                out.append(c)
                if c == "\\" and i + 1 < n:
                    out.append(text[i + 1])
                    i += 2
                    continue
                i += 1
                if c == '"':
                    break
            continue
        if ch == "'":
            # Convert a single-quoted string to double quotes.
            used.add("single_quotes")
            out.append('"')
            i += 1
            while i < n:
                c = text[i]
                if c == "\\" and i + 1 < n:
                    nxt = text[i + 1]
                    if nxt == "'":
                        out.append("'")
                    else:
                        out.append(c)
                        out.append(nxt)
                    i += 2
                    continue
                if c == "'":
                    out.append('"')
                    i += 1
                    break
                if c == '"':
                    out.append('\\"')
                else:
                    out.append(c)
                i += 1
            continue
        if ch == ",":
            j = i + 1
            while j < n and text[j] in " \t\r\n":
                j += 1
            if j < n and text[j] in "}]":
                used.add("trailing_commas")
                i += 1  # drop the comma, keep the whitespace
                continue
        out.append(ch)
        i += 1
    return "".join(out), used


def loads_lenient(block: str, *, lenient: bool = True):
    """Load a JSON block, optionally applying the bounded repair set.

    Returns ``(value, repair_codes)``. Raises :class:`MalformedJson` when
    no attempt succeeds.
    """
    try:
        return json.loads(block), set()
    except (json.JSONDecodeError, RecursionError) as exc:
        strict_error = exc
    if not lenient:
        raise MalformedJson(f"invalid JSON: {strict_error}")

    attempts: list[tuple[str, set[str]]] = []
    rewritten, used = _rewrite_tolerant(block)
    attempts.append((rewritten, used))
    collapsed = _collapse_doubled_quotes(block)
    attempts.append((collapsed, {"doubled_quotes"}))
    collapsed_rewritten, used2 = _rewrite_tolerant(collapsed)
    attempts.append((collapsed_rewritten, {"doubled_quotes"} | used2))
    for candidate, codes in attempts:
        try:
            return json.loads(candidate), codes
        except (json.JSONDecodeError, RecursionError):
            continue
    raise MalformedJson(f"invalid JSON after repairs: {strict_error}")


def detect_version(keys) -> TemplateVersion:
    """Decide which reply format a key set belongs to.

    The evaluation key marks the current format; either decision key marks
    the legacy one. Anything else is an unknown schema.
    """
    key_set = set(keys)
    if not key_set:
        raise UnknownSchema("empty key set")
    if KEY_EVALUATION in key_set:
        return TemplateVersion.V2
    if KEY_DECISION in key_set or KEY_DECISION_LONG in key_set:
        return TemplateVersion.V1
    raise UnknownSchema(f"no version discriminator among keys {sorted(key_set)}")


def _require_str(obj: dict, key: str, *, where: str) -> str:
    if key not in obj:
        raise MissingKey(f"missing key {key!r}", location=where)
    value = obj[key]
    if isinstance(value, str):
        return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return str(value)
    raise FieldTypeMismatch(f"key {key!r} must be a string, got {type(value).__name__}", location=where)


def _optional_str(obj: dict, key: str, *, where: str) -> str:
    if key not in obj or obj[key] is None:
        return ""
    return _require_str(obj, key, where=where)


def _warn_unknown_keys(obj: dict, known: set[str], diagnostics: ParseDiagnostics, where: str) -> None:
    extras = [k for k in obj if k not in known]
    if extras:
        diagnostics.add("unknown_keys", f"ignored keys {sorted(extras)}", where)


def _parse_v2_dict(obj: dict, diagnostics: ParseDiagnostics, where: str) -> TutorTurn:
    _warn_unknown_keys(obj, _V2_KNOWN_KEYS, diagnostics, where)
    evaluation_raw = _require_str(obj, KEY_EVALUATION, where=where)
    actions_raw = _require_str(obj, KEY_ACTIONS, where=where)
    state_raw = _require_str(obj, KEY_STATE, where=where)
    try:
        evaluation = protocol.EvaluationCode.parse(evaluation_raw)
        actions = protocol.parse_actions(actions_raw)
        state = protocol.SubproblemState.parse(state_raw)
    except protocol.ProtocolError as exc:
        raise InvalidCode(str(exc), location=where) from None
    return TutorTurn(
        thoughts=_optional_str(obj, KEY_THOUGHTS, where=where),
        evaluation=evaluation,
        actions=actions,
        state=state,
        subproblem=_optional_str(obj, KEY_SUBPROBLEM, where=where),
        utterance=_require_str(obj, KEY_UTTERANCE, where=where),
    )


def _parse_v1_dict(obj: dict, diagnostics: ParseDiagnostics, where: str) -> LegacyTutorTurn:
    _warn_unknown_keys(obj, _V1_KNOWN_KEYS, diagnostics, where)
    decision_key = KEY_DECISION_LONG if KEY_DECISION_LONG in obj else KEY_DECISION
    decisions_raw = _require_str(obj, decision_key, where=where)
    try:
        decisions = protocol.parse_decisions(decisions_raw)
    except protocol.EmptyDecisionSet:
        raise
    except protocol.ProtocolError as exc:
        raise InvalidCode(str(exc), location=where) from None
    if protocol.LegacyDecisionCode.A4 in decisions:
        # a4 exists in transcripts but is absent from the legacy format's
        # own "choose all that apply" token list; accept and flag.
        diagnostics.add("legacy_a4", "decision token 'a4' accepted (off-list)", where)
    thoughts = obj.get(KEY_THOUGHTS)
    if thoughts is not None and not isinstance(thoughts, str):
        raise FieldTypeMismatch(f"key {KEY_THOUGHTS!r} must be a string", location=where)
    return LegacyTutorTurn(
        decisions=decisions,
        subproblem=_optional_str(obj, KEY_SUBPROBLEM, where=where),
        utterance=_require_str(obj, KEY_UTTERANCE, where=where),
        thoughts=thoughts,
    )


def _parse_turn_dict(obj: dict, diagnostics: ParseDiagnostics, where: str) -> ParsedTurn:
    version = detect_version(obj.keys())
    if version is TemplateVersion.V2:
        return ParsedTurn(kind="v2", turn=_parse_v2_dict(obj, diagnostics, where))
    legacy = _parse_v1_dict(obj, diagnostics, where)
    try:
        upgraded = protocol.upgrade_legacy(legacy)
    except protocol.ProtocolError as exc:
        raise InvalidCode(str(exc), location=where) from None
    return ParsedTurn(kind="v1", turn=upgraded, legacy=legacy)


def parse_turn(raw: RawCompletion | str, *, lenient: bool = True) -> tuple[ParsedTurn, ParseDiagnostics]:
    """Parse one completion into a typed turn (or conversation array).

    Extraction, version detection and field parsing run in sequence;
    legacy turns are additionally upgraded to the canonical format with
    the original retained. With ``lenient`` (the default for ingest) the
    bounded repair set is applied and every repair is recorded; strict
    mode refuses anything ``json.loads`` would.
    """
    text = raw.text if isinstance(raw, RawCompletion) else raw
    diagnostics = ParseDiagnostics()
    block = extract_json_block(text)
    if block != text.strip():
        diagnostics.add("surrounding_prose", "completion has text around the JSON block")
    value, repairs = loads_lenient(block, lenient=lenient)
    for code in sorted(repairs):
        diagnostics.add(code, f"applied {code.replace('_', ' ')} repair")
    diagnostics.repaired = bool(repairs)

    if isinstance(value, list):
        turns: list[ConversationTurn] = []
        for i, item in enumerate(value):
            where = f"$[{i}]"
            if not isinstance(item, dict):
                raise FieldTypeMismatch(f"conversation element must be an object, got {type(item).__name__}", location=where)
            parsed = _parse_turn_dict(item, diagnostics, where)
            student = _optional_str(item, KEY_STUDENT, where=where)
            turns.append(ConversationTurn(student=student, turn=parsed.turn, legacy=parsed.legacy))
        return ParsedTurn(kind="conversation", conversation=tuple(turns)), diagnostics
    if isinstance(value, dict):
        return _parse_turn_dict(value, diagnostics, "$"), diagnostics
    raise FieldTypeMismatch(f"top-level JSON must be an object or array, got {type(value).__name__}")


def turn_to_dict(turn: TutorTurn) -> dict:
    """Canonical key-ordered dict form of a turn (wire codes as strings)."""
    return {
        KEY_THOUGHTS: turn.thoughts,
        KEY_EVALUATION: turn.evaluation.value,
        KEY_ACTIONS: protocol.actions_to_wire(turn.actions),
        KEY_STATE: turn.state.value,
        KEY_SUBPROBLEM: turn.subproblem,
        KEY_UTTERANCE: turn.utterance,
    }


def serialize_turn(turn: TutorTurn) -> str:
    """Serialize a valid turn to canonical JSON (fixed key order, UTF-8).

    Raises :class:`InvalidTurn` when the turn fails validation, so
    serialized output always parses back to an identical valid turn.
    """
    violations = protocol.validate_turn(turn)
    if violations:
        raise InvalidTurn(violations)
    return json.dumps(turn_to_dict(turn), ensure_ascii=False)


def serialize_conversation(pairs) -> str:
    """Serialize (student, turn) pairs as a mock-conversation JSON array."""
    records = []
    for student, turn in pairs:
        violations = protocol.validate_turn(turn)
        if violations:
            raise InvalidTurn(violations)
        records.append({KEY_STUDENT: student, **turn_to_dict(turn)})
    return json.dumps(records, ensure_ascii=False, indent=1)
