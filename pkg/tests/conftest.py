"""Shared fixtures: golden files, scripted replies, acceptance reporting."""

from __future__ import annotations

from pathlib import Path

import pytest

from class_tutor import template
from class_tutor.datagen.records import parse_dialogue_response

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def scaffold_fungi_text() -> str:
    return (FIXTURES / "scaffold_fungi.txt").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def conversation_dna_text() -> str:
    return (FIXTURES / "conversation_dna.txt").read_text(encoding="utf-8")


def split_transcript(text: str) -> list[tuple[str, str]]:
    """Split a live-transcript fixture into (student text, raw reply) pairs."""
    pairs: list[tuple[str, str]] = []
    chunks = text.split(">>> ")
    student: str | None = None
    for chunk in chunks:
        if chunk.startswith("Student\n"):
            student = chunk[len("Student\n"):].strip()
        elif chunk.startswith("TutorBot\n"):
            pairs.append((student or "", chunk[len("TutorBot\n"):].strip()))
    return pairs


@pytest.fixture(scope="session")
def mitochondria_transcript() -> list[tuple[str, str]]:
    return split_transcript((FIXTURES / "transcript_mitochondria.txt").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def photosynthesis_transcript() -> list[tuple[str, str]]:
    return split_transcript((FIXTURES / "transcript_photosynthesis.txt").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def dna_conversation(conversation_dna_text):
    return parse_dialogue_response(conversation_dna_text)


@pytest.fixture(scope="session")
def dna_script(dna_conversation) -> list[str]:
    """The six tutor turns of the DNA conversation as scripted replies."""
    return [template.serialize_turn(turn) for _, turn in dna_conversation.turns]


@pytest.fixture(scope="session")
def dna_student_texts(dna_conversation) -> list[str]:
    """Student messages 2..6 (the opening message is engine-synthesized)."""
    return [student for student, _ in dna_conversation.turns][1:]


def pytest_runtest_logreport(report):
    """Print one pass/fail line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    status = "PASS" if report.passed else "FAIL"
    print(f"\n[ACCEPTANCE] {status} {name}")
