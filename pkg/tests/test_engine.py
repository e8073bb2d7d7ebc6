import json

import pytest

from class_tutor import retrieval
from class_tutor.backend import ScriptedBackend
from class_tutor.engine import (
    EmptyProblem,
    GuardrailConfig,
    RepairBudgetExhausted,
    Session,
    SessionFinished,
    STEP_IN_DIRECTIVE,
    REPAIR_INSTRUCTION,
    TutorEngine,
    transcript,
)
from class_tutor.template import TemplateVersion

OPENING_REPLY = json.dumps(
    {
        "Decision by Tutorbot": "g1,g2",
        "Subproblem": "What are the key characteristics of mitochondria?",
        "Tutorbot": "No problem! Let's break the question down into subproblems. First, let's discuss the key characteristics of mitochondria.",
    }
)


def v2_reply(evaluation="a", actions="1", state="x", subproblem="sub", utterance="Try again."):
    return json.dumps(
        {
            "Thoughts of Tutorbot": "",
            "Evaluation of Student Response": evaluation,
            "Action Based on Evaluation": actions,
            "Subproblem State": state,
            "Subproblem": subproblem,
            "Tutorbot": utterance,
        }
    )


class SpyBackend(ScriptedBackend):
    """Scripted backend that records every prompt it is sent."""

    def __init__(self, replies):
        super().__init__(replies)
        self.prompts = []

    def complete(self, messages):
        self.prompts.append(messages)
        return super().complete(messages)


def small_index():
    text = (
        "## bio/ch1\n"
        "Mitochondria are double membrane organelles that generate most of the cell's energy.\n\n"
        "Chloroplasts capture light energy to drive photosynthesis in plant cells.\n\n"
        "The nucleus stores genetic information as chromatin inside eukaryotic cells.\n"
    )
    return retrieval.build_index(retrieval.preprocess(text))


class TestStartSession:
    def test_opening_reply_tracked(self):
        backend = SpyBackend([OPENING_REPLY])
        engine = TutorEngine(backend)
        session, reply = engine.start_session("What is mitochondria?")
        assert session.active
        assert session.current_subproblem == "What are the key characteristics of mitochondria?"
        assert reply.turn.evaluation.value == "g"
        assert session.progress.subproblem_index == 1
        # Opening round sends the conventional student request.
        assert backend.prompts[0][-1].content == "Help me with Q. What is mitochondria?"
        assert len(session.transcript) == 2

    def test_empty_problem_rejected(self):
        engine = TutorEngine(ScriptedBackend([]))
        with pytest.raises(EmptyProblem):
            engine.start_session("   ")

    def test_garbage_aborts_after_budget(self):
        backend = SpyBackend(["garbage"] * 5)
        engine = TutorEngine(backend, config=GuardrailConfig(max_repair_retries=2))
        with pytest.raises(RepairBudgetExhausted) as excinfo:
            engine.start_session("What is mitochondria?")
        session = excinfo.value.session
        assert session.status == "aborted"
        assert len(backend.prompts) == 3  # initial + 2 repair retries
        assert transcript(session)[-1]["aborted"] is True


class TestPromptAssembly:
    def test_system_prompt_contains_passages(self):
        backend = SpyBackend([OPENING_REPLY])
        engine = TutorEngine(backend, index=small_index())
        engine.start_session("How do mitochondria make energy for the cell?")
        system = backend.prompts[0][0]
        assert system.role == "system"
        assert "Helpful Information for Tutorbot:" in system.content
        assert "double membrane organelles" in system.content

    def test_no_index_placeholder(self):
        backend = SpyBackend([OPENING_REPLY])
        engine = TutorEngine(backend)
        engine.start_session("What is mitochondria?")
        assert "(no passages found)" in backend.prompts[0][0].content

    def test_query_includes_current_subproblem(self):
        backend = SpyBackend([OPENING_REPLY, v2_reply()])
        index = small_index()
        engine = TutorEngine(backend, index=index)
        session, _ = engine.start_session("Tell me about organelles")
        engine.student_message(session, "they are small")
        # After the opening turn the announced subproblem narrows retrieval.
        assert session.current_subproblem
        assert "mitochondria" in backend.prompts[1][0].content.lower()

    def test_history_truncated(self):
        replies = [OPENING_REPLY] + [v2_reply() for _ in range(12)]
        backend = SpyBackend(replies)
        engine = TutorEngine(backend, config=GuardrailConfig(max_history_turns=20))
        session, _ = engine.start_session("A long conversation about cells")
        for i in range(12):
            engine.student_message(session, f"student message {i}")
        # When the 12th message's prompt is built the transcript holds 24
        # entries; only the 20 most recent survive, plus system + new text.
        last_prompt = backend.prompts[-1]
        assert len(last_prompt) == 22
        contents = [m.content for m in last_prompt]
        assert "A long conversation about cells" not in " ".join(contents[1:])
        assert "student message 0" not in contents
        assert "student message 1" in contents
        assert "student message 10" in contents

    def test_v2_prompt_flavor(self):
        backend = SpyBackend([v2_reply(evaluation="g", actions="12", state="x")])
        engine = TutorEngine(backend, config=GuardrailConfig(prompt_version=TemplateVersion.V2))
        engine.start_session("What is a cell?")
        system = backend.prompts[0][0].content
        assert '"Evaluation of Student Response"' in system
        assert '"Decision by Tutorbot"' not in system


class TestRepairLoop:
    def test_single_repair_recovers(self):
        backend = SpyBackend([OPENING_REPLY, "not json", v2_reply(evaluation="b", actions="3")])
        engine = TutorEngine(backend, config=GuardrailConfig(max_repair_retries=2))
        session, _ = engine.start_session("What is mitochondria?")
        reply = engine.student_message(session, "it makes energy")
        assert reply.repairs_used == 1
        corrective = backend.prompts[2][-1]
        assert corrective.content == REPAIR_INSTRUCTION
        assert backend.prompts[2][-2].content == "not json"

    def test_invalid_turn_triggers_repair(self):
        # Action 4 is not allowed under evaluation b: structurally fine JSON
        # that fails validation must also be retried.
        backend = SpyBackend([OPENING_REPLY, v2_reply(evaluation="b", actions="4"), v2_reply(evaluation="b", actions="3")])
        engine = TutorEngine(backend)
        session, _ = engine.start_session("What is mitochondria?")
        reply = engine.student_message(session, "energy factory")
        assert reply.repairs_used == 1
        assert reply.turn.actions == (3,)

    def test_budget_exhaustion_aborts_session(self):
        backend = SpyBackend([OPENING_REPLY] + ["broken"] * 3)
        engine = TutorEngine(backend, config=GuardrailConfig(max_repair_retries=2))
        session, _ = engine.start_session("What is mitochondria?")
        with pytest.raises(RepairBudgetExhausted):
            engine.student_message(session, "hello?")
        assert session.status == "aborted"
        assert len(backend.prompts) == 4  # opening + 3 failed attempts
        entries = transcript(session)
        assert entries[-1]["aborted"] is True
        with pytest.raises(SessionFinished):
            engine.student_message(session, "still there?")


class TestProgressAndAttempts:
    def test_dna_replay_progress(self, dna_script, dna_student_texts, dna_conversation):
        backend = ScriptedBackend(dna_script)
        engine = TutorEngine(backend)
        session, _ = engine.start_session(dna_conversation.problem)
        indices = [session.progress.subproblem_index]
        for text in dna_student_texts:
            engine.student_message(session, text)
            indices.append(session.progress.subproblem_index)
        assert indices == [1, 1, 2, 2, 3, 3]
        assert session.progress.terminal
        assert session.status == "finished"
        states = [e["meta"]["state"] for e in transcript(session) if e["speaker"] == "tutor"]
        assert states == list("xxyxyz")

    def test_attempts_counted_for_wrong_answers(self, dna_script, dna_student_texts, dna_conversation):
        backend = ScriptedBackend(dna_script)
        engine = TutorEngine(backend)
        session, _ = engine.start_session(dna_conversation.problem)
        engine.student_message(session, dna_student_texts[0])  # eval c at index 1
        assert session.attempts == {1: 1}
        engine.student_message(session, dna_student_texts[1])  # eval b, advance
        assert session.attempts_at_current() == 0
        engine.student_message(session, dna_student_texts[2])  # eval a at index 2
        assert session.attempts[2] == 1

    def test_message_to_finished_session(self, dna_script, dna_student_texts, dna_conversation):
        backend = ScriptedBackend(dna_script)
        engine = TutorEngine(backend)
        session, _ = engine.start_session(dna_conversation.problem)
        for text in dna_student_texts:
            engine.student_message(session, text)
        with pytest.raises(SessionFinished):
            engine.student_message(session, "one more question")


class TestStepIn:
    def test_directive_on_fourth_prompt(self):
        backend = SpyBackend([v2_reply(evaluation="a", actions="1") for _ in range(6)])
        engine = TutorEngine(backend, config=GuardrailConfig(max_attempts=3))
        session, _ = engine.start_session("Which organelle captures light?")
        engine.student_message(session, "the nucleus")
        engine.student_message(session, "the ribosome")
        for prompt in backend.prompts[:3]:
            assert STEP_IN_DIRECTIVE not in prompt[0].content
        engine.student_message(session, "the vacuole")
        assert STEP_IN_DIRECTIVE in backend.prompts[3][0].content

    def test_directive_clears_after_advance(self):
        replies = [
            v2_reply(evaluation="a", actions="1"),
            v2_reply(evaluation="a", actions="1"),
            v2_reply(evaluation="a", actions="1"),
            v2_reply(evaluation="a", actions="2", state="y", subproblem="next part"),
            v2_reply(evaluation="d", actions="6"),
        ]
        backend = SpyBackend(replies)
        engine = TutorEngine(backend, config=GuardrailConfig(max_attempts=3))
        session, _ = engine.start_session("Which organelle captures light?")
        engine.student_message(session, "wrong one")
        engine.student_message(session, "wrong two")
        assert STEP_IN_DIRECTIVE in backend.prompts[3][0].content if len(backend.prompts) > 3 else True
        engine.student_message(session, "wrong three")  # tutor steps in, advances
        assert session.progress.subproblem_index == 2
        engine.student_message(session, "what now?")
        assert STEP_IN_DIRECTIVE not in backend.prompts[4][0].content


class TestDeterminism:
    def run_once(self, dna_script, dna_student_texts, problem):
        backend = ScriptedBackend(dna_script)
        engine = TutorEngine(backend, config=GuardrailConfig())
        session, _ = engine.start_session(problem, session_id="fixed-id")
        for text in dna_student_texts:
            engine.student_message(session, text)
        return json.dumps(transcript(session), ensure_ascii=False, sort_keys=True)

    def test_byte_identical_transcripts(self, dna_script, dna_student_texts, dna_conversation):
        first = self.run_once(dna_script, dna_student_texts, dna_conversation.problem)
        second = self.run_once(dna_script, dna_student_texts, dna_conversation.problem)
        assert first == second


class TestTranscript:
    def test_fresh_session_has_opening_exchange(self):
        backend = ScriptedBackend([OPENING_REPLY])
        engine = TutorEngine(backend)
        session, _ = engine.start_session("What is mitochondria?")
        entries = transcript(session)
        assert [e["speaker"] for e in entries] == ["student", "tutor"]
        assert entries[1]["meta"]["evaluation"] == "g"
        assert entries[1]["meta"]["actions"] == [12]

    def test_metadata_includes_locators(self):
        backend = ScriptedBackend([OPENING_REPLY])
        engine = TutorEngine(backend, index=small_index())
        session, _ = engine.start_session("How do mitochondria make energy?")
        entry = transcript(session)[1]
        assert entry["meta"]["retrieved_locators"]
        assert entry["meta"]["retrieved_locators"][0].startswith("bio/ch1")


class TestSessionFold:
    def test_apply_methods_reconstruct(self, dna_script, dna_student_texts, dna_conversation):
        backend = ScriptedBackend(dna_script)
        engine = TutorEngine(backend)
        live, _ = engine.start_session(dna_conversation.problem, session_id="s1")
        for text in dna_student_texts:
            engine.student_message(live, text)

        rebuilt = Session.start(dna_conversation.problem, GuardrailConfig(), session_id="s1")
        for entry in live.transcript:
            if entry.speaker == "student":
                rebuilt.apply_student(entry.text)
            elif entry.speaker == "tutor":
                rebuilt.apply_tutor(
                    entry.turn,
                    raw=entry.raw,
                    retrieved_locators=entry.retrieved_locators,
                    repairs_used=entry.repairs_used,
                )
        assert transcript(rebuilt) == transcript(live)
        assert rebuilt.progress == live.progress
        assert rebuilt.attempts == live.attempts
        assert rebuilt.status == live.status
