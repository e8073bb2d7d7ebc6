import json
import threading

import pytest
from fastapi.testclient import TestClient

from class_tutor.backend import ScriptedBackend
from class_tutor.engine import GuardrailConfig
from class_tutor.service import create_app
from class_tutor.service.store import SessionStore

SCAFFOLD_PAYLOAD = {
    "Problem": "Explain how light becomes sugar.",
    "SubProblems": [
        {
            "Question": "Where does light capture happen?",
            "Answer": "In the chloroplast.",
            "Hint": "Green organelle.",
            "Incorrect Response": "Mitochondria.",
            "Feedback": "Those do respiration.",
        }
    ],
    "Facts": ["Chloroplasts absorb light."],
    "Solution": "Light drives electron transport.",
}


def scaffold_jsonl():
    return json.dumps(SCAFFOLD_PAYLOAD, ensure_ascii=False)


def client_for(tmp_path, replies, **kwargs):
    backend = ScriptedBackend(list(replies))
    app = create_app(data_dir=tmp_path / "data", backend=backend, **kwargs)
    return TestClient(app, raise_server_exceptions=False)


@pytest.fixture
def dna_client(tmp_path, dna_script):
    return client_for(tmp_path, dna_script)


def start_dna_session(client, dna_conversation):
    response = client.post("/sessions", json={"problem_text": dna_conversation.problem})
    assert response.status_code == 200, response.text
    return response.json()


class TestProblems:
    def test_import_and_fetch(self, tmp_path):
        client = client_for(tmp_path, [])
        response = client.post("/problems", json={"jsonl": scaffold_jsonl()})
        assert response.status_code == 200
        ids = response.json()["problem_ids"]
        assert len(ids) == 1

        listing = client.get("/problems").json()
        assert listing[0]["id"] == ids[0]
        assert listing[0]["subproblem_count"] == 1

        detail = client.get(f"/problems/{ids[0]}").json()
        assert detail["problem"] == SCAFFOLD_PAYLOAD["Problem"]
        assert detail["subproblems"][0]["hint"] == "Green organelle."

    def test_import_envelope_lines(self, tmp_path):
        client = client_for(tmp_path, [])
        line = json.dumps(
            {"id": "abc123", "kind": "scaffold", "source": {}, "payload": SCAFFOLD_PAYLOAD, "generator": {}}
        )
        ids = client.post("/problems", json={"jsonl": line}).json()["problem_ids"]
        assert ids == ["abc123"]


    def test_import_is_all_or_nothing(self, tmp_path):
        client = client_for(tmp_path, [])
        good = scaffold_jsonl()
        bad = json.dumps({"Problem": "x"})
        response = client.post("/problems", json={"jsonl": good + "\n" + bad})
        assert response.status_code == 422
        assert client.get("/problems").json() == []

    def test_unknown_problem_404(self, tmp_path):
        client = client_for(tmp_path, [])
        response = client.get("/problems/nope")
        assert response.status_code == 404
        assert response.json()["error"]["code"] == "UnknownProblem"

    def test_bad_import_422(self, tmp_path):
        client = client_for(tmp_path, [])
        bad = json.dumps({"Problem": "x"})  # missing everything else
        response = client.post("/problems", json={"jsonl": bad})
        assert response.status_code == 422

    def test_problems_survive_restart(self, tmp_path):
        client = client_for(tmp_path, [])
        ids = client.post("/problems", json={"jsonl": scaffold_jsonl()}).json()["problem_ids"]
        reopened = client_for(tmp_path, [])
        assert reopened.get(f"/problems/{ids[0]}").status_code == 200


class TestSessions:
    def test_session_with_unknown_problem_id(self, tmp_path):
        client = client_for(tmp_path, [])
        response = client.post("/sessions", json={"problem_id": "missing"})
        assert response.status_code == 404

    def test_requires_exactly_one_problem_field(self, tmp_path):
        client = client_for(tmp_path, [])
        assert client.post("/sessions", json={}).status_code == 422
        assert (
            client.post("/sessions", json={"problem_id": "a", "problem_text": "b"}).status_code == 422
        )

    def test_full_conversation_over_http(self, dna_client, dna_conversation, dna_student_texts):
        data = start_dna_session(dna_client, dna_conversation)
        session_id = data["session_id"]
        assert data["reply"]["meta"]["evaluation"] == "g"
        assert data["reply"]["progress"]["subproblem_index"] == 1

        progress = []
        for text in dna_student_texts:
            response = dna_client.post(f"/sessions/{session_id}/messages", json={"text": text})
            assert response.status_code == 200, response.text
            body = response.json()
            progress.append((body["progress"]["subproblem_index"], body["progress"]["terminal"]))
        assert progress == [(1, False), (2, False), (2, False), (3, False), (3, True)]

        transcript = dna_client.get(f"/sessions/{session_id}").json()
        assert transcript["status"] == "finished"
        states = [e["meta"]["state"] for e in transcript["transcript"] if e["meta"]]
        assert states == list("xxyxyz")

    def test_message_to_finished_session_409(self, dna_client, dna_conversation, dna_student_texts):
        data = start_dna_session(dna_client, dna_conversation)
        session_id = data["session_id"]
        for text in dna_student_texts:
            dna_client.post(f"/sessions/{session_id}/messages", json={"text": text})
        response = dna_client.post(f"/sessions/{session_id}/messages", json={"text": "hello?"})
        assert response.status_code == 409
        assert response.json()["error"]["code"] == "SessionFinished"

    def test_unknown_session_404(self, tmp_path):
        client = client_for(tmp_path, [])
        assert client.get("/sessions/nope").status_code == 404
        assert client.post("/sessions/nope/messages", json={"text": "hi"}).status_code == 404

    def test_empty_message_422(self, dna_client, dna_conversation):
        data = start_dna_session(dna_client, dna_conversation)
        response = dna_client.post(f"/sessions/{data['session_id']}/messages", json={"text": ""})
        assert response.status_code == 422
        body = response.json()
        assert body["error"]["code"] == "ValidationError"
        assert body["error"]["fields"]

    def test_backend_failure_502(self, tmp_path):
        client = client_for(tmp_path, ["garbage"] * 3, guardrails=GuardrailConfig(max_repair_retries=2))
        response = client.post("/sessions", json={"problem_text": "Why?"})
        assert response.status_code == 502
        assert response.json()["error"]["code"] == "RepairBudgetExhausted"

    def test_script_exhaustion_502(self, tmp_path):
        client = client_for(tmp_path, [])
        response = client.post("/sessions", json={"problem_text": "Why?"})
        assert response.status_code == 502
        assert response.json()["error"]["code"] == "ScriptExhausted"


class TestPersistence:
    def test_restart_reconstructs_transcript(self, tmp_path, dna_script, dna_conversation, dna_student_texts):
        client = client_for(tmp_path, dna_script)
        data = start_dna_session(client, dna_conversation)
        session_id = data["session_id"]
        for text in dna_student_texts[:3]:
            client.post(f"/sessions/{session_id}/messages", json={"text": text})
        before = client.get(f"/sessions/{session_id}").json()

        restarted = client_for(tmp_path, [])  # fresh process, no scripted replies left
        after = restarted.get(f"/sessions/{session_id}").json()
        assert after == before

    def test_replay_equals_snapshot(self, tmp_path, dna_script, dna_conversation, dna_student_texts):
        client = client_for(tmp_path, dna_script)
        data = start_dna_session(client, dna_conversation)
        session_id = data["session_id"]
        for text in dna_student_texts:
            client.post(f"/sessions/{session_id}/messages", json={"text": text})

        store = SessionStore(tmp_path / "data")
        from class_tutor.service.store import session_to_snapshot

        replayed = store.replay(session_id)
        snapshot = json.loads(store.snapshot_path(session_id).read_text())
        assert session_to_snapshot(replayed) == snapshot

    def test_aborted_session_persisted(self, tmp_path):
        client = client_for(tmp_path, ["junk"] * 3, guardrails=GuardrailConfig(max_repair_retries=2))
        response = client.post("/sessions", json={"problem_text": "Why?"})
        assert response.status_code == 502
        # The aborted session is inspectable after restart.
        restarted = client_for(tmp_path, [])
        store = SessionStore(tmp_path / "data")
        ids = store.list_ids()
        assert len(ids) == 1
        body = restarted.get(f"/sessions/{ids[0]}").json()
        assert body["status"] == "aborted"
        assert body["transcript"][-1]["aborted"] is True


class TestConcurrency:
    def test_busy_conflict(self, tmp_path, dna_script, dna_conversation):
        slow_gate = threading.Event()

        class SlowBackend(ScriptedBackend):
            def complete(self, messages):
                if self.cursor >= 1:  # block only after the opening round
                    slow_gate.wait(timeout=5)
                return super().complete(messages)

        backend = SlowBackend(list(dna_script))
        app = create_app(data_dir=tmp_path / "data", backend=backend)
        client = TestClient(app, raise_server_exceptions=False)
        data = start_dna_session(client, dna_conversation)
        session_id = data["session_id"]

        results = {}

        def first():
            results["first"] = client.post(
                f"/sessions/{session_id}/messages", json={"text": "slow message"}
            ).status_code

        thread = threading.Thread(target=first)
        thread.start()
        import time

        time.sleep(0.2)  # let the first request take the session lock
        blocked = client.post(f"/sessions/{session_id}/messages", json={"text": "second"})
        slow_gate.set()
        thread.join(timeout=10)
        assert blocked.status_code == 409
        assert blocked.json()["error"]["code"] == "Busy"
        assert results["first"] == 200


class TestRatings:
    def test_rating_lifecycle(self, dna_client, dna_conversation):
        data = start_dna_session(dna_client, dna_conversation)
        session_id = data["session_id"]
        response = dna_client.post(
            "/ratings",
            json={"session_id": session_id, "rater": "sme1", "item": "F1", "score": 5, "comment": "solid"},
        )
        assert response.status_code == 200
        assert response.json()["rating_id"]

    def test_score_out_of_scale_422(self, dna_client, dna_conversation):
        data = start_dna_session(dna_client, dna_conversation)
        response = dna_client.post(
            "/ratings", json={"session_id": data["session_id"], "rater": "r", "item": "F1", "score": 6}
        )
        assert response.status_code == 422
        assert response.json()["error"]["code"] == "ScoreOutOfRange"

    def test_unknown_item_422(self, dna_client, dna_conversation):
        data = start_dna_session(dna_client, dna_conversation)
        response = dna_client.post(
            "/ratings", json={"session_id": data["session_id"], "rater": "r", "item": "Z9", "score": 3}
        )
        assert response.status_code == 422
        assert response.json()["error"]["code"] == "UnknownItem"

    def test_rating_for_unknown_session_404(self, tmp_path):
        client = client_for(tmp_path, [])
        response = client.post("/ratings", json={"session_id": "nope", "rater": "r", "item": "F1", "score": 3})
        assert response.status_code == 404
