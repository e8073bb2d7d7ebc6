"""FastAPI application: session lifecycle, problems, ratings, static UI.

Error contract: stable machine codes in ``{"error": {"code", "message"}}``
bodies. 404 unknown ids, 409 for messages to finished sessions and for a
second concurrent message on one session (per-session mutex), 422 for
validation failures, 502 for backend trouble. Responses never carry
backend credentials; raw prompts appear only with ``debug=True``.
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .. import engine as engine_mod
from .. import evalkit
from ..backend import BackendError
from ..datagen.records import DatagenError
from ..engine import GuardrailConfig, RepairBudgetExhausted, Session, SessionFinished, TutorEngine, TutorReply
from ..retrieval import InvertedIndex
from ..template import TemplateError
from . import schemas
from .store import ProblemStore, RatingStore, SessionStore, UnknownId


class ApiError(Exception):
    """HTTP-mapped error with a stable machine code."""

    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _progress_model(session: Session) -> schemas.ProgressModel:
    return schemas.ProgressModel(
        subproblem_index=session.progress.subproblem_index,
        total_known=session.progress.total_known,
        terminal=session.progress.terminal,
    )


def _reply_model(session: Session, reply: TutorReply) -> schemas.TutorReplyModel:
    return schemas.TutorReplyModel(
        utterance=reply.utterance,
        meta=schemas.TurnMeta(
            evaluation=reply.turn.evaluation.value,
            actions=list(reply.turn.actions),
            state=reply.turn.state.value,
            subproblem=reply.turn.subproblem,
            thoughts=reply.turn.thoughts,
            retrieved_locators=[p.passage.locator for p in reply.retrieved],
            repairs_used=reply.repairs_used,
        ),
        progress=_progress_model(session),
    )


def _transcript_response(session: Session) -> schemas.SessionTranscriptResponse:
    entries = []
    for item in engine_mod.transcript(session):
        meta = item.get("meta")
        entries.append(
            schemas.TranscriptEntryModel(
                speaker=item["speaker"],
                text=item["text"],
                meta=schemas.TurnMeta(**meta) if meta else None,
                aborted=bool(item.get("aborted")),
            )
        )
    return schemas.SessionTranscriptResponse(
        session_id=session.id,
        status=session.status,
        problem=session.problem_text,
        problem_id=session.problem_id,
        progress=_progress_model(session),
        transcript=entries,
    )


def create_app(
    data_dir: str | Path,
    backend,
    index: InvertedIndex | None = None,
    guardrails: GuardrailConfig | None = None,
    allow_origin: str | None = None,
    ui_dir: str | Path | None = None,
    debug: bool = False,
) -> FastAPI:
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    problems = ProblemStore(data_dir)
    sessions = SessionStore(data_dir)
    ratings = RatingStore(data_dir)
    engine = TutorEngine(backend, index=index, config=guardrails or GuardrailConfig())

    app = FastAPI(title="class-tutor service", debug=debug)

    live_sessions: dict[str, Session] = {}
    session_locks: dict[str, threading.Lock] = {}
    registry_lock = threading.Lock()

    def session_lock(session_id: str) -> threading.Lock:
        with registry_lock:
            return session_locks.setdefault(session_id, threading.Lock())

    def get_session(session_id: str) -> Session:
        with registry_lock:
            cached = live_sessions.get(session_id)
        if cached is not None:
            return cached
        if not sessions.exists(session_id):
            raise ApiError(404, "UnknownSession", f"no session {session_id!r}")
        session = sessions.replay(session_id, problems)
        with registry_lock:
            live_sessions[session_id] = session
        return session

    if allow_origin:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=[allow_origin],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"error": {"code": exc.code, "message": exc.message}})

    @app.exception_handler(RequestValidationError)
    async def handle_validation(request: Request, exc: RequestValidationError):
        fields = [
            {"path": ".".join(str(part) for part in err.get("loc", ())), "message": err.get("msg", "")}
            for err in exc.errors()
        ]
        return JSONResponse(
            status_code=422,
            content={"error": {"code": "ValidationError", "message": "request body failed validation", "fields": fields}},
        )

    @app.post("/problems", response_model=schemas.ProblemImportResponse)
    def import_problems(body: schemas.ProblemImportRequest):
        try:
            ids = problems.import_jsonl(body.jsonl)
        except (DatagenError, TemplateError) as exc:
            raise ApiError(422, getattr(exc, "code", "InvalidProblem"), str(exc))
        return schemas.ProblemImportResponse(problem_ids=ids)

    @app.get("/problems", response_model=list[schemas.ProblemSummary])
    def list_problems():
        return [
            schemas.ProblemSummary(id=pid, problem=problem.problem, subproblem_count=len(problem.subproblems))
            for pid, problem in problems.list_all()
        ]

    @app.get("/problems/{problem_id}", response_model=schemas.ProblemDetail)
    def get_problem(problem_id: str):
        try:
            problem = problems.get(problem_id)
        except UnknownId as exc:
            raise ApiError(404, "UnknownProblem", str(exc))
        return schemas.ProblemDetail(
            id=problem_id,
            problem=problem.problem,
            subproblems=[
                schemas.SubproblemModel(
                    question=sp.question,
                    answer=sp.answer,
                    hint=sp.hint,
                    incorrect_response=sp.incorrect_response,
                    feedback=sp.feedback,
                )
                for sp in problem.subproblems
            ],
            facts=list(problem.facts),
            solution=problem.solution,
        )

    @app.post("/sessions", response_model=schemas.SessionCreateResponse)
    def create_session(body: schemas.SessionCreateRequest):
        if bool(body.problem_id) == bool(body.problem_text):
            raise ApiError(422, "ValidationError", "provide exactly one of problem_id or problem_text")
        problem_id = body.problem_id or ""
        if problem_id:
            try:
                problem = problems.get(problem_id)
            except UnknownId as exc:
                raise ApiError(404, "UnknownProblem", str(exc))
        else:
            problem = body.problem_text
        try:
            session, reply = engine.start_session(problem)
        except RepairBudgetExhausted as exc:
            aborted = exc.session
            aborted.problem_id = problem_id
            sessions.record_started(aborted, problem_id)
            sessions.record_student(aborted.id, aborted.transcript[0].text)
            sessions.record_aborted(aborted.id, aborted.transcript[-1].text)
            sessions.write_snapshot(aborted)
            raise ApiError(502, "RepairBudgetExhausted", f"{exc} (session {aborted.id})")
        except BackendError as exc:
            raise ApiError(502, exc.code, str(exc))
        except engine_mod.EmptyProblem as exc:
            raise ApiError(422, "EmptyProblem", str(exc))
        session.problem_id = problem_id
        sessions.record_started(session, problem_id)
        sessions.record_student(session.id, session.transcript[0].text)
        sessions.record_tutor(session.id, session.transcript[-1])
        sessions.write_snapshot(session)
        with registry_lock:
            live_sessions[session.id] = session
        return schemas.SessionCreateResponse(session_id=session.id, status=session.status, reply=_reply_model(session, reply))

    @app.post("/sessions/{session_id}/messages", response_model=schemas.TutorReplyModel)
    def post_message(session_id: str, body: schemas.MessageRequest):
        session = get_session(session_id)
        lock = session_lock(session_id)
        if not lock.acquire(blocking=False):
            raise ApiError(409, "Busy", "another message for this session is in flight")
        try:
            try:
                reply = engine.student_message(session, body.text)
            except SessionFinished as exc:
                raise ApiError(409, "SessionFinished", str(exc))
            except RepairBudgetExhausted as exc:
                sessions.record_student(session_id, body.text)
                sessions.record_aborted(session_id, session.transcript[-1].text)
                sessions.write_snapshot(session)
                raise ApiError(502, "RepairBudgetExhausted", str(exc))
            except BackendError as exc:
                raise ApiError(502, exc.code, str(exc))
            sessions.record_student(session_id, body.text)
            sessions.record_tutor(session_id, session.transcript[-1])
            sessions.write_snapshot(session)
            return _reply_model(session, reply)
        finally:
            lock.release()

    @app.get("/sessions/{session_id}", response_model=schemas.SessionTranscriptResponse)
    def get_transcript(session_id: str):
        return _transcript_response(get_session(session_id))

    @app.post("/ratings", response_model=schemas.RatingResponse)
    def post_rating(body: schemas.RatingRequest):
        if not sessions.exists(body.session_id):
            raise ApiError(404, "UnknownSession", f"no session {body.session_id!r}")
        try:
            rating = evalkit.record(body.rater, body.session_id, body.item, body.score, body.comment)
        except evalkit.EvalError as exc:
            raise ApiError(422, exc.code, str(exc))
        rating_id = ratings.add(rating)
        return schemas.RatingResponse(
            rating_id=rating_id,
            session_id=rating.session_id,
            rater=rating.rater,
            item=rating.item.value,
            score=rating.score,
            comment=rating.comment,
        )

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
