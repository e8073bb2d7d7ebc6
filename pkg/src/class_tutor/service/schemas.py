"""Pydantic request/response models for the HTTP API."""

from __future__ import annotations

from pydantic import BaseModel, Field


class ProblemImportRequest(BaseModel):
    jsonl: str = Field(description="Scaffold dataset lines (JSONL) or a single JSON object per line")


class ProblemImportResponse(BaseModel):
    problem_ids: list[str]


class ProblemSummary(BaseModel):
    id: str
    problem: str
    subproblem_count: int


class SubproblemModel(BaseModel):
    question: str
    answer: str
    hint: str
    incorrect_response: str
    feedback: str


class ProblemDetail(BaseModel):
    id: str
    problem: str
    subproblems: list[SubproblemModel]
    facts: list[str]
    solution: str


class SessionCreateRequest(BaseModel):
    problem_id: str | None = None
    problem_text: str | None = None


class TurnMeta(BaseModel):
    evaluation: str
    actions: list[int]
    state: str
    subproblem: str
    thoughts: str
    retrieved_locators: list[str] = []
    repairs_used: int = 0


class TranscriptEntryModel(BaseModel):
    speaker: str
    text: str
    meta: TurnMeta | None = None
    aborted: bool = False


class ProgressModel(BaseModel):
    subproblem_index: int
    total_known: int | None = None
    terminal: bool


class TutorReplyModel(BaseModel):
    utterance: str
    meta: TurnMeta
    progress: ProgressModel


class SessionCreateResponse(BaseModel):
    session_id: str
    status: str
    reply: TutorReplyModel


class MessageRequest(BaseModel):
    text: str = Field(min_length=1)


class SessionTranscriptResponse(BaseModel):
    session_id: str
    status: str
    problem: str
    problem_id: str = ""
    progress: ProgressModel
    transcript: list[TranscriptEntryModel]


class RatingRequest(BaseModel):
    session_id: str
    rater: str
    item: str
    score: int
    comment: str = ""


class RatingResponse(BaseModel):
    rating_id: str
    session_id: str
    rater: str
    item: str
    score: int
    comment: str = ""


class ErrorBody(BaseModel):
    code: str
    message: str
