"""Synthetic dataset pipelines: prompt building, response parsing, JSONL jobs."""

from .prompts import build_dialogue_prompt, build_scaffold_prompt
from .records import (
    Advisory,
    ConversationInvalid,
    DatagenError,
    EmptyConversation,
    EmptyList,
    MissingKey,
    MockConversation,
    NotAnArray,
    ScaffoldingProblem,
    SectionSpec,
    Subproblem,
    lint_conversation,
    load_sections,
    parse_dialogue_response,
    parse_scaffold_response,
)
from .jobs import DatasetRecord, GenerationJob, JobSummary, load_dataset, run_job, validate_dataset

__all__ = [
    "Advisory",
    "ConversationInvalid",
    "DatagenError",
    "DatasetRecord",
    "EmptyConversation",
    "EmptyList",
    "GenerationJob",
    "JobSummary",
    "MissingKey",
    "MockConversation",
    "NotAnArray",
    "ScaffoldingProblem",
    "SectionSpec",
    "Subproblem",
    "build_dialogue_prompt",
    "build_scaffold_prompt",
    "lint_conversation",
    "load_dataset",
    "load_sections",
    "parse_dialogue_response",
    "parse_scaffold_response",
    "run_job",
    "validate_dataset",
]
