"""Solver backends and the single entry point used by the pipeline."""

from __future__ import annotations

from typing import Optional

from .llm import (
    API_KEY_ENV, BackendConfig, LLMBackend, RecordingBackend, ReplayBackend, TranscriptStore,
    parse_llm_reply,
)
from .oracle import OracleBackend
from .requests import (
    BRANCH_OBJECTIVE, SUBTASK_DERIVATION, SolverRequest, SolverResponse, StateResult, Transfer,
    build_branch_request, build_subtask_request,
)

__all__ = [
    "API_KEY_ENV", "BRANCH_OBJECTIVE", "SUBTASK_DERIVATION", "BackendConfig", "LLMBackend",
    "OracleBackend", "RecordingBackend", "ReplayBackend", "SolverRequest", "SolverResponse",
    "StateResult", "TranscriptStore", "Transfer", "build_branch_request", "build_subtask_request",
    "make_backend", "parse_llm_reply", "solve",
]


def make_backend(config: Optional[BackendConfig] = None):
    """Backend for a configuration; llm backends record when a transcript is set."""
    config = config or BackendConfig()
    if config.kind == "oracle":
        backend = OracleBackend()
        return RecordingBackend(backend, TranscriptStore(config.transcript)) if config.transcript else backend
    if config.kind == "replay":
        return ReplayBackend(TranscriptStore(config.transcript))
    backend = LLMBackend(config)
    return RecordingBackend(backend, TranscriptStore(config.transcript)) if config.transcript else backend


def solve(request: SolverRequest, backend=None) -> SolverResponse:
    return (backend or OracleBackend()).solve(request)
