"""Chat-completions backend, reply parsing and JSONL transcripts for
recording and replaying backend exchanges."""

from __future__ import annotations

import json
import logging
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import httpx

from ..errors import BackendError, MalformedResponse, TransportError
from ..semantics import GuardFinding, ParamFinding
from ..state import SlotState, parse_slot_label, slot_label
from ..summary import RETURN, Slot
from .requests import (
    SCHEMA_BRANCH, SCHEMA_GUARD, SCHEMA_SUBTASK, BranchPayload, SolverRequest, SolverResponse,
    StateResult, SubtaskPayload, Transfer,
)

log = logging.getLogger(__name__)

API_KEY_ENV = "VULSOLVER_API_KEY"


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "oracle"  # oracle | llm | replay
    endpoint_url: str = ""
    model_name: str = ""
    temperature: float = 0.1
    max_retries: int = 2
    timeout_seconds: float = 60.0
    max_in_flight: int = 4
    transcript: Optional[str] = None  # JSONL path: written for llm, read for replay

    def __post_init__(self):
        if self.kind not in ("oracle", "llm", "replay"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must lie in [0, 2]")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.kind == "llm" and not (self.endpoint_url and self.model_name):
            raise ValueError("the llm backend needs endpoint_url and model_name")
        if self.kind == "replay" and not self.transcript:
            raise ValueError("the replay backend needs a transcript path")

    @classmethod
    def from_dict(cls, data: Dict) -> "BackendConfig":
        return cls(
            kind=data.get("kind", "oracle"),
            endpoint_url=data.get("endpointUrl", ""),
            model_name=data.get("modelName", ""),
            temperature=float(data.get("temperature", 0.1)),
            max_retries=int(data.get("maxRetries", 2)),
            timeout_seconds=float(data.get("timeoutSeconds", 60.0)),
            max_in_flight=int(data.get("maxInFlight", 4)),
            transcript=data.get("transcript"),
        )


# ---------------------------------------------------------------------------
# Reply parsing

_FENCE = re.compile(r"```(?:json)?\s*\n?(.*?)```", re.S)


def _candidates(raw: str) -> Iterable[str]:
    for m in _FENCE.finditer(raw):
        yield m.group(1).strip()
    dec = json.JSONDecoder()
    i = raw.find("{")
    while i >= 0:
        try:
            _, end = dec.raw_decode(raw, i)
            yield raw[i:end]
        except json.JSONDecodeError:
            pass
        i = raw.find("{", i + 1)


def _first_object(raw: str, required: str) -> Dict:
    for text in _candidates(raw):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError:
            continue
        if isinstance(doc, dict) and required in doc:
            return doc
    raise MalformedResponse(f"no JSON object with key {required!r} in reply")


def _parse_target(text) -> Slot:
    t = str(text).strip()
    if t.lower() in ("", "return", "ret"):
        return RETURN
    if t.isdigit():
        return Slot("param", index=int(t))
    try:
        return Slot.parse(t)
    except ValueError:
        raise MalformedResponse(f"bad target {text!r}") from None


def parse_llm_reply(raw: str, schema: str, expected_slots: Iterable = ()) -> SolverResponse:
    """Parse a reply in the given schema; the first valid JSON block wins.

    For subtask replies every expected slot must be answered unless the
    transfer is infeasible.
    """
    if schema == SCHEMA_SUBTASK:
        doc = _first_object(raw, "transfer")
        try:
            transfer = Transfer(str(doc["transfer"]).strip().lower())
            states = []
            for item in doc.get("states") or []:
                states.append(StateResult(parse_slot_label(item["slot"]), SlotState.parse(str(item["verdict"])),
                                          str(item.get("reason", ""))))
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedResponse(f"bad subtask reply: {exc}") from None
        if transfer is not Transfer.INFEASIBLE:
            got = {st.slot for st in states}
            missing = [k for k in expected_slots if k not in got]
            if missing:
                raise MalformedResponse("reply misses slots " + ", ".join(slot_label(k) for k in missing))
        return SolverResponse(transfer, tuple(states), raw)
    if schema == SCHEMA_BRANCH:
        doc = _first_object(raw, "params")
        try:
            findings = tuple(ParamFinding(int(p["param"]), bool(p["unfiltered"]), None,
                                          _parse_target(p.get("target", "return")), str(p.get("reason", "")))
                             for p in doc["params"])
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedResponse(f"bad branch reply: {exc}") from None
        internal = ("internal source reported by backend",) if doc.get("internalSource") else ()
        return SolverResponse(raw=raw, findings=findings, internal_sources=internal)
    if schema == SCHEMA_GUARD:
        doc = _first_object(raw, "guards")
        try:
            guarded = tuple(int(i) for i in doc.get("guardedParams") or ())
        except (ValueError, TypeError) as exc:
            raise MalformedResponse(f"bad guard reply: {exc}") from None
        g = GuardFinding(bool(doc["guards"]), guarded, str(doc.get("reason", "")))
        return SolverResponse(raw=raw, guard=g)
    raise MalformedResponse(f"unknown schema {schema!r}")


def expected_slots(request: SolverRequest) -> Tuple:
    p = request.payload
    return tuple(sl.key for sl in p.slots) if isinstance(p, SubtaskPayload) else ()


def unknown_response(request: SolverRequest, why: str) -> SolverResponse:
    """Conservative answer used when a reply cannot be obtained."""
    p = request.payload
    if request.expected_schema == SCHEMA_SUBTASK:
        keys = expected_slots(request)
        return SolverResponse(Transfer.UNKNOWN, tuple(StateResult(k, SlotState.UNKNOWN, why) for k in keys),
                              degraded=True)
    return SolverResponse(degraded=True)


# ---------------------------------------------------------------------------
# Transcripts

class TranscriptStore:
    """Append-only JSONL map from request key to raw reply."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._data: Dict[str, str] = {}
        if self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for n, line in enumerate(fh, 1):
                    if not line.strip():
                        continue
                    try:
                        rec = json.loads(line)
                        self._data[rec["key"]] = rec["raw"]
                    except (json.JSONDecodeError, KeyError) as exc:
                        raise ValueError(f"{self.path}:{n}: bad transcript line: {exc}") from None

    def get(self, key: str) -> Optional[str]:
        return self._data.get(key)

    def __contains__(self, key: str) -> bool:
        return key in self._data

    def __len__(self) -> int:
        return len(self._data)

    def put(self, key: str, raw: str) -> None:
        with self._lock:
            if self._data.get(key) == raw:
                return
            self._data[key] = raw
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({"key": key, "raw": raw}, sort_keys=True) + "\n")


class RecordingBackend:
    """Wraps another backend and records each raw reply under its request key."""

    def __init__(self, inner, store: TranscriptStore):
        self.inner = inner
        self.store = store

    def solve(self, request: SolverRequest) -> SolverResponse:
        resp = self.inner.solve(request)
        if resp.raw and not resp.degraded:
            self.store.put(request.key(), resp.raw)
        return resp


class ReplayBackend:
    """Answers from a transcript; a missing key degrades to Unknown."""

    kind = "replay"

    def __init__(self, store: TranscriptStore):
        self.store = store
        self.misses = 0

    def solve(self, request: SolverRequest) -> SolverResponse:
        raw = self.store.get(request.key())
        if raw is None:
            self.misses += 1
            log.warning("transcript has no reply for request %s", request.key()[:12])
            return unknown_response(request, "no recorded reply")
        try:
            return parse_llm_reply(raw, request.expected_schema, expected_slots(request))
        except MalformedResponse as exc:
            return unknown_response(request, f"malformed recorded reply: {exc}")


# ---------------------------------------------------------------------------

class LLMBackend:
    """POSTs chat-completions requests; retries malformed replies and
    transport failures up to ``max_retries`` times."""

    kind = "llm"

    def __init__(self, config: BackendConfig, client: Optional[httpx.Client] = None,
                 api_key: Optional[str] = None):
        self.config = config
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.client = client or httpx.Client(timeout=config.timeout_seconds)
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self.attempts = 0

    def _post(self, messages: List[Dict[str, str]]) -> str:
        url = self.config.endpoint_url.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        body = {"model": self.config.model_name, "temperature": self.config.temperature, "messages": messages}
        with self._slots:
            self.attempts += 1
            resp = self.client.post(url, json=body, headers=headers, timeout=self.config.timeout_seconds)
        if resp.status_code >= 400:
            raise TransportError(f"HTTP {resp.status_code} from {url}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unexpected completion payload: {exc}") from None

    def solve(self, request: SolverRequest) -> SolverResponse:
        messages = request.messages()
        last: Optional[Exception] = None
        transport_only = True
        for attempt in range(self.config.max_retries + 1):
            try:
                raw = self._post(messages)
            except httpx.HTTPError as exc:
                last = TransportError(str(exc))
                continue
            except TransportError as exc:
                last = exc
                continue
            except MalformedResponse as exc:
                last, transport_only = exc, False
                continue
            try:
                return parse_llm_reply(raw, request.expected_schema, expected_slots(request))
            except MalformedResponse as exc:
                log.info("malformed reply (attempt %d): %s", attempt + 1, exc)
                last, transport_only = exc, False
        if transport_only and last is not None:
            raise TransportError(f"backend unreachable after {self.config.max_retries + 1} attempts: {last}")
        return unknown_response(request, f"no valid reply after retries: {last}")
