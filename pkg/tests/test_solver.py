"""Solver requests, the oracle backend, reply parsing, the HTTP backend and transcripts."""

from __future__ import annotations

import json

import httpx
import pytest

from conftest import CapturingBackend
from vulnchain.errors import MalformedResponse, TransportError
from vulnchain.minilang.emit import generate_summary
from vulnchain.pipeline import PipelineConfig, analyze_chain
from vulnchain.solver import (
    BackendConfig, LLMBackend, OracleBackend, RecordingBackend, ReplayBackend, TranscriptStore, Transfer,
    build_subtask_request, make_backend, parse_llm_reply,
)
from vulnchain.solver.requests import SCHEMA_SUBTASK
from vulnchain.state import ParameterState, SlotState, StateEntry
from vulnchain.summary import ArgBinding, MethodRecord, Variable

VALID = '```json\n{"transfer": "feasible", "states": [{"slot": 0, "verdict": "satisfies", "reason": "ok"}]}\n```'


def _subtask_exchanges(source, config, rule):
    chain = generate_summary(source, config).chains[0]
    cap = CapturingBackend()
    verdict = analyze_chain(chain, rule, cap)
    return verdict, cap.subtasks()


@pytest.fixture(scope="module")
def servlet_exchanges(servlet_source, pt_config, pt_rule):
    return _subtask_exchanges(servlet_source, pt_config, pt_rule)


def _pair(exchanges, call_site):
    return next((q, r) for q, r in exchanges if q.call_site == call_site)


def test_read_readfile_request(servlet_exchanges, pt_rule):
    req, _ = _pair(servlet_exchanges[1], "readFile(path)")
    assert req.call_site in req.caller_code
    assert '".."' in req.objective_text
    assert "slot 0: path bound to `path`" in req.objective_text
    assert req.expected_schema == SCHEMA_SUBTASK
    assert "StrictSecurityCheck" in req.context_text


def test_oracle_read_readfile(servlet_exchanges):
    _, resp = _pair(servlet_exchanges[1], "readFile(path)")
    assert resp.transfer is Transfer.FEASIBLE
    assert resp.state_map()[(0, "")].verdict is SlotState.SATISFIES


def test_oracle_guard_deleted(servlet_mutant, pt_config, pt_rule):
    _, exchanges = _subtask_exchanges(servlet_mutant, pt_config, pt_rule)
    _, resp = _pair(exchanges, "readFile(path)")
    assert resp.state_map()[(0, "")].verdict is SlotState.VIOLATES


def test_oracle_deterministic(servlet_exchanges):
    oracle = OracleBackend()
    for req, resp in servlet_exchanges[1]:
        assert oracle.solve(req).raw == resp.raw == OracleBackend().solve(req).raw


def _record(sig, code, args=(), snippet="", bindings=()):
    return MethodRecord("A", sig, code, args=tuple(Variable(n, t) for n, t in args), snippet_of_called=snippet,
                        pass_relationship=tuple(ArgBinding(e, i) for i, e in enumerate(bindings)))


def test_zero_sensitive_slots(pt_rule):
    caller = _record("void a(String s)", "void a(String s) { b(s.length()); }", [("s", "String")])
    callee = _record("void b(int n)", "void b(int n) { }", [("n", "int")], "b(s.length())", ["s.length()"])
    req = build_subtask_request(caller, callee, None, pt_rule)
    assert "(a) Can execution" in req.objective_text
    assert "(b)" not in req.objective_text


def test_dead_call_site_infeasible(pt_rule):
    caller = _record("void a(String s)", 'void a(String s) { throw new IllegalStateException("off"); b(s); }',
                     [("s", "String")])
    callee = _record("void b(String t)", "void b(String t) { }", [("t", "String")], "b(s)", ["s"])
    from vulnchain.context import build_context
    state = ParameterState.of({(0, ""): StateEntry(SlotState.VIOLATES, "", (), "s")})
    req = build_subtask_request(caller, callee, build_context(state, []), pt_rule)
    assert OracleBackend().solve(req).transfer is Transfer.INFEASIBLE


def test_pruned_context_within_budget(servlet_source, pt_config, pt_rule):
    chain = generate_summary(servlet_source, pt_config).chains[0]
    cap = CapturingBackend()
    analyze_chain(chain, pt_rule, cap, PipelineConfig(budget=300))
    for req, _ in cap.subtasks():
        assert len(req.context_text) + len(req.caller_code) <= 300 + len(req.caller_code)


# ---------------------------------------------------------------------------
# Reply parsing

def test_parse_exemplar():
    resp = parse_llm_reply('{"transfer":"feasible","states":[{"slot":0,"verdict":"satisfies"}]}', SCHEMA_SUBTASK,
                           [(0, "")])
    assert resp.transfer is Transfer.FEASIBLE
    assert [(s.slot, s.verdict) for s in resp.states] == [((0, ""), SlotState.SATISFIES)]


def test_parse_prose_only():
    with pytest.raises(MalformedResponse):
        parse_llm_reply("The value looks safe to me.", SCHEMA_SUBTASK, [(0, "")])


def test_parse_first_block_wins():
    second = VALID.replace("satisfies", "violates")
    resp = parse_llm_reply("Here:\n" + VALID + "\nOr maybe:\n" + second, SCHEMA_SUBTASK, [(0, "")])
    assert resp.states[0].verdict is SlotState.SATISFIES


def test_parse_skips_invalid_block():
    raw = "```json\n{not json}\n```\n" + VALID
    assert parse_llm_reply(raw, SCHEMA_SUBTASK, [(0, "")]).transfer is Transfer.FEASIBLE


def test_parse_missing_slot():
    with pytest.raises(MalformedResponse):
        parse_llm_reply(VALID, SCHEMA_SUBTASK, [(0, ""), (1, "")])
    infeasible = '{"transfer": "infeasible", "states": []}'
    assert parse_llm_reply(infeasible, SCHEMA_SUBTASK, [(0, "")]).transfer is Transfer.INFEASIBLE


def test_parse_branch_and_guard():
    resp = parse_llm_reply('{"params": [{"param": 1, "target": "RET", "unfiltered": false}], "internalSource": true}',
                           "branch-params-v1")
    assert resp.findings[0].param_index == 1 and not resp.findings[0].reaches_target_unfiltered
    assert resp.internal_sources
    g = parse_llm_reply('{"guards": true, "guardedParams": [0]}', "branch-guard-v1").guard
    assert g.guards_condition and g.guarded_params == (0,)


# ---------------------------------------------------------------------------
# HTTP backend

def _completion(content):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


def _llm(handler, retries=2):
    cfg = BackendConfig(kind="llm", endpoint_url="http://solver.test/v1", model_name="m", max_retries=retries)
    return LLMBackend(cfg, client=httpx.Client(transport=httpx.MockTransport(handler)), api_key="k")


@pytest.fixture(scope="module")
def servlet_request(servlet_exchanges):
    return _pair(servlet_exchanges[1], "readFile(path)")[0]


@pytest.mark.parametrize("failures,retries", [(0, 2), (1, 2), (2, 2), (3, 2), (5, 2), (4, 0), (1, 4)])
def test_retry_accounting(servlet_request, failures, retries):
    seen = []

    def handler(request):
        seen.append(json.loads(request.content))
        return _completion("no json here" if len(seen) <= failures else VALID)

    backend = _llm(handler, retries)
    resp = backend.solve(servlet_request)
    expected = min(failures + 1, retries + 1)
    assert backend.attempts == len(seen) == expected
    if failures > retries:
        assert resp.degraded and resp.transfer is Transfer.UNKNOWN
        assert [s.slot for s in resp.states] == [(0, "")]
        assert resp.states[0].verdict is SlotState.UNKNOWN
    else:
        assert resp.states[0].verdict is SlotState.SATISFIES


def test_persistent_malformed_attempts(servlet_request):
    # every attempt fails: exactly maxRetries + 1 endpoint attempts
    backend = _llm(lambda r: _completion("prose"), retries=3)
    backend.solve(servlet_request)
    assert backend.attempts == 4


def test_wire_format(servlet_request):
    captured = {}

    def handler(request):
        captured["url"] = str(request.url)
        captured["auth"] = request.headers.get("authorization")
        captured["body"] = json.loads(request.content)
        return _completion(VALID)

    _llm(handler).solve(servlet_request)
    assert captured["url"] == "http://solver.test/v1/chat/completions"
    assert captured["auth"] == "Bearer k"
    body = captured["body"]
    assert body["model"] == "m" and body["temperature"] == 0.1
    assert [m["role"] for m in body["messages"]] == ["system", "user"]
    assert "readFile(path)" in body["messages"][1]["content"]


def test_transport_error(servlet_request):
    backend = _llm(lambda r: httpx.Response(503), retries=1)
    with pytest.raises(TransportError):
        backend.solve(servlet_request)
    assert backend.attempts == 2


def test_connection_error(servlet_request):
    def handler(request):
        raise httpx.ConnectError("refused")

    with pytest.raises(TransportError):
        _llm(handler, retries=0).solve(servlet_request)


# ---------------------------------------------------------------------------
# Config and transcripts

def test_backend_config_validation():
    with pytest.raises(ValueError):
        BackendConfig(temperature=2.5)
    with pytest.raises(ValueError):
        BackendConfig(max_retries=-1)
    with pytest.raises(ValueError):
        BackendConfig(kind="llm")
    with pytest.raises(ValueError):
        BackendConfig(kind="replay")
    cfg = BackendConfig.from_dict({"kind": "llm", "endpointUrl": "http://x", "modelName": "m"})
    assert cfg.temperature == 0.1 and cfg.max_retries == 2


def test_record_then_replay(tmp_path, servlet_source, pt_config, pt_rule):
    chain = generate_summary(servlet_source, pt_config).chains[0]
    path = tmp_path / "t.jsonl"
    recorded = analyze_chain(chain, pt_rule, RecordingBackend(OracleBackend(), TranscriptStore(path)))
    lines = [json.loads(x) for x in path.read_text().splitlines()]
    assert lines and all(set(x) == {"key", "raw"} for x in lines)
    replay = make_backend(BackendConfig(kind="replay", transcript=str(path)))
    replayed = analyze_chain(chain, pt_rule, replay)
    assert replay.misses == 0
    assert (replayed.exploitable, replayed.reason) == (recorded.exploitable, recorded.reason)
    assert [t.to_json() for t in replayed.trace] == [t.to_json() for t in recorded.trace]


def test_replay_miss_degrades(tmp_path, servlet_request):
    backend = ReplayBackend(TranscriptStore(tmp_path / "empty.jsonl"))
    resp = backend.solve(servlet_request)
    assert backend.misses == 1 and resp.degraded
    assert [(s.slot, s.verdict) for s in resp.states] == [((0, ""), SlotState.UNKNOWN)]


def test_bad_transcript_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text("{oops\n")
    with pytest.raises(ValueError):
        TranscriptStore(path)
