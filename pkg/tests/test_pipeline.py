"""Per-chain orchestration: source state, subtasks, verdicts and reports."""

from __future__ import annotations

import json
import random
from dataclasses import replace

import pytest

from conftest import CapturingBackend
from vulnchain.minilang.emit import config_from_dict, generate_summary
from vulnchain.pipeline import (
    INPUT_WITNESS_NOTE, TRANSFER_INFEASIBLE, TRIGGER_SATISFIED, TRIGGER_UNSATISFIED, PipelineConfig,
    analyze_chain, init_source_state, normalize_chain, run, slot_keys, solve_subtask,
)
from vulnchain.rules import trigger_satisfied
from vulnchain.solver import OracleBackend, RecordingBackend, ReplayBackend, TranscriptStore, Transfer
from vulnchain.state import ParameterState, SlotState, StateEntry
from vulnchain.summary import TypeResolver

SAT, UNK, VIO = SlotState.SATISFIES, SlotState.UNKNOWN, SlotState.VIOLATES

ENTRY_CFG = {"sources": ["HttpServletRequest.getParameter"],
             "entries": [{"pattern": "E.handle", "taintedArgs": [0]}],
             "sinks": [{"pattern": "Files.readString", "rule": "path-traversal", "argIndices": [0]}]}


def _entry_chain(body, params="String a, String b", callee="load(a)"):
    src = f"""class E {{
    void handle({params}) {{ {body} }}
    String load(String p) {{ return Files.readString(Paths.get(p)); }}
}}"""
    summary = generate_summary(src, config_from_dict(ENTRY_CFG))
    assert len(summary.chains) == 1
    return summary.chains[0]


@pytest.fixture(scope="module")
def servlet_chain(servlet_source, pt_config):
    return generate_summary(servlet_source, pt_config).chains[0]


def test_init_state_servlet(servlet_chain, pt_rule):
    state = init_source_state(servlet_chain, pt_rule)
    assert len(state) == 0
    assert state.sources == ('request.getParameter("fileName")',)


def test_init_state_constant_fed(pt_rule):
    chain = replace(_entry_chain("load(a);", params="String a"), entry_tainted_args=())
    assert init_source_state(chain, pt_rule).verdicts() == {(0, ""): SAT}


def test_init_state_mixed(pt_rule):
    chain = _entry_chain("load(a + b);")
    assert init_source_state(chain, pt_rule).verdicts() == {(0, ""): VIO, (1, ""): SAT}


def _state(**named):
    return ParameterState.of({(i, ""): StateEntry(v, "", (), n) for i, (n, v) in enumerate(named.items())})


def test_subtask_servlet_pair(servlet_chain, pt_rule):
    records = normalize_chain(servlet_chain)
    result = solve_subtask(records, 1, _state(fileName=VIO), pt_rule, OracleBackend())
    assert (result.caller, result.callee) == ("FileServlet.read", "FileServlet.readFile")
    assert result.transfer is Transfer.FEASIBLE
    assert result.callee_state.verdicts() == {(0, ""): SAT}
    assert [b.method_id for b in result.branch_semantics_used] == ["FileServlet.getPath"]


@pytest.mark.parametrize("verdict", [SAT, VIO, UNK])
def test_subtask_passthrough(pt_rule, verdict):
    chain = _entry_chain("load(a);", params="String a")
    records = normalize_chain(chain)
    result = solve_subtask(records, 0, _state(a=verdict), pt_rule, OracleBackend())
    assert result.transfer is Transfer.FEASIBLE
    assert result.callee_state.verdicts() == {(0, ""): verdict}


def test_subtask_equals_guard_feasible(pt_rule):
    chain = _entry_chain('if (a.equals("safe")) { load(a); }', params="String a")
    result = solve_subtask(normalize_chain(chain), 0, _state(a=VIO), pt_rule, OracleBackend())
    assert result.transfer is Transfer.FEASIBLE
    assert result.callee_state.verdicts() == {(0, ""): SAT}


def test_chain_servlet(servlet_chain, pt_rule):
    v = analyze_chain(servlet_chain, pt_rule, OracleBackend())
    assert (v.exploitable, v.reason) == (False, TRIGGER_UNSATISFIED)
    assert v.input_witness_note == INPUT_WITNESS_NOTE
    assert v.sink_signature == "Files.readString"
    assert len(v.trace) == 3


def test_chain_mutant(servlet_mutant, pt_config, pt_rule):
    chain = generate_summary(servlet_mutant, pt_config).chains[0]
    v = analyze_chain(chain, pt_rule, OracleBackend())
    assert (v.exploitable, v.reason) == (True, TRIGGER_SATISFIED)
    assert v.sink_state.verdicts() == {(0, ""): VIO}


def test_chain_dead_hop(pt_rule):
    src = """class E {
    void handle(String a) { hop(a); }
    void hop(String a) { boolean locked = true; if (locked) { throw new IllegalStateException("off"); } load(a); }
    String load(String p) { return Files.readString(Paths.get(p)); }
}"""
    chain = generate_summary(src, config_from_dict(ENTRY_CFG)).chains[0]
    v = analyze_chain(chain, pt_rule, OracleBackend())
    assert (v.exploitable, v.reason) == (False, TRANSFER_INFEASIBLE)
    assert v.sink_state is None
    assert v.trace[-1].transfer is Transfer.INFEASIBLE and v.trace[-1].callee_state is None


THREE = """class M {
    void handle(String a) { one(a); two(a); three(a); }
    void one(String p) { Files.readString(Paths.get(p)); }
    void two(String p) { Files.readString(Paths.get("/x/" + p)); }
    void three(String p) { Files.readString(Paths.get(p.replace("..", ""))); }
}"""


@pytest.fixture(scope="module")
def three_chains():
    cfg = dict(ENTRY_CFG, entries=[{"pattern": "M.handle", "taintedArgs": [0]}])
    summary = generate_summary(THREE, config_from_dict(cfg))
    assert len(summary.chains) == 3
    return summary


def test_run_orders_by_chain_id(three_chains):
    shuffled = replace(three_chains, chains=tuple(reversed(three_chains.chains)))
    report = run(shuffled)
    ids = [v.chain_id for v in report.verdicts]
    assert ids == sorted(c.id for c in three_chains.chains)
    assert [(v.chain_id.split(">")[-1], v.exploitable) for v in report.verdicts] == \
        [("M.one", True), ("M.three", False), ("M.two", True)]


def test_run_unknown_rule(three_chains):
    chains = list(three_chains.chains)
    chains[1] = replace(chains[1], rule="xss")
    report = run(replace(three_chains, chains=tuple(chains)))
    assert len(report.verdicts) == 2
    assert [(e.chain_id, e.rule_id) for e in report.errored] == [(chains[1].id, "xss")]
    doc = report.to_json()
    assert isinstance(doc, list) and doc[-1]["error"]


def test_report_json_shape(three_chains):
    doc = json.loads(run(three_chains).dumps())
    v = doc[0]
    assert {"chainId", "rule", "exploitable", "reason", "sinkState", "trace", "inputWitnessNote"} <= set(v)
    assert {"pairIndex", "transfer", "calleeState", "contextHash"} <= set(v["trace"][0])


def test_reports_byte_identical(corpus_summaries):
    for summary in list(corpus_summaries.values())[:20]:
        a = run(summary, config=PipelineConfig(workers=1)).dumps()
        b = run(summary, config=PipelineConfig(workers=4)).dumps()
        assert a == b


def test_state_completeness_and_trace_soundness(corpus_summaries, registry):
    for summary in corpus_summaries.values():
        for chain in summary.chains:
            rule = registry.get(chain.rule)
            resolver = TypeResolver(summary.type_table(), aliases=rule.aliases)
            records = normalize_chain(chain)
            v = analyze_chain(chain, rule, OracleBackend(), resolver=resolver)
            for r in v.trace:
                if r.transfer is not Transfer.INFEASIBLE:
                    assert r.callee_state.keys() == sorted(slot_keys(records, r.pair_index, rule, resolver))
            if v.exploitable:
                assert len(v.trace) == len(records) - 1
                assert trigger_satisfied(rule, v.sink_state, v.sink_signature)


def test_parameter_pruning_preserves_verdicts(corpus_summaries):
    for summary in corpus_summaries.values():
        with_pruning = run(summary, config=PipelineConfig(workers=1))
        without = run(summary, config=PipelineConfig(workers=1, prune_params=False))
        assert [(v.chain_id, v.exploitable, v.reason) for v in with_pruning.verdicts] == \
               [(v.chain_id, v.exploitable, v.reason) for v in without.verdicts]


def test_no_branch_analysis_flag(servlet_chain, pt_rule):
    v = analyze_chain(servlet_chain, pt_rule, OracleBackend(), PipelineConfig(branch_analysis=False))
    assert all(r.branch_semantics_used == () for r in v.trace)
    assert all("StrictSecurityCheck" not in r.context_text_used for r in v.trace)


def test_no_context_flag(servlet_chain, pt_rule):
    cap = CapturingBackend()
    analyze_chain(servlet_chain, pt_rule, cap, PipelineConfig(use_context=False))
    req = next(q for q, _ in cap.subtasks() if q.call_site == "readFile(path)")
    getpath = servlet_chain.methods[1].branchs[0].code
    assert getpath in req.context_text
    assert "state:" not in req.context_text


# ---------------------------------------------------------------------------
# Monotone conservatism under response mutation

def _mutate(raw: str, rng: random.Random) -> str:
    body = raw.strip()
    if body.startswith("```"):
        body = body.split("\n", 1)[1].rsplit("```", 1)[0]
    doc = json.loads(body)
    for st in doc.get("states") or []:
        if st["verdict"] == "satisfies" and rng.random() < 0.6:
            st["verdict"] = "unknown"
    return "```json\n" + json.dumps(doc, sort_keys=True) + "\n```"


def mutated_transcript_runs(corpus, corpus_summaries, registry, tmp_path, count=100):
    """Yield (original verdict, mutated verdict) for ``count`` mutated transcripts."""
    entries = sorted(corpus.entries, key=lambda e: e.chain_id)
    base = {}
    for e in entries:
        path = tmp_path / f"{len(base)}.jsonl"
        chain = corpus_summaries[e.source].chain(e.chain_id)
        rule = registry.get(chain.rule)
        verdict = analyze_chain(chain, rule, RecordingBackend(OracleBackend(), TranscriptStore(path)))
        base[e.chain_id] = (chain, rule, verdict, [json.loads(x) for x in path.read_text().splitlines()])
    for n in range(count):
        rng = random.Random(n)
        chain, rule, original, lines = base[entries[n % len(entries)].chain_id]
        path = tmp_path / f"mut{n}.jsonl"
        with path.open("w") as fh:
            for rec in lines:
                raw = _mutate(rec["raw"], rng) if '"transfer"' in rec["raw"] else rec["raw"]
                fh.write(json.dumps({"key": rec["key"], "raw": raw}) + "\n")
        yield original, analyze_chain(chain, rule, ReplayBackend(TranscriptStore(path)))


def test_monotone_conservatism(corpus, corpus_summaries, registry, tmp_path):
    flipped_up = 0
    for original, mutated in mutated_transcript_runs(corpus, corpus_summaries, registry, tmp_path):
        assert not (original.exploitable and not mutated.exploitable)
        flipped_up += (not original.exploitable) and mutated.exploitable
    assert flipped_up > 0  # the mutations actually bite


def test_boolean_guard_helper_stays_conservative(pt_config, pt_rule):
    # Fixed category precedence makes isSafe a parameter consumer, not a
    # boolean guard, so its check is not credited: doubt stays exploitable.
    src = """class G {
    void doGet(HttpServletRequest request) {
        String n = request.getParameter("f");
        if (!isSafe(n)) { throw new IllegalArgumentException("bad"); }
        load(n);
    }
    boolean isSafe(String s) { return !s.contains(".."); }
    void load(String p) { Files.readString(Paths.get(p)); }
}"""
    chain = generate_summary(src, pt_config).chains[0]
    v = analyze_chain(chain, pt_rule, OracleBackend())
    assert v.exploitable
    cats = {b.method_id: b.category.name for r in v.trace for b in r.branch_semantics_used}
    assert cats["G.isSafe"] == "CRITICAL_PARAM_CONSUMER"
