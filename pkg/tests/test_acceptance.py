"""Acceptance criteria, each timed and reported as one PASS/FAIL line."""

from __future__ import annotations

import random
import time
from decimal import Decimal

from conftest import ACCEPTANCE_LINES, FIXTURES
from generators import random_prune_config, random_summary, random_tree
from test_pipeline import mutated_transcript_runs
from vulnchain.harness import ConfusionCounts, compute_metrics, evaluate, f1_score
from vulnchain.minilang.emit import generate_summary
from vulnchain.pipeline import TRIGGER_UNSATISFIED, PipelineConfig, run
from vulnchain.solver import OracleBackend
from vulnchain.summary import RETURN, parse_summary, serialize_summary, summary_to_dict
from vulnchain.branch import prune_tree

CENT = Decimal("0.01")
SUMMARY_KEYS = {"className", "def", "code", "isStatic", "args", "branchs", "snippetOfCalled",
                 "invokerOfCalled", "memberVariables", "passRelationShip", "pollutedPosition"}


def _exact(ratio) -> Decimal:
    return Decimal(ratio.numerator) / Decimal(ratio.denominator) * 100


def report(name: str, failures: list, elapsed: float, limit: float) -> None:
    """Record one criterion line, then fail the test if anything was off."""
    if elapsed >= limit:
        failures.append(f"runtime {elapsed:.4f}s exceeds {limit}s")
    status = "FAIL" if failures else "PASS"
    line = f"{status} {name} ({elapsed:.4f}s, limit {limit}s)" + (": " + "; ".join(failures) if failures else "")
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert not failures, line


def test_metric_identity():
    failures = []
    t0 = time.perf_counter()
    m = compute_metrics(ConfusionCounts(tp=531, tn=454, fp=38, fn=0))
    elapsed = time.perf_counter() - t0
    want = {"accuracy": "96.29", "precision": "93.32", "recall": "100.00", "f1": "96.55"}
    for k, v in want.items():
        got = _exact(getattr(m, k))
        if abs(got - Decimal(v)) > CENT:
            failures.append(f"{k} {got:.4f} != {v}")
    report("metric identity (531, 454, 38, 0)", failures, elapsed, 0.001)


def test_per_type_f1():
    failures = []
    t0 = time.perf_counter()
    got = {p: f1_score(Decimal(p), 1) for p in ("0.8873", "0.9779", "0.9347")}
    elapsed = time.perf_counter() - t0
    for p, want in (("0.8873", "94.03"), ("0.9779", "98.88"), ("0.9347", "96.63")):
        value = _exact(got[p])
        if abs(value - Decimal(want)) > CENT:
            failures.append(f"f1({p}, 1) = {value:.4f} != {want}")
    report("per-type f1 identities", failures, elapsed, 0.001)


def test_running_example(servlet_source, servlet_mutant, pt_config, registry):
    failures = []
    t0 = time.perf_counter()
    guarded = run(generate_summary(servlet_source, pt_config), registry, OracleBackend())
    mutant = run(generate_summary(servlet_mutant, pt_config), registry, OracleBackend())
    elapsed = time.perf_counter() - t0
    v = guarded.verdicts[0]
    if (v.exploitable, v.reason) != (False, TRIGGER_UNSATISFIED):
        failures.append(f"guarded servlet gave {v.exploitable} / {v.reason}")
    getpath = [b for r in v.trace for b in r.branch_semantics_used if b.method_id.endswith("getPath")]
    if not getpath or any(f.reaches_target_unfiltered for f in getpath[0].params):
        failures.append("trace lacks getPath with a filtered parameter")
    lines = [ln for r in v.trace for ln in r.context_text_used.splitlines()]
    if not any("StrictSecurityCheck" in ln and "getPath" in ln for ln in lines):
        failures.append("getPath StrictSecurityCheck fact missing from the context")
    if not mutant.verdicts[0].exploitable:
        failures.append("guard-deleted mutant not exploitable")
    report("running example end to end", failures, elapsed, 1.0)


def test_oracle_corpus_equivalence(corpus):
    failures = []
    per_rule = {}
    for e in corpus.entries:
        per_rule[e.rule_id] = per_rule.get(e.rule_id, 0) + 1
    if len(corpus.entries) < 50:
        failures.append(f"only {len(corpus.entries)} cases")
    if len(per_rule) < 3 or min(per_rule.values()) < 15:
        failures.append(f"per-rule counts {per_rule}")
    t0 = time.perf_counter()
    result = evaluate(corpus, OracleBackend(), PipelineConfig(workers=1))
    elapsed = time.perf_counter() - t0
    c = result.overall
    if result.errored:
        failures.append(f"{len(result.errored)} errored entries")
    if c.fn or c.fp or c.total != len(corpus.entries):
        failures.append(f"counts {c.to_json()}")
    report(f"oracle corpus equivalence ({len(corpus.entries)} cases)", failures, elapsed, 10.0)


def test_pruning_and_determinism(corpus, corpus_summaries, registry, tmp_path):
    failures = []
    t0 = time.perf_counter()
    for n in range(200):
        rng = random.Random(n)
        tree, config = random_tree(rng), random_prune_config(rng)
        once = prune_tree(tree, RETURN, config)
        if prune_tree(once, RETURN, config) != once or once.size() > tree.size():
            failures.append(f"prune_tree property broken on tree seed {n}")
            break
    for source, summary in sorted(corpus_summaries.items()):
        a = run(summary, registry, config=PipelineConfig(workers=1))
        b = run(summary, registry, config=PipelineConfig(workers=1, prune_params=False))
        if [(v.chain_id, v.exploitable) for v in a.verdicts] != [(v.chain_id, v.exploitable) for v in b.verdicts]:
            failures.append(f"parameter pruning changed a verdict in {source}")
    first = evaluate(corpus, OracleBackend(), PipelineConfig(workers=1)).dumps()
    second = evaluate(corpus, OracleBackend(), PipelineConfig(workers=4)).dumps()
    if first != second:
        failures.append("oracle results differ between runs")
    runs = 0
    for original, mutated in mutated_transcript_runs(corpus, corpus_summaries, registry, tmp_path, count=100):
        runs += 1
        if original.exploitable and not mutated.exploitable:
            failures.append(f"mutation flipped {original.chain_id} to non-exploitable")
    if runs != 100:
        failures.append(f"only {runs} mutated transcripts")
    elapsed = time.perf_counter() - t0
    report("pruning and determinism properties", failures, elapsed, 30.0)


def test_ablation_structure(corpus):
    failures = []
    t0 = time.perf_counter()
    full = evaluate(corpus, config=PipelineConfig(workers=1)).metrics()
    ablated = {
        "no-context": evaluate(corpus, config=PipelineConfig(workers=1, use_context=False)),
        "no-branch-analysis": evaluate(corpus, config=PipelineConfig(workers=1, branch_analysis=False)),
    }
    elapsed = time.perf_counter() - t0
    if not any(not e.expected_exploitable for e in corpus.entries):
        failures.append("corpus has no negatives")
    notes = []
    for name, result in ablated.items():
        m = result.metrics()
        if result.errored:
            failures.append(f"{name}: {len(result.errored)} errored")
        if m.recall != 1:
            failures.append(f"{name}: recall {m.percentages()['recall']}%")
        if m.accuracy > full.accuracy:
            failures.append(f"{name}: accuracy above the full pipeline")
        notes.append(f"{name} accuracy {m.percentages()['accuracy']}%")
    report("ablation structure [" + ", ".join(notes) + "]", failures, elapsed, 60.0)


def test_summary_contract(corpus, servlet_source, pt_config):
    failures = []
    t0 = time.perf_counter()
    for n in range(100):
        summary = random_summary(random.Random(n))
        text = serialize_summary(summary)
        again = parse_summary(text, strict=True)
        if again != summary or serialize_summary(again) != text:
            failures.append(f"round trip differs for seed {n}")
            break
    from vulnchain.harness import load_source

    emitted = [generate_summary(servlet_source, pt_config)]
    emitted += [load_source(corpus.root, s) for s in sorted({e.source for e in corpus.entries})]
    for summary in emitted:
        text = serialize_summary(summary)
        if parse_summary(text, strict=True) != summary:
            failures.append("emitted summary fails strict validation")
            break
    elapsed = time.perf_counter() - t0
    methods = summary_to_dict(emitted[0])["chains"][0]["methods"]
    if not SUMMARY_KEYS <= set(methods[1]):
        failures.append(f"missing keys {sorted(SUMMARY_KEYS - set(methods[1]))}")
    reference = parse_summary((FIXTURES / "servlet_summary.json").read_text(), strict=True)
    if parse_summary(serialize_summary(reference), strict=True) != reference:
        failures.append("reference summary fixture does not round-trip")
    report(f"summary contract ({len(emitted)} emitted summaries)", failures, elapsed, 5.0)
