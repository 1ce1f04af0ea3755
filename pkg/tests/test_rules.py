"""Rule registry, trigger formulas and the rules' oracle predicates."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, settings, strategies as st

from vulnchain.absdomain import Attacker, Check, Filtered, Lit, Unknown, concat
from vulnchain.errors import MissingState, RuleNotFound
from vulnchain.rules import (
    COMMAND_INJECTION, PATH_TRAVERSAL, SQL_INJECTION, RuleRegistry, TriggerFormula, builtin_rules,
    load_rule_overrides, trigger_satisfied,
)
from vulnchain.state import ParameterState, SlotState, StateEntry

_RANK = [SlotState.SATISFIES, SlotState.UNKNOWN, SlotState.VIOLATES]


def _state(*verdicts):
    return ParameterState.of({(i, ""): StateEntry(v) for i, v in enumerate(verdicts)})


def test_three_builtin_rules():
    rules = builtin_rules()
    assert sorted(r.id for r in rules) == sorted([PATH_TRAVERSAL, SQL_INJECTION, COMMAND_INJECTION])
    for r in rules:
        assert r.critical_types
        assert all(s.arg_indices for s in r.sink_patterns)
        assert r.condition.human_text


def test_path_traversal_critical_types(pt_rule):
    assert {"String", "Path"} <= pt_rule.critical_types


@pytest.mark.parametrize("rule_id", [PATH_TRAVERSAL, SQL_INJECTION, COMMAND_INJECTION])
def test_all_satisfying_not_triggered(registry, rule_id):
    rule = registry.get(rule_id)
    sink = rule.sink_patterns[0]
    assert trigger_satisfied(rule, _state(SlotState.SATISFIES), sink.pattern) is False


def test_violating_arg_triggers(pt_rule):
    assert trigger_satisfied(pt_rule, _state(SlotState.VIOLATES), "Files.readString")


def test_unknown_arg_triggers(pt_rule):
    assert trigger_satisfied(pt_rule, _state(SlotState.UNKNOWN), "Files.readString")


def test_missing_state(pt_rule):
    with pytest.raises(MissingState):
        trigger_satisfied(pt_rule, ParameterState(), "Files.readString")


def test_member_entries_count_for_their_argument(pt_rule):
    state = ParameterState.of({(0, "query"): StateEntry(SlotState.VIOLATES),
                               (0, "limit"): StateEntry(SlotState.SATISFIES)})
    assert trigger_satisfied(pt_rule, state, "Files.readString")


def test_predicate_example(pt_rule):
    pred = pt_rule.condition.predicate
    assert pred(concat(Attacker("request"), Lit("/x"))) is False
    assert pred(concat(Filtered(Check("absent", ".."), Attacker("request")), Lit("/x"))) is True
    assert pred(concat(Unknown("opaque"), Lit("/x"))) is None


def test_sql_predicate_variants(registry):
    pred = registry.get(SQL_INJECTION).condition.predicate
    assert pred(Filtered(Check("bound"), Attacker("q"))) is True
    assert pred(Filtered(Check("escaped", "'"), Attacker("q"))) is True
    assert pred(Filtered(Check("absent", ".."), Attacker("q"))) is False
    assert pred(Filtered(Check("charset", "0123456789"), Attacker("q"))) is True
    assert pred(Filtered(Check("charset", "'0123456789"), Attacker("q"))) is False


def test_command_predicate_charset(registry):
    pred = registry.get(COMMAND_INJECTION).condition.predicate
    assert pred(Filtered(Check("charset", "abc"), Attacker("c"))) is True
    assert pred(Filtered(Check("charset", "abc;"), Attacker("c"))) is False


def test_unknown_rule(registry):
    with pytest.raises(RuleNotFound):
        registry.get("xss")


def test_duplicate_rule_ids_rejected():
    rules = builtin_rules()
    with pytest.raises(ValueError):
        RuleRegistry(rules + rules[:1])


def test_formula_parse_and_evaluate():
    f = TriggerFormula.parse("arg0 and (arg1 or arg2)")
    assert f.atoms() == {0, 1, 2}
    assert f.evaluate({0: True, 1: False, 2: True})
    assert not f.evaluate({0: False, 1: True, 2: True})
    with pytest.raises(ValueError):
        TriggerFormula.parse("arg0 and")


def test_override_file(tmp_path):
    path = tmp_path / "rules.json"
    path.write_text(json.dumps([
        {"id": "path-traversal", "conditionText": "No dot-dot.", "criticalTypes": ["String"]},
        {"id": "log-forging", "criticalTypes": ["String"], "conditionText": "No newlines.",
         "sinkPatterns": [{"pattern": "Logger.info", "argIndices": [0, 1]}],
         "triggerFormula": "arg0 and arg1", "dangerousChars": "\n"},
    ]))
    reg = load_rule_overrides(path)
    assert reg.get("path-traversal").condition.human_text == "No dot-dot."
    assert reg.get("path-traversal").critical_types == {"String"}
    log_rule = reg.get("log-forging")
    assert trigger_satisfied(log_rule, _state(SlotState.VIOLATES, SlotState.SATISFIES), "Logger.info") is False
    assert trigger_satisfied(log_rule, _state(SlotState.VIOLATES, SlotState.UNKNOWN), "Logger.info") is True


def test_override_trigger_must_use_declared_args(tmp_path):
    path = tmp_path / "rules.json"
    path.write_text(json.dumps({"id": "x", "criticalTypes": ["String"],
                                "sinkPatterns": [{"pattern": "A.b", "argIndices": [0]}], "triggerFormula": "arg3"}))
    with pytest.raises(ValueError):
        load_rule_overrides(path)


@st.composite
def _formulas(draw, n=3, depth=2):
    if depth == 0 or draw(st.booleans()):
        return f"arg{draw(st.integers(0, n - 1))}"
    op = draw(st.sampled_from(["and", "or"]))
    terms = draw(st.lists(_formulas(n=n, depth=depth - 1), min_size=2, max_size=3))
    return "(" + f" {op} ".join(terms) + ")"


@settings(max_examples=200, deadline=None)
@given(_formulas(), st.lists(st.integers(0, 2), min_size=3, max_size=3), st.integers(0, 2))
def test_trigger_monotone(text, ranks, which):
    formula = TriggerFormula.parse(text)
    reg = RuleRegistry.builtin().with_overrides([{
        "id": "multi", "criticalTypes": ["String"],
        "sinkPatterns": [{"pattern": "Sink.run", "argIndices": [0, 1, 2]}], "triggerFormula": str(formula)}])
    rule = reg.get("multi")
    before = trigger_satisfied(rule, _state(*[_RANK[r] for r in ranks]), "Sink.run")
    raised = list(ranks)
    raised[which] = min(2, raised[which] + 1)
    after = trigger_satisfied(rule, _state(*[_RANK[r] for r in raised]), "Sink.run")
    assert not (before and not after)
