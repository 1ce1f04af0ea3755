"""Context maintenance: parameter and branch-fact pruning, fact
simplification and deterministic rendering under a character budget."""

from __future__ import annotations

from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set

from .errors import BudgetError
from .library import signature_matches
from .rules import VulnerabilityRule
from .semantics import (
    AnalysisContext, BranchCategory, BranchSemantics, FactKind, SimplifiedFact,
)
from .state import ParameterState, SlotKey, SlotState, slot_label
from .summary import RETURN, Slot
from .branch import tokens

DEFAULT_BUDGET = 4000


def accessor_aliases(member_name: str) -> Set[str]:
    cap = member_name[:1].upper() + member_name[1:]
    return {member_name, f"get{cap}", f"is{cap}"}


def prune_parameters(state: ParameterState, downstream_code: Iterable[str],
                     protected: Iterable[SlotKey] = (),
                     aliases: Optional[Mapping[str, Iterable[str]]] = None) -> ParameterState:
    """Drop state entries whose parameter (or member path) never appears in
    the downstream code.  Entries without a name are kept."""
    seen: Set[str] = set()
    for code in downstream_code:
        seen |= tokens(code)
    protected = set(protected)
    kept = {}
    for key, entry in state:
        if key in protected or not entry.name:
            kept[key] = entry
            continue
        base, _, path = entry.name.partition(".")
        if base not in seen:
            continue
        if path:
            names = accessor_aliases(path) | set((aliases or {}).get(path, ()))
            if not names & seen:
                continue
        kept[key] = entry
    return ParameterState.of(kept, state.sources)


def _is_known(fact: BranchSemantics, known: Iterable[str]) -> bool:
    for pattern in known:
        if (fact.external or "." in pattern) and signature_matches(pattern, fact.method_id):
            return True
    return False


def prune_branch_facts(facts: Sequence[BranchSemantics], target_slots: Sequence[Slot],
                       known: Iterable[str] = (),
                       flows: Optional[Mapping[str, Iterable[int]]] = None) -> List[BranchSemantics]:
    """Remove facts about known-semantics methods and about methods whose
    output has no data path into any target slot.

    ``flows`` maps a branch method name to the callee argument positions its
    output reaches inside the caller; when given, ``target_slots`` are callee
    parameter slots.  Without it, ``target_slots`` are compared against each
    fact's own output slots.  Guards that make a boolean meaningful are kept.
    """
    known = tuple(known)
    out = []
    for f in facts:
        if _is_known(f, known):
            continue
        if f.guard is not None and f.guard.guards_condition:
            out.append(f)
            continue
        if flows is not None:
            wanted = {s.index for s in target_slots if s.kind == "param"}
            if set(flows.get(f.key, ())) & wanted:
                out.append(f)
        elif set(f.output_slots()) & set(target_slots):
            out.append(f)
    return out


# ---------------------------------------------------------------------------
# Simplification

def _slot_text(method: str, slot: Slot, names: Sequence[str], member: Optional[str] = None) -> str:
    if slot.kind == "return":
        base = f"the value returned by {method}"
    elif slot.kind == "member":
        base = f"the member {slot.name} set by {method}"
    else:
        nm = names[slot.index] if slot.index < len(names) else f"#{slot.index}"
        base = f"the argument passed as {nm} to {method}"
    return f"{base} (member {member})" if member and slot.kind != "member" else base


def _names(indices: Iterable[int], names: Sequence[str]) -> str:
    out = [names[i] if i < len(names) else f"#{i}" for i in indices]
    return ", ".join(out)


def simplify(fact: BranchSemantics, rule: VulnerabilityRule) -> List[SimplifiedFact]:
    name = fact.name
    names = fact.param_names
    out: List[SimplifiedFact] = []
    if fact.category is BranchCategory.BOOLEAN_RETURNER:
        g = fact.guard
        if g is not None and g.guards_condition and g.guarded_params:
            who = _names(g.guarded_params, names)
            out.append(SimplifiedFact(
                FactKind.STRICT_SECURITY_CHECK, f"{name}()",
                f"{name} returns true only when {who} satisfies the condition; on the true branch treat "
                f"the argument passed as {who} as strictly checked.",
                fact.method_id, RETURN, tuple(g.guarded_params), on_true=True))
        return out
    if fact.category is BranchCategory.OTHER:
        by_dst: Dict[Slot, List[int]] = {}
        for e in fact.dataflow:
            if e.src.kind == "param":
                by_dst.setdefault(e.dst, []).append(e.src.index)
        for dst, srcs in by_dst.items():
            srcs = sorted(set(srcs))
            out.append(SimplifiedFact(
                FactKind.DIRECT_ASSIGNMENT, f"{name}.{dst}",
                f"{_slot_text(name, dst, names)} is assigned directly from {_names(srcs, names)}.",
                fact.method_id, dst, tuple(srcs)))
        return out
    groups: Dict[tuple, List] = {}
    for f in fact.params:
        groups.setdefault((f.target, f.via_member), []).append(f)
    for target in fact.targets:
        for key in [k for k in groups if k[0] == target] or [(target, None)]:
            findings = groups.get(key, [])
            member = key[1]
            unfiltered = sorted({f.param_index for f in findings if f.reaches_target_unfiltered})
            filtered = sorted({f.param_index for f in findings if not f.reaches_target_unfiltered})
            internal = bool(fact.internal_sources) and target == RETURN
            what = _slot_text(name, target, names, member)
            subject = f"{name}.{target}" + (f".{member}" if member else "")
            if not unfiltered and not internal:
                out.append(SimplifiedFact(
                    FactKind.STRICT_SECURITY_CHECK, subject,
                    f"{what} is strictly checked: it always satisfies the condition "
                    f"(it cannot {rule.condition.hazard.removeprefix('can ') or 'be exploited'}).",
                    fact.method_id, target, member=member or ""))
            elif filtered or internal:
                via = _names(unfiltered, names)
                extra = f"an attacker-controlled source inside {name}" if internal else ""
                via = " and ".join(x for x in (via, extra) if x)
                out.append(SimplifiedFact(
                    FactKind.UNFILTERED_SOURCE_JUDGMENT, subject,
                    f"{what} can be exploited only through {via}; treat every other input as never propagated.",
                    fact.method_id, target, tuple(unfiltered), internal=internal, member=member or ""))
            else:
                out.append(SimplifiedFact(
                    FactKind.DIRECT_ASSIGNMENT, subject,
                    f"{what} is assigned directly from {_names(unfiltered, names)} without filtering.",
                    fact.method_id, target, tuple(unfiltered), member=member or ""))
    return out


# ---------------------------------------------------------------------------
# Rendering

_VERDICT_TEXT = {
    SlotState.SATISFIES: "satisfies the condition",
    SlotState.VIOLATES: "may violate the condition",
    SlotState.UNKNOWN: "unknown with respect to the condition",
}


def state_lines(state: ParameterState) -> List[str]:
    lines = []
    for key, entry in state:
        why = f" ({entry.justification})" if entry.justification else ""
        lines.append(f"state: {entry.name or 'arg'} [slot {slot_label(key)}] {_VERDICT_TEXT[entry.verdict]}{why}")
    for src in state.sources:
        lines.append(f"source: `{src}` returns attacker-controlled data")
    return lines


def _position(fact: SimplifiedFact, code: str) -> int:
    i = code.find(fact.name + "(")
    return i if i >= 0 else len(code)


def render_context(state: ParameterState, facts: Sequence[SimplifiedFact], budget: int = DEFAULT_BUDGET,
                   caller_code: str = "") -> str:
    """States first, then facts in order of first appearance in the caller.

    Over budget, assignments are dropped from the end first, then judgments.
    State lines and strict checks are never dropped; if they alone do not
    fit, BudgetError is raised.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    head = state_lines(state)
    ordered = sorted(enumerate(facts), key=lambda p: (_position(p[1], caller_code), p[0]))
    body = [f for _, f in ordered]

    def text(items: List[SimplifiedFact]) -> str:
        return "\n".join(head + [f"fact: [{f.kind.value}] {f.statement_text}" for f in items])

    for drop in (FactKind.DIRECT_ASSIGNMENT, FactKind.UNFILTERED_SOURCE_JUDGMENT):
        while len(text(body)) > budget and any(f.kind is drop for f in body):
            last = max(i for i, f in enumerate(body) if f.kind is drop)
            body.pop(last)
    out = text(body)
    if len(out) > budget:
        raise BudgetError(f"state lines and strict checks need {len(out)} characters, budget is {budget}")
    return out


def build_context(state: ParameterState, facts: Sequence[SimplifiedFact], budget: int = DEFAULT_BUDGET,
                  caller_code: str = "") -> AnalysisContext:
    """Render and keep only the facts that survived truncation."""
    text = render_context(state, facts, budget, caller_code)
    lines = set(text.splitlines())
    kept = tuple(f for f in facts if f"fact: [{f.kind.value}] {f.statement_text}" in lines)
    return AnalysisContext(state, kept, text)
