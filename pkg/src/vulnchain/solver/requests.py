"""Solver requests and responses, and the builders for both request kinds."""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Any, Dict, List, Optional, Sequence, Tuple

from ..rules import VulnerabilityRule
from ..semantics import AnalysisContext, BranchCategory, GuardFinding, ParamFinding, SimplifiedFact
from ..state import ParameterState, SlotKey, SlotState, slot_label
from ..summary import ArgBinding, BranchRecord, MethodRecord, Slot, TypeResolver, critical_parameters

BRANCH_OBJECTIVE = "BranchObjective"
SUBTASK_DERIVATION = "SubtaskDerivation"

SCHEMA_SUBTASK = "subtask-v1"
SCHEMA_BRANCH = "branch-params-v1"
SCHEMA_GUARD = "branch-guard-v1"


class Transfer(str, enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class CalleeSlot:
    key: SlotKey
    name: str
    actual: str  # actual argument expression at the call site


@dataclass(frozen=True)
class SubtaskPayload:
    """Structured twin of a subtask request, consumed by the oracle."""

    caller: MethodRecord
    rule: VulnerabilityRule
    slots: Tuple[CalleeSlot, ...]
    bindings: Tuple[ArgBinding, ...]
    state: Optional[ParameterState]  # None when no context is supplied
    facts: Tuple[SimplifiedFact, ...] = ()
    user_methods: Tuple[str, ...] = ()


@dataclass(frozen=True)
class Objective:
    target: Slot
    via_member: Optional[str]
    params: Tuple[int, ...]


@dataclass(frozen=True)
class BranchPayload:
    root: BranchRecord
    category: BranchCategory
    rule: VulnerabilityRule
    objectives: Tuple[Objective, ...] = ()
    guard_params: Tuple[int, ...] = ()


@dataclass(frozen=True)
class SolverRequest:
    kind: str
    caller_code: str
    context_text: str
    objective_text: str
    call_site: str
    expected_schema: str
    payload: Any = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind == SUBTASK_DERIVATION:
            if not self.caller_code:
                raise ValueError("a subtask request needs caller code")
            if self.call_site not in self.caller_code:
                raise ValueError(f"call site {self.call_site!r} does not occur in caller code")

    def messages(self) -> List[Dict[str, str]]:
        intro, _, rest = self.objective_text.partition("\n\n")
        sub = prompts()["subtask"]
        if self.context_text:
            context = f"{sub['context_header']}\n{self.context_text}"
        else:
            context = sub["no_context"] if self.kind == SUBTASK_DERIVATION else ""
        parts = [intro, "```java\n" + self.caller_code + "\n```", context, rest]
        return [
            {"role": "system", "content": prompts()["system"]},
            {"role": "user", "content": "\n\n".join(p for p in parts if p)},
        ]

    def key(self) -> str:
        """Stable hash of the wire-visible request (used by transcripts)."""
        blob = json.dumps({"schema": self.expected_schema, "messages": self.messages()}, sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class StateResult:
    slot: SlotKey
    verdict: SlotState
    justification: str = ""


@dataclass(frozen=True)
class SolverResponse:
    transfer: Optional[Transfer] = None
    states: Tuple[StateResult, ...] = ()
    raw: str = ""
    findings: Tuple[ParamFinding, ...] = ()
    guard: Optional[GuardFinding] = None
    internal_sources: Tuple[str, ...] = ()
    degraded: bool = False  # True when entries were filled in after a failure

    def state_map(self) -> Dict[SlotKey, StateResult]:
        return {s.slot: s for s in self.states}


@lru_cache(maxsize=1)
def prompts() -> Dict[str, Any]:
    text = resources.files("vulnchain").joinpath("data/prompts.json").read_text(encoding="utf-8")
    return json.loads(text)


def _condition_line(rule: VulnerabilityRule) -> str:
    return prompts()["condition"].format(rule=rule.id, condition=rule.condition.human_text)


def _slot_text(slot: Slot) -> str:
    if slot.kind == "return":
        return "the return value"
    if slot.kind == "member":
        return f"the member {slot.name}"
    return f"parameter {slot.index}"


# ---------------------------------------------------------------------------

def callee_slots(callee: MethodRecord, rule: VulnerabilityRule,
                 resolver: Optional[TypeResolver] = None,
                 keys: Optional[Sequence[SlotKey]] = None) -> Tuple[CalleeSlot, ...]:
    """Sensitive slots of the callee with their actual argument expressions."""
    if keys is None:
        keys = critical_parameters(callee, rule, resolver)
    actual = {b.formal_index: b.actual_expression for b in callee.pass_relationship}
    out = []
    for idx, path in keys:
        base = callee.args[idx].name if idx < len(callee.args) else f"arg{idx}"
        out.append(CalleeSlot((idx, path), f"{base}.{path}" if path else base, actual.get(idx, "")))
    return tuple(out)


def build_subtask_request(caller: MethodRecord, callee: MethodRecord, context: Optional[AnalysisContext],
                          rule: VulnerabilityRule, resolver: Optional[TypeResolver] = None,
                          slot_keys: Optional[Sequence[SlotKey]] = None,
                          raw_context: Optional[str] = None) -> SolverRequest:
    """Request for one main-path step: reachability of the call site plus the
    state of every sensitive callee slot.

    ``raw_context`` replaces the rendered context (and its structured facts)
    with plain code, which is how the no-context ablation is expressed.
    """
    p = prompts()["subtask"]
    slots = callee_slots(callee, rule, resolver, slot_keys)
    call_site = callee.snippet_of_called
    lines = [p["intro"].format(caller=caller.method_id, call_site=call_site), ""]
    lines.append(_condition_line(rule))
    lines.append(p["reach"].format(caller=caller.method_id, call_site=call_site))
    if slots:
        lines.append(p["states"].format(hazard=rule.condition.hazard or "violates it"))
        for sl in slots:
            lines.append(p["slot_line"].format(slot=slot_label(sl.key), name=sl.name, actual=sl.actual))
    lines.append(p["schema"])
    intro, rest = lines[0], "\n".join(lines[2:])
    objective = intro + "\n\n" + rest
    if raw_context is not None:
        text, state, facts = raw_context, None, ()
    elif context is not None:
        text = context.rendered_text
        state, facts = context.caller_state, context.branch_facts
    else:
        text, state, facts = "", ParameterState(), ()
    payload = SubtaskPayload(
        caller=caller, rule=rule, slots=slots, bindings=callee.pass_relationship,
        state=state, facts=tuple(facts),
        user_methods=tuple(b.method_id for b in caller.branchs if not b.is_external),
    )
    return SolverRequest(SUBTASK_DERIVATION, caller.code, text, objective, call_site, SCHEMA_SUBTASK, payload)


def build_branch_request(root: BranchRecord, category: BranchCategory, rule: VulnerabilityRule,
                         objectives: Sequence[Objective] = (),
                         guard_params: Sequence[int] = ()) -> SolverRequest:
    p = prompts()["branch"]
    lines = [p["intro"].format(method=root.method_id), "", _condition_line(rule)]
    if category is BranchCategory.BOOLEAN_RETURNER:
        lines.append(p["5"])
        for i in guard_params:
            lines.append(p["param_line"].format(index=i, name=root.args[i].name))
        lines.append(p["schema_guard"])
        schema = SCHEMA_GUARD
    else:
        for obj in objectives:
            lines.append(p[str(int(category))].format(target=_slot_text(obj.target), member=obj.via_member or ""))
            for i in obj.params:
                lines.append(p["param_line"].format(index=i, name=root.args[i].name))
        lines.append(p["internal"])
        lines.append(p["schema_params"])
        schema = SCHEMA_BRANCH
    objective = lines[0] + "\n\n" + "\n".join(lines[2:])
    code = "\n\n".join(n.code for n in root.bfs() if n.code)
    external = sorted({n.signature for n in root.bfs() if not n.code and n is not root})
    context = ("Called library methods (well-known semantics): " + ", ".join(external)) if external else ""
    payload = BranchPayload(root, category, rule, tuple(objectives), tuple(guard_params))
    return SolverRequest(BRANCH_OBJECTIVE, code, context, objective, "", schema, payload)
