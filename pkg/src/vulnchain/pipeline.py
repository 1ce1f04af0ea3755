"""Per-chain constraint solving: seed the source state, run one subtask per
caller/callee pair, and judge the trigger constraint on the sink state."""

from __future__ import annotations

import hashlib
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .branch import PruneConfig, analyze_branch, branch_target, classify_branch, prune_tree
from .context import DEFAULT_BUDGET, build_context, prune_branch_facts, prune_parameters, simplify
from .errors import RuleNotFound, VulnChainError
from .library import signature_matches
from .minilang.taint import caller_flows
from .rules import RuleRegistry, VulnerabilityRule, trigger_satisfied
from .semantics import BranchSemantics
from .solver import OracleBackend
from .solver.requests import SolverResponse, Transfer, build_subtask_request
from .state import ParameterState, SlotKey, SlotState, StateEntry, slot_label
from .summary import (
    ArgBinding, BranchRecord, CallChain, CodeInformationSummary, MethodRecord,
    TypeResolver, Variable, critical_parameters, param,
)

log = logging.getLogger(__name__)

INPUT_WITNESS_NOTE = ("No concrete input assignment is synthesized; exploitability is a semantic "
                      "judgment over parameter states and reachability.")

TRIGGER_SATISFIED = "TriggerSatisfied"
TRIGGER_UNSATISFIED = "TriggerUnsatisfied"
TRANSFER_INFEASIBLE = "TransferInfeasible"


@dataclass(frozen=True)
class PipelineConfig:
    prune: PruneConfig = field(default_factory=PruneConfig)
    budget: int = DEFAULT_BUDGET
    branch_analysis: bool = True
    use_context: bool = True
    prune_params: bool = True  # parameter pruning in context maintenance
    workers: int = 4

    def __post_init__(self):
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class SubtaskResult:
    pair_index: int
    caller: str
    callee: str
    transfer: Transfer
    callee_state: Optional[ParameterState]
    branch_semantics_used: Tuple[BranchSemantics, ...] = ()
    context_text_used: str = ""
    degraded: bool = False
    note: str = ""

    def __post_init__(self):
        if (self.callee_state is None) != (self.transfer is Transfer.INFEASIBLE):
            raise ValueError("callee state must be present exactly when the transfer is not infeasible")

    @property
    def context_hash(self) -> str:
        return hashlib.sha256(self.context_text_used.encode("utf-8")).hexdigest()[:16]

    def to_json(self) -> Dict:
        return {
            "pairIndex": self.pair_index,
            "caller": self.caller,
            "callee": self.callee,
            "transfer": self.transfer.value,
            "calleeState": self.callee_state.to_json() if self.callee_state is not None else None,
            "branchMethods": [
                {"method": b.method_id, "category": b.category.label} for b in self.branch_semantics_used],
            "contextHash": self.context_hash,
            "degraded": self.degraded,
            "note": self.note,
        }


@dataclass(frozen=True)
class Verdict:
    chain_id: str
    rule_id: str
    exploitable: bool
    reason: str
    sink_state: Optional[ParameterState]
    trace: Tuple[SubtaskResult, ...]
    sink_signature: str = ""
    input_witness_note: str = INPUT_WITNESS_NOTE

    def __post_init__(self):
        if self.exploitable and (self.reason != TRIGGER_SATISFIED or self.sink_state is None):
            raise ValueError("an exploitable verdict needs a satisfied trigger and a sink state")

    def to_json(self) -> Dict:
        return {
            "chainId": self.chain_id,
            "rule": self.rule_id,
            "exploitable": self.exploitable,
            "reason": self.reason,
            "sinkSignature": self.sink_signature,
            "sinkState": self.sink_state.to_json() if self.sink_state is not None else None,
            "trace": [t.to_json() for t in self.trace],
            "inputWitnessNote": self.input_witness_note,
        }


@dataclass(frozen=True)
class ErroredChain:
    chain_id: str
    rule_id: str
    error: str


@dataclass(frozen=True)
class Report:
    verdicts: Tuple[Verdict, ...]
    errored: Tuple[ErroredChain, ...] = ()

    def verdict(self, chain_id: str) -> Verdict:
        for v in self.verdicts:
            if v.chain_id == chain_id:
                return v
        raise KeyError(chain_id)

    def to_json(self) -> List[Dict]:
        """Verdicts, then errored chains (marked by an ``error`` key), each in chain-id order."""
        out = [v.to_json() for v in self.verdicts]
        out += [{"chainId": e.chain_id, "rule": e.rule_id, "error": e.error} for e in self.errored]
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# Chain preparation

def _owner(signature: str) -> str:
    return signature.rsplit(".", 1)[0] if "." in signature else ""


def sink_record(last: MethodRecord) -> MethodRecord:
    """A record standing for the library sink invoked by ``last``."""
    sc = last.sink_call
    if sc is None:
        raise ValueError(f"{last.method_id} invokes no sink")
    arity = max(sc.arg_indices, default=-1) + 1
    arity = max(arity, len(sc.arg_expressions))
    exprs = dict(zip(sc.arg_indices, sc.arg_expressions))
    return MethodRecord(
        class_name=_owner(sc.signature), signature=sc.signature,
        args=tuple(Variable(f"arg{k}", "Object") for k in range(arity)),
        snippet_of_called=sc.snippet, invoker_of_called="",
        pass_relationship=tuple(ArgBinding(exprs[k], k) for k in sc.arg_indices if k in exprs),
    )


def normalize_chain(chain: CallChain) -> Tuple[MethodRecord, ...]:
    """Main methods followed by the sink.  A chain either ends in the external
    sink record itself or in a user method carrying a ``sinkCall``."""
    methods = tuple(chain.methods)
    if methods[-1].is_external:
        return methods
    return methods + (sink_record(methods[-1]),)


def sink_indices(sink: MethodRecord, rule: VulnerabilityRule) -> Tuple[int, ...]:
    pattern = rule.match_sink(sink.signature)
    if pattern is not None:
        return tuple(pattern.arg_indices)
    if sink.sink_call is not None:
        return tuple(sink.sink_call.arg_indices)
    return tuple(b.formal_index for b in sink.pass_relationship)


def _rule_sink_indices(records: Sequence[MethodRecord], rule: VulnerabilityRule) -> Tuple[int, ...]:
    last_user = records[-2]
    if last_user.sink_call is not None:
        return tuple(last_user.sink_call.arg_indices)
    return sink_indices(records[-1], rule)


def slot_keys(records: Sequence[MethodRecord], index: int, rule: VulnerabilityRule,
              resolver: TypeResolver) -> List[SlotKey]:
    """Sensitive slots of ``records[index]``: critical parameters, or the
    sink's sensitive argument positions for the final record."""
    rec = records[index]
    if index == len(records) - 1:
        return [(k, "") for k in _rule_sink_indices(records, rule)]
    return list(critical_parameters(rec, rule, resolver))


def _slot_name(rec: MethodRecord, key: SlotKey) -> str:
    idx, path = key
    base = rec.args[idx].name if idx < len(rec.args) else f"arg{idx}"
    return f"{base}.{path}" if path else base


def source_calls(rec: MethodRecord, rule: VulnerabilityRule) -> Tuple[str, ...]:
    return tuple(b.snippet_of_called for b in rec.branchs if b.is_external
                 and any(signature_matches(p, b.signature) for p in rule.source_patterns))


def init_source_state(chain: CallChain, rule: VulnerabilityRule,
                      resolver: Optional[TypeResolver] = None) -> ParameterState:
    """S1: attacker-tainted entry parameters violate, the rest satisfy; source
    calls inside m1 are listed as sources."""
    resolver = resolver or TypeResolver(aliases=rule.aliases)
    m1 = chain.methods[0]
    tainted = set(chain.entry_tainted_args)
    entries = {}
    for key in critical_parameters(m1, rule, resolver):
        if key[0] in tainted:
            entries[key] = StateEntry(SlotState.VIOLATES, "attacker-controlled source", (), _slot_name(m1, key))
        else:
            entries[key] = StateEntry(SlotState.SATISFIES, "not reachable from a source", (), _slot_name(m1, key))
    return ParameterState.of(entries, source_calls(m1, rule))


# ---------------------------------------------------------------------------
# Subtasks

def _branch_step(caller: MethodRecord, rule: VulnerabilityRule, backend, resolver: TypeResolver,
                 config: PipelineConfig) -> Tuple[List[BranchSemantics], List[BranchRecord]]:
    semantics, retained = [], []
    for root in caller.branchs:
        try:
            category = classify_branch(root, rule, resolver)
            target = branch_target(category, root, rule, resolver)
            pruned = prune_tree(root, target, config.prune)
            semantics.append(analyze_branch(pruned, category, rule, backend, resolver))
            retained.append(pruned)
        except VulnChainError as exc:
            # An unanalyzed branch stays opaque to the solver, which treats it as unknown.
            log.warning("branch %s of %s skipped: %s", root.method_id, caller.method_id, exc)
    return semantics, retained


def _callee_state(callee: MethodRecord, keys: Sequence[SlotKey], resp: Optional[SolverResponse],
                  caller_state: ParameterState, why: str = "") -> ParameterState:
    got = resp.state_map() if resp is not None else {}
    caller_names = {e.name: k for k, e in caller_state if e.name}
    entries = {}
    actual = {b.formal_index: b.actual_expression for b in callee.pass_relationship}
    for key in keys:
        r = got.get(key)
        verdict = r.verdict if r is not None else SlotState.UNKNOWN
        text = r.justification if r is not None else (why or "no verdict returned")
        expr = actual.get(key[0], "")
        trail = tuple(slot_label(k) for n, k in sorted(caller_names.items()) if n.split(".")[0] in _words(expr))
        entries[key] = StateEntry(verdict, text, trail, _slot_name(callee, key))
    return ParameterState.of(entries)


def _words(text: str) -> set:
    return set(re.findall(r"[A-Za-z_]\w*", text))


def solve_subtask(records: Sequence[MethodRecord], i: int, state: ParameterState, rule: VulnerabilityRule,
                  backend, config: Optional[PipelineConfig] = None,
                  resolver: Optional[TypeResolver] = None) -> SubtaskResult:
    """One derivation step from the state of ``records[i]`` to the state of
    ``records[i + 1]`` (0-based)."""
    config = config or PipelineConfig()
    resolver = resolver or TypeResolver(aliases=rule.aliases)
    if not 0 <= i < len(records) - 1:
        raise IndexError(f"pair index {i} outside chain of {len(records)} methods")
    caller, callee = records[i], records[i + 1]
    keys = slot_keys(records, i + 1, rule, resolver)
    semantics: List[BranchSemantics] = []
    context_text = ""
    try:
        # (a) branch methods
        retained: List[BranchRecord] = []
        if config.branch_analysis:
            semantics, retained = _branch_step(caller, rule, backend, resolver, config)
        else:
            retained = list(caller.branchs)
        # (b) context
        downstream = [caller.code] + [n.code for r in retained for n in r.bfs() if n.code]
        state = ParameterState.of(state.as_dict(), source_calls(caller, rule) or state.sources)
        if config.use_context:
            protected = ()
            if i == len(records) - 2:
                # Entries feeding the sink's sensitive arguments are never pruned.
                sink_words = set().union(*(_words(b.actual_expression) for b in callee.pass_relationship))
                protected = [k for k, e in state if e.name and e.name.split(".")[0] in sink_words]
            kept_state = prune_parameters(state, downstream, protected) if config.prune_params else state
            try:
                flows = caller_flows(caller, callee.snippet_of_called)
            except (ValueError, VulnChainError):
                flows = None
            facts = prune_branch_facts(semantics, [param(k) for k, _ in keys], config.prune.known_semantics,
                                       flows)
            simple = [sf for f in facts for sf in simplify(f, rule)]
            context = build_context(kept_state, simple, config.budget, caller.code)
            raw = None
        else:
            context = None
            raw = "\n\n".join(dict.fromkeys(downstream))
        # (c) main path
        request = build_subtask_request(caller, callee, context, rule, resolver, keys, raw_context=raw)
        context_text = request.context_text
        resp = backend.solve(request)
    except VulnChainError as exc:
        log.warning("subtask %s -> %s degraded: %s", caller.method_id, callee.method_id, exc)
        return SubtaskResult(i + 1, caller.method_id, callee.method_id, Transfer.UNKNOWN,
                             _callee_state(callee, keys, None, state, f"degraded: {exc}"),
                             tuple(semantics), context_text, degraded=True, note=str(exc))
    transfer = resp.transfer or Transfer.UNKNOWN
    if transfer is Transfer.INFEASIBLE:
        return SubtaskResult(i + 1, caller.method_id, callee.method_id, transfer, None,
                             tuple(semantics), context_text, resp.degraded)
    return SubtaskResult(i + 1, caller.method_id, callee.method_id, transfer,
                         _callee_state(callee, keys, resp, state), tuple(semantics), context_text, resp.degraded)


def analyze_chain(chain: CallChain, rule: VulnerabilityRule, backend=None,
                  config: Optional[PipelineConfig] = None,
                  resolver: Optional[TypeResolver] = None) -> Verdict:
    backend = backend or OracleBackend()
    config = config or PipelineConfig()
    resolver = resolver or TypeResolver(aliases=rule.aliases)
    records = normalize_chain(chain)
    state = init_source_state(chain, rule, resolver)
    trace: List[SubtaskResult] = []
    for i in range(len(records) - 1):
        result = solve_subtask(records, i, state, rule, backend, config, resolver)
        trace.append(result)
        if result.transfer is Transfer.INFEASIBLE:
            return Verdict(chain.id, rule.id, False, TRANSFER_INFEASIBLE, None, tuple(trace), records[-1].signature)
        state = result.callee_state
    sink_sig = records[-1].signature
    hit = trigger_satisfied(rule, state, sink_sig)
    return Verdict(chain.id, rule.id, hit, TRIGGER_SATISFIED if hit else TRIGGER_UNSATISFIED,
                   state, tuple(trace), sink_sig)


def run(summary: CodeInformationSummary, rules: Optional[RuleRegistry] = None, backend=None,
        config: Optional[PipelineConfig] = None) -> Report:
    """Analyze every chain; chains with an unknown rule are reported as errored."""
    rules = rules or RuleRegistry.builtin()
    backend = backend or OracleBackend()
    config = config or PipelineConfig()
    types = summary.type_table()

    def one(chain: CallChain):
        try:
            rule = rules.get(chain.rule)
        except RuleNotFound as exc:
            return ErroredChain(chain.id, chain.rule, str(exc))
        resolver = TypeResolver(types, aliases=rule.aliases)
        try:
            return analyze_chain(chain, rule, backend, config, resolver)
        except VulnChainError as exc:
            log.error("chain %s failed: %s", chain.id, exc)
            return ErroredChain(chain.id, chain.rule, str(exc))

    if config.workers == 1:
        results = [one(c) for c in summary.chains]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(one, summary.chains))
    verdicts = sorted((r for r in results if isinstance(r, Verdict)), key=lambda v: v.chain_id)
    errored = sorted((r for r in results if isinstance(r, ErroredChain)), key=lambda e: e.chain_id)
    return Report(tuple(verdicts), tuple(errored))
