"""Branch method analysis: call-tree pruning, category selection and
category-specific semantic extraction through a solver backend."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Iterable, List, Optional, Protocol, Set, Tuple

from .errors import BackendError, MalformedResponse, OracleUnsupportedConstruct, ParseError
from .library import default_library, signature_matches
from .rules import VulnerabilityRule
from .semantics import BranchCategory, BranchSemantics, GuardFinding, ParamFinding
from .summary import RETURN, BranchRecord, MethodRecord, Slot, TypeResolver, member, param
from .solver.requests import Objective, SolverRequest, SolverResponse, build_branch_request

log = logging.getLogger(__name__)

_IDENT_RE = re.compile(r"[A-Za-z_$][\w$]*")
BOOLEAN_TYPES = frozenset({"boolean", "Boolean"})


class SolverBackend(Protocol):
    def solve(self, request: SolverRequest) -> SolverResponse: ...


def default_known_semantics() -> FrozenSet[str]:
    return default_library().signatures()


@dataclass(frozen=True)
class PruneConfig:
    max_depth: int = 3
    max_methods: int = 12
    known_semantics: FrozenSet[str] = field(default_factory=default_known_semantics)

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.max_methods < 1:
            raise ValueError("max_methods must be >= 1")

    def is_known(self, rec: MethodRecord) -> bool:
        return is_known(rec, self.known_semantics)


def is_known(rec: MethodRecord, known: Iterable[str]) -> bool:
    """Library methods match by name or dotted suffix; user methods only by an
    explicit qualified entry (so a user ``getPath`` is not mistaken for
    ``File.getPath``)."""
    sig = rec.method_id
    for pattern in known:
        if rec.is_external:
            if signature_matches(pattern, sig):
                return True
        elif "." in pattern and signature_matches(pattern, sig):
            return True
    return False


def tokens(text: str) -> Set[str]:
    return set(_IDENT_RE.findall(text))


# ---------------------------------------------------------------------------
# Pruning

def _relevant_names(node: BranchRecord, target: Slot) -> Optional[Set[str]]:
    """Identifiers in ``node`` that are data-connected to ``target``.

    Returns ``None`` when the node's code cannot be analyzed (callers then
    keep every child).
    """
    from .minilang.taint import relevant_names  # frontend flow analysis

    try:
        names = relevant_names(node, target)
    except (ParseError, KeyError, ValueError):
        return None
    if target == RETURN and node.return_type in BOOLEAN_TYPES:
        names |= {a.name for a in node.args}
    return names


def _dataflow_filter(node: BranchRecord, target: Slot) -> BranchRecord:
    if not node.code or not node.children:
        return node
    names = _relevant_names(node, target)
    kept = []
    for child in node.children:
        if names is None or _child_relevant(node, child, names, target):
            kept.append(_dataflow_filter(child, RETURN))
    return replace(node, children=tuple(kept))


def _child_relevant(parent: BranchRecord, child: BranchRecord, names: Set[str], target: Slot) -> bool:
    if tokens(child.snippet_of_called) & names:
        return True
    from .minilang.taint import call_feeds

    try:
        return call_feeds(parent, child.snippet_of_called, target)
    except (ParseError, KeyError, ValueError):
        return True


def _layer_filter(node: BranchRecord, max_depth: int) -> BranchRecord:
    kept = tuple(_layer_filter(c, max_depth) for c in node.children if c.depth <= max_depth)
    return replace(node, children=kept)


def _known_filter(node: BranchRecord, config: PruneConfig, is_root: bool = True) -> BranchRecord:
    if not is_root and config.is_known(node):
        return replace(node, code="", children=())
    return replace(node, children=tuple(_known_filter(c, config, False) for c in node.children))


def _upper_limit(node: BranchRecord, limit: int) -> BranchRecord:
    # BFS positions as paths of child indices; BFS order is parent-closed.
    order: List[Tuple[int, ...]] = []
    frontier: List[Tuple[Tuple[int, ...], BranchRecord]] = [((), node)]
    while frontier:
        nxt = []
        for path, n in frontier:
            order.append(path)
            nxt.extend((path + (i,), c) for i, c in enumerate(n.children))
        frontier = nxt
    keep = set(order[:limit])

    def rebuild(n: BranchRecord, path: Tuple[int, ...]) -> BranchRecord:
        kids = tuple(rebuild(c, path + (i,)) for i, c in enumerate(n.children) if path + (i,) in keep)
        return replace(n, children=kids)

    return rebuild(node, ())


def prune_tree(tree: BranchRecord, target: Slot, config: Optional[PruneConfig] = None) -> BranchRecord:
    """Data-flow, layer, known-semantics and upper-limit filters, in that order."""
    config = config or PruneConfig()
    t = _dataflow_filter(tree, target)
    t = _layer_filter(t, tree.depth + config.max_depth)
    t = _known_filter(t, config)
    return _upper_limit(t, config.max_methods)


# ---------------------------------------------------------------------------
# Classification

def _resolver(rule: VulnerabilityRule, resolver: Optional[TypeResolver]) -> TypeResolver:
    return resolver or TypeResolver(aliases=rule.aliases)


def classify_branch(branch: MethodRecord, rule: VulnerabilityRule,
                    resolver: Optional[TypeResolver] = None) -> BranchCategory:
    """First matching category in the fixed order 1 to 6."""
    res = _resolver(rule, resolver)
    crit = rule.critical_types
    for a in branch.args:
        if not res.is_critical(a.type, crit):
            res.check_known(a.type, branch, f"parameter {a.name} of {branch.method_id}")
    ret = branch.return_type
    if ret and res.is_critical(ret, crit):
        return BranchCategory.CRITICAL_CONSTRUCTOR_OR_RETURNER
    if ret and res.encapsulates(ret, crit, branch):
        return BranchCategory.ENCAPSULATED_CONSTRUCTOR_OR_RETURNER
    if any(res.is_critical(a.type, crit) for a in branch.args):
        return BranchCategory.CRITICAL_PARAM_CONSUMER
    if any(res.encapsulates(a.type, crit, branch) for a in branch.args):
        return BranchCategory.ENCAPSULATED_PARAM_CONSUMER
    if ret in BOOLEAN_TYPES:
        return BranchCategory.BOOLEAN_RETURNER
    return BranchCategory.OTHER


def _contributors(rec: MethodRecord, target: Slot) -> Tuple[int, ...]:
    return tuple(sorted({e.src.index for e in rec.polluted_position if e.dst == target and e.src.kind == "param"}))


def objectives_for(branch: MethodRecord, category: BranchCategory, rule: VulnerabilityRule,
                   resolver: Optional[TypeResolver] = None) -> Tuple[Objective, ...]:
    """Analysis targets and their contributing parameters, per category."""
    res = _resolver(rule, resolver)
    crit = rule.critical_types
    out: List[Objective] = []
    if category is BranchCategory.CRITICAL_CONSTRUCTOR_OR_RETURNER:
        out.append(Objective(RETURN, None, _contributors(branch, RETURN)))
    elif category is BranchCategory.ENCAPSULATED_CONSTRUCTOR_OR_RETURNER:
        for m in res.critical_members(branch.return_type or "", crit, branch):
            if branch.is_constructor:
                out.append(Objective(member(m), m, _contributors(branch, member(m))))
            else:
                out.append(Objective(RETURN, m, _contributors(branch, RETURN)))
    elif category is BranchCategory.CRITICAL_PARAM_CONSUMER:
        for j, a in enumerate(branch.args):
            if res.is_critical(a.type, crit):
                contrib = tuple(i for i in _contributors(branch, param(j)) if i != j)
                if contrib:
                    out.append(Objective(param(j), None, contrib))
    elif category is BranchCategory.ENCAPSULATED_PARAM_CONSUMER:
        for j, a in enumerate(branch.args):
            for m in res.critical_members(a.type, crit, branch):
                contrib = tuple(i for i in _contributors(branch, param(j)) if i != j)
                if contrib:
                    out.append(Objective(param(j), m, contrib))
    return tuple(out)


def guard_params_for(branch: MethodRecord, rule: VulnerabilityRule,
                     resolver: Optional[TypeResolver] = None) -> Tuple[int, ...]:
    res = _resolver(rule, resolver)
    crit = rule.critical_types
    return tuple(i for i, a in enumerate(branch.args)
                 if res.is_critical(a.type, crit) or res.encapsulates(a.type, crit, branch))


# ---------------------------------------------------------------------------
# Analysis

def _conservative(objectives: Iterable[Objective], reason: str) -> Tuple[ParamFinding, ...]:
    return tuple(ParamFinding(i, True, o.via_member, o.target, reason) for o in objectives for i in o.params)


def _external_findings(branch: MethodRecord, objectives: Iterable[Objective]) -> Tuple[ParamFinding, ...]:
    entry = default_library().lookup(branch.signature)
    out = []
    for o in objectives:
        for i in range(len(branch.args)):
            if entry is None or entry.flows_from_arg(i):
                out.append(ParamFinding(i, True, o.via_member, o.target, "library method without a filtering effect"))
    return tuple(out)


def analyze_branch(pruned: BranchRecord, category: BranchCategory, rule: VulnerabilityRule,
                   backend: SolverBackend, resolver: Optional[TypeResolver] = None) -> BranchSemantics:
    """Category-specific semantics for one pruned branch tree.

    Backend failures degrade to conservative findings: every contributing
    parameter is reported as reaching its target unfiltered, and a boolean
    result is reported as carrying no guard.
    """
    mid = pruned.method_id
    base = dict(param_names=tuple(a.name for a in pruned.args), external=pruned.is_external)
    if category is BranchCategory.OTHER:
        return BranchSemantics(mid, category, dataflow=tuple(pruned.polluted_position),
                               rationale="data-flow relation taken from the summary", **base)
    if category is BranchCategory.BOOLEAN_RETURNER:
        gp = guard_params_for(pruned, rule, resolver)
        if pruned.is_external or not gp:
            return BranchSemantics(mid, category, guard=GuardFinding(False, (), "no analyzable guard"),
                                   targets=(RETURN,), **base)
        request = build_branch_request(pruned, category, rule, guard_params=gp)
        try:
            resp = backend.solve(request)
        except (BackendError, MalformedResponse, OracleUnsupportedConstruct) as exc:
            log.warning("branch analysis of %s degraded: %s", mid, exc)
            return BranchSemantics(mid, category, guard=GuardFinding(False, (), f"degraded: {exc}"),
                                   targets=(RETURN,), **base)
        guard = resp.guard or GuardFinding(False, (), "no guard finding returned")
        guarded = tuple(i for i in guard.guarded_params if 0 <= i < len(pruned.args))
        guard = replace(guard, guarded_params=guarded, guards_condition=guard.guards_condition and bool(guarded))
        return BranchSemantics(mid, category, guard=guard, rationale=guard.reason, targets=(RETURN,), **base)

    objectives = objectives_for(pruned, category, rule, resolver)
    targets = tuple(dict.fromkeys(o.target for o in objectives))
    if pruned.is_external:
        return BranchSemantics(mid, category, params=_external_findings(pruned, objectives),
                               rationale="library method", targets=targets, **base)
    request = build_branch_request(pruned, category, rule, objectives)
    try:
        resp = backend.solve(request)
    except (BackendError, MalformedResponse, OracleUnsupportedConstruct) as exc:
        log.warning("branch analysis of %s degraded: %s", mid, exc)
        return BranchSemantics(mid, category, params=_conservative(objectives, f"degraded: {exc}"),
                               rationale="backend failure; conservative findings", targets=targets, **base)
    got: Dict[Tuple[int, Slot, Optional[str]], ParamFinding] = {}
    for f in resp.findings:
        got.setdefault((f.param_index, f.target, f.via_member), f)
        got.setdefault((f.param_index, f.target, None), f)
    findings = []
    for o in objectives:
        for i in o.params:
            f = got.get((i, o.target, o.via_member)) or got.get((i, o.target, None))
            if f is None:
                f = ParamFinding(i, True, o.via_member, o.target, "no finding returned; assumed unfiltered")
            findings.append(replace(f, via_member=o.via_member, target=o.target))
    reasons = "; ".join(f.reason for f in findings if f.reason)
    return BranchSemantics(mid, category, params=tuple(findings), rationale=reasons,
                           internal_sources=tuple(resp.internal_sources), targets=targets, **base)


def branch_target(category: BranchCategory, branch: MethodRecord, rule: VulnerabilityRule,
                  resolver: Optional[TypeResolver] = None) -> Slot:
    """The slot pruning should keep data flow for."""
    objs = objectives_for(branch, category, rule, resolver) if category.per_parameter else ()
    return objs[0].target if objs else RETURN
