"""Flow-insensitive intraprocedural value propagation over
``{Param(i), Return, Member(name)}`` slots."""

from __future__ import annotations

from collections import defaultdict
from typing import Dict, List, Optional, Set, Tuple

from ..library import LibraryTable, default_library
from ..summary import RETURN, Slot, TaintEdge, member, param
from . import syntax as s
from .callgraph import Scope

# Graph nodes: ("param", i) | ("local", name) | ("member", name) | ("ret",)
GNode = Tuple


class _Flow:
    def __init__(self, scope: Scope, library: LibraryTable):
        self.scope = scope
        self.library = library
        self.param_index = {p.name: i for i, p in enumerate(scope.method.params)}
        self.edges: Dict[GNode, Set[GNode]] = defaultdict(set)
        self.written: Set[GNode] = set()

    def var_node(self, name: str) -> Optional[GNode]:
        if name in self.scope.locals:
            return ("local", name)
        if name in self.param_index:
            return ("param", self.param_index[name])
        if name in self.scope.fields:
            return ("member", name)
        return None

    def base_node(self, expr: s.Expr) -> Optional[GNode]:
        """Variable node that owns the object ``expr`` denotes, if any."""
        if isinstance(expr, s.Name):
            return self.var_node(expr.id)
        if isinstance(expr, s.FieldAccess):
            if isinstance(expr.target, s.This):
                return ("member", expr.name)
            return self.base_node(expr.target)
        return None

    def add(self, sources: Set[GNode], dst: GNode) -> None:
        for src in sources:
            if src != dst:
                self.edges[src].add(dst)
        self.written.add(dst)

    def sources(self, expr: Optional[s.Expr]) -> Set[GNode]:
        if expr is None or isinstance(expr, (s.Literal, s.This)):
            return set()
        if isinstance(expr, s.Name):
            node = self.var_node(expr.id)
            return {node} if node else set()
        if isinstance(expr, s.FieldAccess):
            if isinstance(expr.target, s.This):
                return {("member", expr.name)}
            return self.sources(expr.target)
        if isinstance(expr, s.Binary):
            if expr.op in ("+", "-", "*", "/", "%"):
                return self.sources(expr.left) | self.sources(expr.right)
            self.sources(expr.left)
            self.sources(expr.right)
            return set()
        if isinstance(expr, s.Unary):
            inner = self.sources(expr.operand)
            return inner if expr.op == "-" else set()
        if isinstance(expr, (s.Call, s.New)):
            return self.call_sources(expr)
        return set()

    def call_sources(self, call) -> Set[GNode]:
        arg_sources = [self.sources(a) for a in call.args]
        recv_sources: Set[GNode] = set()
        recv_node = None
        if isinstance(call, s.Call) and call.target is not None and self.scope.static_ref(call.target) is None:
            recv_sources = self.sources(call.target)
            recv_node = self.base_node(call.target)
        target = self.scope.resolve(call)
        entry = None if target.user is not None else self.library.lookup(target.signature)
        if entry is None:
            out = set(recv_sources)
            for a in arg_sources:
                out |= a
            return out
        out = set(recv_sources) if entry.flows_from_receiver() else set()
        for i, a in enumerate(arg_sources):
            if entry.flows_from_arg(i):
                out |= a
        if recv_node is not None and entry.mutates:
            absorbed: Set[GNode] = set()
            for i, a in enumerate(arg_sources):
                if "args" in entry.mutates or f"arg{i}" in entry.mutates:
                    absorbed |= a
            self.add(absorbed, recv_node)
        return out

    def statement(self, st: s.Stmt) -> None:
        if isinstance(st, s.Block):
            for x in st.body:
                self.statement(x)
        elif isinstance(st, s.LocalVar):
            self.add(self.sources(st.init), ("local", st.name))
        elif isinstance(st, s.Assign):
            value = self.sources(st.value)
            dst = self.base_node(st.target)
            if dst is not None:
                self.add(value, dst)
        elif isinstance(st, s.ExprStmt):
            self.sources(st.expr)
        elif isinstance(st, s.If):
            self.sources(st.cond)
            self.statement(st.then)
            if st.orelse is not None:
                self.statement(st.orelse)
        elif isinstance(st, s.Return):
            self.add(self.sources(st.value), ("ret",))
        elif isinstance(st, s.Throw):
            self.sources(st.value)

    def reachable(self, start: GNode) -> Set[GNode]:
        seen, stack = set(), [start]
        while stack:
            n = stack.pop()
            for m in self.edges.get(n, ()):
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return seen


def _slot(node: GNode) -> Optional[Slot]:
    if node[0] == "param":
        return param(node[1])
    if node[0] == "member":
        return member(node[1])
    if node[0] == "ret":
        return RETURN
    return None


def _slot_key(slot: Slot):
    return ({"param": 0, "member": 1, "return": 2}[slot.kind], slot.index, slot.name)


def method_taint(program: s.MiniProgram, method: s.MethodDecl,
                 library: Optional[LibraryTable] = None) -> List[TaintEdge]:
    flow = _Flow(Scope(program, method, library), library or default_library())
    flow.statement(method.body)
    origins = [("param", i) for i in range(len(method.params))]
    origins += sorted({n for n in list(flow.edges) if n[0] == "member"})
    edges = set()
    for origin in origins:
        for dst in flow.reachable(origin):
            if dst == origin or dst not in flow.written:
                continue
            target = _slot(dst)
            if target is not None:
                edges.add(TaintEdge(_slot(origin), target))
    return sorted(edges, key=lambda e: (_slot_key(e.src), _slot_key(e.dst)))


def compute_taint(program: s.MiniProgram, method_id: str,
                  library: Optional[LibraryTable] = None) -> List[TaintEdge]:
    return method_taint(program, program.method(method_id), library)


# ---------------------------------------------------------------------------
# Flow queries over a single summary record

def record_program(rec) -> Tuple[s.MiniProgram, s.MethodDecl]:
    """Parse a MethodRecord's code into a one-class program (fields from its
    memberVariables) so that scopes resolve as in the original source."""
    from .parser import parse_methods

    decls = parse_methods(rec.code, rec.class_name)
    if not decls:
        raise ValueError(f"no method found in code of {rec.method_id}")
    fields = tuple(s.FieldDecl(0, 0, v.type, v.name, None) for v in rec.member_variables)
    cls = s.ClassDecl(0, len(rec.code), rec.class_name, fields, tuple(decls))
    return s.MiniProgram((cls,), rec.code), decls[0]


class _MarkedFlow(_Flow):
    """Flow graph where selected call results are origin nodes ``("call", name)``."""

    def __init__(self, scope: Scope, library: LibraryTable, marked):
        super().__init__(scope, library)
        self.marked = marked  # span -> label

    def call_sources(self, call) -> Set[GNode]:
        out = super().call_sources(call)
        label = self.marked.get((call.start, call.end))
        if label is not None:
            node = ("call", label)
            out = out | {node}
            for a in call.args:  # the callee may write into its arguments
                base = self.base_node(a)
                if base is not None:
                    self.add({node}, base)
        return out


def _target_node(target: Slot) -> GNode:
    if target.kind == "param":
        return ("param", target.index)
    if target.kind == "member":
        return ("member", target.name)
    return ("ret",)


def _find_call(program: s.MiniProgram, method: s.MethodDecl, snippet: str):
    want = " ".join(snippet.split())
    for node in s.walk(method.body):
        if isinstance(node, (s.Call, s.New)) and " ".join(program.code(node).split()) == want:
            return node
    return None


def relevant_names(rec, target: Slot, library: Optional[LibraryTable] = None) -> Set[str]:
    """Variable names in ``rec`` whose values can flow into ``target``."""
    program, method = record_program(rec)
    flow = _Flow(Scope(program, method, library), library or default_library())
    flow.statement(method.body)
    goal = _target_node(target)
    names: Set[str] = set()
    params = [p.name for p in method.params]
    for node in list(flow.edges) + [goal]:
        if node == goal or goal in flow.reachable(node):
            if node[0] == "param":
                names.add(params[node[1]])
            elif node[0] in ("local", "member"):
                names.add(node[1])
    return names


def call_feeds(rec, snippet: str, target: Slot, library: Optional[LibraryTable] = None) -> bool:
    """Whether the result of the call ``snippet`` inside ``rec`` reaches ``target``."""
    program, method = record_program(rec)
    call = _find_call(program, method, snippet)
    if call is None:
        raise ValueError(f"call {snippet!r} not found in {rec.method_id}")
    flow = _MarkedFlow(Scope(program, method, library), library or default_library(),
                       {(call.start, call.end): "target"})
    flow.statement(method.body)
    return _target_node(target) in flow.reachable(("call", "target"))


def caller_flows(rec, call_site: str, library: Optional[LibraryTable] = None) -> Dict[str, Set[int]]:
    """For each method called inside ``rec``, the argument positions of the
    call ``call_site`` that its result (or argument side effects) can feed.
    Keys are method names."""
    program, method = record_program(rec)
    site = _find_call(program, method, call_site)
    if site is None:
        raise ValueError(f"call {call_site!r} not found in {rec.method_id}")
    marked = {}
    for node in s.walk(method.body):
        if isinstance(node, s.Call) and node is not site:
            marked[(node.start, node.end)] = node.name
        elif isinstance(node, s.New) and node is not site:
            marked[(node.start, node.end)] = "<init>:" + node.type
    flow = _MarkedFlow(Scope(program, method, library), library or default_library(), marked)
    flow.statement(method.body)
    out: Dict[str, Set[int]] = defaultdict(set)
    for k, arg in enumerate(site.args):
        srcs = flow.sources(arg)
        for label in set(marked.values()):
            origin = ("call", label)
            if origin in srcs or srcs & flow.reachable(origin):
                out[label].add(k)
    return dict(out)
