"""Call graph over a parsed mini-language program, and source-to-sink main
path enumeration."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from ..errors import AmbiguousCall
from ..library import LibraryTable, default_library, signature_matches
from ..summary import ArgBinding
from . import syntax as s


@dataclass(frozen=True)
class CallEdge:
    caller: str
    callee: str  # user method id, or library signature when external
    call_site: str
    arg_bindings: Tuple[ArgBinding, ...]
    external: bool
    invoker: str = ""
    start: int = 0
    end: int = 0


@dataclass(frozen=True)
class CallGraph:
    nodes: Tuple[str, ...]
    edges: Tuple[CallEdge, ...]

    def edges_from(self, node: str) -> List[CallEdge]:
        return [e for e in self.edges if e.caller == node]

    def successors(self, node: str) -> List[str]:
        seen: List[str] = []
        for e in self.edges_from(node):
            if not e.external and e.callee not in seen:
                seen.append(e.callee)
        return seen


class Scope:
    """Static typing environment for a single method body."""

    def __init__(self, program: s.MiniProgram, method: s.MethodDecl, library: Optional[LibraryTable] = None):
        self.program = program
        self.method = method
        self.library = library or default_library()
        self.cls = program.class_decl(method.class_name)
        self.params = {p.name: p.type for p in method.params}
        self.locals: Dict[str, str] = {}
        for node in s.walk(method.body):
            if isinstance(node, s.LocalVar):
                self.locals.setdefault(node.name, node.type)
        self.fields = {f.name: f.type for f in self.cls.fields} if self.cls else {}

    def var_type(self, name: str) -> Optional[str]:
        if name in self.locals:
            return self.locals[name]
        if name in self.params:
            return self.params[name]
        return self.fields.get(name)

    def is_variable(self, name: str) -> bool:
        return name in self.locals or name in self.params or name in self.fields

    def is_member(self, name: str) -> bool:
        return name in self.fields and name not in self.locals and name not in self.params

    def user_method(self, class_name: str, name: str) -> Optional[s.MethodDecl]:
        cls = self.program.class_decl(class_name)
        if cls is None:
            return None
        found = [m for m in cls.methods if m.name == name and not m.is_constructor]
        if len(found) > 1:
            raise AmbiguousCall(f"{class_name}.{name} resolves to {len(found)} declarations")
        return found[0] if found else None

    def user_ctor(self, class_name: str) -> Optional[s.MethodDecl]:
        cls = self.program.class_decl(class_name)
        if cls is None:
            return None
        found = [m for m in cls.methods if m.is_constructor]
        if len(found) > 1:
            raise AmbiguousCall(f"{class_name} has {len(found)} constructors")
        return found[0] if found else None

    def static_ref(self, expr: s.Expr) -> Optional[str]:
        """Class name when ``expr`` names a class rather than a value."""
        if isinstance(expr, s.Name) and not self.is_variable(expr.id):
            if self.program.class_decl(expr.id) is not None or expr.id[:1].isupper():
                return expr.id
        return None

    def type_of(self, expr: s.Expr) -> Optional[str]:
        if isinstance(expr, s.Literal):
            return {"string": "String", "char": "char", "bool": "boolean", "null": None}.get(
                expr.kind, "double" if isinstance(expr.value, float) else "int")
        if isinstance(expr, s.Name):
            return self.var_type(expr.id)
        if isinstance(expr, s.This):
            return self.method.class_name
        if isinstance(expr, s.FieldAccess):
            owner = self.type_of(expr.target) if not isinstance(expr.target, s.This) else self.method.class_name
            cls = self.program.class_decl(owner) if owner else None
            if cls is not None:
                for f in cls.fields:
                    if f.name == expr.name:
                        return f.type
            return None
        if isinstance(expr, s.New):
            return expr.type
        if isinstance(expr, s.Call):
            target = self.resolve(expr)
            if target.user is not None:
                return target.user.return_type
            entry = self.library.lookup(target.signature)
            return entry.returns if entry else None
        if isinstance(expr, s.Binary):
            if expr.op == "+":
                lt, rt = self.type_of(expr.left), self.type_of(expr.right)
                return "String" if "String" in (lt, rt) else lt
            if expr.op in ("-", "*", "/", "%"):
                return self.type_of(expr.left)
            return "boolean"
        if isinstance(expr, s.Unary):
            return "boolean" if expr.op == "!" else self.type_of(expr.operand)
        return None

    def resolve(self, call) -> "Resolved":
        if isinstance(call, s.New):
            ctor = self.user_ctor(call.type)
            return Resolved(ctor, f"{call.type}.<init>", "")
        target = call.target
        if target is None or isinstance(target, s.This):
            m = self.user_method(self.method.class_name, call.name)
            if m is not None:
                return Resolved(m, m.id, "")
            return Resolved(None, call.name, "")
        invoker = self.program.source[target.start:target.end] if self.program.source else ""
        cls_name = self.static_ref(target)
        if cls_name is None:
            cls_name = self.type_of(target)
        if cls_name is not None:
            m = self.user_method(cls_name, call.name)
            if m is not None:
                return Resolved(m, m.id, invoker)
            return Resolved(None, f"{cls_name}.{call.name}", invoker)
        return Resolved(None, f"?.{call.name}", invoker)


@dataclass(frozen=True)
class Resolved:
    user: Optional[s.MethodDecl]
    signature: str
    invoker: str


def call_sites(method: s.MethodDecl) -> Iterator:
    """Call and constructor nodes in source order, skipping thrown exception objects."""
    thrown = {id(st.value) for st in s.walk(method.body) if isinstance(st, s.Throw)}
    for node in s.walk(method.body):
        if isinstance(node, (s.Call, s.New)) and id(node) not in thrown:
            yield node


def build_call_graph(program: s.MiniProgram, library: Optional[LibraryTable] = None) -> CallGraph:
    nodes, edges = [], []
    for method in program.methods():
        nodes.append(method.id)
        scope = Scope(program, method, library)
        for call in call_sites(method):
            target = scope.resolve(call)
            bindings = tuple(ArgBinding(program.code(a), i) for i, a in enumerate(call.args))
            edges.append(CallEdge(
                caller=method.id,
                callee=target.user.id if target.user is not None else target.signature,
                call_site=program.code(call),
                arg_bindings=bindings,
                external=target.user is None,
                invoker=target.invoker,
                start=call.start,
                end=call.end,
            ))
    return CallGraph(tuple(nodes), tuple(edges))


# ---------------------------------------------------------------------------
# Main paths

def _matches_any(patterns: Sequence[str], signature: str) -> bool:
    return any(signature_matches(p, signature) for p in patterns)


def source_methods(graph: CallGraph, config) -> List[str]:
    out = []
    for node in graph.nodes:
        if any(_matches_any([e.pattern], node) for e in config.entries):
            out.append(node)
        elif any(e.external and _matches_any(config.sources, e.callee) for e in graph.edges_from(node)):
            out.append(node)
    return out


def sink_sites(graph: CallGraph, config, node: str) -> List[Tuple[CallEdge, object]]:
    out = []
    for e in graph.edges_from(node):
        if not e.external:
            continue
        for sink in config.sinks:
            if signature_matches(sink.pattern, e.callee):
                out.append((e, sink))
                break
    return out


def extract_main_paths(graph: CallGraph, config, max_length: int) -> List[Tuple[str, ...]]:
    """Depth-first enumeration of simple source-to-sink paths of length
    ``2..max_length``; output is sorted lexicographically by method ids."""
    if max_length < 2:
        raise ValueError("max_length must be >= 2")
    if not config.sinks:
        return []
    sinks = {n for n in graph.nodes if sink_sites(graph, config, n)}
    found = set()

    def dfs(path: List[str]) -> None:
        node = path[-1]
        if len(path) >= 2 and node in sinks:
            found.add(tuple(path))
        if len(path) == max_length:
            return
        for nxt in sorted(graph.successors(node)):
            if nxt not in path:
                path.append(nxt)
                dfs(path)
                path.pop()

    for start in sorted(source_methods(graph, config)):
        dfs([start])
    return sorted(found)
