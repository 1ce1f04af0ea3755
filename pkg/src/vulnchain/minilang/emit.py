"""Source/sink configuration and Code Information Summary emission."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from ..library import LibraryTable, default_library, signature_matches
from ..summary import (
    BranchRecord, CallChain, CodeInformationSummary, MethodRecord, SinkCall, TypeDecl,
    TypeResolver, Variable, validate_chain,
)
from . import syntax as s
from .callgraph import CallEdge, CallGraph, Scope, build_call_graph, extract_main_paths, sink_sites
from .parser import parse_program
from .taint import method_taint

SOURCE_SUFFIXES = (".mj", ".java")


@dataclass(frozen=True)
class SinkSpec:
    pattern: str
    rule: str
    arg_indices: Tuple[int, ...]


@dataclass(frozen=True)
class EntrySpec:
    """A method whose own parameters are attacker-controlled (e.g. a handler)."""

    pattern: str
    tainted_args: Tuple[int, ...]


@dataclass(frozen=True)
class SourceSinkConfig:
    sources: Tuple[str, ...]
    sinks: Tuple[SinkSpec, ...]
    entries: Tuple[EntrySpec, ...] = ()

    def validate(self, known_rules: Optional[Iterable[str]] = None) -> None:
        if any(not p for p in self.sources):
            raise ValueError("source patterns must be non-empty")
        known = set(known_rules) if known_rules is not None else None
        for sink in self.sinks:
            if not sink.pattern:
                raise ValueError("sink patterns must be non-empty")
            if not sink.arg_indices:
                raise ValueError(f"sink {sink.pattern} declares no argument indices")
            if known is not None and sink.rule not in known:
                raise ValueError(f"sink {sink.pattern} references unknown rule {sink.rule!r}")
        for e in self.entries:
            if not e.pattern:
                raise ValueError("entry patterns must be non-empty")


def config_from_dict(doc: Mapping, known_rules: Optional[Iterable[str]] = None) -> SourceSinkConfig:
    cfg = SourceSinkConfig(
        sources=tuple(doc.get("sources", ())),
        sinks=tuple(SinkSpec(x["pattern"], x["rule"], tuple(x["argIndices"])) for x in doc.get("sinks", ())),
        entries=tuple(EntrySpec(x["pattern"], tuple(x.get("taintedArgs", ()))) for x in doc.get("entries", ())),
    )
    cfg.validate(known_rules)
    return cfg


def load_config(path: Union[str, Path], known_rules: Optional[Iterable[str]] = None) -> SourceSinkConfig:
    return config_from_dict(json.loads(Path(path).read_text(encoding="utf-8")), known_rules)


def read_sources(src: Union[str, Path]) -> str:
    """Concatenated text of every source file under ``src`` (or the file itself)."""
    p = Path(src)
    if p.is_file():
        return p.read_text(encoding="utf-8")
    files = sorted(f for f in p.rglob("*") if f.suffix in SOURCE_SUFFIXES and f.is_file())
    return "\n".join(f.read_text(encoding="utf-8") for f in files)


# ---------------------------------------------------------------------------

class _Emitter:
    def __init__(self, program: s.MiniProgram, graph: CallGraph, config: SourceSinkConfig,
                 depth_limit: int, library: LibraryTable):
        self.program = program
        self.graph = graph
        self.config = config
        self.depth_limit = depth_limit
        self.library = library
        self.user_ids = set(graph.nodes)
        types = {c.name: tuple(Variable(f.name, f.type) for f in c.fields) for c in program.classes}
        self.resolver = TypeResolver(types=types, known_types=library.known_types)

    def signature_text(self, m: s.MethodDecl) -> str:
        return self.program.source[m.start:m.header_end].strip()

    def members(self, m: s.MethodDecl) -> Tuple[Variable, ...]:
        cls = self.program.class_decl(m.class_name)
        return tuple(Variable(f.name, f.type) for f in cls.fields) if cls else ()

    def user_fields(self, m: s.MethodDecl, edge: Optional[CallEdge]) -> dict:
        args = tuple(Variable(p.name, p.type) for p in m.params)
        for a in args:
            self.resolver.check_known(a.type, context=f"parameter {a.name} of {m.id}")
        bindings = tuple(b for b in edge.arg_bindings if b.formal_index < len(args)) if edge else ()
        return dict(
            class_name=m.class_name,
            signature=self.signature_text(m),
            code=self.program.code(m),
            is_static=m.is_static,
            is_constructor=m.is_constructor,
            args=args,
            snippet_of_called=edge.call_site if edge else "",
            invoker_of_called=edge.invoker if edge else "",
            member_variables=self.members(m),
            pass_relationship=bindings,
            polluted_position=tuple(method_taint(self.program, m, self.library)),
        )

    def external_fields(self, edge: CallEdge) -> dict:
        caller = self.program.method(edge.caller)
        scope = Scope(self.program, caller, self.library)
        call = self._call_node(caller, edge)
        args = []
        for i, a in enumerate(call.args if call is not None else ()):
            t = scope.type_of(a) or "Object"
            args.append(Variable(f"arg{i}", t))
        owner, _, _ = edge.callee.rpartition(".")
        return dict(
            class_name=owner.lstrip("?"),
            signature=edge.callee,
            code="",
            is_static=bool(owner) and owner != "?" and not edge.invoker,
            is_constructor=edge.callee.endswith(".<init>"),
            args=tuple(args),
            snippet_of_called=edge.call_site,
            invoker_of_called=edge.invoker,
            pass_relationship=edge.arg_bindings,
        )

    @staticmethod
    def _call_node(method: s.MethodDecl, edge: CallEdge):
        for node in s.walk(method.body):
            if isinstance(node, (s.Call, s.New)) and node.start == edge.start and node.end == edge.end:
                return node
        return None

    def distinct_callees(self, method_id: str) -> List[CallEdge]:
        seen, out = set(), []
        for e in self.graph.edges_from(method_id):
            if e.callee not in seen:
                seen.add(e.callee)
                out.append(e)
        return out

    def branch(self, edge: CallEdge, depth: int, on_path: Tuple[str, ...]) -> BranchRecord:
        if edge.external:
            return BranchRecord(depth=depth, **self.external_fields(edge))
        m = self.program.method(edge.callee)
        children = []
        if depth < self.depth_limit:
            for e in self.distinct_callees(m.id):
                if e.callee in on_path or e.callee == m.id:
                    continue  # cut the cycle
                children.append(self.branch(e, depth + 1, on_path + (m.id,)))
        return BranchRecord(children=tuple(children), depth=depth, **self.user_fields(m, edge))

    def chain(self, path: Sequence[str], sink_edge: CallEdge, sink: SinkSpec, chain_id: str) -> CallChain:
        records = []
        for i, mid in enumerate(path):
            m = self.program.method(mid)
            edge = None
            if i > 0:
                edge = next(e for e in self.graph.edges_from(path[i - 1]) if e.callee == mid)
            nxt = path[i + 1] if i + 1 < len(path) else None
            branchs = []
            for e in self.distinct_callees(mid):
                if e.callee == nxt or e.callee == mid:
                    continue
                if nxt is None and e.callee == sink_edge.callee:
                    continue
                branchs.append(self.branch(e, 0, (mid,)))
            fields = self.user_fields(m, edge)
            sink_call = None
            if nxt is None:
                exprs = tuple(b.actual_expression for b in sink_edge.arg_bindings
                              if b.formal_index in sink.arg_indices)
                sink_call = SinkCall(sink_edge.callee, sink_edge.call_site, tuple(sink.arg_indices), exprs)
            records.append(MethodRecord(branchs=tuple(branchs), sink_call=sink_call, **fields))
        tainted: Tuple[int, ...] = ()
        for entry in self.config.entries:
            if signature_matches(entry.pattern, path[0]):
                tainted = tuple(sorted(set(tainted) | set(entry.tainted_args)))
        chain = CallChain(chain_id, sink.rule, tuple(records), tainted)
        validate_chain(chain)
        return chain


def emit_summary(program: s.MiniProgram, paths: Sequence[Sequence[str]], config: SourceSinkConfig,
                 branch_depth_limit: int = 3, library: Optional[LibraryTable] = None) -> CodeInformationSummary:
    """One call chain per (path, sink call site in the path's last method)."""
    library = library or default_library()
    graph = build_call_graph(program, library)
    em = _Emitter(program, graph, config, branch_depth_limit, library)
    chains = []
    for path in paths:
        sites = sink_sites(graph, config, path[-1])
        base = ">".join(path)
        for k, (edge, sink) in enumerate(sites):
            cid = base if len(sites) == 1 else f"{base}@{k}"
            chains.append(em.chain(path, edge, sink, cid))
    types = tuple(TypeDecl(c.name, tuple(Variable(f.name, f.type) for f in c.fields))
                  for c in sorted(program.classes, key=lambda c: c.name))
    return CodeInformationSummary(chains=tuple(chains), types=types)


def generate_summary(source_text: str, config: SourceSinkConfig, branch_depth_limit: int = 3,
                     max_chain_length: int = 8, library: Optional[LibraryTable] = None) -> CodeInformationSummary:
    """Parse, build the call graph, enumerate main paths and emit a summary."""
    library = library or default_library()
    program = parse_program(source_text)
    graph = build_call_graph(program, library)
    paths = extract_main_paths(graph, config, max_chain_length)
    return emit_summary(program, paths, config, branch_depth_limit, library)
