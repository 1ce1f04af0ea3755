"""Code Information Summary: the JSON intermediate representation handed from
the frontend to the constraint-solving pipeline.

Key names on the wire follow the published schema verbatim (``branchs`` and
``passRelationShip`` included).  All model objects are frozen dataclasses
built from tuples, so structural equality is plain ``==``.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

from .errors import ChainError, SchemaError, SummarySyntaxError, UnknownType
from .library import default_library

log = logging.getLogger(__name__)

GENERATOR_VERSION = "0.1.0"


# ---------------------------------------------------------------------------
# Slots and taint edges

@dataclass(frozen=True, order=True)
class Slot:
    """One of ``Param(index)``, ``Return`` or ``Member(name)``."""

    kind: str  # "param" | "return" | "member"
    index: int = -1
    name: str = ""

    def __str__(self) -> str:
        if self.kind == "param":
            return f"P{self.index}"
        if self.kind == "member":
            return f"M:{self.name}"
        return "RET"

    @classmethod
    def parse(cls, text: str) -> "Slot":
        text = text.strip()
        if text == "RET":
            return RETURN
        if text.startswith("M:") and len(text) > 2:
            return member(text[2:])
        m = re.fullmatch(r"P(\d+)", text)
        if m:
            return param(int(m.group(1)))
        raise ValueError(f"bad slot {text!r}")


def param(index: int) -> Slot:
    return Slot("param", index=index)


def member(name: str) -> Slot:
    return Slot("member", name=name)


RETURN = Slot("return")


@dataclass(frozen=True, order=True)
class TaintEdge:
    src: Slot
    dst: Slot

    def __str__(self) -> str:
        return f"{self.src}->{self.dst}"

    @classmethod
    def parse(cls, text: str) -> "TaintEdge":
        left, sep, right = text.partition("->")
        if not sep:
            raise ValueError(f"bad taint edge {text!r}")
        edge = cls(Slot.parse(left), Slot.parse(right))
        if edge.src == edge.dst:
            raise ValueError(f"self edge {text!r}")
        return edge


# ---------------------------------------------------------------------------
# Records

@dataclass(frozen=True)
class Variable:
    name: str
    type: str


@dataclass(frozen=True)
class ArgBinding:
    actual_expression: str
    formal_index: int


@dataclass(frozen=True)
class SinkCall:
    """Library sink invoked by the last user method of a chain."""

    signature: str
    snippet: str
    arg_indices: Tuple[int, ...]
    arg_expressions: Tuple[str, ...] = ()


_DEF_RE = re.compile(
    r"^\s*(?:(?:public|private|protected|static|final|synchronized|abstract)\s+)*"
    r"(?:(?P<ret>[\w.\[\]]+)\s+)?(?P<name>[\w<>$]+)\s*\("
)


@dataclass(frozen=True)
class MethodRecord:
    class_name: str
    signature: str  # serialized as "def"
    code: str = ""
    is_static: bool = False
    is_constructor: bool = False
    args: Tuple[Variable, ...] = ()
    branchs: Tuple["BranchRecord", ...] = ()
    snippet_of_called: str = ""
    invoker_of_called: str = ""
    member_variables: Tuple[Variable, ...] = ()
    pass_relationship: Tuple[ArgBinding, ...] = ()
    polluted_position: Tuple[TaintEdge, ...] = ()
    sink_call: Optional[SinkCall] = None

    @property
    def is_external(self) -> bool:
        return not self.code

    @property
    def name(self) -> str:
        m = _DEF_RE.match(self.signature)
        if m:
            return m.group("name")
        return self.signature.rsplit(".", 1)[-1]

    @property
    def method_id(self) -> str:
        if self.is_external:
            return self.signature
        name = "<init>" if self.is_constructor else self.name
        return f"{self.class_name}.{name}"

    @property
    def return_type(self) -> Optional[str]:
        if self.is_constructor:
            return self.class_name
        m = _DEF_RE.match(self.signature)
        if m and m.group("ret"):
            return m.group("ret")
        if self.is_external:
            entry = default_library().lookup(self.signature)
            if entry is not None:
                return entry.returns
        return None

    @property
    def body(self) -> str:
        """Source text after the signature (used for token-occurrence checks)."""
        i = self.code.find("{")
        return self.code[i:] if i >= 0 else self.code

    def arg_index(self, name: str) -> Optional[int]:
        for i, a in enumerate(self.args):
            if a.name == name:
                return i
        return None


@dataclass(frozen=True)
class BranchRecord(MethodRecord):
    children: Tuple["BranchRecord", ...] = ()
    depth: int = 0

    def walk(self) -> Iterator["BranchRecord"]:
        yield self
        for c in self.children:
            yield from c.walk()

    def bfs(self) -> List["BranchRecord"]:
        order, frontier = [], [self]
        while frontier:
            order.extend(frontier)
            frontier = [c for n in frontier for c in n.children]
        return order

    def size(self) -> int:
        return sum(1 for _ in self.walk())


@dataclass(frozen=True)
class TypeDecl:
    name: str
    members: Tuple[Variable, ...]


@dataclass(frozen=True)
class CallChain:
    id: str
    rule: str
    methods: Tuple[MethodRecord, ...]
    entry_tainted_args: Tuple[int, ...] = ()

    @property
    def source(self) -> MethodRecord:
        return self.methods[0]


@dataclass(frozen=True)
class CodeInformationSummary:
    chains: Tuple[CallChain, ...]
    source_language: str = "minilang"
    generator_version: str = GENERATOR_VERSION
    types: Tuple[TypeDecl, ...] = ()

    def type_table(self) -> Dict[str, Tuple[Variable, ...]]:
        return {t.name: t.members for t in self.types}

    def chain(self, chain_id: str) -> CallChain:
        for c in self.chains:
            if c.id == chain_id:
                return c
        raise KeyError(chain_id)


# ---------------------------------------------------------------------------
# Validation

def validate_chain(chain: CallChain) -> None:
    if len(chain.methods) < 2:
        raise ChainError(chain.id, None, f"a chain needs a source and a sink, got {len(chain.methods)} method(s)")
    for i in range(1, len(chain.methods)):
        caller, callee = chain.methods[i - 1], chain.methods[i]
        snippet = callee.snippet_of_called
        if not snippet:
            raise ChainError(chain.id, i, "snippetOfCalled is empty")
        if snippet not in caller.code:
            raise ChainError(chain.id, i, f"snippetOfCalled {snippet!r} does not occur in caller code")
    last = chain.methods[-1]
    if last.sink_call is not None and last.sink_call.snippet not in last.code:
        raise ChainError(chain.id, len(chain.methods) - 1, "sink call snippet does not occur in sink method code")


def _validate_record(rec: MethodRecord, path: str) -> None:
    names = [a.name for a in rec.args]
    if len(set(names)) != len(names):
        raise SchemaError(f"{path}.args", f"duplicate argument names {names}")
    for j, b in enumerate(rec.pass_relationship):
        if not 0 <= b.formal_index < len(rec.args):
            raise SchemaError(f"{path}.passRelationShip[{j}]",
                              f"formalIndex {b.formal_index} out of bounds for {len(rec.args)} args")


def _validate_tree(node: BranchRecord, path: str, seen: Tuple[str, ...]) -> None:
    _validate_record(node, path)
    if node.method_id in seen:
        raise SchemaError(path, f"cycle: {node.method_id} already on path {list(seen)}")
    for k, child in enumerate(node.children):
        cpath = f"{path}.children[{k}]"
        if child.depth != node.depth + 1:
            raise SchemaError(f"{cpath}.depth", f"expected {node.depth + 1}, got {child.depth}")
        _validate_tree(child, cpath, seen + (node.method_id,))


# ---------------------------------------------------------------------------
# Parsing

_RECORD_KEYS = {
    "className", "def", "code", "isStatic", "isConstructor", "args", "branchs",
    "snippetOfCalled", "invokerOfCalled", "memberVariables", "passRelationShip",
    "pollutedPosition", "sinkCall",
}
_BRANCH_KEYS = _RECORD_KEYS | {"children", "depth"}


class _Reader:
    def __init__(self, strict: bool):
        self.strict = strict

    def obj(self, value: Any, path: str, allowed: Iterable[str], required: Iterable[str] = ()) -> Mapping[str, Any]:
        if not isinstance(value, dict):
            raise SchemaError(path, f"expected object, got {type(value).__name__}")
        allowed = set(allowed)
        for key in value:
            if key not in allowed:
                if self.strict:
                    raise SchemaError(f"{path}.{key}", "unknown field")
                log.warning("%s.%s: ignoring unknown field", path, key)
        for key in required:
            if key not in value:
                raise SchemaError(f"{path}.{key}", "missing required field")
        return value

    @staticmethod
    def typed(value: Any, kind: type, path: str) -> Any:
        if kind is int and isinstance(value, bool):
            raise SchemaError(path, "expected integer, got boolean")
        if not isinstance(value, kind):
            raise SchemaError(path, f"expected {kind.__name__}, got {type(value).__name__}")
        return value

    def list(self, value: Any, path: str) -> List[Any]:
        return self.typed(value, list, path)

    def variables(self, value: Any, path: str) -> Tuple[Variable, ...]:
        out = []
        for i, item in enumerate(self.list(value, path)):
            p = f"{path}[{i}]"
            o = self.obj(item, p, ("name", "type"), ("name", "type"))
            out.append(Variable(self.typed(o["name"], str, f"{p}.name"), self.typed(o["type"], str, f"{p}.type")))
        return tuple(out)

    def record(self, value: Any, path: str, branch: bool = False) -> MethodRecord:
        o = self.obj(value, path, _BRANCH_KEYS if branch else _RECORD_KEYS, ("className", "def"))
        s = lambda k: self.typed(o.get(k, ""), str, f"{path}.{k}")  # noqa: E731
        b = lambda k: self.typed(o.get(k, False), bool, f"{path}.{k}")  # noqa: E731
        bindings = []
        for i, item in enumerate(self.list(o.get("passRelationShip", []), f"{path}.passRelationShip")):
            p = f"{path}.passRelationShip[{i}]"
            bo = self.obj(item, p, ("actualExpression", "formalIndex"), ("actualExpression", "formalIndex"))
            idx = self.typed(bo["formalIndex"], int, f"{p}.formalIndex")
            if idx < 0:
                raise SchemaError(f"{p}.formalIndex", "must be >= 0")
            bindings.append(ArgBinding(self.typed(bo["actualExpression"], str, f"{p}.actualExpression"), idx))
        edges = []
        for i, item in enumerate(self.list(o.get("pollutedPosition", []), f"{path}.pollutedPosition")):
            p = f"{path}.pollutedPosition[{i}]"
            try:
                edges.append(TaintEdge.parse(self.typed(item, str, p)))
            except ValueError as exc:
                raise SchemaError(p, str(exc)) from None
        sink = None
        if o.get("sinkCall") is not None:
            p = f"{path}.sinkCall"
            so = self.obj(o["sinkCall"], p, ("signature", "snippet", "argIndices", "argExpressions"),
                          ("signature", "snippet", "argIndices"))
            idx = tuple(self.typed(x, int, f"{p}.argIndices[{i}]") for i, x in enumerate(self.list(so["argIndices"], f"{p}.argIndices")))
            if not idx:
                raise SchemaError(f"{p}.argIndices", "must be non-empty")
            exprs = tuple(self.typed(x, str, f"{p}.argExpressions[{i}]")
                          for i, x in enumerate(self.list(so.get("argExpressions", []), f"{p}.argExpressions")))
            sink = SinkCall(self.typed(so["signature"], str, f"{p}.signature"),
                            self.typed(so["snippet"], str, f"{p}.snippet"), idx, exprs)
        branchs = tuple(self.record(item, f"{path}.branchs[{i}]", branch=True)
                        for i, item in enumerate(self.list(o.get("branchs", []), f"{path}.branchs")))
        fields = dict(
            class_name=s("className"), signature=s("def"), code=s("code"),
            is_static=b("isStatic"), is_constructor=b("isConstructor"),
            args=self.variables(o.get("args", []), f"{path}.args"),
            branchs=branchs,
            snippet_of_called=s("snippetOfCalled"), invoker_of_called=s("invokerOfCalled"),
            member_variables=self.variables(o.get("memberVariables", []), f"{path}.memberVariables"),
            pass_relationship=tuple(bindings), polluted_position=tuple(edges), sink_call=sink,
        )
        if branch:
            children = tuple(self.record(item, f"{path}.children[{i}]", branch=True)
                             for i, item in enumerate(self.list(o.get("children", []), f"{path}.children")))
            depth = self.typed(o.get("depth", 0), int, f"{path}.depth")
            if depth < 0:
                raise SchemaError(f"{path}.depth", "must be non-negative")
            rec: MethodRecord = BranchRecord(children=children, depth=depth, **fields)
        else:
            rec = MethodRecord(**fields)
        _validate_record(rec, path)
        return rec


def parse_summary(document: str, strict: bool = True) -> CodeInformationSummary:
    """Parse and fully validate a summary document.

    Raises SummarySyntaxError for malformed JSON, SchemaError (with a JSON
    path) for shape violations and ChainError for adjacency violations.
    With ``strict=False`` unknown fields are logged and ignored.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SummarySyntaxError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return summary_from_dict(doc, strict=strict)


def summary_from_dict(doc: Any, strict: bool = True) -> CodeInformationSummary:
    r = _Reader(strict)
    top = r.obj(doc, "$", ("chains", "sourceLanguageTag", "generatorVersion", "types"), ("chains",))
    chains_raw = r.list(top["chains"], "$.chains")
    if not chains_raw:
        raise SchemaError("$.chains", "at least one chain is required")
    chains = []
    ids = set()
    for i, c in enumerate(chains_raw):
        p = f"$.chains[{i}]"
        co = r.obj(c, p, ("id", "rule", "methods", "entryTaintedArgs"), ("id", "rule", "methods"))
        cid = r.typed(co["id"], str, f"{p}.id")
        if cid in ids:
            raise SchemaError(f"{p}.id", f"duplicate chain id {cid!r}")
        ids.add(cid)
        methods = tuple(r.record(m, f"{p}.methods[{j}]") for j, m in enumerate(r.list(co["methods"], f"{p}.methods")))
        for j, m in enumerate(methods):
            for k, br in enumerate(m.branchs):
                if br.depth != 0:
                    raise SchemaError(f"{p}.methods[{j}].branchs[{k}].depth", "branch roots have depth 0")
                _validate_tree(br, f"{p}.methods[{j}].branchs[{k}]", ())
        tainted = tuple(r.typed(x, int, f"{p}.entryTaintedArgs[{k}]")
                        for k, x in enumerate(r.list(co.get("entryTaintedArgs", []), f"{p}.entryTaintedArgs")))
        chain = CallChain(cid, r.typed(co["rule"], str, f"{p}.rule"), methods, tainted)
        validate_chain(chain)
        chains.append(chain)
    types = []
    for name, members in sorted(r.typed(top.get("types", {}), dict, "$.types").items()):
        types.append(TypeDecl(name, r.variables(members, f"$.types.{name}")))
    return CodeInformationSummary(
        chains=tuple(chains),
        source_language=r.typed(top.get("sourceLanguageTag", "minilang"), str, "$.sourceLanguageTag"),
        generator_version=r.typed(top.get("generatorVersion", GENERATOR_VERSION), str, "$.generatorVersion"),
        types=tuple(types),
    )


# ---------------------------------------------------------------------------
# Serialization

def _vars(vs: Sequence[Variable]) -> List[Dict[str, str]]:
    return [{"name": v.name, "type": v.type} for v in vs]


def record_to_dict(rec: MethodRecord) -> Dict[str, Any]:
    d: Dict[str, Any] = {
        "className": rec.class_name,
        "def": rec.signature,
        "code": rec.code,
        "isStatic": rec.is_static,
        "isConstructor": rec.is_constructor,
        "args": _vars(rec.args),
        "branchs": [record_to_dict(b) for b in rec.branchs],
        "snippetOfCalled": rec.snippet_of_called,
        "invokerOfCalled": rec.invoker_of_called,
        "memberVariables": _vars(rec.member_variables),
        "passRelationShip": [{"actualExpression": b.actual_expression, "formalIndex": b.formal_index}
                             for b in rec.pass_relationship],
        "pollutedPosition": [str(e) for e in rec.polluted_position],
    }
    if rec.sink_call is not None:
        d["sinkCall"] = {
            "signature": rec.sink_call.signature,
            "snippet": rec.sink_call.snippet,
            "argIndices": list(rec.sink_call.arg_indices),
            "argExpressions": list(rec.sink_call.arg_expressions),
        }
    if isinstance(rec, BranchRecord):
        d["children"] = [record_to_dict(c) for c in rec.children]
        d["depth"] = rec.depth
    return d


def summary_to_dict(summary: CodeInformationSummary) -> Dict[str, Any]:
    chains = []
    for c in summary.chains:
        cd: Dict[str, Any] = {"id": c.id, "rule": c.rule, "methods": [record_to_dict(m) for m in c.methods]}
        if c.entry_tainted_args:
            cd["entryTaintedArgs"] = list(c.entry_tainted_args)
        chains.append(cd)
    out: Dict[str, Any] = {
        "sourceLanguageTag": summary.source_language,
        "generatorVersion": summary.generator_version,
        "chains": chains,
    }
    if summary.types:
        out["types"] = {t.name: _vars(t.members) for t in summary.types}
    return out


def serialize_summary(summary: CodeInformationSummary) -> str:
    return json.dumps(summary_to_dict(summary), indent=2, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------------
# Type resolution and critical parameters

class TypeResolver:
    """Resolves parameter types against a rule's critical set.

    Type identity is exact name match after the alias table is applied.
    """

    def __init__(self, types: Optional[Mapping[str, Sequence[Variable]]] = None,
                 aliases: Optional[Mapping[str, str]] = None,
                 known_types: Optional[Iterable[str]] = None):
        self.types = dict(types or {})
        self.aliases = dict(aliases or {})
        self.known = frozenset(known_types) if known_types is not None else default_library().known_types

    def canonical(self, type_name: str) -> str:
        seen = set()
        t = type_name.strip()
        while t in self.aliases and t not in seen:
            seen.add(t)
            t = self.aliases[t]
        return t

    def is_critical(self, type_name: str, critical: Iterable[str]) -> bool:
        crit = {self.canonical(c) for c in critical}
        return self.canonical(type_name) in crit

    def members(self, type_name: str, owner: Optional[MethodRecord] = None) -> Optional[Tuple[Variable, ...]]:
        t = self.canonical(type_name)
        if t in self.types:
            return tuple(self.types[t])
        if owner is not None and owner.member_variables and t == self.canonical(owner.class_name):
            return owner.member_variables
        return None

    def critical_members(self, type_name: str, critical: Iterable[str],
                         owner: Optional[MethodRecord] = None) -> Tuple[str, ...]:
        mem = self.members(type_name, owner)
        if not mem:
            return ()
        return tuple(m.name for m in mem if self.is_critical(m.type, critical))

    def encapsulates(self, type_name: str, critical: Iterable[str], owner: Optional[MethodRecord] = None) -> bool:
        return bool(self.critical_members(type_name, critical, owner))

    def check_known(self, type_name: str, owner: Optional[MethodRecord] = None, context: str = "") -> None:
        t = self.canonical(type_name)
        if t in self.known or self.members(t, owner) is not None or t.endswith("[]"):
            return
        raise UnknownType(type_name, context)


CriticalParam = Tuple[int, str]


def critical_parameters(method: MethodRecord, rule, resolver: Optional[TypeResolver] = None) -> List[CriticalParam]:
    """Every ``(argIndex, memberPath)`` slot of ``method`` carrying a critical type.

    ``memberPath`` is ``""`` for a parameter whose own type is critical and the
    member name for one level of encapsulation.
    """
    resolver = resolver or TypeResolver(aliases=getattr(rule, "aliases", None))
    critical = rule.critical_types
    out: List[CriticalParam] = []
    for i, arg in enumerate(method.args):
        if resolver.is_critical(arg.type, critical):
            out.append((i, ""))
            continue
        resolver.check_known(arg.type, method, f"parameter {arg.name} of {method.method_id}")
        for name in resolver.critical_members(arg.type, critical, method):
            out.append((i, name))
    return out

