"""Syntax tree for the mini-language.  Every node records its ``[start, end)``
character span in the source it was parsed from."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Tuple, Union


@dataclass(frozen=True)
class Node:
    start: int
    end: int

    def text(self, source: str) -> str:
        return source[self.start:self.end]


# Expressions

@dataclass(frozen=True)
class Literal(Node):
    value: Union[str, int, float, bool, None]
    kind: str  # "string" | "char" | "number" | "bool" | "null"


@dataclass(frozen=True)
class Name(Node):
    id: str


@dataclass(frozen=True)
class This(Node):
    pass


@dataclass(frozen=True)
class FieldAccess(Node):
    target: "Expr"
    name: str


@dataclass(frozen=True)
class Call(Node):
    target: Optional["Expr"]
    name: str
    args: Tuple["Expr", ...]


@dataclass(frozen=True)
class New(Node):
    type: str
    args: Tuple["Expr", ...]


@dataclass(frozen=True)
class Binary(Node):
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Unary(Node):
    op: str
    operand: "Expr"


Expr = Union[Literal, Name, This, FieldAccess, Call, New, Binary, Unary]


# Statements

@dataclass(frozen=True)
class Block(Node):
    body: Tuple["Stmt", ...]


@dataclass(frozen=True)
class LocalVar(Node):
    type: str
    name: str
    init: Optional[Expr]


@dataclass(frozen=True)
class Assign(Node):
    target: Expr  # Name or FieldAccess
    value: Expr


@dataclass(frozen=True)
class ExprStmt(Node):
    expr: Expr


@dataclass(frozen=True)
class If(Node):
    cond: Expr
    then: "Stmt"
    orelse: Optional["Stmt"]


@dataclass(frozen=True)
class Return(Node):
    value: Optional[Expr]


@dataclass(frozen=True)
class Throw(Node):
    value: Expr


Stmt = Union[Block, LocalVar, Assign, ExprStmt, If, Return, Throw]


# Declarations

@dataclass(frozen=True)
class Param:
    type: str
    name: str


@dataclass(frozen=True)
class FieldDecl(Node):
    type: str
    name: str
    init: Optional[Expr]
    is_static: bool = False


@dataclass(frozen=True)
class MethodDecl(Node):
    class_name: str
    name: str
    params: Tuple[Param, ...]
    return_type: str  # class name for constructors
    is_static: bool
    is_constructor: bool
    body: Block
    header_end: int  # end offset of the signature (before "throws"/"{")

    @property
    def id(self) -> str:
        return f"{self.class_name}.{'<init>' if self.is_constructor else self.name}"


@dataclass(frozen=True)
class ClassDecl(Node):
    name: str
    fields: Tuple[FieldDecl, ...]
    methods: Tuple[MethodDecl, ...]


@dataclass(frozen=True)
class MiniProgram:
    classes: Tuple[ClassDecl, ...]
    source: str = field(default="", repr=False)

    def methods(self) -> Iterator[MethodDecl]:
        for c in self.classes:
            yield from c.methods

    def method(self, method_id: str) -> MethodDecl:
        for m in self.methods():
            if m.id == method_id:
                return m
        raise KeyError(method_id)

    def class_decl(self, name: str) -> Optional[ClassDecl]:
        for c in self.classes:
            if c.name == name:
                return c
        return None

    def code(self, node: Node) -> str:
        return self.source[node.start:node.end]


def children(node) -> Iterator:
    """Direct sub-nodes of a statement or expression."""
    if isinstance(node, Block):
        yield from node.body
    elif isinstance(node, LocalVar):
        if node.init is not None:
            yield node.init
    elif isinstance(node, Assign):
        yield node.target
        yield node.value
    elif isinstance(node, ExprStmt):
        yield node.expr
    elif isinstance(node, If):
        yield node.cond
        yield node.then
        if node.orelse is not None:
            yield node.orelse
    elif isinstance(node, (Return, Throw)):
        if node.value is not None:
            yield node.value
    elif isinstance(node, FieldAccess):
        yield node.target
    elif isinstance(node, Call):
        if node.target is not None:
            yield node.target
        yield from node.args
    elif isinstance(node, New):
        yield from node.args
    elif isinstance(node, Binary):
        yield node.left
        yield node.right
    elif isinstance(node, Unary):
        yield node.operand


def walk(node) -> Iterator:
    yield node
    for c in children(node):
        yield from walk(c)
