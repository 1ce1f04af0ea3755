"""Recursive-descent parser for the mini-language."""

from __future__ import annotations

from typing import FrozenSet, List, Optional, Tuple

from ..errors import ParseError
from . import syntax as s
from .lexer import Token, tokenize

_MODIFIERS = ("public", "private", "protected", "static", "final", "abstract", "synchronized")

# Members written outside any class are collected into this implicit class.
IMPLICIT_CLASS = "Program"


def parse_program(source_text: str) -> s.MiniProgram:
    p = Parser(source_text)
    return p.program()


def parse_methods(source_text: str, class_name: str = "") -> Tuple[s.MethodDecl, ...]:
    """Parse a bare sequence of method declarations (no enclosing class)."""
    p = Parser(source_text)
    methods = []
    while not p.at("eof"):
        member = p.member(class_name)
        if isinstance(member, s.MethodDecl):
            methods.append(member)
    return tuple(methods)


class Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens: List[Token] = tokenize(text)
        self.i = 0

    # -- token helpers ---------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def at(self, kind: str, text: Optional[str] = None, offset: int = 0) -> bool:
        t = self.peek(offset) if offset else self.tok
        if kind == "op" or kind == "keyword":
            return t.kind == kind and (text is None or t.text == text)
        return t.kind == kind and (text is None or t.text == text)

    def at_op(self, *ops: str) -> bool:
        return self.tok.kind == "op" and self.tok.text in ops

    def at_kw(self, *kws: str) -> bool:
        return self.tok.kind == "keyword" and self.tok.text in kws

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.i += 1
        return t

    @property
    def prev_end(self) -> int:
        return self.tokens[self.i - 1].end if self.i else 0

    def fail(self, message: str, expected: FrozenSet[str] = frozenset()):
        t = self.tok
        got = "end of input" if t.kind == "eof" else repr(t.text)
        raise ParseError(f"{message}, got {got}", t.line, t.column, expected)

    def expect_op(self, op: str) -> Token:
        if not self.at_op(op):
            self.fail(f"expected {op!r}", frozenset({op}))
        return self.advance()

    def expect_kw(self, kw: str) -> Token:
        if not self.at_kw(kw):
            self.fail(f"expected {kw!r}", frozenset({kw}))
        return self.advance()

    def expect_ident(self, what: str = "identifier") -> Token:
        if self.tok.kind != "ident":
            self.fail(f"expected {what}", frozenset({"identifier"}))
        return self.advance()

    # -- declarations ----------------------------------------------------

    def program(self) -> s.MiniProgram:
        classes = []
        loose_start, loose_fields, loose_methods = None, [], []
        while not self.at("eof"):
            if self.at_kw("package", "import"):
                self.advance()
                self.qualified_name()
                if self.at_op("."):  # import a.b.*;
                    self.advance()
                    self.expect_op("*")
                self.expect_op(";")
                continue
            if self.class_ahead():
                classes.append(self.class_decl())
                continue
            if loose_start is None:
                loose_start = self.tok.start
            member = self.member(IMPLICIT_CLASS)
            (loose_methods if isinstance(member, s.MethodDecl) else loose_fields).append(member)
        if loose_start is not None:
            classes.insert(0, s.ClassDecl(loose_start, self.prev_end, IMPLICIT_CLASS,
                                          tuple(loose_fields), tuple(loose_methods)))
        return s.MiniProgram(tuple(classes), self.text)

    def class_ahead(self) -> bool:
        j = self.i
        while True:
            t = self.tokens[j]
            if t.kind == "keyword" and t.text in _MODIFIERS:
                j += 1
            elif t.text == "@" and self.tokens[j + 1].kind == "ident":
                j += 2
            else:
                return t.kind == "keyword" and t.text == "class"

    def qualified_name(self) -> str:
        parts = [self.expect_ident().text]
        while self.at_op(".") and self.peek().kind == "ident":
            self.advance()
            parts.append(self.advance().text)
        return ".".join(parts)

    def annotations(self) -> None:
        while self.at_op("@"):
            self.advance()
            self.qualified_name()
            if self.at_op("("):
                depth = 0
                while True:
                    t = self.advance()
                    if t.kind == "eof":
                        self.fail("unterminated annotation", frozenset({")"}))
                    if t.text == "(":
                        depth += 1
                    elif t.text == ")":
                        depth -= 1
                        if depth == 0:
                            break

    def modifiers(self) -> Tuple[str, ...]:
        mods = []
        while True:
            self.annotations()
            if self.at_kw(*_MODIFIERS):
                mods.append(self.advance().text)
            else:
                return tuple(mods)

    def class_decl(self) -> s.ClassDecl:
        start = self.tok.start
        self.modifiers()
        if not self.at_kw("class"):
            self.fail("expected a class declaration", frozenset({"class"}))
        self.advance()
        name = self.expect_ident("class name").text
        if self.at_kw("extends"):
            self.advance()
            self.type_name()
        if self.at_kw("implements"):
            self.advance()
            self.type_name()
            while self.at_op(","):
                self.advance()
                self.type_name()
        self.expect_op("{")
        fields, methods = [], []
        while not self.at_op("}"):
            if self.at("eof"):
                self.fail("unterminated class body", frozenset({"}"}))
            member = self.member(name)
            (methods if isinstance(member, s.MethodDecl) else fields).append(member)
        self.expect_op("}")
        return s.ClassDecl(start, self.prev_end, name, tuple(fields), tuple(methods))

    def type_name(self) -> str:
        if self.at_kw("void"):
            return self.advance().text
        if self.tok.kind != "ident":
            self.fail("expected a type", frozenset({"identifier"}))
        name = self.qualified_name()
        while self.at_op("[") and self.peek().text == "]":
            self.advance()
            self.advance()
            name += "[]"
        return name

    def member(self, class_name: str):
        start = self.tok.start
        mods = self.modifiers()
        is_static = "static" in mods
        if self.tok.kind == "ident" and self.peek().text == "(" and (not class_name or self.tok.text == class_name):
            name = self.advance().text
            return self.method_rest(start, class_name or name, name, name, is_static, True)
        type_ = self.type_name()
        name = self.expect_ident("member name").text
        if self.at_op("("):
            return self.method_rest(start, class_name, name, type_, is_static, False)
        init = None
        if self.at_op("="):
            self.advance()
            init = self.expression()
        self.expect_op(";")
        return s.FieldDecl(start, self.prev_end, type_, name, init, is_static)

    def method_rest(self, start: int, class_name: str, name: str, ret: str,
                    is_static: bool, is_ctor: bool) -> s.MethodDecl:
        self.expect_op("(")
        params = []
        if not self.at_op(")"):
            while True:
                if self.tok.kind != "ident":
                    self.fail("malformed parameter list", frozenset({"identifier", ")"}))
                self.modifiers()
                ptype = self.type_name()
                pname = self.expect_ident("parameter name").text
                params.append(s.Param(ptype, pname))
                if self.at_op(","):
                    self.advance()
                    continue
                if not self.at_op(")"):
                    self.fail("malformed parameter list", frozenset({",", ")"}))
                break
        self.expect_op(")")
        header_end = self.prev_end
        if self.at_kw("throws"):
            self.advance()
            self.type_name()
            while self.at_op(","):
                self.advance()
                self.type_name()
        body = self.block()
        return s.MethodDecl(start, self.prev_end, class_name, name, tuple(params), ret,
                            is_static, is_ctor, body, header_end)

    # -- statements ------------------------------------------------------

    def block(self) -> s.Block:
        start = self.expect_op("{").start
        body = []
        while not self.at_op("}"):
            if self.at("eof"):
                self.fail("unterminated block", frozenset({"}"}))
            body.append(self.statement())
        self.expect_op("}")
        return s.Block(start, self.prev_end, tuple(body))

    def statement(self) -> s.Stmt:
        start = self.tok.start
        if self.at_op("{"):
            return self.block()
        if self.at_kw("if"):
            self.advance()
            self.expect_op("(")
            cond = self.expression()
            self.expect_op(")")
            then = self.statement()
            orelse = None
            if self.at_kw("else"):
                self.advance()
                orelse = self.statement()
            return s.If(start, self.prev_end, cond, then, orelse)
        if self.at_kw("return"):
            self.advance()
            value = None if self.at_op(";") else self.expression()
            self.expect_op(";")
            return s.Return(start, self.prev_end, value)
        if self.at_kw("throw"):
            self.advance()
            value = self.expression()
            self.expect_op(";")
            return s.Throw(start, self.prev_end, value)
        if self.at_kw("final"):
            self.advance()
            return self.local_var(start)
        if self.looks_like_decl():
            return self.local_var(start)
        expr = self.expression()
        if self.at_op("=", "+="):
            op = self.advance().text
            if not isinstance(expr, (s.Name, s.FieldAccess)):
                self.fail("invalid assignment target")
            value = self.expression()
            if op == "+=":
                value = s.Binary(expr.start, value.end, "+", expr, value)
            self.expect_op(";")
            return s.Assign(start, self.prev_end, expr, value)
        self.expect_op(";")
        return s.ExprStmt(start, self.prev_end, expr)

    def looks_like_decl(self) -> bool:
        j = self.i
        toks = self.tokens
        if toks[j].kind != "ident":
            return False
        j += 1
        while toks[j].text == "." and toks[j + 1].kind == "ident":
            j += 2
        while toks[j].text == "[" and toks[j + 1].text == "]":
            j += 2
        return toks[j].kind == "ident" and toks[j + 1].text in ("=", ";")

    def local_var(self, start: int) -> s.LocalVar:
        type_ = self.type_name()
        name = self.expect_ident("variable name").text
        init = None
        if self.at_op("="):
            self.advance()
            init = self.expression()
        self.expect_op(";")
        return s.LocalVar(start, self.prev_end, type_, name, init)

    # -- expressions -----------------------------------------------------

    def expression(self) -> s.Expr:
        return self.binary(0)

    _LEVELS = (("||",), ("&&",), ("==", "!="), ("<", ">", "<=", ">="), ("+", "-"), ("*", "/", "%"))

    def binary(self, level: int) -> s.Expr:
        if level == len(self._LEVELS):
            return self.unary()
        left = self.binary(level + 1)
        while self.at_op(*self._LEVELS[level]):
            op = self.advance().text
            right = self.binary(level + 1)
            left = s.Binary(left.start, right.end, op, left, right)
        return left

    def unary(self) -> s.Expr:
        if self.at_op("!", "-"):
            t = self.advance()
            operand = self.unary()
            return s.Unary(t.start, operand.end, t.text, operand)
        return self.postfix()

    def arguments(self) -> Tuple[s.Expr, ...]:
        self.expect_op("(")
        args = []
        if not self.at_op(")"):
            args.append(self.expression())
            while self.at_op(","):
                self.advance()
                args.append(self.expression())
        self.expect_op(")")
        return tuple(args)

    def postfix(self) -> s.Expr:
        expr = self.primary()
        while self.at_op("."):
            self.advance()
            name = self.expect_ident("member name").text
            if self.at_op("("):
                args = self.arguments()
                expr = s.Call(expr.start, self.prev_end, expr, name, args)
            else:
                expr = s.FieldAccess(expr.start, self.prev_end, expr, name)
        return expr

    def primary(self) -> s.Expr:
        t = self.tok
        if t.kind in ("string", "char"):
            self.advance()
            return s.Literal(t.start, t.end, t.value, t.kind)
        if t.kind == "number":
            self.advance()
            digits = t.text.rstrip("lLfFdD")
            value = float(digits) if "." in digits else int(digits)
            return s.Literal(t.start, t.end, value, "number")
        if self.at_kw("true", "false"):
            self.advance()
            return s.Literal(t.start, t.end, t.text == "true", "bool")
        if self.at_kw("null"):
            self.advance()
            return s.Literal(t.start, t.end, None, "null")
        if self.at_kw("this"):
            self.advance()
            return s.This(t.start, t.end)
        if self.at_kw("new"):
            self.advance()
            type_ = self.type_name()
            args = self.arguments()
            return s.New(t.start, self.prev_end, type_, args)
        if t.kind == "ident":
            self.advance()
            if self.at_op("("):
                args = self.arguments()
                return s.Call(t.start, self.prev_end, None, t.text, args)
            return s.Name(t.start, t.end, t.text)
        if self.at_op("("):
            self.advance()
            inner = self.expression()
            self.expect_op(")")
            return inner
        self.fail("expected an expression", frozenset({"identifier", "literal", "(", "new", "this", "!"}))
