"""Deterministic oracle backend: a path-sensitive abstract interpreter over
the mini-language, using the abstract string values of ``absdomain``.

Subtask requests are answered from the caller's code plus the structured
context (parameter states seed abstract values, simplified facts model the
branch methods).  Branch requests are answered by interpreting the pruned
tree with the branch's own callees inlined.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

from .. import absdomain as ad
from ..absdomain import ASSERTED, NUMERIC, STRICT, Check, Lit, Obj, Unknown, Value
from ..errors import OracleUnsupportedConstruct, ParseError
from ..library import LibraryTable, default_library, method_name, signature_matches
from ..minilang import syntax as s
from ..minilang.callgraph import Scope
from ..minilang.parser import parse_program
from ..rules import VulnerabilityRule
from ..semantics import FactKind, call_key, GuardFinding, ParamFinding, SimplifiedFact
from ..state import ParameterState, SlotState, slot_label
from ..summary import MethodRecord, Slot
from .requests import (
    BranchPayload, SolverRequest, SolverResponse, StateResult, SubtaskPayload, Transfer,
)

log = logging.getLogger(__name__)

MAX_STATES = 64
MAX_INLINE_DEPTH = 6
NUMERIC_TYPES = frozenset({"int", "long", "short", "byte", "double", "float",
                           "Integer", "Long", "Short", "Byte", "Double", "Float", "boolean", "Boolean"})


@dataclass(frozen=True)
class BoolExpr:
    """A boolean whose meaning is the (unevaluated) condition that produced it."""

    node: s.Expr
    env: Tuple = ()


def _plain(v) -> Value:
    return Lit(None) if isinstance(v, BoolExpr) else v


@dataclass
class _St:
    env: Dict[str, object]
    status: str = "normal"  # normal | return | throw
    ret: Optional[Value] = None
    ret_node: Optional[s.Expr] = None

    def fork(self) -> "_St":
        return _St(dict(self.env), self.status, self.ret, self.ret_node)


def _merge(states: List[_St]) -> _St:
    keys = sorted({k for st in states for k in st.env})
    env = {}
    for k in keys:
        vals = [_plain(st.env.get(k, Unknown("unset"))) for st in states]
        env[k] = ad.join(*vals)
    return _St(env)


def build_program(records: Sequence[MethodRecord]) -> s.MiniProgram:
    """One program holding the given records, grouped into their classes."""
    by_class: Dict[str, List[MethodRecord]] = {}
    seen = set()
    for r in records:
        if not r.code or r.method_id in seen:
            continue
        seen.add(r.method_id)
        by_class.setdefault(r.class_name, []).append(r)
    chunks = []
    for cls, recs in by_class.items():
        members = {}
        for r in recs:
            for v in r.member_variables:
                members.setdefault(v.name, v.type)
        fields = "".join(f"  {t} {n};\n" for n, t in members.items())
        bodies = "\n".join(r.code for r in recs)
        chunks.append(f"class {cls} {{\n{fields}{bodies}\n}}\n")
    return parse_program("\n".join(chunks))


class Interpreter:
    def __init__(self, program: s.MiniProgram, rule: VulnerabilityRule,
                 library: Optional[LibraryTable] = None, *,
                 facts: Sequence[SimplifiedFact] = (), user_methods: Sequence[str] = (),
                 inline: bool = False, watch: Optional[Tuple[int, int]] = None):
        self.program = program
        self.rule = rule
        self.library = library or default_library()
        self.facts: Dict[str, List[SimplifiedFact]] = {}
        for f in facts:
            self.facts.setdefault(f.key, []).append(f)
        self.user_names = {call_key(m) for m in user_methods}
        self.inline = inline
        self.watch = watch
        self.hits: List[List[Value]] = []
        self.depth = 0

    # -- entry points ------------------------------------------------------

    def run(self, method: s.MethodDecl, env: Dict[str, object]) -> List[_St]:
        self.scope_stack = [Scope(self.program, method, self.library)]
        try:
            return self.block(method.body, [_St(dict(env))])
        finally:
            self.scope_stack.pop()

    @property
    def scope(self) -> Scope:
        return self.scope_stack[-1]

    # -- variables ---------------------------------------------------------

    def key(self, expr: s.Expr) -> Optional[str]:
        if isinstance(expr, s.Name):
            sc = self.scope
            if expr.id in sc.locals or expr.id in sc.params:
                return expr.id
            if expr.id in sc.fields:
                return "this." + expr.id
            return None
        if isinstance(expr, s.FieldAccess) and isinstance(expr.target, s.This):
            return "this." + expr.name
        return None

    def assign(self, target: s.Expr, value: object, st: _St) -> None:
        k = self.key(target)
        if k is not None:
            st.env[k] = value
            return
        if isinstance(target, s.FieldAccess):
            base = self.key(target.target)
            if base is not None:
                cur = _plain(st.env.get(base, Unknown("unset")))
                if isinstance(cur, Obj):
                    st.env[base] = cur.with_field(target.name, _plain(value))
                else:
                    st.env[base] = Obj("?", ((target.name, _plain(value)),))

    def refine(self, expr: s.Expr, st: _St, fn) -> None:
        k = self.key(expr)
        if k is not None:
            st.env[k] = fn(_plain(st.env.get(k, Unknown(k))))
        elif isinstance(expr, s.FieldAccess):
            base = self.key(expr.target)
            cur = _plain(st.env.get(base, Unknown("unset"))) if base else None
            if isinstance(cur, Obj):
                inner = cur.field(expr.name) or Unknown(expr.name)
                st.env[base] = cur.with_field(expr.name, fn(inner))

    # -- statements --------------------------------------------------------

    def block(self, stmt: s.Stmt, states: List[_St]) -> List[_St]:
        if isinstance(stmt, s.Block):
            for x in stmt.body:
                states = self.stmt(x, states)
            return states
        return self.stmt(stmt, states)

    def stmt(self, stmt: s.Stmt, states: List[_St]) -> List[_St]:
        live = [st for st in states if st.status == "normal"]
        done = [st for st in states if st.status != "normal"]
        if not live:
            return states
        out: List[_St] = []
        for st in live:
            out.extend(self.exec(stmt, st))
        normal = [st for st in out if st.status == "normal"]
        if len(normal) > MAX_STATES:
            out = [st for st in out if st.status != "normal"] + [_merge(normal)]
        return done + out

    def exec(self, stmt: s.Stmt, st: _St) -> List[_St]:
        if isinstance(stmt, s.Block):
            return self.block(stmt, [st])
        if isinstance(stmt, s.LocalVar):
            st.env[stmt.name] = self.eval(stmt.init, st) if stmt.init is not None else Lit(None)
            return [st]
        if isinstance(stmt, s.Assign):
            self.assign(stmt.target, self.eval(stmt.value, st), st)
            return [st]
        if isinstance(stmt, s.ExprStmt):
            self.eval(stmt.expr, st)
            return [st]
        if isinstance(stmt, s.Return):
            st.ret = _plain(self.eval(stmt.value, st)) if stmt.value is not None else Lit(None)
            st.ret_node = stmt.value
            if st.status == "normal":
                st.status = "return"
            return [st]
        if isinstance(stmt, s.Throw):
            self.eval_args_only(stmt.value, st)
            st.status = "throw"
            return [st]
        if isinstance(stmt, s.If):
            self.scan_calls(stmt.cond, st)
            if st.status != "normal":
                return [st]
            then_states = self.assume(stmt.cond, True, st.fork())
            else_states = self.assume(stmt.cond, False, st.fork())
            res = self.stmt(stmt.then, then_states) if then_states else []
            if stmt.orelse is not None:
                res += self.stmt(stmt.orelse, else_states) if else_states else []
            else:
                res += else_states
            return res
        raise OracleUnsupportedConstruct(f"unsupported statement {type(stmt).__name__}")

    def eval_args_only(self, expr: s.Expr, st: _St) -> None:
        if isinstance(expr, s.New):
            for a in expr.args:
                self.eval(a, st)
        else:
            self.eval(expr, st)

    def scan_calls(self, expr: s.Expr, st: _St) -> None:
        """Evaluate calls nested in a condition for their side effects (and
        call-site hits) without interpreting the condition itself."""
        for node in s.walk(expr):
            if isinstance(node, (s.Call, s.New)) and self.watch == (node.start, node.end):
                self.eval(node, st)

    # -- conditions --------------------------------------------------------

    def fold(self, expr: s.Expr, st: _St) -> Optional[bool]:
        if isinstance(expr, s.Literal) and expr.kind == "bool":
            return bool(expr.value)
        if isinstance(expr, s.Unary) and expr.op == "!":
            v = self.fold(expr.operand, st)
            return None if v is None else not v
        if isinstance(expr, s.Binary) and expr.op in ("&&", "||"):
            a, b = self.fold(expr.left, st), self.fold(expr.right, st)
            if expr.op == "&&":
                if a is False or b is False:
                    return False
                return True if a and b else None
            if a is True or b is True:
                return True
            return False if a is False and b is False else None
        if isinstance(expr, s.Name):
            v = st.env.get(self.key(expr) or "")
            if isinstance(v, BoolExpr):
                return self.fold(v.node, st)
            if isinstance(v, Lit) and isinstance(v.value, bool):
                return v.value
            return None
        if isinstance(expr, s.Binary) and expr.op in ("==", "!=", "<", ">", "<=", ">="):
            lv, rv = _plain(self.peek(expr.left, st)), _plain(self.peek(expr.right, st))
            if isinstance(lv, Lit) and isinstance(rv, Lit):
                try:
                    return {"==": lv.value == rv.value, "!=": lv.value != rv.value,
                            "<": lv.value < rv.value, ">": lv.value > rv.value,
                            "<=": lv.value <= rv.value, ">=": lv.value >= rv.value}[expr.op]
                except TypeError:
                    return None
            return None
        if isinstance(expr, s.Call) and expr.target is not None and len(expr.args) <= 1:
            recv = _plain(self.peek(expr.target, st))
            arg = _plain(self.peek(expr.args[0], st)) if expr.args else Lit("")
            if isinstance(recv, Lit) and isinstance(recv.value, str) and isinstance(arg, Lit):
                a = "" if arg.value is None else str(arg.value)
                ops = {"equals": lambda: recv.value == a, "contains": lambda: a in recv.value,
                       "startsWith": lambda: recv.value.startswith(a), "endsWith": lambda: recv.value.endswith(a),
                       "isEmpty": lambda: recv.value == "",
                       "equalsIgnoreCase": lambda: recv.value.lower() == a.lower()}
                if expr.name in ops:
                    return ops[expr.name]()
        return None

    def peek(self, expr: s.Expr, st: _St):
        """Side-effect free evaluation for conditions (literals and variables only)."""
        if isinstance(expr, s.Literal):
            return Lit(expr.value)
        if isinstance(expr, (s.Name, s.FieldAccess)):
            k = self.key(expr)
            if k is not None:
                return st.env.get(k, Unknown(k))
        return Unknown("expr")

    def assume(self, expr: s.Expr, truth: bool, st: _St) -> List[_St]:
        folded = self.fold(expr, st)
        if folded is not None:
            return [st] if folded == truth else []
        if isinstance(expr, s.Unary) and expr.op == "!":
            return self.assume(expr.operand, not truth, st)
        if isinstance(expr, s.Binary) and expr.op in ("&&", "||"):
            both = (expr.op == "&&") == truth
            if both:
                return [b for a in self.assume(expr.left, truth, st) for b in self.assume(expr.right, truth, a)]
            first = self.assume(expr.left, truth, st.fork())
            second = [b for a in self.assume(expr.left, not truth, st.fork())
                      for b in self.assume(expr.right, truth, a)]
            return first + second
        if isinstance(expr, s.Name):
            v = st.env.get(self.key(expr) or "")
            if isinstance(v, BoolExpr):
                return self.assume(v.node, truth, st)
            return [st]
        if isinstance(expr, s.Call):
            self.refine_call(expr, truth, st)
        return [st]

    def refine_call(self, call: s.Call, truth: bool, st: _St) -> None:
        name = call.name
        recv, args = call.target, call.args
        lit_arg = args[0].value if args and isinstance(args[0], s.Literal) and args[0].kind == "string" else None
        if recv is not None and not self.is_user_call(call):
            if name == "contains" and lit_arg is not None and not truth:
                self.refine(recv, st, lambda v: ad.filtered(Check("absent", lit_arg), v))
            elif name in ("equals", "contentEquals") and truth:
                if lit_arg is not None:
                    self.refine(recv, st, lambda v: Lit(lit_arg))
                elif isinstance(recv, s.Literal) and recv.kind == "string" and args:
                    self.refine(args[0], st, lambda v: Lit(recv.value))
            elif name == "equalsIgnoreCase" and truth:
                text = lit_arg if lit_arg is not None else (
                    recv.value if isinstance(recv, s.Literal) and recv.kind == "string" else None)
                other = recv if lit_arg is not None else (args[0] if args else None)
                if text is not None and other is not None:
                    chars = set(text.lower()) | set(text.upper())
                    self.refine(other, st, lambda v: ad.filtered(ad.charset_check(chars), v))
            elif name == "matches" and truth and lit_arg is not None:
                chars = ad.regex_charset(lit_arg)
                if chars is not None:
                    self.refine(recv, st, lambda v: ad.filtered(ad.charset_check(chars), v))
            return
        if not truth:
            return
        guarded = self.guard_of(call)
        for i in guarded:
            if i < len(args):
                self.refine(args[i], st, lambda v: ad.filtered(STRICT, v))

    # -- user calls ----------------------------------------------------------

    def is_user_call(self, call) -> bool:
        name = "<init>:" + call.type if isinstance(call, s.New) else call.name
        if name in self.facts or name in self.user_names:
            return True
        try:
            return self.scope.resolve(call).user is not None
        except Exception:
            return False

    def guard_of(self, call: s.Call) -> Tuple[int, ...]:
        out: List[int] = []
        for f in self.facts.get(call.name, ()):
            if f.kind is FactKind.STRICT_SECURITY_CHECK and f.on_true:
                out.extend(f.params)
        if out or not self.inline:
            return tuple(sorted(set(out)))
        target = self.scope.resolve(call)
        if target.user is None or self.depth >= MAX_INLINE_DEPTH:
            return ()
        return tuple(i for i in range(len(target.user.params)) if self.guards(target.user, i))

    def guards(self, method: s.MethodDecl, index: int) -> bool:
        """Does ``true`` from ``method`` imply its parameter ``index`` satisfies the condition?"""
        env = self.seed_params(method, attacker={index})
        self.depth += 1
        self.scope_stack.append(Scope(self.program, method, self.library))
        try:
            finals = self.block(method.body, [_St(env)])
            pname = method.params[index].name
            for st in finals:
                if st.status != "return" or st.ret_node is None:
                    continue
                for refined in self.assume(st.ret_node, True, st.fork()):
                    if self.rule.condition.predicate.judge(_plain(refined.env.get(pname, Unknown(pname)))) is not True:
                        return False
            return True
        finally:
            self.scope_stack.pop()
            self.depth -= 1

    def seed_params(self, method: s.MethodDecl, attacker: Set[int]) -> Dict[str, object]:
        env: Dict[str, object] = {}
        for i, p in enumerate(method.params):
            raw = ad.Attacker(p.name)
            env[p.name] = raw if i in attacker else ad.filtered(ASSERTED, raw)
        return env

    def inline_call(self, method: s.MethodDecl, recv: Optional[Value], args: List[object], st: _St):
        env: Dict[str, object] = {}
        for k, v in st.env.items():
            if k.startswith("this."):
                env[k] = v
        if isinstance(recv, Obj):
            for name, v in recv.fields:
                env["this." + name] = v
        for p, v in zip(method.params, args):
            env[p.name] = v
        self.depth += 1
        self.scope_stack.append(Scope(self.program, method, self.library))
        try:
            finals = self.block(method.body, [_St(env)])
        finally:
            self.scope_stack.pop()
            self.depth -= 1
        returned = [f for f in finals if f.status != "throw"]
        if not returned:
            st.status = "throw"
            return Lit(None)
        if method.is_constructor:
            def obj_of(f: _St) -> Obj:
                return Obj(method.class_name, tuple(sorted(
                    (k[5:], _plain(v)) for k, v in f.env.items() if k.startswith("this."))))
            return ad.join(*[obj_of(f) for f in returned])
        vals = [f.ret if f.ret is not None else Lit(None) for f in returned]
        return ad.join(*vals)

    def apply_facts(self, name: str, facts: List[SimplifiedFact], recv, call, args: List[Value], st: _St) -> Value:
        ret_parts: Dict[str, Value] = {}
        ret_value: Optional[Value] = None

        def from_params(f: SimplifiedFact) -> List[Value]:
            vals = [args[i] for i in f.params if i < len(args)]
            if f.internal:
                vals.append(ad.Attacker(f"source inside {name}"))
            return vals

        for f in facts:
            if f.on_true:
                continue
            t = f.target
            if f.kind is FactKind.STRICT_SECURITY_CHECK:
                contribution: Optional[Value] = ad.filtered(STRICT, ad.concat(*args) if args else Lit(""))
                extra: List[Value] = []
            else:
                extra = from_params(f)
                contribution = ad.concat(*extra) if extra else Lit("")
            if t.kind == "return" or t.kind == "member":
                key = f.member or (t.name if t.kind == "member" else "")
                if key:
                    ret_parts[key] = contribution
                else:
                    ret_value = contribution
            elif t.kind == "param" and t.index < len(call.args):
                target_expr = call.args[t.index]
                if f.kind is FactKind.STRICT_SECURITY_CHECK:
                    continue
                if f.member:
                    def upd(v, m=f.member, extra=extra):
                        cur = v.field(m) if isinstance(v, Obj) else None
                        new = ad.concat(*([cur] if cur is not None else []), *extra) if extra else (cur or Lit(""))
                        return v.with_field(m, new) if isinstance(v, Obj) else Obj("?", ((m, new),))
                    self.refine(target_expr, st, upd)
                else:
                    self.refine(target_expr, st, lambda v, extra=extra: ad.concat(v, *extra))
        if ret_parts:
            return Obj("?", tuple(sorted(ret_parts.items())))
        if ret_value is not None:
            return ret_value
        return Lit(None)

    # -- expressions -------------------------------------------------------

    def eval(self, expr: Optional[s.Expr], st: _St) -> object:
        if expr is None:
            return Lit(None)
        if isinstance(expr, s.Literal):
            return Lit(expr.value)
        if isinstance(expr, (s.Name, s.FieldAccess)):
            k = self.key(expr)
            if k is not None:
                return st.env.get(k, Unknown(k) if not k.startswith("this.") else Unknown(k))
            if isinstance(expr, s.FieldAccess):
                base = _plain(self.eval(expr.target, st))
                if isinstance(base, Obj):
                    return base.field(expr.name) or Unknown(expr.name)
            return Unknown(self.program.code(expr))
        if isinstance(expr, s.This):
            return Obj(self.scope.method.class_name, tuple(sorted(
                (k[5:], _plain(v)) for k, v in st.env.items() if k.startswith("this."))))
        if isinstance(expr, s.Binary):
            if expr.op == "+":
                return ad.concat(_plain(self.eval(expr.left, st)), _plain(self.eval(expr.right, st)))
            left, right = self.eval(expr.left, st), self.eval(expr.right, st)
            if expr.op in ("-", "*", "/", "%"):
                return ad.filtered(NUMERIC, Unknown("arithmetic"))
            return BoolExpr(expr)
        if isinstance(expr, s.Unary):
            self.eval(expr.operand, st)
            return BoolExpr(expr) if expr.op == "!" else ad.filtered(NUMERIC, Unknown("arithmetic"))
        if isinstance(expr, (s.Call, s.New)):
            return self.call(expr, st)
        raise OracleUnsupportedConstruct(f"unsupported expression {type(expr).__name__}")

    def call(self, call, st: _St) -> object:
        recv = None
        is_static = False
        if isinstance(call, s.Call) and call.target is not None:
            is_static = self.scope.static_ref(call.target) is not None
            if not is_static:
                recv = _plain(self.eval(call.target, st))
        args = [_plain(self.eval(a, st)) for a in call.args]
        if self.watch == (call.start, call.end):
            self.hits.append(list(args))
        if st.status != "normal":
            return Lit(None)
        try:
            target = self.scope.resolve(call)
        except Exception as exc:
            raise OracleUnsupportedConstruct(str(exc)) from None
        sig = target.signature
        if any(signature_matches(p, sig) for p in self.rule.source_patterns):
            return ad.Attacker(self.program.code(call))
        name = "<init>:" + call.type if isinstance(call, s.New) else call.name
        if name in self.facts:
            value_facts = [f for f in self.facts[name] if not f.on_true]
            if value_facts:
                return self.apply_facts(name, value_facts, recv, call, args, st)
            if any(f.on_true for f in self.facts[name]):
                return BoolExpr(call)
        if target.user is not None and self.inline and self.depth < MAX_INLINE_DEPTH:
            if target.user.return_type in ("boolean", "Boolean"):
                return BoolExpr(call)
            return self.inline_call(target.user, recv, args, st)
        if target.user is not None or name in self.user_names:
            return Unknown(f"unanalyzed call {self.program.code(call)}")
        return self.library_call(sig, call, recv, args, st)

    def library_call(self, sig: str, call, recv: Optional[Value], args: List[Value], st: _St) -> object:
        entry = self.library.lookup(sig)
        name = method_name(sig)
        if entry is None:
            return Unknown(f"unmodeled {sig}")
        if entry.returns in ("boolean", "Boolean"):
            return BoolExpr(call)
        if entry.numeric:
            return ad.filtered(NUMERIC, ad.concat(*args) if args else Unknown("number"))
        lits = [a.value if isinstance(a, Lit) else None for a in args]
        if name in ("replace", "replaceAll", "replaceFirst") and recv is not None and len(args) == 2:
            return self._replace(name, recv, args, lits)
        if entry.mutates and recv is not None and isinstance(call, s.Call):
            absorbed = [a for i, a in enumerate(args) if "args" in entry.mutates or f"arg{i}" in entry.mutates]
            new = ad.concat(recv, *absorbed)
            self.refine(call.target, st, lambda v: new)
            return new
        parts: List[Value] = []
        if recv is not None and entry.flows_from_receiver():
            parts.append(recv)
        parts += [a for i, a in enumerate(args) if entry.flows_from_arg(i)]
        if parts:
            return ad.concat(*parts) if len(parts) > 1 else parts[0]
        if entry.returns == "void":
            return Lit(None)
        return Unknown(f"opaque result of {sig}")

    @staticmethod
    def _replace(name: str, recv: Value, args: List[Value], lits: List) -> Value:
        pat, rep = lits
        if isinstance(recv, Lit) and isinstance(pat, str) and isinstance(rep, str) and name == "replace":
            return Lit(str(recv.value).replace(pat, rep))
        if isinstance(pat, str) and isinstance(rep, str):
            if name == "replace":
                # Removing every occurrence of one character, or of "..", leaves none behind.
                if rep == "" and (len(pat) == 1 or pat == ".."):
                    return ad.filtered(Check("absent", pat), recv)
                if len(pat) == 1 and rep == pat * 2:
                    return ad.filtered(Check("escaped", pat), recv)
            if name == "replaceAll" and rep == "":
                chars = ad.negated_class_charset(pat)
                if chars is not None:
                    return ad.filtered(ad.charset_check(chars), recv)
        return ad.concat(recv, args[1])


# ---------------------------------------------------------------------------

def _verdict(result: Optional[bool]) -> SlotState:
    if result is True:
        return SlotState.SATISFIES
    if result is False:
        return SlotState.VIOLATES
    return SlotState.UNKNOWN


def _fenced(doc: Mapping) -> str:
    return "```json\n" + json.dumps(doc, sort_keys=True) + "\n```"


def _locate(program: s.MiniProgram, method: s.MethodDecl, snippet: str):
    want = " ".join(snippet.split())
    for node in s.walk(method.body):
        if isinstance(node, (s.Call, s.New)) and " ".join(program.code(node).split()) == want:
            return node
    return None


def seed_from_state(method: s.MethodDecl, state: Optional[ParameterState]) -> Dict[str, object]:
    """Abstract values for the caller's parameters, from its parameter state."""
    env: Dict[str, object] = {}
    by_index: Dict[int, Dict[str, SlotState]] = {}
    for (idx, path), entry in (state or ParameterState()):
        by_index.setdefault(idx, {})[path] = entry.verdict

    def value(verdict: SlotState, label: str) -> Value:
        if verdict is SlotState.SATISFIES:
            return ad.filtered(ASSERTED, ad.Attacker(label))
        if verdict is SlotState.VIOLATES:
            return ad.Attacker(label)
        return Unknown(label)

    for i, p in enumerate(method.params):
        slots = by_index.get(i)
        if state is not None and slots:
            if "" in slots:
                env[p.name] = value(slots[""], p.name)
            else:
                env[p.name] = Obj(p.type, tuple(sorted((m, value(v, f"{p.name}.{m}")) for m, v in slots.items())))
        elif state is not None and p.type in NUMERIC_TYPES:
            env[p.name] = ad.filtered(NUMERIC, Unknown(p.name))
        else:
            env[p.name] = Unknown(p.name)
    return env


class OracleBackend:
    """Deterministic backend; pure, so safe under concurrent use."""

    kind = "oracle"

    def __init__(self, library: Optional[LibraryTable] = None):
        self.library = library or default_library()
        self.calls = 0

    def solve(self, request: SolverRequest) -> SolverResponse:
        self.calls += 1
        payload = request.payload
        if isinstance(payload, SubtaskPayload):
            return self.solve_subtask(request, payload)
        if isinstance(payload, BranchPayload):
            return self.solve_branch(request, payload)
        raise OracleUnsupportedConstruct("request carries no structured payload")

    # -- main path --------------------------------------------------------

    def _unknown_subtask(self, payload: SubtaskPayload, why: str) -> SolverResponse:
        states = tuple(StateResult(sl.key, SlotState.UNKNOWN, why) for sl in payload.slots)
        raw = _fenced({"transfer": "unknown",
                       "states": [{"slot": slot_label(x.slot), "verdict": "unknown", "reason": why} for x in states]})
        return SolverResponse(Transfer.UNKNOWN, states, raw, degraded=True)

    def solve_subtask(self, request: SolverRequest, payload: SubtaskPayload) -> SolverResponse:
        try:
            program = build_program([payload.caller])
            method = program.method(payload.caller.method_id)
        except (ParseError, KeyError) as exc:
            log.warning("oracle cannot parse %s: %s", payload.caller.method_id, exc)
            return self._unknown_subtask(payload, f"unsupported construct: {exc}")
        site = _locate(program, method, request.call_site)
        if site is None:
            return self._unknown_subtask(payload, "call site not found in caller code")
        interp = Interpreter(program, payload.rule, self.library, facts=payload.facts,
                             user_methods=payload.user_methods, watch=(site.start, site.end))
        try:
            interp.run(method, seed_from_state(method, payload.state))
        except OracleUnsupportedConstruct as exc:
            return self._unknown_subtask(payload, str(exc))
        if not interp.hits:
            transfer = Transfer.INFEASIBLE
            states: Tuple[StateResult, ...] = ()
        else:
            transfer = Transfer.FEASIBLE
            out = []
            pred = payload.rule.condition.predicate
            for sl in payload.slots:
                idx, path = sl.key
                vals = [h[idx] if idx < len(h) else Unknown("missing argument") for h in interp.hits]
                v = ad.join(*vals)
                if path:
                    v = v.field(path) or Unknown(path) if isinstance(v, Obj) else Unknown(f"{sl.name} not an object")
                verdict = _verdict(pred.judge(v))
                out.append(StateResult(sl.key, verdict, f"value at call site: {ad.render(v)}"))
            states = tuple(out)
        raw = _fenced({"transfer": transfer.value,
                       "states": [{"slot": slot_label(x.slot), "verdict": x.verdict.value,
                                   "reason": x.justification} for x in states]})
        return SolverResponse(transfer, states, raw)

    # -- branch methods -----------------------------------------------------

    def solve_branch(self, request: SolverRequest, payload: BranchPayload) -> SolverResponse:
        root = payload.root
        try:
            program = build_program(list(root.bfs()))
            method = program.method(root.method_id)
        except (ParseError, KeyError) as exc:
            log.warning("oracle cannot parse branch %s: %s", root.method_id, exc)
            return SolverResponse(raw="", degraded=True)
        interp = Interpreter(program, payload.rule, self.library, inline=True)
        interp.scope_stack = [Scope(program, method, self.library)]
        pred = payload.rule.condition.predicate
        try:
            if payload.category == 5:
                guarded = tuple(i for i in payload.guard_params if interp.guards(method, i))
                reason = ("true implies " + ", ".join(method.params[i].name for i in guarded)
                          + " satisfy the condition") if guarded else "true does not imply a check"
                guard = GuardFinding(bool(guarded), guarded, reason)
                raw = _fenced({"guards": bool(guarded), "guardedParams": list(guarded), "reason": reason})
                return SolverResponse(raw=raw, guard=guard)
            findings = []
            internal = False
            for obj in payload.objectives:
                for i in obj.params:
                    v = self._target_value(interp, method, obj.target, obj.via_member, {i})
                    ok = pred.judge(v)
                    findings.append(ParamFinding(i, ok is not True, obj.via_member, obj.target,
                                                 f"{method.params[i].name} reaches target as {ad.render(v)}"))
                clean = self._target_value(interp, method, obj.target, obj.via_member, set())
                if pred.judge(clean) is not True:
                    internal = True
        except OracleUnsupportedConstruct as exc:
            log.warning("oracle gave up on branch %s: %s", root.method_id, exc)
            return SolverResponse(raw="", degraded=True)
        sources = (f"internal source in {root.method_id}",) if internal else ()
        raw = _fenced({"params": [{"param": f.param_index, "target": str(f.target),
                                   "unfiltered": f.reaches_target_unfiltered, "reason": f.reason}
                                  for f in findings], "internalSource": internal})
        return SolverResponse(raw=raw, findings=tuple(findings), internal_sources=sources)

    def _target_value(self, interp: Interpreter, method: s.MethodDecl, target: Slot,
                      via_member: Optional[str], attacker: Set[int]) -> Value:
        env = interp.seed_params(method, attacker)
        cls = interp.program.class_decl(method.class_name)
        for f in (cls.fields if cls else ()):
            env["this." + f.name] = Lit(None) if method.is_constructor else ad.filtered(ASSERTED, Unknown(f.name))
        finals = interp.run(method, env)
        alive = [f for f in finals if f.status != "throw"]
        if not alive:
            return Lit(None)
        if target.kind == "return":
            if method.is_constructor:
                vals = [Obj(method.class_name, tuple(sorted((k[5:], _plain(v)) for k, v in f.env.items()
                                                              if k.startswith("this.")))) for f in alive]
            else:
                vals = [f.ret if f.ret is not None else Lit(None) for f in alive]
        elif target.kind == "member":
            vals = [_plain(f.env.get("this." + target.name, Lit(None))) for f in alive]
        else:
            pname = method.params[target.index].name
            vals = [_plain(f.env.get(pname, Unknown(pname))) for f in alive]
        v = ad.join(*vals)
        if via_member and target.kind != "member":
            v = (v.field(via_member) or Lit(None)) if isinstance(v, Obj) else v
        return v
