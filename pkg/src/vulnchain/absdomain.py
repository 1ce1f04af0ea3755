"""Abstract string values used by the deterministic oracle and by each rule's
machine-checkable non-exploitable condition.

A value is a small tree over ``Lit``, ``Attacker``, ``Concat``, ``Filtered``
plus ``Join`` (may be any alternative), ``Unknown`` and ``Obj`` (records with
named fields).  Judging a value against a condition is three-valued:
``True`` (satisfies), ``False`` (violates) or ``None`` (cannot tell).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import FrozenSet, Iterable, Optional, Tuple, Union


@dataclass(frozen=True)
class Check:
    """What a guard or transformation guarantees about a value.

    ``kind`` is one of ``strict``, ``asserted``, ``numeric``, ``absent``
    (``detail`` = forbidden substring), ``escaped`` (``detail`` = quote char),
    ``charset`` (``detail`` = sorted allowed characters), ``bound``.
    """

    kind: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.kind}({self.detail})" if self.detail else self.kind


STRICT = Check("strict")
ASSERTED = Check("asserted")
NUMERIC = Check("numeric")


@dataclass(frozen=True)
class Lit:
    value: Union[str, int, float, bool, None]


@dataclass(frozen=True)
class Attacker:
    origin: str


@dataclass(frozen=True)
class Unknown:
    reason: str


@dataclass(frozen=True)
class Concat:
    parts: Tuple["Value", ...]


@dataclass(frozen=True)
class Filtered:
    check: Check
    inner: "Value"


@dataclass(frozen=True)
class Join:
    options: Tuple["Value", ...]


@dataclass(frozen=True)
class Obj:
    type: str
    fields: Tuple[Tuple[str, "Value"], ...]

    def field(self, name: str) -> Optional["Value"]:
        for k, v in self.fields:
            if k == name:
                return v
        return None

    def with_field(self, name: str, value: "Value") -> "Obj":
        kept = tuple((k, v) for k, v in self.fields if k != name)
        return Obj(self.type, tuple(sorted(kept + ((name, value),))))


Value = Union[Lit, Attacker, Unknown, Concat, Filtered, Join, Obj]


def concat(*parts: Value) -> Value:
    flat = []
    for p in parts:
        flat.extend(p.parts if isinstance(p, Concat) else (p,))
    merged = []
    for p in flat:
        if (merged and isinstance(p, Lit) and isinstance(merged[-1], Lit)
                and not isinstance(p.value, bool) and not isinstance(merged[-1].value, bool)):
            merged[-1] = Lit(_text(merged[-1].value) + _text(p.value))
        else:
            merged.append(p)
    if len(merged) == 1:
        return merged[0]
    return Concat(tuple(merged))


def _text(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, float) and v.is_integer():
        return str(v)
    return str(v)


def join(*values: Value) -> Value:
    opts = []
    for v in values:
        for o in (v.options if isinstance(v, Join) else (v,)):
            if o not in opts:
                opts.append(o)
    if len(opts) == 1:
        return opts[0]
    return Join(tuple(opts))


def filtered(check: Check, inner: Value) -> Value:
    if isinstance(inner, Lit):
        return inner
    if isinstance(inner, Filtered) and inner.check == check:
        return inner
    return Filtered(check, inner)


def attacker_influenced(value: Value) -> bool:
    if isinstance(value, Attacker):
        return True
    if isinstance(value, (Concat, Join)):
        members = value.parts if isinstance(value, Concat) else value.options
        return any(attacker_influenced(p) for p in members)
    if isinstance(value, Filtered):
        return attacker_influenced(value.inner)
    if isinstance(value, Obj):
        return any(attacker_influenced(v) for _, v in value.fields)
    return False


def render(value: Value) -> str:
    if isinstance(value, Lit):
        return repr(value.value)
    if isinstance(value, Attacker):
        return f"attacker({value.origin})"
    if isinstance(value, Unknown):
        return f"unknown({value.reason})"
    if isinstance(value, Concat):
        return " + ".join(render(p) for p in value.parts)
    if isinstance(value, Filtered):
        return f"{value.check}[{render(value.inner)}]"
    if isinstance(value, Join):
        return "{" + " | ".join(render(o) for o in value.options) + "}"
    if isinstance(value, Obj):
        return f"{value.type}{{" + ", ".join(f"{k}: {render(v)}" for k, v in value.fields) + "}"
    return "?"


# ---------------------------------------------------------------------------
# Regex character classes (whitelist guards)

_CLASS_RE = re.compile(r"^\^?\[(?P<body>(?:\\.|[^\]\\])+)\][+*]\$?$")
_SHORTHANDS = {
    "w": "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_",
    "d": "0123456789",
}


def _class_chars(body: str) -> Optional[FrozenSet[str]]:
    chars = set()
    i = 0
    while i < len(body):
        c = body[i]
        if c == "\\" and i + 1 < len(body):
            nxt = body[i + 1]
            if nxt in _SHORTHANDS:
                chars.update(_SHORTHANDS[nxt])
            elif nxt in "sSWD":
                return None
            else:
                chars.add(nxt)
            i += 2
            continue
        if i + 2 < len(body) and body[i + 1] == "-":
            lo, hi = c, body[i + 2]
            if ord(lo) > ord(hi):
                return None
            chars.update(chr(x) for x in range(ord(lo), ord(hi) + 1))
            i += 3
            continue
        chars.add(c)
        i += 1
    return frozenset(chars)


def regex_charset(pattern: str) -> Optional[FrozenSet[str]]:
    """Allowed characters for a full-match whitelist like ``[a-zA-Z0-9_]+``.

    Returns ``None`` when the pattern is not a single positive character class.
    """
    m = _CLASS_RE.match(pattern)
    if not m or m.group("body").startswith("^"):
        return None
    return _class_chars(m.group("body"))


def negated_class_charset(pattern: str) -> Optional[FrozenSet[str]]:
    """Characters that survive ``replaceAll("[^...]", "")``."""
    m = re.match(r"^\[\^(?P<body>(?:\\.|[^\]\\])+)\][+*]?$", pattern)
    if not m:
        return None
    return _class_chars(m.group("body"))


def charset_check(chars: Iterable[str]) -> Check:
    return Check("charset", "".join(sorted(set(chars))))


# ---------------------------------------------------------------------------
# Conditions

@dataclass(frozen=True)
class OraclePredicate:
    """Machine-checkable non-exploitable condition over abstract values."""

    accepted_kinds: FrozenSet[str] = frozenset({"strict", "asserted", "numeric"})
    absent_substrings: FrozenSet[str] = frozenset()
    escaped_quotes: FrozenSet[str] = frozenset()
    dangerous_chars: FrozenSet[str] = frozenset()
    accepts_charset: bool = True

    def accepts(self, check: Check) -> bool:
        if check.kind in self.accepted_kinds:
            return True
        if check.kind == "absent":
            return check.detail in self.absent_substrings
        if check.kind == "escaped":
            return check.detail in self.escaped_quotes
        if check.kind == "charset":
            return self.accepts_charset and not (set(check.detail) & self.dangerous_chars)
        return False

    def __call__(self, value: Value) -> Optional[bool]:
        return self.judge(value)

    def judge(self, value: Value) -> Optional[bool]:
        if isinstance(value, Lit):
            return True
        if isinstance(value, Attacker):
            return False
        if isinstance(value, Unknown):
            return None
        if isinstance(value, Filtered):
            if self.accepts(value.check):
                return True
            return self.judge(value.inner)
        if isinstance(value, (Concat, Join, Obj)):
            if isinstance(value, Concat):
                members = value.parts
            elif isinstance(value, Join):
                members = value.options
            else:
                members = tuple(v for _, v in value.fields)
            return all3(self.judge(m) for m in members)
        return None


def all3(results: Iterable[Optional[bool]]) -> Optional[bool]:
    """Three-valued conjunction: any False -> False, else any None -> None."""
    seen_none = False
    for r in results:
        if r is False:
            return False
        if r is None:
            seen_none = True
    return None if seen_none else True
