"""Vulnerability rules: critical types, non-exploitable conditions and trigger
formulas for path traversal, SQL injection and command injection."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .absdomain import OraclePredicate
from .errors import MissingState, RuleNotFound
from .library import signature_matches
from .state import ParameterState, SlotState

PATH_TRAVERSAL = "path-traversal"
SQL_INJECTION = "sql-injection"
COMMAND_INJECTION = "command-injection"

STRING_ALIASES = {"StringBuilder": "String", "StringBuffer": "String", "CharSequence": "String"}


# ---------------------------------------------------------------------------
# Trigger formulas

@dataclass(frozen=True)
class Atom:
    index: int

    def __str__(self) -> str:
        return f"arg{self.index}"


@dataclass(frozen=True)
class AnyOf:
    terms: Tuple["Formula", ...]

    def __str__(self) -> str:
        return " or ".join(_wrap(t) for t in self.terms)


@dataclass(frozen=True)
class AllOf:
    terms: Tuple["Formula", ...]

    def __str__(self) -> str:
        return " and ".join(_wrap(t) for t in self.terms)


Formula = Union[Atom, AnyOf, AllOf]


def _wrap(f: Formula) -> str:
    return f"({f})" if isinstance(f, (AnyOf, AllOf)) and len(f.terms) > 1 else str(f)


_TOKEN_RE = re.compile(r"\s*(arg\d+|\(|\)|or|and|\|\||&&)")


@dataclass(frozen=True)
class TriggerFormula:
    """Boolean formula over sink-argument atoms.

    An atom ``argK`` is true when argument K may violate the non-exploitable
    condition.  There is no negation, so the formula is monotone.
    """

    root: Formula

    @classmethod
    def any_of(cls, indices: Iterable[int]) -> "TriggerFormula":
        idx = sorted(set(indices))
        if not idx:
            raise ValueError("a trigger formula needs at least one argument")
        if len(idx) == 1:
            return cls(Atom(idx[0]))
        return cls(AnyOf(tuple(Atom(i) for i in idx)))

    @classmethod
    def parse(cls, text: str) -> "TriggerFormula":
        tokens, pos = [], 0
        text = text.strip()
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if not m or m.end() == pos:
                raise ValueError(f"bad trigger formula near {text[pos:]!r}")
            tokens.append(m.group(1))
            pos = m.end()
        result, rest = _parse_or(tokens)
        if rest:
            raise ValueError(f"trailing tokens in trigger formula: {rest}")
        return cls(result)

    def atoms(self) -> FrozenSet[int]:
        out = set()
        stack = [self.root]
        while stack:
            f = stack.pop()
            if isinstance(f, Atom):
                out.add(f.index)
            else:
                stack.extend(f.terms)
        return frozenset(out)

    def evaluate(self, truth: Mapping[int, bool]) -> bool:
        def ev(f: Formula) -> bool:
            if isinstance(f, Atom):
                return truth[f.index]
            if isinstance(f, AnyOf):
                return any(ev(t) for t in f.terms)
            return all(ev(t) for t in f.terms)
        return ev(self.root)

    def __str__(self) -> str:
        return str(self.root)


def _parse_or(tokens: List[str]):
    left, rest = _parse_and(tokens)
    terms = [left]
    while rest and rest[0] in ("or", "||"):
        nxt, rest = _parse_and(rest[1:])
        terms.append(nxt)
    return (terms[0] if len(terms) == 1 else AnyOf(tuple(terms))), rest


def _parse_and(tokens: List[str]):
    left, rest = _parse_atom(tokens)
    terms = [left]
    while rest and rest[0] in ("and", "&&"):
        nxt, rest = _parse_atom(rest[1:])
        terms.append(nxt)
    return (terms[0] if len(terms) == 1 else AllOf(tuple(terms))), rest


def _parse_atom(tokens: List[str]):
    if not tokens:
        raise ValueError("unexpected end of trigger formula")
    head = tokens[0]
    if head == "(":
        inner, rest = _parse_or(tokens[1:])
        if not rest or rest[0] != ")":
            raise ValueError("unbalanced parenthesis in trigger formula")
        return inner, rest[1:]
    if head.startswith("arg"):
        return Atom(int(head[3:])), tokens[1:]
    raise ValueError(f"unexpected token {head!r} in trigger formula")


# ---------------------------------------------------------------------------
# Rules

@dataclass(frozen=True)
class SinkPattern:
    pattern: str
    arg_indices: Tuple[int, ...]

    def __post_init__(self):
        if not self.pattern:
            raise ValueError("sink pattern must be non-empty")
        if not self.arg_indices:
            raise ValueError(f"sink {self.pattern} declares no sensitive arguments")


@dataclass(frozen=True)
class ConditionSpec:
    """The non-exploitable condition, once in prose (prompts) and once as an
    oracle predicate over abstract values."""

    human_text: str
    predicate: OraclePredicate = field(default_factory=OraclePredicate)
    hazard: str = ""  # short phrase naming what would make the value exploitable


@dataclass(frozen=True)
class VulnerabilityRule:
    id: str
    critical_types: FrozenSet[str]
    condition: ConditionSpec
    sink_patterns: Tuple[SinkPattern, ...]
    source_patterns: Tuple[str, ...] = ()
    trigger: Optional[TriggerFormula] = None
    type_aliases: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.critical_types:
            raise ValueError(f"rule {self.id} has no critical types")
        if self.trigger is not None:
            for sink in self.sink_patterns:
                extra = self.trigger.atoms() - set(sink.arg_indices)
                if extra:
                    raise ValueError(f"trigger of {self.id} references arguments {sorted(extra)} "
                                     f"not declared by sink {sink.pattern}")

    @property
    def aliases(self) -> Dict[str, str]:
        return dict(self.type_aliases)

    def match_sink(self, signature: str) -> Optional[SinkPattern]:
        for sink in self.sink_patterns:
            if signature_matches(sink.pattern, signature):
                return sink
        return None

    def trigger_for(self, signature: Optional[str] = None) -> Optional[TriggerFormula]:
        if self.trigger is not None:
            return self.trigger
        sink = self.match_sink(signature) if signature else None
        return TriggerFormula.any_of(sink.arg_indices) if sink else None


_SERVLET_SOURCES = (
    "HttpServletRequest.getParameter",
    "HttpServletRequest.getParameterValues",
    "HttpServletRequest.getHeader",
    "HttpServletRequest.getQueryString",
    "Cookie.getValue",
)

_SQL_DANGEROUS = frozenset("'\";-#/*=\\ \t\n")
_SHELL_DANGEROUS = frozenset(";&|`$()<>\\\"' \t\n*?!{}[]~")


def builtin_rules() -> List[VulnerabilityRule]:
    aliases = tuple(sorted(STRING_ALIASES.items()))
    path = VulnerabilityRule(
        id=PATH_TRAVERSAL,
        critical_types=frozenset({"String", "Path", "File", "URI"}),
        condition=ConditionSpec(
            human_text=('The value cannot contain the ".." traversal sequence originating from '
                        'attacker-controlled input.'),
            predicate=OraclePredicate(absent_substrings=frozenset({".."}), dangerous_chars=frozenset(".")),
            hazard='can contain ".."',
        ),
        sink_patterns=(
            SinkPattern("Files.readString", (0,)),
            SinkPattern("Files.readAllBytes", (0,)),
            SinkPattern("Files.newInputStream", (0,)),
            SinkPattern("Files.delete", (0,)),
            SinkPattern("Files.write", (0,)),
            SinkPattern("FileInputStream.<init>", (0,)),
            SinkPattern("FileReader.<init>", (0,)),
            SinkPattern("FileOutputStream.<init>", (0,)),
        ),
        source_patterns=_SERVLET_SOURCES,
        type_aliases=aliases,
    )
    sql = VulnerabilityRule(
        id=SQL_INJECTION,
        critical_types=frozenset({"String"}),
        condition=ConditionSpec(
            human_text=("Attacker-controlled text cannot alter the query structure: quote and comment "
                        "metacharacters are neutralized (escaped or rejected), or the value is bound "
                        "through a parameterized call instead of being spliced into the query text."),
            predicate=OraclePredicate(
                accepted_kinds=frozenset({"strict", "asserted", "numeric", "bound"}),
                absent_substrings=frozenset({"'"}),
                escaped_quotes=frozenset({"'"}),
                dangerous_chars=_SQL_DANGEROUS,
            ),
            hazard="can inject quote or comment metacharacters into the query text",
        ),
        sink_patterns=(
            SinkPattern("Statement.executeQuery", (0,)),
            SinkPattern("Statement.executeUpdate", (0,)),
            SinkPattern("Statement.execute", (0,)),
            SinkPattern("Statement.addBatch", (0,)),
            SinkPattern("Connection.prepareStatement", (0,)),
            SinkPattern("JdbcTemplate.query", (0,)),
            SinkPattern("JdbcTemplate.queryForList", (0,)),
            SinkPattern("JdbcTemplate.update", (0,)),
        ),
        source_patterns=_SERVLET_SOURCES,
        type_aliases=aliases,
    )
    cmd = VulnerabilityRule(
        id=COMMAND_INJECTION,
        critical_types=frozenset({"String"}),
        condition=ConditionSpec(
            human_text=("Attacker-controlled text cannot introduce shell metacharacters "
                        "(such as ; & | ` $ > <) or whitespace that starts a new argument."),
            predicate=OraclePredicate(dangerous_chars=_SHELL_DANGEROUS),
            hazard="can inject shell metacharacters or extra arguments",
        ),
        sink_patterns=(
            SinkPattern("Runtime.exec", (0,)),
            SinkPattern("ProcessBuilder.<init>", (0,)),
            SinkPattern("ProcessBuilder.command", (0,)),
        ),
        source_patterns=_SERVLET_SOURCES,
        type_aliases=aliases,
    )
    return [path, sql, cmd]


class RuleRegistry:
    def __init__(self, rules: Iterable[VulnerabilityRule]):
        self._rules: Dict[str, VulnerabilityRule] = {}
        for r in rules:
            if r.id in self._rules:
                raise ValueError(f"duplicate rule id {r.id!r}")
            self._rules[r.id] = r

    @classmethod
    def builtin(cls) -> "RuleRegistry":
        return cls(builtin_rules())

    def get(self, rule_id: str) -> VulnerabilityRule:
        try:
            return self._rules[rule_id]
        except KeyError:
            raise RuleNotFound(f"no rule with id {rule_id!r}") from None

    def __contains__(self, rule_id: str) -> bool:
        return rule_id in self._rules

    def __iter__(self):
        return iter(self._rules.values())

    def ids(self) -> List[str]:
        return sorted(self._rules)

    def with_overrides(self, overrides: Sequence[Mapping]) -> "RuleRegistry":
        rules = dict(self._rules)
        for ov in overrides:
            rid = ov.get("id")
            if not rid:
                raise ValueError("rule override without an id")
            rules[rid] = _apply_override(rules.get(rid), ov)
        return RuleRegistry(rules.values())


def _apply_override(base: Optional[VulnerabilityRule], ov: Mapping) -> VulnerabilityRule:
    sinks = None
    if "sinkPatterns" in ov:
        sinks = tuple(SinkPattern(s["pattern"], tuple(s["argIndices"])) for s in ov["sinkPatterns"])
    trigger = TriggerFormula.parse(ov["triggerFormula"]) if ov.get("triggerFormula") else None
    if base is None:
        predicate = OraclePredicate(dangerous_chars=frozenset(ov.get("dangerousChars", "")))
        return VulnerabilityRule(
            id=ov["id"],
            critical_types=frozenset(ov.get("criticalTypes", ())),
            condition=ConditionSpec(ov.get("conditionText", ""), predicate, ov.get("hazard", "")),
            sink_patterns=sinks or (),
            source_patterns=tuple(ov.get("sourcePatterns", _SERVLET_SOURCES)),
            trigger=trigger,
            type_aliases=tuple(sorted(ov.get("typeAliases", STRING_ALIASES).items())),
        )
    cond = base.condition
    if "conditionText" in ov:
        cond = replace(cond, human_text=ov["conditionText"])
    return replace(
        base,
        critical_types=frozenset(ov["criticalTypes"]) if "criticalTypes" in ov else base.critical_types,
        condition=cond,
        sink_patterns=sinks if sinks is not None else base.sink_patterns,
        source_patterns=tuple(ov["sourcePatterns"]) if "sourcePatterns" in ov else base.source_patterns,
        trigger=trigger if trigger is not None else base.trigger,
    )


def load_rule_overrides(path: Union[str, Path], registry: Optional[RuleRegistry] = None) -> RuleRegistry:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    overrides = doc if isinstance(doc, list) else [doc]
    return (registry or RuleRegistry.builtin()).with_overrides(overrides)


def trigger_satisfied(rule: VulnerabilityRule, sink_state: ParameterState,
                      sink_signature: Optional[str] = None) -> bool:
    """Whether the sink state meets the trigger formula.

    ``Unknown`` counts as violating, which keeps doubt on the exploitable side.
    Without a matching sink signature, the formula defaults to an OR over the
    state's own argument slots.
    """
    formula = rule.trigger_for(sink_signature)
    if formula is None:
        indices = sorted({k[0] for k in sink_state.keys()})
        if not indices:
            return False
        formula = TriggerFormula.any_of(indices)
    truth: Dict[int, bool] = {}
    for idx in formula.atoms():
        entries = [e for (i, _), e in sink_state if i == idx]
        if not entries:
            raise MissingState(f"sink state has no entry for argument {idx} of rule {rule.id}")
        truth[idx] = any(e.verdict is not SlotState.SATISFIES for e in entries)
    return formula.evaluate(truth)
