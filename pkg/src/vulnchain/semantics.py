"""Value types exchanged between branch analysis, context maintenance and the
solver: branch categories, branch findings and simplified context facts."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Tuple

from .state import ParameterState
from .summary import RETURN, Slot


def call_key(method_id: str) -> str:
    """Name under which calls to ``method_id`` are matched in caller code;
    constructors are told apart by their class."""
    owner, _, name = method_id.rpartition(".")
    if name == "<init>":
        return "<init>:" + owner.rsplit(".", 1)[-1]
    return name


class BranchCategory(enum.IntEnum):
    """Branch-method kinds, in tie-breaking order (first match wins)."""

    CRITICAL_CONSTRUCTOR_OR_RETURNER = 1
    ENCAPSULATED_CONSTRUCTOR_OR_RETURNER = 2
    CRITICAL_PARAM_CONSUMER = 3
    ENCAPSULATED_PARAM_CONSUMER = 4
    BOOLEAN_RETURNER = 5
    OTHER = 6

    @property
    def label(self) -> str:
        return {
            1: "CriticalConstructorOrReturner",
            2: "EncapsulatedConstructorOrReturner",
            3: "CriticalParamConsumer",
            4: "EncapsulatedParamConsumer",
            5: "BooleanReturner",
            6: "Other",
        }[int(self)]

    @property
    def per_parameter(self) -> bool:
        return self <= 4


@dataclass(frozen=True)
class ParamFinding:
    """Whether parameter ``param_index`` reaches ``target`` without filtering."""

    param_index: int
    reaches_target_unfiltered: bool
    via_member: Optional[str] = None
    target: Slot = RETURN
    reason: str = ""


@dataclass(frozen=True)
class GuardFinding:
    """Meaning of a boolean result: does ``true`` imply the guarded params satisfy the condition?"""

    guards_condition: bool
    guarded_params: Tuple[int, ...] = ()
    reason: str = ""


@dataclass(frozen=True)
class BranchSemantics:
    method_id: str
    category: BranchCategory
    params: Tuple[ParamFinding, ...] = ()
    guard: Optional[GuardFinding] = None
    dataflow: Tuple = ()  # TaintEdge tuple for the Other category
    rationale: str = ""
    # Source calls inside the branch whose values reach a target unfiltered.
    internal_sources: Tuple[str, ...] = ()
    targets: Tuple[Slot, ...] = ()
    param_names: Tuple[str, ...] = ()
    external: bool = False

    def __post_init__(self):
        if self.category.per_parameter and (self.guard is not None or self.dataflow):
            raise ValueError(f"{self.category.label} carries per-parameter findings only")
        if self.category is BranchCategory.BOOLEAN_RETURNER and (self.params or self.dataflow):
            raise ValueError("BooleanReturner carries a guard finding only")
        if self.category is BranchCategory.OTHER and (self.params or self.guard is not None):
            raise ValueError("Other carries a dataflow relation only")

    @property
    def name(self) -> str:
        return self.method_id.rsplit(".", 1)[-1]

    @property
    def key(self) -> str:
        return call_key(self.method_id)

    def output_slots(self) -> Tuple[Slot, ...]:
        """Slots this branch writes that could carry data back to its caller."""
        out = list(self.targets)
        out += [f.target for f in self.params]
        out += [e.dst for e in self.dataflow]
        seen = []
        for s in out:
            if s not in seen:
                seen.append(s)
        return tuple(seen)


class FactKind(str, enum.Enum):
    DIRECT_ASSIGNMENT = "DirectAssignment"
    STRICT_SECURITY_CHECK = "StrictSecurityCheck"
    UNFILTERED_SOURCE_JUDGMENT = "UnfilteredSourceJudgment"


@dataclass(frozen=True)
class SimplifiedFact:
    """A condensed, prompt-ready statement about one branch method.

    ``target`` is the branch slot the fact is about.  ``params`` are the
    parameter indices still feeding it unfiltered (assignments, judgments) or
    the guarded parameters (checks with ``on_true``).  ``internal`` marks a
    target fed by a source call inside the branch itself.
    """

    kind: FactKind
    subject: str
    statement_text: str
    method_id: str = ""
    target: Slot = RETURN
    params: Tuple[int, ...] = ()
    on_true: bool = False
    internal: bool = False
    member: str = ""  # encapsulated member the fact is about, if any

    @property
    def name(self) -> str:
        return self.method_id.rsplit(".", 1)[-1]

    @property
    def key(self) -> str:
        return call_key(self.method_id)


@dataclass(frozen=True)
class AnalysisContext:
    caller_state: ParameterState
    branch_facts: Tuple[SimplifiedFact, ...]
    rendered_text: str
