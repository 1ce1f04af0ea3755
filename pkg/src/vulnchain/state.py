"""Parameter states: per critical slot, whether the value satisfies the rule's
non-exploitable condition."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Tuple

SlotKey = Tuple[int, str]  # (argIndex, memberPath); memberPath "" for the parameter itself


class SlotState(str, enum.Enum):
    SATISFIES = "satisfies"
    UNKNOWN = "unknown"
    VIOLATES = "violates"

    @property
    def rank(self) -> int:
        # lattice order: SATISFIES < UNKNOWN < VIOLATES
        return {"satisfies": 0, "unknown": 1, "violates": 2}[self.value]

    @classmethod
    def parse(cls, text: str) -> "SlotState":
        t = text.strip().lower()
        for alias, state in (("satisf", cls.SATISFIES), ("violat", cls.VIOLATES), ("unknown", cls.UNKNOWN)):
            if t.startswith(alias):
                return state
        raise ValueError(f"unknown slot state {text!r}")


def slot_label(key: SlotKey) -> str:
    idx, path = key
    return f"{idx}.{path}" if path else str(idx)


def parse_slot_label(text) -> SlotKey:
    if isinstance(text, bool):
        raise ValueError("boolean slot")
    if isinstance(text, int):
        return (text, "")
    head, _, path = str(text).partition(".")
    return (int(head), path)


@dataclass(frozen=True)
class StateEntry:
    verdict: SlotState
    justification: str = ""
    source_trail: Tuple[str, ...] = ()
    name: str = ""  # parameter name, or "param.member" for member paths


@dataclass(frozen=True)
class ParameterState:
    entries: Tuple[Tuple[SlotKey, StateEntry], ...] = ()
    # Source-call expressions in the method's own code that yield attacker data.
    sources: Tuple[str, ...] = ()

    @classmethod
    def of(cls, mapping: Mapping[SlotKey, StateEntry], sources: Iterable[str] = ()) -> "ParameterState":
        return cls(tuple(sorted(mapping.items())), tuple(sources))

    def as_dict(self) -> Dict[SlotKey, StateEntry]:
        return dict(self.entries)

    def keys(self) -> List[SlotKey]:
        return [k for k, _ in self.entries]

    def get(self, key: SlotKey) -> Optional[StateEntry]:
        for k, v in self.entries:
            if k == key:
                return v
        return None

    def __iter__(self) -> Iterator[Tuple[SlotKey, StateEntry]]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def verdicts(self) -> Dict[SlotKey, SlotState]:
        return {k: v.verdict for k, v in self.entries}

    def with_entries(self, mapping: Mapping[SlotKey, StateEntry]) -> "ParameterState":
        return replace(self, entries=tuple(sorted(mapping.items())))

    def to_json(self) -> List[Dict]:
        return [
            {"slot": slot_label(k), "name": v.name, "state": v.verdict.value,
             "justification": v.justification, "sourceTrail": list(v.source_trail)}
            for k, v in self.entries
        ]
