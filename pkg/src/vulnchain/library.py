"""Library surface table: return types and value-propagation behaviour of
external methods the mini-language programs may call.

The table ships as ``data/library.json`` and can be extended at runtime with
extra entries (same shape) or a user JSON file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, Mapping, Optional, Tuple, Union


@dataclass(frozen=True)
class LibraryMethod:
    name: str
    returns: str
    flow: Tuple[str, ...] = ()
    mutates: Tuple[str, ...] = ()
    numeric: bool = False

    def flows_from_receiver(self) -> bool:
        return "recv" in self.flow

    def flows_from_arg(self, index: int) -> bool:
        return "args" in self.flow or f"arg{index}" in self.flow


def method_name(signature: str) -> str:
    """``"Files.readString"`` -> ``"readString"``."""
    return signature.rsplit(".", 1)[-1]


def signature_matches(pattern: str, signature: str) -> bool:
    """A pattern matches the full signature or any dotted suffix of it."""
    if not pattern:
        return False
    return signature == pattern or signature.endswith("." + pattern)


class LibraryTable:
    def __init__(self, methods: Mapping[str, LibraryMethod], known_types: Iterable[str]):
        self._methods: Dict[str, LibraryMethod] = dict(methods)
        self.known_types: FrozenSet[str] = frozenset(known_types)

    def lookup(self, signature: str) -> Optional[LibraryMethod]:
        if signature in self._methods:
            return self._methods[signature]
        return self._methods.get(method_name(signature))

    def signatures(self) -> FrozenSet[str]:
        return frozenset(self._methods)

    def extend(self, entries: Mapping[str, Mapping], known_types: Iterable[str] = ()) -> "LibraryTable":
        merged = dict(self._methods)
        merged.update(_parse_methods(entries))
        return LibraryTable(merged, self.known_types | frozenset(known_types))


def _parse_methods(entries: Mapping[str, Mapping]) -> Dict[str, LibraryMethod]:
    out = {}
    for key, spec in entries.items():
        out[key] = LibraryMethod(
            name=key,
            returns=spec.get("returns", "Object"),
            flow=tuple(spec.get("flow", ())),
            mutates=tuple(spec.get("mutates", ())),
            numeric=bool(spec.get("numeric", False)),
        )
    return out


def load_library(path: Union[str, Path, None] = None) -> LibraryTable:
    if path is None:
        text = resources.files("vulnchain").joinpath("data/library.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    doc = json.loads(text)
    return LibraryTable(_parse_methods(doc.get("methods", {})), doc.get("knownTypes", ()))


@lru_cache(maxsize=1)
def default_library() -> LibraryTable:
    return load_library()
