"""Exception hierarchy shared by every stage of the analysis."""

from __future__ import annotations

from typing import FrozenSet, Optional


class VulnChainError(Exception):
    """Base class for all errors raised by this package."""


class SummaryError(VulnChainError):
    pass


class SummarySyntaxError(SummaryError):
    """The summary document is not valid JSON."""


class SchemaError(SummaryError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class ChainError(SummaryError):
    def __init__(self, chain_id: str, pair_index: Optional[int], message: str):
        where = f"chain {chain_id!r}"
        if pair_index is not None:
            where += f" pair {pair_index}"
        super().__init__(f"{where}: {message}")
        self.chain_id = chain_id
        self.pair_index = pair_index


class UnknownType(VulnChainError):
    def __init__(self, type_name: str, context: str = ""):
        msg = f"unknown type {type_name!r}"
        if context:
            msg += f" ({context})"
        super().__init__(msg)
        self.type_name = type_name


class ParseError(VulnChainError):
    """Mini-language syntax error with position and the expected-token set."""

    def __init__(self, message: str, line: int, column: int, expected: FrozenSet[str] = frozenset()):
        text = f"{line}:{column}: {message}"
        if expected:
            text += " (expected one of: " + ", ".join(sorted(expected)) + ")"
        super().__init__(text)
        self.line = line
        self.column = column
        self.expected = expected


class AmbiguousCall(VulnChainError):
    pass


class MissingState(VulnChainError):
    pass


class RuleNotFound(VulnChainError):
    pass


class BudgetError(VulnChainError):
    pass


class BackendError(VulnChainError):
    """Transport or timeout failure talking to a solver backend."""


class TransportError(BackendError):
    pass


class MalformedResponse(VulnChainError):
    pass


class OracleUnsupportedConstruct(VulnChainError):
    pass


class EmptyCounts(VulnChainError):
    pass
