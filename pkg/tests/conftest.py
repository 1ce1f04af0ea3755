from __future__ import annotations

from pathlib import Path

import pytest

from vulnchain.minilang.emit import config_from_dict
from vulnchain.rules import RuleRegistry

TESTS = Path(__file__).resolve().parent
FIXTURES = TESTS / "fixtures"
CORPUS = TESTS.parent / "corpus"

PT_CONFIG = {
    "sources": ["HttpServletRequest.getParameter"],
    "sinks": [{"pattern": "Files.readString", "rule": "path-traversal", "argIndices": [0]}],
}
SQL_CONFIG = {
    "sources": ["HttpServletRequest.getParameter"],
    "sinks": [{"pattern": "Statement.executeQuery", "rule": "sql-injection", "argIndices": [0]},
              {"pattern": "PreparedStatement.executeQuery", "rule": "sql-injection", "argIndices": [0]}],
}


@pytest.fixture(scope="session")
def registry() -> RuleRegistry:
    return RuleRegistry.builtin()


@pytest.fixture(scope="session")
def pt_rule(registry):
    return registry.get("path-traversal")


@pytest.fixture(scope="session")
def pt_config():
    return config_from_dict(PT_CONFIG)


@pytest.fixture(scope="session")
def servlet_source() -> str:
    return (FIXTURES / "servlet.mj").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def servlet_mutant(servlet_source) -> str:
    """The file servlet with the ``..`` guard removed from getPath."""
    guarded = """        if (!fileName.contains("..")) {
            return "/tmp/files/" + fileName;
        } else {
            throw new IllegalArgumentException("Invalid file name");
        }"""
    assert guarded in servlet_source
    return servlet_source.replace(guarded, '        return "/tmp/files/" + fileName;')


@pytest.fixture(scope="session")
def servlet_summary_text() -> str:
    return (FIXTURES / "servlet_summary.json").read_text(encoding="utf-8")


class CapturingBackend:
    """Passes requests to another backend and keeps (request, response) pairs."""

    def __init__(self, inner=None):
        from vulnchain.solver import OracleBackend

        self.inner = inner or OracleBackend()
        self.exchanges = []

    def solve(self, request):
        resp = self.inner.solve(request)
        self.exchanges.append((request, resp))
        return resp

    def subtasks(self):
        return [(q, r) for q, r in self.exchanges if q.kind == "SubtaskDerivation"]


@pytest.fixture(scope="session")
def corpus():
    from vulnchain.harness import LabeledCorpus

    return LabeledCorpus.load(CORPUS)


@pytest.fixture(scope="session")
def corpus_summaries(corpus):
    """Source path -> emitted summary, for every corpus case."""
    from vulnchain.harness import load_source

    return {e.source: load_source(corpus.root, e.source) for e in corpus.entries}


# Acceptance results, echoed in the terminal summary so they show without ``-s``.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
