"""Branch-tree pruning, category selection and branch semantics."""

from __future__ import annotations

import itertools
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from vulnchain.branch import PruneConfig, analyze_branch, classify_branch, prune_tree
from vulnchain.errors import TransportError, UnknownType
from vulnchain.minilang.emit import generate_summary
from vulnchain.semantics import BranchCategory
from vulnchain.solver import OracleBackend
from vulnchain.summary import RETURN, BranchRecord, MethodRecord, TaintEdge, Variable, param

CAT = BranchCategory


class CountingBackend:
    def __init__(self, inner=None):
        self.inner = inner or OracleBackend()
        self.calls = 0

    def solve(self, request):
        self.calls += 1
        return self.inner.solve(request)


class FailingBackend:
    def solve(self, request):
        raise TransportError("connection refused")


def _rec(sig, args=(), code=None, **kw):
    code = code if code is not None else sig + " { }"
    return BranchRecord("A", sig, code, args=tuple(Variable(n, t) for n, t in args), **kw)


@pytest.fixture(scope="module")
def getpath(servlet_source, pt_config):
    chain = generate_summary(servlet_source, pt_config).chains[0]
    return chain.methods[1].branchs[0]


def test_classify_getpath(getpath, pt_rule):
    assert classify_branch(getpath, pt_rule) is CAT.CRITICAL_CONSTRUCTOR_OR_RETURNER


def test_classify_boolean_with_critical_param(pt_rule):
    rec = _rec("boolean isSafe(String s)", [("s", "String")])
    assert classify_branch(rec, pt_rule) is CAT.CRITICAL_PARAM_CONSUMER


def test_classify_boolean_returner(pt_rule):
    assert classify_branch(_rec("boolean flagUp()"), pt_rule) is CAT.BOOLEAN_RETURNER


def test_classify_other_and_unknown(pt_rule):
    assert classify_branch(_rec("void tick(int n)", [("n", "int")]), pt_rule) is CAT.OTHER
    with pytest.raises(UnknownType):
        classify_branch(_rec("void f(Widget w)", [("w", "Widget")]), pt_rule)


def test_classify_encapsulated(pt_rule):
    holder = BranchRecord("Holder", "Holder()", "Holder() { }", is_constructor=True,
                          member_variables=(Variable("path", "String"),))
    assert classify_branch(holder, pt_rule) is CAT.ENCAPSULATED_CONSTRUCTOR_OR_RETURNER


def test_prune_getpath_keeps_contains_signature(getpath):
    pruned = prune_tree(getpath, RETURN, PruneConfig())
    assert [c.signature for c in pruned.children] == ["String.contains"]
    assert pruned.children[0].code == ""
    assert pruned.code == getpath.code


def test_prune_single_node(pt_rule):
    node = _rec("String one(String s)", [("s", "String")], "String one(String s) { return s; }")
    assert prune_tree(node, RETURN, PruneConfig()) == node


def _balanced(depth, counter, level=0):
    k = next(counter)
    kids = () if level == depth else tuple(_balanced(depth, counter, level + 1) for _ in range(2))
    calls = " + ".join(f"h{id_}(s)" for id_ in [c.name[1:] for c in kids]) if kids else ""
    body = f"return s + {calls};" if kids else "return s;"
    sig = f"String h{k}(String s)"
    return BranchRecord("T", sig, f"{sig} {{ {body} }}", args=(Variable("s", "String"),),
                        children=kids, depth=level, snippet_of_called=f"h{k}(s)",
                        polluted_position=(TaintEdge(param(0), RETURN),))


def test_upper_limit_keeps_bfs_prefix():
    tree = _balanced(3, itertools.count())
    assert tree.size() == 15
    pruned = prune_tree(tree, RETURN, PruneConfig(max_depth=10, max_methods=7, known_semantics=frozenset()))
    assert [n.name for n in pruned.bfs()] == [n.name for n in tree.bfs()[:7]]


def test_layer_filter():
    tree = _balanced(3, itertools.count())
    pruned = prune_tree(tree, RETURN, PruneConfig(max_depth=1, max_methods=99, known_semantics=frozenset()))
    assert pruned.size() == 3


def test_dataflow_filter_drops_unconnected_child():
    logger = BranchRecord("A", "void audit(String m)", "void audit(String m) { }", args=(Variable("m", "String"),),
                          depth=1, snippet_of_called='audit("hit")')
    helper = BranchRecord("A", "String norm(String s)", "String norm(String s) { return s; }",
                          args=(Variable("s", "String"),), depth=1, snippet_of_called="norm(p)")
    root = BranchRecord("A", "String wrap(String p)",
                        'String wrap(String p) { audit("hit"); String q = norm(p); return q; }',
                        args=(Variable("p", "String"),), children=(logger, helper))
    pruned = prune_tree(root, RETURN, PruneConfig(known_semantics=frozenset()))
    assert [c.name for c in pruned.children] == ["norm"]


# ---------------------------------------------------------------------------
# Generated trees

_ids = itertools.count()


@st.composite
def _trees(draw, level=0, max_level=4):
    k = next(_ids)
    n_kids = 0 if level == max_level else draw(st.integers(0, 3))
    kids = [draw(_trees(level=level + 1, max_level=max_level)) for _ in range(n_kids)]
    parts = []
    for c in kids:
        if c.snippet_of_called.endswith("(s)"):
            parts.append(f"r = r + {c.snippet_of_called};")
        else:
            parts.append(f"{c.snippet_of_called};")
    connected = draw(st.booleans())
    sig = f"String g{k}(String s)"
    code = f"{sig} {{ String r = s; {' '.join(parts)} return r; }}"
    return BranchRecord("G", sig, code, args=(Variable("s", "String"),), children=tuple(kids), depth=level,
                        snippet_of_called=f"g{k}(s)" if connected else f'g{k}("k")',
                        polluted_position=(TaintEdge(param(0), RETURN),))


_configs = st.builds(PruneConfig, max_depth=st.integers(0, 4), max_methods=st.integers(1, 12),
                     known_semantics=st.sampled_from([frozenset(), frozenset({"G.g1", "G.g7"})]))


@settings(max_examples=200, deadline=None)
@given(_trees(), _configs)
def test_prune_idempotent_and_shrinking(tree, config):
    once = prune_tree(tree, RETURN, config)
    assert prune_tree(once, RETURN, config) == once
    assert once.size() <= tree.size()
    assert once.size() <= config.max_methods
    assert once.method_id == tree.method_id
    assert all(n.depth <= config.max_depth for n in once.walk())


# ---------------------------------------------------------------------------
# analyze_branch

def test_analyze_getpath_filtered(getpath, pt_rule):
    pruned = prune_tree(getpath, RETURN)
    sem = analyze_branch(pruned, CAT.CRITICAL_CONSTRUCTOR_OR_RETURNER, pt_rule, OracleBackend())
    assert [(f.param_index, f.reaches_target_unfiltered) for f in sem.params] == [(0, False)]


def test_analyze_two_param_concat(pt_rule):
    sig = "String join(String a, String b)"
    code = (sig + ' { if (b.contains("..")) { throw new IllegalArgumentException("bad"); } return a + b; }')
    rec = BranchRecord("A", sig, code, args=(Variable("a", "String"), Variable("b", "String")),
                       polluted_position=(TaintEdge(param(0), RETURN), TaintEdge(param(1), RETURN)))
    sem = analyze_branch(rec, classify_branch(rec, pt_rule), pt_rule, OracleBackend())
    assert [(f.param_index, f.reaches_target_unfiltered) for f in sem.params] == [(0, True), (1, False)]


def test_analyze_other_copies_dataflow(pt_rule):
    rec = _rec("void tick(int n)", [("n", "int")], polluted_position=(TaintEdge(param(0), RETURN),))
    backend = CountingBackend()
    sem = analyze_branch(rec, CAT.OTHER, pt_rule, backend)
    assert sem.dataflow == (TaintEdge(param(0), RETURN),)
    assert backend.calls == 0


def test_analyze_degrades_conservatively(getpath, pt_rule):
    sem = analyze_branch(prune_tree(getpath, RETURN), CAT.CRITICAL_CONSTRUCTOR_OR_RETURNER, pt_rule, FailingBackend())
    assert [(f.param_index, f.reaches_target_unfiltered) for f in sem.params] == [(0, True)]


def test_analyze_guard(pt_rule):
    sig = "boolean ok()"
    rec = BranchRecord("A", sig, sig + " { return true; }")
    sem = analyze_branch(rec, CAT.BOOLEAN_RETURNER, pt_rule, CountingBackend())
    assert sem.guard is not None and sem.guard.guards_condition is False


def test_analyze_deterministic(getpath, pt_rule):
    pruned = prune_tree(getpath, RETURN)
    runs = {repr(analyze_branch(pruned, CAT.CRITICAL_CONSTRUCTOR_OR_RETURNER, pt_rule, OracleBackend()))
            for _ in range(3)}
    assert len(runs) == 1
