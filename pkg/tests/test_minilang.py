"""Mini-language frontend: parser, call graph, main paths, taint edges and emission."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from vulnchain.errors import AmbiguousCall, ParseError
from vulnchain.minilang import (
    build_call_graph, compute_taint, emit_summary, extract_main_paths, generate_summary, parse_program,
)
from vulnchain.minilang.emit import config_from_dict
from vulnchain.summary import RETURN, TaintEdge, param, parse_summary, serialize_summary

PT = {"sources": ["HttpServletRequest.getParameter"],
      "sinks": [{"pattern": "Files.readString", "rule": "path-traversal", "argIndices": [0]}]}

DIAMOND = """class D {
    void a(HttpServletRequest r) { String x = r.getParameter("x"); b(x); c(x); }
    void b(String s) { d(s); }
    void c(String s) { d(s); }
    void d(String s) { Files.readString(Paths.get(s)); }
}"""


def test_parse_servlet(servlet_source):
    prog = parse_program(servlet_source)
    assert len(prog.classes) == 1
    assert [m.name for m in prog.methods()] == ["doGet", "read", "getPath", "readFile"]


def test_parse_empty():
    assert parse_program("").classes == ()


def test_parse_error_position():
    with pytest.raises(ParseError) as info:
        parse_program("public void f( {")
    err = info.value
    assert (err.line, err.column) == (1, 16)
    assert ")" in err.expected


def test_call_graph_servlet(servlet_source):
    graph = build_call_graph(parse_program(servlet_source))
    pairs = {(e.caller, e.callee, e.external) for e in graph.edges}
    assert ("FileServlet.read", "FileServlet.getPath", False) in pairs
    assert ("FileServlet.read", "FileServlet.readFile", False) in pairs
    assert ("FileServlet.readFile", "Files.readString", True) in pairs
    code = {m.id: parse_program(servlet_source).code(m) for m in parse_program(servlet_source).methods()}
    for e in graph.edges:
        assert e.call_site in code[e.caller]


def test_call_graph_no_calls():
    graph = build_call_graph(parse_program("class A { int f() { return 1; } }"))
    assert graph.edges == ()


def test_call_graph_recursion_self_edge():
    graph = build_call_graph(parse_program("class R {\n  void f(int n) {\n    f(n);\n  }\n}"))
    assert [(e.caller, e.callee) for e in graph.edges] == [("R.f", "R.f")]


def test_ambiguous_call():
    prog = parse_program("class A { void f() { g(); } void g() { } void g() { } }")
    with pytest.raises(AmbiguousCall):
        build_call_graph(prog)


def test_main_paths_servlet(servlet_source):
    graph = build_call_graph(parse_program(servlet_source))
    paths = extract_main_paths(graph, config_from_dict(PT), 8)
    assert paths == [("FileServlet.doGet", "FileServlet.read", "FileServlet.readFile")]


def test_main_paths_no_sinks(servlet_source):
    graph = build_call_graph(parse_program(servlet_source))
    cfg = config_from_dict({"sources": ["HttpServletRequest.getParameter"], "sinks": []})
    assert extract_main_paths(graph, cfg, 8) == []


def test_main_paths_diamond():
    graph = build_call_graph(parse_program(DIAMOND))
    paths = extract_main_paths(graph, config_from_dict(PT), 8)
    assert paths == [("D.a", "D.b", "D.d"), ("D.a", "D.c", "D.d")]
    assert extract_main_paths(graph, config_from_dict(PT), 2) == []


def test_main_paths_deterministic():
    graph = build_call_graph(parse_program(DIAMOND))
    cfg = config_from_dict(PT)
    assert all(extract_main_paths(graph, cfg, 8) == extract_main_paths(graph, cfg, 8) for _ in range(5))


def test_taint_getpath(servlet_source):
    prog = parse_program(servlet_source)
    assert compute_taint(prog, "FileServlet.getPath") == [TaintEdge(param(0), RETURN)]


def test_taint_constant_return():
    prog = parse_program("class A { int five() { return 5; } }")
    assert compute_taint(prog, "A.five") == []


def test_taint_replace_drops_pattern():
    prog = parse_program('class A { String strip(String a, String b) { return a.replace(b, ""); } }')
    assert compute_taint(prog, "A.strip") == [TaintEdge(param(0), RETURN)]


def _tagged_replace(text, pattern):
    """str.replace(pattern, "") over (char, origin) pairs."""
    out, i, n = [], 0, len(pattern)
    if n == 0:
        return list(text)
    while i < len(text):
        if [c for c, _ in text[i:i + n]] == [c for c, _ in pattern]:
            i += n
        else:
            out.append(text[i])
            i += 1
    return out


def test_replace_origin_oracle():
    # every surviving character of a.replace(b, "") originates in a
    rng = random.Random(7)
    for _ in range(500):
        a = [(rng.choice("ab."), "a") for _ in range(rng.randint(0, 12))]
        b = [(rng.choice("ab."), "b") for _ in range(rng.randint(1, 3))]
        result = _tagged_replace(a, b)
        assert all(origin == "a" for _, origin in result)
        assert "".join(c for c, _ in result) == "".join(c for c, _ in a).replace("".join(c for c, _ in b), "")


_STATEMENTS = [
    "t = a;", "t = t + b;", "f = t;", "t = f;", "t = a.trim();", 't = b.replace("x", "");',
    "t = \"k\";", "if (a.isEmpty()) { t = b; }", "f = a + f;",
]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(_STATEMENTS), max_size=5), st.lists(st.sampled_from(_STATEMENTS), min_size=1, max_size=3))
def test_taint_monotone_under_append(prefix, extra):
    def program(stmts):
        body = " ".join(stmts)
        return parse_program("class M { String f; String m(String a, String b) { String t = \"\"; "
                             + body + " return t; } }")
    before = set(compute_taint(program(prefix), "M.m"))
    after = set(compute_taint(program(prefix + extra), "M.m"))
    assert before <= after


def test_emit_servlet(servlet_source):
    summary = generate_summary(servlet_source, config_from_dict(PT))
    chain = summary.chains[0]
    assert [m.name for m in chain.methods] == ["doGet", "read", "readFile"]
    read = chain.methods[1]
    assert [b.method_id for b in read.branchs] == ["FileServlet.getPath"]
    assert [c.method_id for c in read.branchs[0].children] == ["String.contains"]
    assert chain.methods[2].sink_call.signature == "Files.readString"
    assert chain.methods[2].sink_call.arg_expressions == ("Paths.get(path)",)
    assert chain.methods[1].pass_relationship[0].actual_expression == "fileName"


def test_emit_two_records_no_branches():
    cfg = config_from_dict({"sources": [], "entries": [{"pattern": "E.handle", "taintedArgs": [0]}],
                            "sinks": PT["sinks"]})
    src = "class E {\n void handle(Path p) { load(p); }\n String load(Path q) { return Files.readString(q); }\n}"
    chain = generate_summary(src, cfg).chains[0]
    assert len(chain.methods) == 2
    assert all(m.branchs == () for m in chain.methods)
    assert chain.entry_tainted_args == (0,)


def test_emit_depth_limit():
    src = """class H {
 void main(HttpServletRequest r) { String x = r.getParameter("p"); String y = g1(x); sink(y); }
 String g1(String s) { return g2(s); }
 String g2(String s) { return g3(s); }
 String g3(String s) { return g4(s); }
 String g4(String s) { return s; }
 void sink(String s) { Files.readString(Paths.get(s)); }
}"""
    summary = generate_summary(src, config_from_dict(PT), branch_depth_limit=2)
    tree = [b for b in summary.chains[0].methods[0].branchs if b.name == "g1"][0]
    assert [(n.depth, n.name) for n in tree.walk()] == [(0, "g1"), (1, "g2"), (2, "g3")]


def test_emit_round_trips_and_adjacency():
    prog = parse_program(DIAMOND)
    cfg = config_from_dict(PT)
    paths = extract_main_paths(build_call_graph(prog), cfg, 8)
    summary = emit_summary(prog, paths, cfg)
    assert parse_summary(serialize_summary(summary)) == summary
    for chain in summary.chains:
        for caller, callee in zip(chain.methods, chain.methods[1:]):
            assert callee.snippet_of_called in caller.code
