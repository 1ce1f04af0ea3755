"""Write the labeled mutation corpus under corpus/.

Each case is one mini-language class holding a single source-to-sink chain.
Labels come from how the case was built (guard present, removed, weakened
or parameterized), never from running the analysis.  Every case's chain id
is taken from the emitted summary, which must contain exactly one chain.

    python3 tools/gen_corpus.py [--out corpus]
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path
from typing import List, NamedTuple

from vulnchain.minilang.emit import config_from_dict, generate_summary
from vulnchain.rules import builtin_rules


class Case(NamedTuple):
    name: str
    rule: str
    exploitable: bool
    family: str
    code: str


PT, SQ, CM = "path-traversal", "sql-injection", "command-injection"

# --- path traversal -------------------------------------------------------

PT_SERVLET = """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws IOException {
        String fileName = request.getParameter("fileName");
        String content = read(fileName);
        response.getWriter().write(content);
    }

    public String read(String fileName) throws IOException {
        String path = getPath(fileName);
        return readFile(path);
    }

    public String getPath(String fileName) {
        $GUARD
    }

    public String readFile(String path) throws IOException {
        return Files.readString(Paths.get(path));
    }
}
"""

PT_GUARDS = {
    "guarded": (False, """if (!fileName.contains("..")) {
            return "/tmp/files/" + fileName;
        } else {
            throw new IllegalArgumentException("Invalid file name");
        }"""),
    "guard-removed": (True, """return "/tmp/files/" + fileName;"""),
    "guard-weakened-startswith": (True, """if (!fileName.startsWith("/")) {
            return "/tmp/files/" + fileName;
        }
        throw new IllegalArgumentException("absolute path");"""),
    "guard-logs-only": (True, """if (fileName.contains("..")) {
            System.out.println("suspicious name");
        }
        return "/tmp/files/" + fileName;"""),
    "replace-dots": (False, """return "/tmp/files/" + fileName.replace("..", "");"""),
    "replace-slash-only": (True, """return "/tmp/files/" + fileName.replace("../", "");"""),
    "regex-whitelist": (False, """if (fileName.matches("[a-zA-Z0-9_]+")) {
            return "/tmp/files/" + fileName + ".txt";
        }
        return "/tmp/files/default.txt";"""),
    "equals-whitelist": (False, """if (fileName.equals("a.txt") || fileName.equals("b.txt")) {
            return "/tmp/files/" + fileName;
        }
        return "/tmp/files/a.txt";"""),
    "partial-guard-or": (True, """if (fileName.equals("a.txt") || !fileName.startsWith(".")) {
            return "/tmp/files/" + fileName;
        }
        return "/tmp/files/a.txt";"""),
    "nested-helper-clean": (False, """return "/tmp/files/" + clean(fileName);
    }

    public String clean(String name) {
        return name.replace("..", "");"""),
    "nested-helper-noop": (True, """return "/tmp/files/" + clean(fileName);
    }

    public String clean(String name) {
        return name.trim();"""),
}

PT_EXTRA = [
    Case("pt-inline-throw", PT, False, "guard present", """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws IOException {
        String name = request.getParameter("name");
        show(name);
    }

    public void show(String name) throws IOException {
        if (name.contains("..")) {
            throw new SecurityException("traversal");
        }
        load("/srv/data/" + name);
    }

    public String load(String path) throws IOException {
        return Files.readString(Paths.get(path));
    }
}
"""),
    Case("pt-inline-none", PT, True, "guard removed", """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws IOException {
        String name = request.getParameter("name");
        show(name);
    }

    public void show(String name) throws IOException {
        load("/srv/data/" + name);
    }

    public String load(String path) throws IOException {
        return Files.readString(Paths.get(path));
    }
}
"""),
    Case("pt-wrong-variable", PT, True, "guard weakened", """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws IOException {
        String dir = request.getParameter("dir");
        String name = request.getParameter("name");
        open(dir, name);
    }

    public void open(String dir, String name) throws IOException {
        if (dir.contains("..")) {
            throw new SecurityException("traversal");
        }
        load(dir + "/" + name);
    }

    public String load(String path) throws IOException {
        return Files.readString(Paths.get(path));
    }
}
"""),
    Case("pt-both-checked", PT, False, "guard present", """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws IOException {
        String dir = request.getParameter("dir");
        String name = request.getParameter("name");
        open(dir, name);
    }

    public void open(String dir, String name) throws IOException {
        if (dir.contains("..") || name.contains("..")) {
            throw new SecurityException("traversal");
        }
        load(dir + "/" + name);
    }

    public String load(String path) throws IOException {
        return Files.readString(Paths.get(path));
    }
}
"""),
    Case("pt-dead-path", PT, False, "dead path", """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws IOException {
        String name = request.getParameter("name");
        show(name);
    }

    public void show(String name) throws IOException {
        boolean enabled = false;
        if (enabled) {
            load(name);
        }
    }

    public String load(String path) throws IOException {
        return Files.readString(Paths.get(path));
    }
}
"""),
    Case("pt-constant-file", PT, False, "constant input", """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws IOException {
        String name = request.getParameter("name");
        response.setContentType(name);
        show("index.html");
    }

    public void show(String name) throws IOException {
        load("/srv/www/" + name);
    }

    public String load(String path) throws IOException {
        return Files.readString(Paths.get(path));
    }
}
"""),
    Case("pt-numeric-id", PT, False, "numeric conversion", """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws IOException {
        String id = request.getParameter("id");
        show(id);
    }

    public void show(String id) throws IOException {
        int n = Integer.parseInt(id);
        load("/srv/data/" + n + ".txt");
    }

    public String load(String path) throws IOException {
        return Files.readString(Paths.get(path));
    }
}
"""),
    Case("pt-header-stream", PT, True, "guard removed", """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws IOException {
        String lang = request.getHeader("Accept-Language");
        serve(lang);
    }

    public void serve(String lang) throws IOException {
        String file = "/srv/i18n/" + lang + ".properties";
        stream(file);
    }

    public void stream(String file) throws IOException {
        FileInputStream in = new FileInputStream(file);
        in.close();
    }
}
"""),
    Case("pt-header-stream-guarded", PT, False, "guard present", """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws IOException {
        String lang = request.getHeader("Accept-Language");
        serve(lang);
    }

    public void serve(String lang) throws IOException {
        if (!lang.matches("[a-z]+")) {
            throw new IllegalArgumentException("bad language");
        }
        String file = "/srv/i18n/" + lang + ".properties";
        stream(file);
    }

    public void stream(String file) throws IOException {
        FileInputStream in = new FileInputStream(file);
        in.close();
    }
}
"""),
    Case("pt-four-hop-guarded", PT, False, "guard present", """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws IOException {
        String name = request.getParameter("name");
        first(name);
    }

    public void first(String name) throws IOException {
        if (name.contains("..")) {
            return;
        }
        second("/srv/" + name);
    }

    public void second(String path) throws IOException {
        third(path + ".log");
    }

    public void third(String path) throws IOException {
        Files.delete(Paths.get(path));
    }
}
"""),
    Case("pt-four-hop-open", PT, True, "guard removed", """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws IOException {
        String name = request.getParameter("name");
        first(name);
    }

    public void first(String name) throws IOException {
        second("/srv/" + name);
    }

    public void second(String path) throws IOException {
        third(path + ".log");
    }

    public void third(String path) throws IOException {
        Files.delete(Paths.get(path));
    }
}
"""),
]

# --- SQL injection --------------------------------------------------------

SQ_TEMPLATE = """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws SQLException {
        String $P = request.getParameter("$P");
        find($P);
    }

    public void find(String $P) throws SQLException {
        $BODY
    }

    public void query(String sql) throws SQLException {
        Connection conn = DriverManager.getConnection("jdbc:h2:mem:app");
        Statement st = conn.createStatement();
        st.executeQuery(sql);
    }
}
"""

SQ_BODIES = {
    "concat": (True, "id", """query("SELECT * FROM users WHERE id = '" + id + "'");"""),
    "escaped-quotes": (False, "id", """String safe = id.replace("'", "''");
        query("SELECT * FROM users WHERE id = '" + safe + "'");"""),
    "backslash-escape": (True, "id", """String safe = id.replace("'", "\\\\'");
        query("SELECT * FROM users WHERE id = '" + safe + "'");"""),
    "numeric": (False, "id", """int n = Integer.parseInt(id);
        query("SELECT * FROM users WHERE id = " + n);"""),
    "digits-regex": (False, "id", """if (!id.matches("[0-9]+")) {
            throw new IllegalArgumentException("not a number");
        }
        query("SELECT * FROM users WHERE id = " + id);"""),
    "letters-regex-with-space": (True, "id", """if (!id.matches("[a-zA-Z ]+")) {
            throw new IllegalArgumentException("bad name");
        }
        query("SELECT * FROM users WHERE name = " + id);"""),
    "sort-whitelist": (False, "col", """String order = "name";
        if (col.equals("email")) {
            order = col;
        }
        query("SELECT * FROM users ORDER BY " + order);"""),
    "sort-unchecked": (True, "col", """query("SELECT * FROM users ORDER BY " + col);"""),
    "guard-logs-only": (True, "id", """if (id.contains("'")) {
            System.out.println("quote seen");
        }
        query("SELECT * FROM users WHERE id = '" + id + "'");"""),
    "guard-rejects-quote": (False, "id", """if (id.contains("'")) {
            throw new IllegalArgumentException("quote");
        }
        query("SELECT * FROM users WHERE id = '" + id + "'");"""),
    "strip-nonalnum": (False, "id", """String clean = id.replaceAll("[^a-zA-Z0-9]", "");
        query("SELECT * FROM users WHERE id = '" + clean + "'");"""),
    "startswith-weak": (True, "id", """if (!id.startsWith("u")) {
            return;
        }
        query("SELECT * FROM users WHERE id = '" + id + "'");"""),
    "dead-path": (False, "id", """if (false) {
            query("SELECT * FROM users WHERE id = '" + id + "'");
        }"""),
    "builder-concat": (True, "id", """StringBuilder sb = new StringBuilder("SELECT * FROM users WHERE id = '");
        sb.append(id);
        sb.append("'");
        query(sb.toString());"""),
    "builder-numeric": (False, "id", """StringBuilder sb = new StringBuilder("SELECT * FROM users WHERE id = ");
        sb.append(Integer.parseInt(id));
        query(sb.toString());"""),
}

SQ_EXTRA = [
    Case("sq-prepared", SQ, False, "parameterized", """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws SQLException {
        String id = request.getParameter("id");
        find(id);
    }

    public void find(String id) throws SQLException {
        Connection conn = DriverManager.getConnection("jdbc:h2:mem:app");
        lookup(conn, id);
    }

    public void lookup(Connection conn, String id) throws SQLException {
        PreparedStatement ps = conn.prepareStatement("SELECT * FROM users WHERE id = ?");
        ps.setString(1, id);
        ps.executeQuery();
    }
}
"""),
    Case("sq-prepared-concat", SQ, True, "guard removed", """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws SQLException {
        String id = request.getParameter("id");
        find(id);
    }

    public void find(String id) throws SQLException {
        Connection conn = DriverManager.getConnection("jdbc:h2:mem:app");
        lookup(conn, id);
    }

    public void lookup(Connection conn, String id) throws SQLException {
        PreparedStatement ps = conn.prepareStatement("SELECT * FROM users WHERE id = '" + id + "'");
        ps.executeQuery();
    }
}
"""),
    Case("sq-two-params-one-open", SQ, True, "guard weakened", """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws SQLException {
        String id = request.getParameter("id");
        String name = request.getParameter("name");
        find(id, name);
    }

    public void find(String id, String name) throws SQLException {
        int n = Integer.parseInt(id);
        update("UPDATE users SET name = '" + name + "' WHERE id = " + n);
    }

    public void update(String sql) throws SQLException {
        Connection conn = DriverManager.getConnection("jdbc:h2:mem:app");
        Statement st = conn.createStatement();
        st.executeUpdate(sql);
    }
}
"""),
    Case("sq-two-params-both-safe", SQ, False, "guard present", """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws SQLException {
        String id = request.getParameter("id");
        String name = request.getParameter("name");
        find(id, name);
    }

    public void find(String id, String name) throws SQLException {
        int n = Integer.parseInt(id);
        String safe = name.replace("'", "''");
        update("UPDATE users SET name = '" + safe + "' WHERE id = " + n);
    }

    public void update(String sql) throws SQLException {
        Connection conn = DriverManager.getConnection("jdbc:h2:mem:app");
        Statement st = conn.createStatement();
        st.executeUpdate(sql);
    }
}
"""),
    Case("sq-helper-escape", SQ, False, "guard present", """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws SQLException {
        String id = request.getParameter("id");
        find(id);
    }

    public void find(String id) throws SQLException {
        String sql = "SELECT * FROM users WHERE id = '" + escape(id) + "'";
        query(sql);
    }

    public String escape(String value) {
        return value.replace("'", "''");
    }

    public void query(String sql) throws SQLException {
        Connection conn = DriverManager.getConnection("jdbc:h2:mem:app");
        Statement st = conn.createStatement();
        st.executeQuery(sql);
    }
}
"""),
    Case("sq-helper-noop", SQ, True, "guard weakened", """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws SQLException {
        String id = request.getParameter("id");
        find(id);
    }

    public void find(String id) throws SQLException {
        String sql = "SELECT * FROM users WHERE id = '" + escape(id) + "'";
        query(sql);
    }

    public String escape(String value) {
        return value.toLowerCase();
    }

    public void query(String sql) throws SQLException {
        Connection conn = DriverManager.getConnection("jdbc:h2:mem:app");
        Statement st = conn.createStatement();
        st.executeQuery(sql);
    }
}
"""),
]

# --- command injection ----------------------------------------------------

CM_TEMPLATE = """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws IOException {
        String host = request.getParameter("host");
        ping(host);
    }

    public void ping(String host) throws IOException {
        $BODY
    }

    public void run(String cmd) throws IOException {
        Runtime.getRuntime().exec(cmd);
    }
}
"""

CM_BODIES = {
    "concat": (True, """run("ping -c 1 " + host);"""),
    "host-regex": (False, """if (!host.matches("[a-zA-Z0-9.-]+")) {
            throw new IllegalArgumentException("bad host");
        }
        run("ping -c 1 " + host);"""),
    "regex-allows-space": (True, """if (!host.matches("[a-zA-Z0-9. ]+")) {
            throw new IllegalArgumentException("bad host");
        }
        run("ping -c 1 " + host);"""),
    "strip-semicolon-only": (True, """run("ping -c 1 " + host.replace(";", ""));"""),
    "strip-nonalnum": (False, """String clean = host.replaceAll("[^a-zA-Z0-9.]", "");
        run("ping -c 1 " + clean);"""),
    "equals-whitelist": (False, """if (host.equals("localhost") || host.equals("gateway")) {
            run("ping -c 1 " + host);
        }"""),
    "startswith-weak": (True, """if (host.startsWith("10.")) {
            run("ping -c 1 " + host);
        }"""),
    "numeric-count": (False, """int count = Integer.parseInt(host);
        run("ping -c " + count + " localhost");"""),
    "guard-logs-only": (True, """if (host.contains(";")) {
            System.out.println("odd host");
        }
        run("ping -c 1 " + host);"""),
    "dead-path": (False, """boolean allowed = false;
        if (allowed) {
            run("ping -c 1 " + host);
        }"""),
    "constant": (False, """run("ping -c 1 localhost");"""),
    "throw-always": (False, """boolean locked = true;
        if (locked) {
            throw new SecurityException("disabled");
        }
        run("ping -c 1 " + host);"""),
    "helper-strip": (False, """run("ping -c 1 " + sanitize(host));
    }

    public String sanitize(String value) {
        return value.replaceAll("[^a-z0-9]", "");"""),
    "helper-trim": (True, """run("ping -c 1 " + sanitize(host));
    }

    public String sanitize(String value) {
        return value.trim();"""),
}

CM_EXTRA = [
    Case("cm-processbuilder", CM, True, "guard removed", """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws IOException {
        String tool = request.getParameter("tool");
        launch(tool);
    }

    public void launch(String tool) throws IOException {
        start("/usr/bin/" + tool);
    }

    public void start(String cmd) throws IOException {
        ProcessBuilder pb = new ProcessBuilder(cmd);
        pb.start();
    }
}
"""),
    Case("cm-processbuilder-whitelist", CM, False, "guard present", """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws IOException {
        String tool = request.getParameter("tool");
        launch(tool);
    }

    public void launch(String tool) throws IOException {
        if (!tool.equals("uptime")) {
            throw new SecurityException("tool not allowed");
        }
        start("/usr/bin/" + tool);
    }

    public void start(String cmd) throws IOException {
        ProcessBuilder pb = new ProcessBuilder(cmd);
        pb.start();
    }
}
"""),
    Case("cm-header", CM, True, "guard removed", """
public class $C {
    public void doGet(HttpServletRequest request, HttpServletResponse response) throws IOException {
        String agent = request.getHeader("User-Agent");
        audit(agent);
    }

    public void audit(String agent) throws IOException {
        String line = "logger " + agent;
        record(line);
    }

    public void record(String line) throws IOException {
        Runtime.getRuntime().exec(line);
    }
}
"""),
]


def _class_name(case_name: str) -> str:
    return "".join(p.capitalize() for p in case_name.replace("_", "-").split("-")) + "Servlet"


def all_cases() -> List[Case]:
    cases = []
    for fam, (label, guard) in PT_GUARDS.items():
        cases.append(Case(f"pt-servlet-{fam}", PT, label, fam, PT_SERVLET.replace("$GUARD", guard)))
    cases += PT_EXTRA
    for fam, (label, p, body) in SQ_BODIES.items():
        cases.append(Case(f"sq-{fam}", SQ, label, fam, SQ_TEMPLATE.replace("$BODY", body).replace("$P", p)))
    cases += SQ_EXTRA
    for fam, (label, body) in CM_BODIES.items():
        cases.append(Case(f"cm-{fam}", CM, label, fam, CM_TEMPLATE.replace("$BODY", body)))
    cases += CM_EXTRA
    return cases


def sources_sinks() -> dict:
    rules = builtin_rules()
    sources = sorted({p for r in rules for p in r.source_patterns})
    sinks = [{"pattern": s.pattern, "rule": r.id, "argIndices": list(s.arg_indices)}
             for r in rules for s in r.sink_patterns]
    return {"sources": sources, "sinks": sinks, "entries": []}


def write_corpus(out: Path) -> List[dict]:
    if out.exists():
        shutil.rmtree(out)
    (out / "cases").mkdir(parents=True)
    cfg_doc = sources_sinks()
    (out / "sources-sinks.json").write_text(json.dumps(cfg_doc, indent=2) + "\n", encoding="utf-8")
    config = config_from_dict(cfg_doc)
    manifest = []
    for case in all_cases():
        cls = _class_name(case.name)
        code = case.code.replace("$C", cls).lstrip("\n")
        case_dir = out / "cases" / case.name
        case_dir.mkdir()
        (case_dir / f"{cls}.mj").write_text(code, encoding="utf-8")
        summary = generate_summary(code, config)
        if len(summary.chains) != 1:
            raise SystemExit(f"{case.name}: expected one chain, got {[c.id for c in summary.chains]}")
        chain = summary.chains[0]
        if chain.rule != case.rule:
            raise SystemExit(f"{case.name}: chain rule {chain.rule} != {case.rule}")
        manifest.append({"source": f"cases/{case.name}", "chainId": chain.id, "rule": case.rule,
                         "expectedExploitable": case.exploitable, "family": case.family})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "corpus"))
    args = ap.parse_args(argv)
    manifest = write_corpus(Path(args.out))
    by_rule = {}
    for e in manifest:
        by_rule[e["rule"]] = by_rule.get(e["rule"], 0) + 1
    print(f"wrote {len(manifest)} cases to {args.out}: {by_rule}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
