"""Convert an OWASP Benchmark ``expectedresults-*.csv`` into a corpus manifest.

This only documents the label mapping.  The benchmark itself is not
downloaded, and its Java sources need an external front end that writes one
Code Information Summary per test case (``<testName>.json``, chain id equal
to the test name) next to the manifest.

    python3 tools/owasp_manifest.py expectedresults-1.2.csv -o manifest.json
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

# Benchmark category -> rule id; other categories are skipped.
CATEGORY_RULES = {"pathtraver": "path-traversal", "sqli": "sql-injection", "cmdi": "command-injection"}


def convert(rows):
    out = []
    for row in rows:
        if not row or row[0].startswith("#"):
            continue
        name, category, real = row[0].strip(), row[1].strip(), row[2].strip().lower()
        rule = CATEGORY_RULES.get(category)
        if rule is None:
            continue
        out.append({"source": f"{name}.json", "chainId": name, "rule": rule,
                    "expectedExploitable": real == "true"})
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("csv")
    ap.add_argument("-o", "--output", required=True)
    args = ap.parse_args(argv)
    with open(args.csv, newline="", encoding="utf-8") as fh:
        entries = convert(csv.reader(fh))
    with open(args.output, "w", encoding="utf-8") as fh:
        json.dump(entries, fh, indent=2)
        fh.write("\n")
    print(f"{len(entries)} entries written to {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
