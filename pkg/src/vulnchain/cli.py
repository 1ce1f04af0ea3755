"""Command-line entry point: ``gen-summary``, ``analyze``, ``eval`` and ``replay``.

Exit codes: 0 success, 1 analysis errors (missing files, errored chains),
2 usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .branch import PruneConfig
from .errors import VulnChainError
from .harness import LabeledCorpus, evaluate
from .minilang.emit import generate_summary, load_config, read_sources
from .pipeline import PipelineConfig, run
from .rules import RuleRegistry, load_rule_overrides
from .solver import BackendConfig, make_backend
from .summary import GENERATOR_VERSION, parse_summary, serialize_summary


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 2 with help text
        self.print_help(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _backend_args(p: argparse.ArgumentParser, replay: bool = False) -> None:
    if not replay:
        p.add_argument("--backend", choices=("oracle", "llm"), default="oracle")
        p.add_argument("--endpoint-url", default="")
        p.add_argument("--model", default="")
        p.add_argument("--temperature", type=float, default=0.1)
        p.add_argument("--max-retries", type=int, default=2)
        p.add_argument("--record", metavar="TRANSCRIPT", help="append raw replies to this JSONL transcript")
    p.add_argument("--no-branch-analysis", action="store_true")
    p.add_argument("--no-context", action="store_true")
    p.add_argument("--rules", metavar="JSON", help="rule overrides file")
    p.add_argument("--budget", type=int, default=4000, help="context budget in characters")
    p.add_argument("--prune-depth", type=int, default=3)
    p.add_argument("--prune-max-methods", type=int, default=12)
    p.add_argument("--workers", type=int, default=4)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vulnchain", description="Path-based vulnerability constraint solving.")
    parser.add_argument("--version", action="version", version=GENERATOR_VERSION)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen-summary", help="emit a Code Information Summary from mini-language sources")
    g.add_argument("src")
    g.add_argument("--config", required=True, help="sources-sinks JSON")
    g.add_argument("-o", "--output", required=True)
    g.add_argument("--branch-depth", type=int, default=3)
    g.add_argument("--max-chain-len", type=int, default=8)

    a = sub.add_parser("analyze", help="analyze every chain of a summary")
    a.add_argument("summary")
    a.add_argument("-o", "--output", help="report file (default stdout)")
    _backend_args(a)

    e = sub.add_parser("eval", help="evaluate a labeled corpus")
    e.add_argument("corpus", help="corpus directory or manifest file")
    e.add_argument("-o", "--output", help="results file (default <corpus>/results.json)")
    _backend_args(e)

    r = sub.add_parser("replay", help="analyze a summary answering requests from a transcript")
    r.add_argument("summary")
    r.add_argument("--transcript", required=True)
    r.add_argument("-o", "--output")
    _backend_args(r, replay=True)
    return parser


def _pipeline_config(args) -> PipelineConfig:
    prune = PruneConfig(max_depth=args.prune_depth, max_methods=args.prune_max_methods)
    return PipelineConfig(prune=prune, budget=args.budget, branch_analysis=not args.no_branch_analysis,
                          use_context=not args.no_context, workers=args.workers)


def _backend_config(args) -> BackendConfig:
    if args.command == "replay":
        return BackendConfig(kind="replay", transcript=args.transcript)
    return BackendConfig(kind=args.backend, endpoint_url=args.endpoint_url, model_name=args.model,
                         temperature=args.temperature, max_retries=args.max_retries, transcript=args.record)


def _rules(args) -> RuleRegistry:
    return load_rule_overrides(args.rules) if args.rules else RuleRegistry.builtin()


def _write(text: str, output: Optional[str]) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.command:
        parser.print_help(sys.stderr)
        return 2
    try:
        if args.command == "gen-summary":
            summary = generate_summary(read_sources(args.src), load_config(args.config),
                                       args.branch_depth, args.max_chain_len)
            _write(serialize_summary(summary), args.output)
            return 0
        pipeline = _pipeline_config(args)
        backend = make_backend(_backend_config(args))
        rules = _rules(args)
        if args.command in ("analyze", "replay"):
            summary = parse_summary(Path(args.summary).read_text(encoding="utf-8"))
            report = run(summary, rules, backend, pipeline)
            _write(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n", args.output)
            for err in report.errored:
                print(f"error: chain {err.chain_id}: {err.error}", file=sys.stderr)
            return 1 if report.errored else 0
        corpus = LabeledCorpus.load(args.corpus)
        result = evaluate(corpus, backend, pipeline, rules)
        out = args.output or str(corpus.root / "results.json")
        Path(out).write_text(result.dumps(), encoding="utf-8")
        m = result.metrics()
        if m is not None:
            pct = m.percentages()
            print("accuracy {accuracy}% precision {precision}% recall {recall}% f1 {f1}%".format(**pct))
        for err in result.errored:
            print(f"error: {err['chainId']}: {err['error']}", file=sys.stderr)
        return 1 if result.errored else 0
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return 1
    except (VulnChainError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
