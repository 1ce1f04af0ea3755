"""Corpus evaluation: confusion counts, metrics and the labeled-corpus runner."""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal, localcontext
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .errors import EmptyCounts, VulnChainError
from .minilang.emit import SourceSinkConfig, generate_summary, load_config, read_sources
from .pipeline import PipelineConfig, Report, run
from .rules import RuleRegistry
from .summary import CodeInformationSummary, parse_summary

log = logging.getLogger(__name__)

CONFIG_NAME = "sources-sinks.json"
_CENT = Decimal("0.01")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)

    @classmethod
    def of(cls, predicted: bool, expected: bool) -> "ConfusionCounts":
        if predicted:
            return cls(tp=1) if expected else cls(fp=1)
        return cls(fn=1) if expected else cls(tn=1)

    def to_json(self) -> Dict[str, int]:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


def percent(ratio: Union[Fraction, Decimal, float]) -> Decimal:
    """Ratio as a percentage rounded half-up to two decimals."""
    with localcontext() as ctx:
        ctx.prec = 40
        if isinstance(ratio, Fraction):
            value = Decimal(ratio.numerator) / Decimal(ratio.denominator)
        else:
            value = Decimal(str(ratio))
        return (value * 100).quantize(_CENT, rounding=ROUND_HALF_UP)


def f1_score(precision, recall) -> Fraction:
    """Harmonic mean of two ratios; 0 when both are 0."""
    p, r = Fraction(str(precision)), Fraction(str(recall))
    if p + r == 0:
        return Fraction(0)
    return 2 * p * r / (p + r)


@dataclass(frozen=True)
class Metrics:
    """Exact ratios; ``percentages()`` gives the rounded report values."""

    accuracy: Fraction
    precision: Fraction
    recall: Fraction
    f1: Fraction

    def percentages(self) -> Dict[str, Decimal]:
        return {k: percent(getattr(self, k)) for k in ("accuracy", "precision", "recall", "f1")}

    def to_json(self) -> Dict[str, float]:
        return {k: float(v) for k, v in self.percentages().items()}


def compute_metrics(counts: ConfusionCounts) -> Metrics:
    if counts.total == 0:
        raise EmptyCounts("no labeled verdicts to score")
    accuracy = Fraction(counts.tp + counts.tn, counts.total)
    precision = Fraction(counts.tp, counts.tp + counts.fp) if counts.tp + counts.fp else Fraction(1)
    recall = Fraction(counts.tp, counts.tp + counts.fn) if counts.tp + counts.fn else Fraction(1)
    return Metrics(accuracy, precision, recall, f1_score(precision, recall))


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorpusEntry:
    source: str  # summary .json file or a source directory, relative to the manifest
    chain_id: str
    rule_id: str
    expected_exploitable: bool


@dataclass(frozen=True)
class LabeledCorpus:
    entries: Tuple[CorpusEntry, ...]
    root: Path = Path(".")

    def __post_init__(self):
        ids = [e.chain_id for e in self.entries]
        dup = sorted({i for i in ids if ids.count(i) > 1})
        if dup:
            raise ValueError("duplicate chain ids in corpus: " + ", ".join(dup))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "LabeledCorpus":
        p = Path(path)
        manifest = p / "manifest.json" if p.is_dir() else p
        doc = json.loads(manifest.read_text(encoding="utf-8"))
        if not isinstance(doc, list):
            raise ValueError(f"{manifest}: manifest must be a JSON list of entries")
        entries = tuple(CorpusEntry(str(d["source"]), str(d["chainId"]), str(d["rule"]),
                                    bool(d["expectedExploitable"])) for d in doc)
        return cls(entries, manifest.parent)


@dataclass(frozen=True)
class Evaluation:
    overall: ConfusionCounts
    by_rule: Dict[str, ConfusionCounts]
    errored: Tuple[Dict[str, str], ...]
    results: Tuple[Dict, ...]

    def metrics(self) -> Optional[Metrics]:
        return compute_metrics(self.overall) if self.overall.total else None

    def to_json(self) -> Dict:
        def block(c: ConfusionCounts) -> Dict:
            out = {"counts": c.to_json()}
            if c.total:
                out["metrics"] = compute_metrics(c).to_json()
            return out
        return {
            "overall": block(self.overall),
            "byRule": {r: block(c) for r, c in sorted(self.by_rule.items())},
            "errored": list(self.errored),
            "results": list(self.results),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def _config_for(root: Path, source: Path) -> SourceSinkConfig:
    for candidate in (source / CONFIG_NAME, source.parent / CONFIG_NAME, root / CONFIG_NAME):
        if candidate.is_file():
            return load_config(candidate)
    raise FileNotFoundError(f"no {CONFIG_NAME} for {source}")


def load_source(root: Path, source: str) -> CodeInformationSummary:
    path = root / source
    if path.suffix == ".json":
        return parse_summary(path.read_text(encoding="utf-8"))
    return generate_summary(read_sources(path), _config_for(root, path))


def evaluate(corpus: LabeledCorpus, backend=None, config: Optional[PipelineConfig] = None,
             rules: Optional[RuleRegistry] = None) -> Evaluation:
    if not corpus.entries:
        raise EmptyCounts("corpus has no entries")
    by_source: Dict[str, List[CorpusEntry]] = defaultdict(list)
    for e in corpus.entries:
        by_source[e.source].append(e)
    reports: Dict[str, Report] = {}
    errors: Dict[str, str] = {}
    for source in sorted(by_source):
        try:
            reports[source] = run(load_source(corpus.root, source), rules, backend, config)
        except (VulnChainError, OSError, ValueError) as exc:
            errors[source] = f"{type(exc).__name__}: {exc}"
    overall = ConfusionCounts()
    by_rule: Dict[str, ConfusionCounts] = {}
    errored, results = [], []
    for e in sorted(corpus.entries, key=lambda x: x.chain_id):
        if e.source in errors:
            errored.append({"chainId": e.chain_id, "rule": e.rule_id, "error": errors[e.source]})
            continue
        rep = reports[e.source]
        failed = [x for x in rep.errored if x.chain_id == e.chain_id]
        if failed:
            errored.append({"chainId": e.chain_id, "rule": e.rule_id, "error": failed[0].error})
            continue
        try:
            v = rep.verdict(e.chain_id)
        except KeyError:
            errored.append({"chainId": e.chain_id, "rule": e.rule_id, "error": "chain not found in summary"})
            continue
        c = ConfusionCounts.of(v.exploitable, e.expected_exploitable)
        overall = overall + c
        by_rule[e.rule_id] = by_rule.get(e.rule_id, ConfusionCounts()) + c
        results.append({"chainId": e.chain_id, "rule": e.rule_id, "expected": e.expected_exploitable,
                        "exploitable": v.exploitable, "reason": v.reason})
    return Evaluation(overall, by_rule, tuple(errored), tuple(results))
