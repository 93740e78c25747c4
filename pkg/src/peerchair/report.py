"""Correlation reports for one run and combined tables across runs.

Every emitted document carries a format name and version. TSV output starts
with a ``# <format> v<version>`` comment line; numbers use six decimals and
``NA`` marks values that could not be computed.
"""

from __future__ import annotations

import json
import statistics
from collections.abc import Sequence
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any

from .errors import AllZeroCosts, DegenerateInput, IdMismatch, InvalidConfig
from .metrics import accuracy, kendall_tau_b, relative_costs, spearman
from .models import Dataset, DatasetKind, answer_to_json
from .records import RunRecord

CORRELATION_FORMAT = "peerchair.correlation"
REPORT_FORMAT = "peerchair.report"
REPORT_VERSION = 1


def _fmt(value: float | None) -> str:
    return "NA" if value is None else f"{value:.6f}"


def _mean(values: Sequence[float | None]) -> float | None:
    present = [v for v in values if v is not None]
    return statistics.fmean(present) if present else None


@dataclass
class MetricScores:
    n_pairs: int
    spearman: float | None = None
    kendall_tau_b: float | None = None
    accuracy: float | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"n_pairs": self.n_pairs}
        if self.accuracy is not None:
            out["accuracy"] = self.accuracy
        else:
            out["spearman"] = self.spearman
            out["kendall_tau_b"] = self.kendall_tau_b
        return out


@dataclass
class CorrelationReport:
    dataset: str
    task_kind: str
    method: str
    run_tag: str
    metrics: dict[str, MetricScores] = field(default_factory=dict)
    skipped: int = 0

    @property
    def is_reasoning(self) -> bool:
        return self.task_kind == "reasoning"

    def average(self) -> MetricScores:
        rows = list(self.metrics.values())
        return MetricScores(
            n_pairs=sum(r.n_pairs for r in rows),
            spearman=_mean([r.spearman for r in rows]),
            kendall_tau_b=_mean([r.kendall_tau_b for r in rows]),
            accuracy=_mean([r.accuracy for r in rows]) if self.is_reasoning else None,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": CORRELATION_FORMAT,
            "version": REPORT_VERSION,
            "dataset": self.dataset,
            "task_kind": self.task_kind,
            "method": self.method,
            "run_tag": self.run_tag,
            "skipped_verdicts": self.skipped,
            "metrics": {m: s.to_dict() for m, s in self.metrics.items()},
            "average": self.average().to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_tsv(self) -> str:
        lines = [f"# {CORRELATION_FORMAT} v{REPORT_VERSION}"]
        if self.is_reasoning:
            lines.append("metric\tn\taccuracy")
            rows = [(m, s) for m, s in self.metrics.items()] + [("average", self.average())]
            lines += [f"{m}\t{s.n_pairs}\t{_fmt(s.accuracy)}" for m, s in rows]
        else:
            lines.append("metric\tn\tspearman\tkendall_tau_b")
            rows = [(m, s) for m, s in self.metrics.items()] + [("average", self.average())]
            lines += [f"{m}\t{s.n_pairs}\t{_fmt(s.spearman)}\t{_fmt(s.kendall_tau_b)}" for m, s in rows]
        return "\n".join(lines) + "\n"


def _safe(fn, x, y) -> float | None:
    try:
        return fn(x, y).value
    except DegenerateInput:
        return None


def correlate(run: RunRecord, dataset: Dataset) -> CorrelationReport:
    """Per-metric agreement between the area chair's final output and the dataset.

    Failed verdicts are left out and counted in ``skipped``. Every verdict
    must name a sample of ``dataset``.
    """
    samples = dataset.by_id()
    missing = sorted({v.sample_id for v in run.verdicts} - set(samples))
    if missing:
        shown = ", ".join(missing[:5]) + (" ..." if len(missing) > 5 else "")
        raise IdMismatch(f"{len(missing)} run sample id(s) not in dataset {dataset.name!r}: {shown}")
    unknown = [m for m in run.metrics if m not in dataset.metrics]
    if unknown:
        raise IdMismatch(f"run metrics not in dataset: {unknown}")

    reasoning = dataset.kind is DatasetKind.REASONING
    report = CorrelationReport(run.dataset, run.task_kind, run.method, run.run_tag)
    for metric in run.metrics:
        machine: list[Any] = []
        human: list[Any] = []
        for v in run.verdicts:
            if v.metric != metric:
                continue
            if not v.ok:
                report.skipped += 1
                continue
            sample = samples[v.sample_id]
            if reasoning:
                machine.append(answer_to_json(v.ac.final_answer))
                human.append(answer_to_json(sample.gold_answer))
            else:
                machine.append(float(v.ac.final_score))
                human.append(float(sample.human_scores[metric]))
        if reasoning:
            acc = accuracy(machine, human) if machine else None
            report.metrics[metric] = MetricScores(len(machine), accuracy=acc)
        else:
            report.metrics[metric] = MetricScores(
                len(machine), spearman=_safe(spearman, machine, human), kendall_tau_b=_safe(kendall_tau_b, machine, human)
            )
    return report


@dataclass
class ReportRow:
    method: str
    label: str
    scores: dict[str, float | None]
    cost: Decimal
    latency: float | None
    relative_cost: float | None = None


def _run_cost(run: RunRecord) -> Decimal:
    return run.ledger.total().monetary_cost


def _score_columns(report: CorrelationReport) -> dict[str, float | None]:
    cols: dict[str, float | None] = {}
    for metric, s in list(report.metrics.items()) + [("average", report.average())]:
        if report.is_reasoning:
            cols[f"{metric}.accuracy"] = s.accuracy
        else:
            cols[f"{metric}.spearman"] = s.spearman
            cols[f"{metric}.kendall_tau_b"] = s.kendall_tau_b
    return cols


@dataclass
class CombinedReport:
    task_kind: str
    columns: list[str]
    rows: list[ReportRow]

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "task_kind": self.task_kind,
            "columns": self.columns,
            "rows": [
                {
                    "method": r.method,
                    "run": r.label,
                    "scores": r.scores,
                    "cost": str(r.cost),
                    "relative_cost": r.relative_cost,
                    "mean_latency": r.latency,
                }
                for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_tsv(self) -> str:
        head = ["method", "run", *self.columns, "relative_cost", "mean_latency_s"]
        lines = [f"# {REPORT_FORMAT} v{REPORT_VERSION}", "\t".join(head)]
        for r in self.rows:
            cells = [r.method, r.label, *(_fmt(r.scores.get(c)) for c in self.columns)]
            cells += [_fmt(r.relative_cost), _fmt(r.latency)]
            lines.append("\t".join(cells))
        return "\n".join(lines) + "\n"


def combine(runs: Sequence[RunRecord], dataset: Dataset) -> CombinedReport:
    """One row per run plus one averaged row per method.

    Methods keep first-seen order; each method's per-run rows are followed by
    its ``mean`` row. Relative cost divides each row's cost by the largest
    row cost, so the most expensive row reads 1.0.
    """
    if not runs:
        raise InvalidConfig("report needs at least one run")
    kinds = {r.task_kind for r in runs}
    if len(kinds) > 1:
        raise InvalidConfig(f"cannot combine runs of different task kinds: {sorted(kinds)}")

    by_method: dict[str, list[ReportRow]] = {}
    columns: list[str] = []
    for i, run in enumerate(runs):
        cols = _score_columns(correlate(run, dataset))
        for c in cols:
            if c not in columns:
                columns.append(c)
        latency = run.timing.get("mean_per_instance") if run.timing else None
        label = run.run_tag or f"run{i + 1}"
        by_method.setdefault(run.method, []).append(ReportRow(run.method, label, cols, _run_cost(run), latency))

    rows: list[ReportRow] = []
    for method, per_run in by_method.items():
        rows.extend(per_run)
        latencies = [r.latency for r in per_run]
        rows.append(
            ReportRow(
                method,
                "mean",
                {c: _mean([r.scores.get(c) for r in per_run]) for c in columns},
                sum((r.cost for r in per_run), Decimal(0)) / len(per_run),
                None if any(v is None for v in latencies) else statistics.fmean(latencies),
            )
        )
    try:
        rel = relative_costs({str(i): r.cost for i, r in enumerate(rows)})
        for i, r in enumerate(rows):
            r.relative_cost = rel[str(i)]
    except AllZeroCosts:
        pass
    return CombinedReport(next(iter(kinds)), columns, rows)
