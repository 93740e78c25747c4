"""Batch command line: ``peerchair <subcommand> ...``.

Exit codes: 0 success, 1 a sample failed under ``--fail-fast`` for a reason
other than the backend, 2 configuration/schema/dataset problems, 3 backend
exhaustion under ``--fail-fast``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from .config import build_gateway, build_run_config, load_config, run_metrics
from .datasets import export_instruction_tuning, load_dataset, load_run, persist_run
from .errors import (
    DatasetError,
    GatewayError,
    InvalidConfig,
    OrchestrationError,
    PeerChairError,
    PromptError,
)
from .models import DatasetKind
from .orchestrator import dry_run, run_dataset, run_reasoning
from .prompts import bundled_schema_dir, load_schema
from .report import combine, correlate

EXIT_OK = 0
EXIT_SAMPLE_FAILURE = 1
EXIT_CONFIG = 2
EXIT_BACKEND = 3

log = logging.getLogger("peerchair")


def _err(message: str) -> None:
    print(f"peerchair: {message}", file=sys.stderr)


def _flag_overrides(args: argparse.Namespace) -> list[str]:
    """CLI flags as config overrides; they apply after ``--set`` items."""
    pairs = [
        ("variant", args.variant),
        ("n", args.n),
        ("strategy", args.strategy),
        ("peers", args.peers),
        ("area_chair", args.area_chair),
        ("min_peers", args.min_peers),
        ("concurrency", args.concurrency),
        ("cache_dir", args.cache_dir),
        ("seed_tag", args.seed_tag),
        ("schema_dir", args.schema_dir),
        ("method", args.method),
    ]
    out = []
    for key, value in pairs:
        if value is None:
            continue
        if key in ("cache_dir", "schema_dir"):
            value = str(Path(value).resolve())
        if key == "peers":
            value = "[" + ", ".join(v.strip() for v in str(value).split(",") if v.strip()) + "]"
        if key == "seed_tag":
            # quoted so tags like "2" or "yes" stay strings
            value = "'" + str(value).replace("'", "''") + "'"
        out.append(f"run.{key}={value}")
    return out


def _run_command(args: argparse.Namespace, *, reasoning: bool) -> int:
    app = load_config(args.config, [*args.set, *_flag_overrides(args)])
    dataset = load_dataset(args.dataset)
    is_reasoning = dataset.kind is DatasetKind.REASONING
    if reasoning != is_reasoning:
        want = "reasoning" if reasoning else "rating"
        raise InvalidConfig(f"dataset {dataset.name!r} is {dataset.kind.value}, this command needs a {want} dataset")
    metrics = run_metrics(app, dataset)
    cfg = build_run_config(app, dataset, metrics)
    out = Path(args.out)

    if args.dry_run:
        written = dry_run(dataset, metrics, cfg, out / "prompts")
        print(f"wrote {written} prompt files to {out / 'prompts'}", file=sys.stderr)
        return EXIT_OK

    concurrency = int(app.run.get("concurrency") or 1)
    if concurrency < 1:
        raise InvalidConfig("concurrency must be >= 1")
    gateway, _ = build_gateway(app, cache_dir=app.path("cache_dir"), max_in_flight=concurrency)
    if reasoning:
        run = run_reasoning(dataset, cfg, gateway, concurrency, fail_fast=args.fail_fast)
    else:
        run = run_dataset(dataset, metrics, cfg, gateway, concurrency, fail_fast=args.fail_fast)
    persist_run(run, out, mask_timing=args.mask_timing)
    failures = len(run.failures)
    print(f"{len(run.verdicts)} verdicts written to {out}", file=sys.stderr)
    if failures:
        print(f"{failures} sample(s) failed; see the error field in {out / 'verdicts.jsonl'}", file=sys.stderr)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    return _run_command(args, reasoning=False)


def cmd_reason(args: argparse.Namespace) -> int:
    return _run_command(args, reasoning=True)


def _write_or_print(text: str, target: Path | None) -> None:
    if target is None:
        sys.stdout.write(text)
    else:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")


def cmd_correlate(args: argparse.Namespace) -> int:
    run = load_run(args.run)
    dataset = load_dataset(args.dataset)
    report = correlate(run, dataset)
    sys.stdout.write(report.to_tsv())
    if args.out:
        out = Path(args.out)
        _write_or_print(report.to_tsv(), out / "correlation.tsv")
        _write_or_print(report.to_json(), out / "correlation.json")
    if report.skipped:
        print(f"{report.skipped} failed verdict(s) left out", file=sys.stderr)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    runs = [load_run(p) for p in args.runs]
    dataset = load_dataset(args.dataset)
    table = combine(runs, dataset)
    sys.stdout.write(table.to_tsv())
    if args.out:
        out = Path(args.out)
        _write_or_print(table.to_tsv(), out / "report.tsv")
        _write_or_print(table.to_json(), out / "report.json")
    return EXIT_OK


def cmd_export_tuning(args: argparse.Namespace) -> int:
    run = load_run(args.run)
    result = export_instruction_tuning(run, args.out)
    print(f"wrote {result.written} record(s) to {args.out}; skipped {result.skipped}", file=sys.stderr)
    for sample_id, metric in result.skipped_ids:
        print(f"  skipped {sample_id} / {metric}", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    """Check every schema file under the schema dir, plus config and dataset if given."""
    root = Path(args.schema_dir) if args.schema_dir else bundled_schema_dir()
    if not root.is_dir():
        raise InvalidConfig(f"schema directory {root} does not exist")
    problems = 0
    files = sorted(root.rglob("*.yaml"))
    for path in files:
        try:
            load_schema(path)
        except PromptError as exc:
            problems += 1
            _err(f"{path.relative_to(root)}: {exc}")
        except InvalidConfig as exc:
            problems += 1
            _err(str(exc))
    if args.config:
        app = load_config(args.config, args.set)
        if args.dataset:
            dataset = load_dataset(args.dataset)
            build_run_config(app, dataset, run_metrics(app, dataset))
    elif args.dataset:
        load_dataset(args.dataset)
    print(f"checked {len(files)} schema file(s): {problems} problem(s)", file=sys.stderr)
    return EXIT_CONFIG if problems else EXIT_OK


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="run configuration (YAML)")
    p.add_argument("--dataset", required=True, help="dataset file (JSONL)")
    p.add_argument("--out", required=True, help="output directory for the run record")
    p.add_argument("--schema-dir", help="root of the prompt schema tree")
    p.add_argument("--variant", choices=["turbo", "lite"])
    p.add_argument("--n", type=int, help="area-chair completions per sample (turbo)")
    p.add_argument("--strategy", choices=["score_only", "comment_only", "both"])
    p.add_argument("--peers", help="comma-separated model handle names")
    p.add_argument("--area-chair", help="model handle name")
    p.add_argument("--min-peers", type=int)
    p.add_argument("--concurrency", type=int, help="bound on in-flight backend calls")
    p.add_argument("--cache-dir", help="response cache directory")
    p.add_argument("--seed-tag", help="tag mixed into cache keys; change it for an independent repeat")
    p.add_argument("--method", help="label for this configuration in reports")
    p.add_argument("--dry-run", action="store_true", help="render prompts into OUT/prompts without calling any model")
    p.add_argument("--fail-fast", action="store_true", help="stop at the first failed sample")
    p.add_argument("--mask-timing", action="store_true", help="write timing fields as null")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value by dotted path; repeatable, last wins")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="peerchair", description="Peer review style LLM evaluation.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="score a rating dataset")
    _add_run_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("reason", help="answer a reasoning dataset")
    _add_run_flags(p)
    p.set_defaults(func=cmd_reason)

    p = sub.add_parser("correlate", help="agreement of one run with the dataset labels")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", help="directory for correlation.tsv and correlation.json")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("report", help="combined table over several runs")
    p.add_argument("runs", nargs="+", help="run directories")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", help="directory for report.tsv and report.json")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("export-tuning", help="instruction-tuning records from a run")
    p.add_argument("--run", required=True)
    p.add_argument("--out", required=True, help="output JSONL file")
    p.set_defaults(func=cmd_export_tuning)

    p = sub.add_parser("validate", help="check schema files, and optionally a config and dataset")
    p.add_argument("--schema-dir")
    p.add_argument("--config")
    p.add_argument("--dataset")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InvalidConfig, PromptError, DatasetError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except (GatewayError, OrchestrationError) as exc:
        _err(str(exc))
        return EXIT_BACKEND
    except PeerChairError as exc:
        _err(str(exc))
        return EXIT_SAMPLE_FAILURE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
