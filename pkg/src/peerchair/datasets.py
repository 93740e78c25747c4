"""Dataset loading, run persistence and instruction-tuning export.

Dataset files are newline-delimited JSON, UTF-8. Line 1 is a header, every
other non-blank line is one sample::

    {"format": "peerchair.dataset", "version": 1, "name": "topicalchat",
     "kind": "nlg_rating", "metrics": ["coherence", "engagingness"],
     "scale": {"min": 1, "max": 3, "granularity": "integer"}}
    {"id": "tc-0001", "slots": {"Conversation": "...", "Contextual Fact": "...",
     "Response": "..."}, "human_scores": {"coherence": 2.667, "engagingness": 3}}

See docs/formats.md for the per-kind field tables.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from collections.abc import Callable, Iterable
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import (
    DuplicateId,
    EmptyRun,
    IOFailure,
    MissingDatasetScale,
    SchemaViolation,
    UnsupportedFormatVersion,
)
from .gateway.ledger import CostLedger
from .models import (
    AnswerKind,
    AnswerSpace,
    Dataset,
    DatasetKind,
    Sample,
    ScoreScale,
    format_number,
    to_fraction,
)
from .records import RUN_FORMAT_VERSION, RunRecord, SampleVerdict, mask_volatile

DATASET_FORMAT = "peerchair.dataset"
DATASET_VERSION = 1
VERDICTS_FORMAT = "peerchair.verdicts"
SUMMARY_FORMAT = "peerchair.run-summary"
VERDICTS_FILE = "verdicts.jsonl"
SUMMARY_FILE = "summary.json"
TUNING_FORMAT_VERSION = 1


def _dumps(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(", ", ": "))


def _require(cond: bool, line: int, field: str, message: str) -> None:
    if not cond:
        raise SchemaViolation(line, field, message)


def _parse_header(header: Any, kind: DatasetKind | str | None) -> tuple[DatasetKind, dict]:
    _require(isinstance(header, dict), 1, "header", "first line must be a JSON object")
    _require(header.get("format") == DATASET_FORMAT, 1, "format", f"expected {DATASET_FORMAT!r}")
    if header.get("version") != DATASET_VERSION:
        raise UnsupportedFormatVersion(f"dataset format version {header.get('version')!r} is not supported")
    try:
        found = DatasetKind(header.get("kind"))
    except ValueError:
        raise SchemaViolation(1, "kind", f"unknown dataset kind {header.get('kind')!r}") from None
    if kind is not None and DatasetKind(kind) is not found:
        raise SchemaViolation(1, "kind", f"file declares {found.value!r}, caller expected {DatasetKind(kind).value!r}")
    return found, header


def load_dataset(path: str | Path, kind: DatasetKind | str | None = None) -> Dataset:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").split("\n")
    except OSError as exc:
        raise IOFailure(f"cannot read dataset {path}: {exc}") from exc
    try:
        header = json.loads(lines[0])
    except (json.JSONDecodeError, IndexError) as exc:
        raise SchemaViolation(1, "header", f"invalid JSON: {exc}") from exc
    found_kind, header = _parse_header(header, kind)

    name = header.get("name") or path.stem
    metrics = header.get("metrics")
    if found_kind is DatasetKind.REASONING:
        metrics = metrics or ["answer"]
    _require(isinstance(metrics, list) and metrics and all(isinstance(m, str) for m in metrics),
             1, "metrics", "must be a non-empty list of names")

    scale = None
    space = None
    if found_kind.is_rating:
        if header.get("scale") is None:
            raise MissingDatasetScale(f"{path}: rating datasets need a 'scale' in the header")
        try:
            scale = ScoreScale.from_dict(header["scale"])
        except (KeyError, ValueError, TypeError) as exc:
            raise SchemaViolation(1, "scale", str(exc)) from exc
    else:
        _require(isinstance(header.get("answer_space"), dict), 1, "answer_space", "reasoning datasets need an answer_space")
        try:
            space = AnswerSpace.from_dict(header["answer_space"])
        except (KeyError, ValueError) as exc:
            raise SchemaViolation(1, "answer_space", str(exc)) from exc

    samples: list[Sample] = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(lineno, "record", f"invalid JSON: {exc}") from exc
        samples.append(_parse_sample(rec, lineno, found_kind, metrics, scale, space))
        sid = samples[-1].id
        if sid in seen:
            raise DuplicateId(sid, lineno)
        seen[sid] = lineno
    _require(bool(samples), 1, "samples", "dataset has no samples")
    return Dataset(
        name=name,
        kind=found_kind,
        samples=tuple(samples),
        metrics=tuple(metrics),
        scale=scale,
        answer_space=space,
    )


def _parse_sample(rec, lineno, kind, metrics, scale, space) -> Sample:
    _require(isinstance(rec, dict), lineno, "record", "must be a JSON object")
    sid = rec.get("id")
    _require(isinstance(sid, (str, int)) and str(sid) != "", lineno, "id", "missing or empty")
    slots = rec.get("slots")
    _require(isinstance(slots, dict) and slots, lineno, "slots", "must be a non-empty object")
    for k, v in slots.items():
        _require(isinstance(v, str), lineno, f"slots.{k}", "slot values must be strings")

    image = rec.get("image")
    if kind is DatasetKind.MULTIMODAL_RATING:
        _require(isinstance(image, str) and image, lineno, "image", "multimodal samples need an image reference")
    else:
        _require(image is None, lineno, "image", f"{kind.value} samples must not carry an image")

    human_scores = {}
    gold = None
    if kind.is_rating:
        scores = rec.get("human_scores")
        _require(isinstance(scores, dict), lineno, "human_scores", "rating samples need human_scores")
        for metric in metrics:
            _require(metric in scores, lineno, f"human_scores.{metric}", "missing score")
            try:
                value = to_fraction(scores[metric])
            except (TypeError, ValueError) as exc:
                raise SchemaViolation(lineno, f"human_scores.{metric}", str(exc)) from exc
            _require(scale.contains(value), lineno, f"human_scores.{metric}",
                     f"{format_number(value)} outside scale {scale.label()}")
            human_scores[metric] = value
    else:
        _require("gold_answer" in rec and rec["gold_answer"] is not None, lineno, "gold_answer",
                 "reasoning samples need gold_answer")
        raw = rec["gold_answer"]
        if space.kind is AnswerKind.LABELS:
            _require(isinstance(raw, str) and raw.strip().upper() in space.labels, lineno, "gold_answer",
                     f"{raw!r} not in answer space {sorted(space.labels)}")
            gold = raw.strip().upper()
        else:
            try:
                gold = to_fraction(str(raw).replace(",", "")) if isinstance(raw, str) else to_fraction(raw)
            except (TypeError, ValueError) as exc:
                raise SchemaViolation(lineno, "gold_answer", str(exc)) from exc
    return Sample(id=str(sid), slots=dict(slots), image=image, human_scores=human_scores, gold_answer=gold, scale=scale)


def dump_dataset(dataset: Dataset, path: str | Path) -> None:
    header: dict[str, Any] = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "name": dataset.name,
        "kind": dataset.kind.value,
        "metrics": list(dataset.metrics),
    }
    if dataset.scale is not None:
        header["scale"] = dataset.scale.to_dict()
    if dataset.answer_space is not None:
        header["answer_space"] = dataset.answer_space.to_dict()
    lines = [_dumps(header)] + [_dumps(s.to_dict()) for s in dataset.samples]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# runs


def persist_run(run: RunRecord, path: str | Path, *, mask_timing: bool = False) -> None:
    """Write ``verdicts.jsonl`` and ``summary.json`` into directory ``path``.

    With ``mask_timing`` the wall-clock fields are written as null so two runs
    over a warm cache produce byte-identical files.
    """
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        rows = [v.to_dict() for v in run.verdicts]
        summary = run.summary_dict()
        if mask_timing:
            rows = [mask_volatile(r) for r in rows]
            summary = mask_volatile(summary)
        header = {"format": VERDICTS_FORMAT, "version": run.format_version, "count": len(rows)}
        body = "\n".join([_dumps(header)] + [_dumps(r) for r in rows]) + "\n"
        (out / VERDICTS_FILE).write_text(body, encoding="utf-8")
        (out / SUMMARY_FILE).write_text(json.dumps(summary, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
                                        encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot write run to {out}: {exc}") from exc


def load_run(path: str | Path) -> RunRecord:
    base = Path(path)
    try:
        summary = json.loads((base / SUMMARY_FILE).read_text(encoding="utf-8"))
        lines = (base / VERDICTS_FILE).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IOFailure(f"cannot read run from {base}: {exc}") from exc
    if summary.get("format") != SUMMARY_FORMAT or summary.get("version") != RUN_FORMAT_VERSION:
        raise UnsupportedFormatVersion(
            f"{base / SUMMARY_FILE}: unsupported run summary {summary.get('format')!r} v{summary.get('version')!r}")
    header = json.loads(lines[0]) if lines else {}
    if header.get("format") != VERDICTS_FORMAT or header.get("version") != RUN_FORMAT_VERSION:
        raise UnsupportedFormatVersion(
            f"{base / VERDICTS_FILE}: unsupported verdict file {header.get('format')!r} v{header.get('version')!r}")
    verdicts = [SampleVerdict.from_dict(json.loads(l)) for l in lines[1:] if l.strip()]
    if header.get("count") is not None and header["count"] != len(verdicts):
        raise IOFailure(f"{base / VERDICTS_FILE}: header says {header['count']} verdicts, found {len(verdicts)}")
    return RunRecord(
        dataset=summary["dataset"],
        task_kind=summary["task_kind"],
        metrics=tuple(summary["metrics"]),
        verdicts=verdicts,
        method=summary.get("method", "peerchair"),
        run_tag=summary.get("run_tag", ""),
        config=summary.get("config") or {},
        ledger=CostLedger.from_list(summary.get("ledger") or []),
        timing=summary.get("timing") or {},
        runtime=summary.get("runtime") or {},
        format_version=summary["version"],
    )


# instruction tuning


@dataclass(frozen=True)
class ExportReport:
    written: int
    skipped: int
    skipped_ids: tuple[tuple[str, str], ...] = ()


def export_instruction_tuning(run: RunRecord, path: str | Path) -> ExportReport:
    """Write one ``{"instruction", "output"}`` JSON line per clean verdict.

    The instruction is the peer prompt for the sample; the output is the area
    chair's chosen analysis followed by the final rating. Failed verdicts are
    skipped and reported.
    """
    if not run.verdicts:
        raise EmptyRun("run has no verdicts to export")
    if run.task_kind != "rating":
        raise EmptyRun("instruction-tuning export needs a rating run")
    lines = []
    skipped = []
    for v in run.verdicts:
        if not v.ok or v.ac.final_score is None or "peer" not in v.prompts:
            skipped.append((v.sample_id, v.metric))
            continue
        output = f"Analysis: {v.ac.final_comment}\nRating: {format_number(v.ac.final_score)}"
        lines.append(_dumps({
            "format_version": TUNING_FORMAT_VERSION,
            "sample_id": v.sample_id,
            "metric": v.metric,
            "instruction": v.prompts["peer"],
            "output": output,
        }))
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc
    return ExportReport(written=len(lines), skipped=len(skipped), skipped_ids=tuple(skipped))


# images


def prefetch_images(
    dataset: Dataset,
    store_dir: str | Path,
    fetch: Callable[[str], bytes] | None = None,
) -> dict[str, str]:
    """Download every image URL into a content-addressed store.

    Files are named by the SHA-256 of their bytes. ``index.json`` maps each
    reference to its local file and is merged with any existing index.
    Local paths are left as they are.
    """
    store = Path(store_dir)
    store.mkdir(parents=True, exist_ok=True)
    index_path = store / "index.json"
    index = json.loads(index_path.read_text(encoding="utf-8")) if index_path.exists() else {}
    if fetch is None:
        import httpx

        def fetch(url: str) -> bytes:
            resp = httpx.get(url, timeout=60.0, follow_redirects=True)
            resp.raise_for_status()
            return resp.content

    for sample in dataset.samples:
        ref = sample.image
        if not ref or not ref.startswith(("http://", "https://")):
            continue
        if ref in index and Path(index[ref]).exists():
            continue
        data = fetch(ref)
        digest = hashlib.sha256(data).hexdigest()
        suffix = Path(ref.split("?")[0]).suffix[:8] or ".img"
        target = store / f"{digest}{suffix}"
        if not target.exists():
            target.write_bytes(data)
        index[ref] = str(target)
    index_path.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return index


def load_image_index(store_dir: str | Path | None) -> dict[str, str]:
    if store_dir is None:
        return {}
    path = Path(store_dir) / "index.json"
    return json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}


def stratified_subset(
    dataset: Dataset, size: int, metric: str, *, bins: int = 5, seed: int = 0
) -> Dataset:
    """Pick ``size`` samples spread as evenly as possible over the score range.

    The scale is cut into ``bins`` equal-width bands; each band gets an equal
    share (round-robin over bands that still have samples). Order within the
    result follows the original dataset.
    """
    if dataset.scale is None:
        raise MissingDatasetScale("stratified sampling needs a rating dataset")
    if size >= len(dataset):
        return dataset
    rng = random.Random(seed)
    lo, span = dataset.scale.min, dataset.scale.span
    buckets: list[list[int]] = [[] for _ in range(bins)]
    for i, s in enumerate(dataset.samples):
        pos = (s.human_scores[metric] - lo) / span
        buckets[min(bins - 1, math.floor(pos * bins))].append(i)
    for b in buckets:
        rng.shuffle(b)
    chosen: list[int] = []
    while len(chosen) < size:
        for b in buckets:
            if b and len(chosen) < size:
                chosen.append(b.pop())
    keep = sorted(chosen)
    return Dataset(
        name=f"{dataset.name}-strat{size}",
        kind=dataset.kind,
        samples=tuple(dataset.samples[i] for i in keep),
        metrics=dataset.metrics,
        scale=dataset.scale,
        answer_space=dataset.answer_space,
    )


def iter_metric_pairs(run: RunRecord, dataset: Dataset, metric: str) -> Iterable[tuple[SampleVerdict, Sample]]:
    samples = dataset.by_id()
    for v in run.verdicts:
        if v.metric == metric:
            yield v, samples[v.sample_id]
