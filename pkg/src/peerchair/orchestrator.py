"""Peer fan-out, area-chair synthesis and dataset runs."""

from __future__ import annotations

import hashlib
import json
import logging
import statistics
import time
from collections import Counter
from collections.abc import Mapping, Sequence
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any

from .errors import (
    ACFailure,
    BackendExhausted,
    InsufficientPeers,
    InvalidConfig,
    ParseFailure,
    PeerChairError,
    PromptError,
)
from .gateway import (
    ChatRequest,
    CostLedger,
    Gateway,
    ImageAttachment,
    ModelHandle,
    record_usage,
)
from .models import (
    AnswerSpace,
    Dataset,
    DatasetKind,
    Outcome,
    PeerReview,
    Sample,
    ScoreScale,
)
from .parsing import parse_answer, parse_rating
from .prompts import (
    CommunicationStrategy,
    Role,
    RoleSchemas,
    TaskKind,
    render_area_chair_skeleton,
    render_prompt,
)
from .records import ACVerdict, RunRecord, SampleError, SampleVerdict

log = logging.getLogger(__name__)

TURBO_DEFAULT_N = 20


class Variant(str, Enum):
    TURBO = "turbo"
    LITE = "lite"


@dataclass(frozen=True)
class Hyperparameters:
    temperature: float = 1.0
    top_p: float = 1.0
    max_tokens: int | None = 256
    stop: tuple[str, ...] | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
            "stop": list(self.stop) if self.stop is not None else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base: Hyperparameters | None = None) -> Hyperparameters:
        base = base or cls()
        stop = data.get("stop", base.stop)
        return cls(
            temperature=float(data.get("temperature", base.temperature)),
            top_p=float(data.get("top_p", base.top_p)),
            max_tokens=data.get("max_tokens", base.max_tokens),
            stop=tuple(stop) if stop is not None else None,
        )


def default_hyperparameters(kind: DatasetKind | str) -> tuple[Hyperparameters, Hyperparameters]:
    """``(peer, area_chair)`` defaults for a dataset kind."""
    kind = DatasetKind(kind)
    if kind is DatasetKind.REASONING:
        return Hyperparameters(max_tokens=256), Hyperparameters(max_tokens=None)
    peer_tokens = 192 if kind is DatasetKind.MULTIMODAL_RATING else 128
    return Hyperparameters(max_tokens=peer_tokens), Hyperparameters(max_tokens=256)


def default_strategy(task_kind: TaskKind) -> CommunicationStrategy:
    if task_kind is TaskKind.REASONING:
        return CommunicationStrategy.BOTH
    return CommunicationStrategy.SCORE_ONLY


@dataclass(frozen=True)
class RunConfig:
    """Everything one run needs besides the dataset and the gateway.

    ``n=None`` means the variant default (20 for turbo, 1 for lite) and
    ``min_peers=None`` means ``max(1, K - 1)``.
    """

    peers: tuple[ModelHandle, ...]
    area_chair: ModelHandle
    schemas: Mapping[str, RoleSchemas]
    variant: Variant = Variant.TURBO
    n: int | None = None
    strategy: CommunicationStrategy | None = None
    min_peers: int | None = None
    task_kind: TaskKind = TaskKind.RATING
    peer_params: Hyperparameters = field(default_factory=lambda: Hyperparameters(max_tokens=128))
    ac_params: Hyperparameters = field(default_factory=Hyperparameters)
    answer_space: AnswerSpace | None = None
    scale: ScoreScale | None = None
    image_index: Mapping[str, str] = field(default_factory=dict)
    method: str = ""
    tag: str = ""

    def __post_init__(self):
        object.__setattr__(self, "peers", tuple(self.peers))
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "task_kind", TaskKind(self.task_kind))
        if self.strategy is None:
            object.__setattr__(self, "strategy", default_strategy(self.task_kind))
        else:
            object.__setattr__(self, "strategy", CommunicationStrategy(self.strategy))
        if not self.peers:
            raise InvalidConfig("at least one peer is required")
        names = [p.name for p in self.peers]
        if len(set(names)) != len(names):
            raise InvalidConfig(f"peer names must be unique: {names}")
        if self.n is not None and (not isinstance(self.n, int) or self.n < 1):
            raise InvalidConfig(f"n must be a positive integer, got {self.n!r}")
        if self.variant is Variant.LITE and self.n not in (None, 1):
            raise InvalidConfig(f"the lite variant always uses n=1 (got n={self.n})")
        if self.min_peers is not None and not 1 <= self.min_peers <= len(self.peers):
            raise InvalidConfig(f"min_peers must be between 1 and {len(self.peers)}, got {self.min_peers}")
        if not self.method:
            object.__setattr__(self, "method", f"peerchair-{self.variant.value}")

    @property
    def k(self) -> int:
        return len(self.peers)

    @property
    def n_effective(self) -> int:
        if self.variant is Variant.LITE:
            return 1
        return self.n if self.n is not None else TURBO_DEFAULT_N

    @property
    def min_peers_effective(self) -> int:
        return self.min_peers if self.min_peers is not None else max(1, self.k - 1)

    def schema_for(self, metric: str) -> RoleSchemas:
        try:
            return self.schemas[metric]
        except KeyError:
            raise InvalidConfig(f"no prompt schema configured for metric {metric!r}") from None

    def scale_for(self, metric: str) -> ScoreScale:
        scale = self.schema_for(metric).peer.scale or self.scale
        if scale is None:
            raise InvalidConfig(f"no score scale for metric {metric!r}")
        return scale

    def to_dict(self) -> dict[str, Any]:
        def digest(schema) -> str:
            body = json.dumps(schema.to_dict(), sort_keys=True, ensure_ascii=False)
            return hashlib.sha256(body.encode("utf-8")).hexdigest()[:16]

        return {
            "method": self.method,
            "tag": self.tag,
            "variant": self.variant.value,
            "n": self.n_effective,
            "strategy": self.strategy.value,
            "min_peers": self.min_peers_effective,
            "task_kind": self.task_kind.value,
            "peers": {p.name: p.to_dict() for p in self.peers},
            "peer_order": [p.name for p in self.peers],
            "area_chair": {self.area_chair.name: self.area_chair.to_dict()},
            "peer_params": self.peer_params.to_dict(),
            "ac_params": self.ac_params.to_dict(),
            "schemas": {
                m: {"peer": digest(s.peer), "area_chair": digest(s.area_chair)}
                for m, s in sorted(self.schemas.items())
            },
        }


def _request(prompt: str, params: Hyperparameters, n: int, image, tag: str, resample: int = 0) -> ChatRequest:
    return ChatRequest(
        prompt=prompt,
        n=n,
        temperature=params.temperature,
        top_p=params.top_p,
        max_tokens=params.max_tokens,
        stop=params.stop,
        image=image,
        resample=resample,
        tag=tag,
    )


class _Parser:
    def __init__(self, cfg: RunConfig, metric: str, role: Role):
        self.cfg = cfg
        self.schema = cfg.schema_for(metric).for_role(role)
        if cfg.task_kind is TaskKind.RATING:
            self.scale = cfg.scale_for(metric)
        elif cfg.answer_space is None:
            raise InvalidConfig("reasoning runs need an answer space")

    def __call__(self, text: str) -> Outcome:
        if self.cfg.task_kind is TaskKind.RATING:
            return parse_rating(text, self.scale, self.schema.metric_name)
        return parse_answer(text, self.cfg.answer_space)


def _aggregate(outcomes: Sequence[Outcome], task_kind: TaskKind) -> ACVerdict:
    comment = outcomes[0].analysis
    if task_kind is TaskKind.RATING:
        scores = [o.score for o in outcomes]
        return ACVerdict(tuple(outcomes), comment, final_score=sum(scores, Fraction(0)) / len(scores))
    answers = [o.answer for o in outcomes]
    counts = Counter(answers)
    top = max(counts.values())
    winner = next(a for a in answers if counts[a] == top)
    return ACVerdict(tuple(outcomes), comment, final_answer=winner)


def _image_for(sample: Sample, cfg: RunConfig) -> ImageAttachment | None:
    if sample.image is None:
        return None
    return ImageAttachment.from_reference(sample.image, cfg.image_index)


def _run_peer(
    peer: ModelHandle,
    prompt: str,
    image,
    cfg: RunConfig,
    gateway: Gateway,
    parse: _Parser,
    ledger: CostLedger,
) -> PeerReview:
    response = gateway.invoke(_request(prompt, cfg.peer_params, 1, image, cfg.tag), peer)
    record_usage(ledger, "peer", peer, response)
    try:
        return PeerReview(peer.name, parse(response.completions[0]))
    except ParseFailure as first:
        log.info("peer %s: unparseable completion (%s); drawing once more", peer.name, first)
    response = gateway.invoke(_request(prompt, cfg.peer_params, 1, image, cfg.tag, resample=1), peer)
    record_usage(ledger, "peer", peer, response)
    return PeerReview(peer.name, parse(response.completions[0]))


def evaluate_sample(
    sample: Sample,
    metric: str,
    cfg: RunConfig,
    gateway: Gateway,
    *,
    ledger: CostLedger | None = None,
    executor: Executor | None = None,
) -> SampleVerdict:
    """Score one sample on one metric.

    Each peer gets one ``n=1`` request. Peers that still fail after retries
    (or produce two unparseable drafts) are dropped as long as ``min_peers``
    remain. The area chair then gets one request carrying ``n`` completions
    and sees the surviving reviews in configured peer order.
    """
    ledger = ledger if ledger is not None else gateway.ledger
    schemas = cfg.schema_for(metric)
    peer_parse = _Parser(cfg, metric, Role.PEER)
    ac_parse = _Parser(cfg, metric, Role.AREA_CHAIR)
    image = _image_for(sample, cfg)

    t0 = time.perf_counter()
    peer_prompt = render_prompt(schemas.peer, sample, Role.PEER)

    def attempt(peer: ModelHandle):
        try:
            return _run_peer(peer, peer_prompt, image, cfg, gateway, peer_parse, ledger)
        except (BackendExhausted, ParseFailure) as exc:
            log.warning("dropping peer %s on sample %s/%s: %s", peer.name, sample.id, metric, exc)
            return exc

    if executor is not None and cfg.k > 1:
        results = list(executor.map(attempt, cfg.peers))
    else:
        results = [attempt(p) for p in cfg.peers]
    reviews = tuple(r for r in results if isinstance(r, PeerReview))
    dropped = tuple(p.name for p, r in zip(cfg.peers, results) if not isinstance(r, PeerReview))
    t1 = time.perf_counter()
    if len(reviews) < cfg.min_peers_effective:
        raise InsufficientPeers(
            f"{len(reviews)} usable peer review(s), need {cfg.min_peers_effective} (dropped: {', '.join(dropped)})"
        )

    ac_prompt = render_prompt(schemas.area_chair, sample, Role.AREA_CHAIR, reviews, cfg.strategy)
    n = cfg.n_effective
    try:
        response = gateway.invoke(_request(ac_prompt, cfg.ac_params, n, image, cfg.tag), cfg.area_chair)
    except BackendExhausted as exc:
        raise ACFailure(f"area chair {cfg.area_chair.name}: {exc}") from exc
    record_usage(ledger, "area_chair", cfg.area_chair, response)

    outcomes: list[Outcome] = []
    for j, text in enumerate(response.completions):
        try:
            outcomes.append(ac_parse(text))
            continue
        except ParseFailure as exc:
            log.info("area chair draft %d unparseable (%s); drawing once more", j, exc)
        try:
            redo = gateway.invoke(
                _request(ac_prompt, cfg.ac_params, 1, image, cfg.tag, resample=j + 1), cfg.area_chair
            )
        except BackendExhausted as exc:
            raise ACFailure(f"area chair {cfg.area_chair.name}: {exc}") from exc
        record_usage(ledger, "area_chair", cfg.area_chair, redo)
        outcomes.append(ac_parse(redo.completions[0]))
    t2 = time.perf_counter()

    verdict = _aggregate(outcomes, cfg.task_kind)
    verdict = replace(verdict, degraded=len(reviews) < cfg.k)
    return SampleVerdict(
        sample_id=sample.id,
        metric=metric,
        peer_reviews=reviews,
        ac=verdict,
        timing={"peers": t1 - t0, "area_chair": t2 - t1, "total": t2 - t0},
        prompts={"peer": peer_prompt, "area_chair": ac_prompt},
        dropped_peers=dropped,
    )


def _stage_of(exc: BaseException) -> str:
    if isinstance(exc, InsufficientPeers):
        return "peers"
    if isinstance(exc, (ACFailure, ParseFailure)):
        return "area_chair"
    if isinstance(exc, PromptError):
        return "render"
    return "unknown"


def _percentile(values: Sequence[float], q: float) -> float:
    ordered = sorted(values)
    if len(ordered) == 1:
        return ordered[0]
    pos = (len(ordered) - 1) * q
    lo = int(pos)
    hi = min(lo + 1, len(ordered) - 1)
    return ordered[lo] + (ordered[hi] - ordered[lo]) * (pos - lo)


def _check_run(dataset: Dataset, metrics: Sequence[str], cfg: RunConfig) -> None:
    if not metrics:
        raise InvalidConfig("at least one metric is required")
    if not dataset.samples:
        raise InvalidConfig("dataset is empty")
    for metric in metrics:
        cfg.schema_for(metric)
        if cfg.task_kind is TaskKind.RATING:
            cfg.scale_for(metric)
    is_reasoning = dataset.kind is DatasetKind.REASONING
    if is_reasoning != (cfg.task_kind is TaskKind.REASONING):
        raise InvalidConfig(f"dataset kind {dataset.kind.value!r} does not match task kind {cfg.task_kind.value!r}")


def run_dataset(
    dataset: Dataset,
    metrics: Sequence[str],
    cfg: RunConfig,
    gateway: Gateway,
    concurrency_limit: int = 1,
    *,
    fail_fast: bool = False,
) -> RunRecord:
    """Evaluate every (sample, metric) pair; verdict order is dataset order.

    Per-sample failures are embedded in the record unless ``fail_fast``.
    """
    metrics = tuple(metrics)
    if concurrency_limit < 1:
        raise InvalidConfig("concurrency_limit must be >= 1")
    if cfg.scale is None and dataset.scale is not None:
        cfg = replace(cfg, scale=dataset.scale)
    if cfg.answer_space is None and dataset.answer_space is not None:
        cfg = replace(cfg, answer_space=dataset.answer_space)
    _check_run(dataset, metrics, cfg)

    ledger = CostLedger()
    stats_before = gateway.stats.to_dict()
    jobs = [(s, m) for s in dataset.samples for m in metrics]

    peer_pool = ThreadPoolExecutor(max_workers=concurrency_limit * cfg.k) if concurrency_limit > 1 else None

    def job(item) -> SampleVerdict:
        sample, metric = item
        try:
            return evaluate_sample(sample, metric, cfg, gateway, ledger=ledger, executor=peer_pool)
        except PeerChairError as exc:
            if fail_fast:
                raise
            log.warning("sample %s/%s failed: %s", sample.id, metric, exc)
            return SampleVerdict(
                sample_id=sample.id,
                metric=metric,
                error=SampleError(type(exc).__name__, str(exc), _stage_of(exc)),
            )

    started = time.perf_counter()
    try:
        if concurrency_limit == 1:
            verdicts = [job(item) for item in jobs]
        else:
            with ThreadPoolExecutor(max_workers=concurrency_limit) as pool:
                futures = [pool.submit(job, item) for item in jobs]
                try:
                    verdicts = [f.result() for f in futures]
                except BaseException:
                    for f in futures:
                        f.cancel()
                    raise
    finally:
        if peer_pool is not None:
            peer_pool.shutdown(wait=True)
    wall = time.perf_counter() - started

    totals = [v.timing["total"] for v in verdicts if "total" in v.timing]
    timing: dict[str, Any] = {"wall_time": wall}
    if totals:
        timing.update(
            mean_per_instance=statistics.fmean(totals),
            p50=_percentile(totals, 0.5),
            p90=_percentile(totals, 0.9),
            max=max(totals),
        )
    stats_after = gateway.stats.to_dict()
    runtime = {k: stats_after[k] - stats_before[k] for k in stats_after}

    return RunRecord(
        dataset=dataset.name,
        task_kind=cfg.task_kind.value,
        metrics=metrics,
        verdicts=verdicts,
        method=cfg.method,
        run_tag=cfg.tag,
        config=cfg.to_dict(),
        ledger=ledger,
        timing=timing,
        runtime=runtime,
    )


def run_reasoning(
    dataset: Dataset,
    cfg: RunConfig,
    gateway: Gateway,
    concurrency_limit: int = 1,
    *,
    fail_fast: bool = False,
) -> RunRecord:
    """Reasoning runs: peers answer the question, the area chair answers with their help."""
    if cfg.task_kind is not TaskKind.REASONING:
        raise InvalidConfig("run_reasoning needs task_kind=reasoning")
    for metric in dataset.metrics:
        schemas = cfg.schema_for(metric)
        if schemas.peer.guidelines.strip() or schemas.area_chair.guidelines.strip():
            raise InvalidConfig(f"reasoning schema for {metric!r} must not carry evaluation guidelines")
    return run_dataset(dataset, dataset.metrics, cfg, gateway, concurrency_limit, fail_fast=fail_fast)


def dry_run(dataset: Dataset, metrics: Sequence[str], cfg: RunConfig, out_dir: str | Path) -> int:
    """Render every prompt into ``out_dir`` without calling any backend.

    Writes ``<sample_id>/<metric>.peer.txt`` and
    ``<sample_id>/<metric>.area_chair.txt``; the area-chair file keeps
    ``{{Peer_response<i>}}`` placeholders. Returns the number of files written.
    """
    if cfg.scale is None and dataset.scale is not None:
        cfg = replace(cfg, scale=dataset.scale)
    _check_run(dataset, tuple(metrics), cfg)
    out = Path(out_dir)
    written = 0
    for sample in dataset.samples:
        folder = out / _safe_name(sample.id)
        folder.mkdir(parents=True, exist_ok=True)
        for metric in metrics:
            schemas = cfg.schema_for(metric)
            (folder / f"{metric}.peer.txt").write_text(
                render_prompt(schemas.peer, sample, Role.PEER), encoding="utf-8")
            (folder / f"{metric}.area_chair.txt").write_text(
                render_area_chair_skeleton(schemas.area_chair, sample, cfg.k), encoding="utf-8")
            written += 2
    return written


def _safe_name(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in text) or "_"
