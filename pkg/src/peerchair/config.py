"""Run configuration file: model handles, retry policy, rate limits, run defaults.

One YAML document, ``version: 1``::

    version: 1
    models:
      gpt-4o-mini:
        provider: openai
        model_id: gpt-4o-mini
        pricing: {input_cost_per_1k_tokens: "0.00015", output_cost_per_1k_tokens: "0.0006"}
        supports_n: true
    providers:
      openai: {requests_per_minute: 500}
    retry: {max_attempts: 5, backoff: {initial: 1, multiplier: 2, max: 30}}
    run:
      peers: [llama, nemo, gemma]
      area_chair: gpt-4o-mini
      variant: turbo
    mock:
      scripts:
        - {match: "Rating:", model: llama, completions: ["Analysis: ok\\nRating: 2"]}

Overrides are ``dotted.path=value`` strings applied in order (last wins);
values are parsed as YAML scalars, so ``run.n=5`` sets an integer.
"""

from __future__ import annotations

import copy
import re
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .datasets import load_image_index
from .errors import InvalidConfig
from .gateway import (
    Gateway,
    MockBackend,
    MockFailure,
    ModelHandle,
    OpenAICompatibleBackend,
    ResponseCache,
    RetryPolicy,
)
from .models import Dataset, DatasetKind
from .orchestrator import Hyperparameters, RunConfig, default_hyperparameters
from .prompts import TaskKind, bundled_schema_dir, load_schema_set

CONFIG_VERSION = 1

RUN_KEYS = frozenset({
    "peers", "area_chair", "variant", "n", "strategy", "min_peers", "concurrency",
    "cache_dir", "seed_tag", "method", "schema_dir", "schema_set", "metrics",
    "peer_params", "ac_params", "autoprompt", "image_store",
})
TOP_KEYS = frozenset({"version", "models", "providers", "retry", "run", "mock"})


def _parse_scalar(text: str) -> Any:
    try:
        return yaml.safe_load(text) if text.strip() else ""
    except yaml.YAMLError:
        return text


def apply_overrides(doc: Mapping[str, Any], overrides: Iterable[str]) -> dict[str, Any]:
    """Return a copy of ``doc`` with each ``a.b.c=value`` applied in order."""
    out = copy.deepcopy(dict(doc))
    for item in overrides:
        if "=" not in item:
            raise InvalidConfig(f"override {item!r} is not of the form key=value")
        path, raw = item.split("=", 1)
        keys = [k for k in path.strip().split(".") if k]
        if not keys:
            raise InvalidConfig(f"override {item!r} has an empty key")
        node = out
        for key in keys[:-1]:
            nxt = node.get(key)
            if nxt is None:
                nxt = node[key] = {}
            elif not isinstance(nxt, dict):
                raise InvalidConfig(f"override {item!r}: {key!r} is not a mapping")
            node = nxt
        node[keys[-1]] = _parse_scalar(raw)
    return out


@dataclass
class AppConfig:
    document: dict[str, Any]
    models: dict[str, ModelHandle]
    retry: RetryPolicy
    rate_limits: dict[str, float]
    run: dict[str, Any]
    mock_scripts: list[dict[str, Any]] = field(default_factory=list)
    base_dir: Path = field(default_factory=Path.cwd)

    def model(self, name: str) -> ModelHandle:
        try:
            return self.models[name]
        except KeyError:
            raise InvalidConfig(f"unknown model handle {name!r}; known: {sorted(self.models)}") from None

    def path(self, key: str) -> Path | None:
        """A ``run`` path setting, resolved against the config file's folder."""
        value = self.run.get(key)
        if value in (None, ""):
            return None
        p = Path(str(value)).expanduser()
        return p if p.is_absolute() else self.base_dir / p


def parse_config(document: Mapping[str, Any], base_dir: Path | None = None) -> AppConfig:
    if not isinstance(document, Mapping):
        raise InvalidConfig("config must be a mapping")
    version = document.get("version")
    if version != CONFIG_VERSION:
        raise InvalidConfig(f"unsupported config version {version!r} (expected {CONFIG_VERSION})")
    unknown = set(document) - TOP_KEYS
    if unknown:
        raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
    try:
        models = {
            name: ModelHandle.from_dict(name, spec or {})
            for name, spec in (document.get("models") or {}).items()
        }
        retry = RetryPolicy.from_dict(document.get("retry") or {})
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidConfig(f"bad model or retry section: {exc}") from exc
    rate_limits = {}
    for provider, spec in (document.get("providers") or {}).items():
        rpm = (spec or {}).get("requests_per_minute")
        if rpm is not None:
            rate_limits[provider] = float(rpm)
    run = dict(document.get("run") or {})
    unknown = set(run) - RUN_KEYS
    if unknown:
        raise InvalidConfig(f"unknown run keys: {sorted(unknown)}")
    scripts = list((document.get("mock") or {}).get("scripts") or [])
    return AppConfig(
        document=dict(document),
        models=models,
        retry=retry,
        rate_limits=rate_limits,
        run=run,
        mock_scripts=scripts,
        base_dir=base_dir or Path.cwd(),
    )


def load_config(path: str | Path, overrides: Iterable[str] = ()) -> AppConfig:
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as fh:
            document = yaml.safe_load(fh)
    except OSError as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise InvalidConfig(f"{path}: invalid YAML: {exc}") from exc
    return parse_config(apply_overrides(document or {}, overrides), base_dir=path.parent.resolve())


def _script_item(item: Any) -> str | MockFailure:
    if isinstance(item, Mapping) and "fail" in item:
        return MockFailure(str(item["fail"]), retryable=bool(item.get("retryable", True)))
    return str(item)


def build_mock(scripts: Iterable[Mapping[str, Any]]) -> MockBackend:
    """A :class:`MockBackend` from config entries.

    Each entry has ``completions`` plus either ``match`` (substring) or
    ``regex``, and optionally ``model``. A completion given as
    ``{fail: message}`` raises a scripted failure instead.
    """
    backend = MockBackend()
    for i, entry in enumerate(scripts):
        completions = [_script_item(c) for c in entry.get("completions") or ()]
        if not completions:
            raise InvalidConfig(f"mock script {i} has no completions")
        if "regex" in entry:
            pattern = re.compile(entry["regex"])
            matcher: Any = lambda prompt, p=pattern: p.search(prompt) is not None
        else:
            matcher = str(entry.get("match", ""))
        backend.script(matcher, completions, model=entry.get("model"))
    return backend


def build_gateway(
    app: AppConfig,
    *,
    cache_dir: str | Path | None = None,
    max_in_flight: int | None = None,
    mock: MockBackend | None = None,
) -> tuple[Gateway, MockBackend | None]:
    """Gateway with one backend per provider used by the configured models.

    Models on provider ``mock`` are served by the scripted backend.
    """
    backends: dict[str, Any] = {}
    http: OpenAICompatibleBackend | None = None
    for handle in app.models.values():
        if handle.provider == "mock":
            if mock is None:
                mock = build_mock(app.mock_scripts)
            backends["mock"] = mock
        elif handle.provider not in backends:
            http = http or OpenAICompatibleBackend()
            backends[handle.provider] = http
    cache = ResponseCache(cache_dir) if cache_dir else None
    gateway = Gateway(
        backends,
        cache=cache,
        policy=app.retry,
        rate_limits=app.rate_limits,
        max_in_flight=max_in_flight,
    )
    return gateway, mock


def _peer_names(value: Any) -> list[str]:
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    return [str(v) for v in value or ()]


def run_metrics(app: AppConfig, dataset: Dataset) -> list[str]:
    metrics = app.run.get("metrics")
    if metrics is None:
        return list(dataset.metrics)
    metrics = _peer_names(metrics)
    unknown = [m for m in metrics if m not in dataset.metrics]
    if unknown:
        raise InvalidConfig(f"metrics not in dataset {dataset.name!r}: {unknown}")
    return metrics


def build_run_config(app: AppConfig, dataset: Dataset, metrics: Iterable[str]) -> RunConfig:
    """Combine the ``run`` section with dataset defaults and on-disk schemas."""
    run = app.run
    peers = _peer_names(run.get("peers"))
    if not peers:
        raise InvalidConfig("run.peers is empty")
    if not run.get("area_chair"):
        raise InvalidConfig("run.area_chair is not set")
    schema_dir = app.path("schema_dir") or bundled_schema_dir()
    if not Path(schema_dir).is_dir():
        raise InvalidConfig(f"schema directory {schema_dir} does not exist")
    schemas = load_schema_set(schema_dir, str(run.get("schema_set") or dataset.name), metrics)

    peer_default, ac_default = default_hyperparameters(dataset.kind)
    try:
        return RunConfig(
            peers=tuple(app.model(p) for p in peers),
            area_chair=app.model(str(run["area_chair"])),
            schemas=schemas,
            variant=run.get("variant", "turbo"),
            n=run.get("n"),
            strategy=run.get("strategy"),
            min_peers=run.get("min_peers"),
            task_kind=TaskKind.REASONING if dataset.kind is DatasetKind.REASONING else TaskKind.RATING,
            peer_params=Hyperparameters.from_dict(run.get("peer_params") or {}, peer_default),
            ac_params=Hyperparameters.from_dict(run.get("ac_params") or {}, ac_default),
            scale=dataset.scale,
            answer_space=dataset.answer_space,
            image_index=load_image_index(app.path("image_store")),
            method=str(run.get("method") or ""),
            tag=str(run.get("seed_tag") or ""),
        )
    except ValueError as exc:
        raise InvalidConfig(str(exc)) from exc
