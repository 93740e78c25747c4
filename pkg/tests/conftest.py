from __future__ import annotations

from pathlib import Path

import pytest

from peerchair.gateway import Gateway, MockBackend, ModelHandle, RetryPolicy
from peerchair.models import Dataset, DatasetKind, Sample, ScoreScale
from peerchair.orchestrator import RunConfig
from peerchair.prompts import PromptSchema, RoleSchemas

FIXTURES = Path(__file__).parent / "fixtures"

NO_WAIT = RetryPolicy(max_attempts=3, initial=0, max_delay=0)


def handles(k: int, provider: str = "mock") -> list[ModelHandle]:
    return [ModelHandle(f"peer{i}", provider, f"peer{i}") for i in range(k)]


def area_chair(provider: str = "mock", **kw) -> ModelHandle:
    return ModelHandle("chair", provider, "chair", **kw)


def rating_schema(metric: str = "Quality", scale=(1, 3), **kw) -> PromptSchema:
    fields = dict(
        task_intro=f"Score the response for {metric}.",
        criteria=f"{metric}: how good the response is.",
        steps=("Read the input.", "Score it."),
        input_slots=("Context", "Response"),
        eval_form='Begin with "Analysis:" then give "Rating: <number>" on the next line.',
        metric_name=metric,
        scale=ScoreScale(*scale) if scale else None,
    )
    fields.update(kw)
    return PromptSchema(**fields)


def rating_dataset(n: int = 4, metrics=("quality",), scale=(1, 3), name: str = "toy") -> Dataset:
    lo, hi = scale
    samples = tuple(
        Sample(
            id=f"s{i:03d}",
            slots={"Context": f"context number {i}", "Response": f"response number {i}"},
            human_scores={m: lo + (i + j) % (hi - lo + 1) for j, m in enumerate(metrics)},
        )
        for i in range(n)
    )
    return Dataset(name=name, kind=DatasetKind.NLG_RATING, samples=samples, metrics=tuple(metrics),
                   scale=ScoreScale(lo, hi))


def rating_config(k: int = 3, metrics=("quality",), **kw) -> RunConfig:
    schemas = {m: RoleSchemas(rating_schema(), rating_schema()) for m in metrics}
    return RunConfig(peers=tuple(handles(k)), area_chair=area_chair(), schemas=schemas, **kw)


def mock_gateway(mock: MockBackend, **kw) -> Gateway:
    kw.setdefault("policy", NO_WAIT)
    return Gateway({"mock": mock}, sleep=lambda s: None, **kw)


@pytest.fixture
def mock() -> MockBackend:
    return MockBackend()


def write_workspace(root: Path, n: int = 3, metrics=("quality",), k: int = 3, extra_run=None) -> dict[str, Path]:
    """Schemas, dataset and a mock-backed config on disk, ready for the CLI."""
    import yaml

    from peerchair.datasets import dump_dataset
    from peerchair.prompts import dump_schema

    root.mkdir(parents=True, exist_ok=True)
    for m in metrics:
        dump_schema(rating_schema(m.capitalize()), root / "schemas" / "toy" / m / "peer.yaml")
        dump_schema(rating_schema(m.capitalize()), root / "schemas" / "toy" / m / "area_chair.yaml")
    dump_dataset(rating_dataset(n, metrics), root / "toy.jsonl")
    models = {f"peer{i}": {"provider": "mock", "model_id": f"peer{i}",
                           "pricing": {"input_cost_per_1k_tokens": "0.1", "output_cost_per_1k_tokens": "0.2"}}
              for i in range(k)}
    models["chair"] = {"provider": "mock", "model_id": "chair",
                       "pricing": {"input_cost_per_1k_tokens": "1", "output_cost_per_1k_tokens": "2"}}
    scripts = [{"model": "chair", "completions": ["Analysis: chair view.\nRating: 2", "Analysis: chair view.\nRating: 3"]}]
    scripts += [{"model": f"peer{i}", "completions": [f"Analysis: peer {i} view.\nRating: {1 + i % 3}"]} for i in range(k)]
    doc = {
        "version": 1,
        "models": models,
        "retry": {"max_attempts": 2, "backoff": {"initial": 0, "multiplier": 1, "max": 0}},
        "run": {"peers": [f"peer{i}" for i in range(k)], "area_chair": "chair", "schema_dir": "schemas",
                "schema_set": "toy", **(extra_run or {})},
        "mock": {"scripts": scripts},
    }
    (root / "config.yaml").write_text(yaml.safe_dump(doc, sort_keys=False), encoding="utf-8")
    return {"config": root / "config.yaml", "dataset": root / "toy.jsonl", "schemas": root / "schemas"}
