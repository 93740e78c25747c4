"""Verdict and run-record types plus their JSON forms."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from .gateway.ledger import CostLedger
from .models import (
    Answer,
    Outcome,
    PeerReview,
    answer_from_json,
    answer_to_json,
    number_to_json,
    outcome_from_dict,
    to_fraction,
)

RUN_FORMAT_VERSION = 1

# keys whose values depend on wall-clock time or on cache state; masked when
# comparing runs for determinism
VOLATILE_KEYS = frozenset({"timing", "runtime", "wall_time"})


@dataclass(frozen=True)
class ACVerdict:
    responses: tuple[Outcome, ...]
    final_comment: str
    final_score: Fraction | None = None
    final_answer: Answer | None = None
    degraded: bool = False

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "responses": [r.to_dict() for r in self.responses],
            "final_comment": self.final_comment,
            "degraded": self.degraded,
        }
        if self.final_score is not None:
            out["final_score"] = number_to_json(self.final_score)
        if self.final_answer is not None:
            out["final_answer"] = answer_to_json(self.final_answer)
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ACVerdict:
        return cls(
            responses=tuple(outcome_from_dict(r) for r in data["responses"]),
            final_comment=data["final_comment"],
            final_score=to_fraction(data["final_score"]) if "final_score" in data else None,
            final_answer=answer_from_json(data["final_answer"]) if "final_answer" in data else None,
            degraded=bool(data.get("degraded", False)),
        )


@dataclass(frozen=True)
class SampleError:
    kind: str
    message: str
    stage: str

    def to_dict(self) -> dict[str, str]:
        return {"kind": self.kind, "message": self.message, "stage": self.stage}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SampleError:
        return cls(data["kind"], data["message"], data["stage"])


@dataclass(frozen=True)
class SampleVerdict:
    sample_id: str
    metric: str
    peer_reviews: tuple[PeerReview, ...] = ()
    ac: ACVerdict | None = None
    timing: Mapping[str, float] = field(default_factory=dict)
    prompts: Mapping[str, str] = field(default_factory=dict)
    dropped_peers: tuple[str, ...] = ()
    error: SampleError | None = None

    @property
    def ok(self) -> bool:
        return self.error is None and self.ac is not None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "sample_id": self.sample_id,
            "metric": self.metric,
            "peer_reviews": [r.to_dict() for r in self.peer_reviews],
            "ac": self.ac.to_dict() if self.ac is not None else None,
            "dropped_peers": list(self.dropped_peers),
            "prompts": dict(self.prompts),
            "timing": dict(self.timing),
            "error": self.error.to_dict() if self.error is not None else None,
        }
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SampleVerdict:
        return cls(
            sample_id=data["sample_id"],
            metric=data["metric"],
            peer_reviews=tuple(PeerReview.from_dict(r) for r in data["peer_reviews"]),
            ac=ACVerdict.from_dict(data["ac"]) if data.get("ac") is not None else None,
            timing=dict(data.get("timing") or {}),
            prompts=dict(data.get("prompts") or {}),
            dropped_peers=tuple(data.get("dropped_peers") or ()),
            error=SampleError.from_dict(data["error"]) if data.get("error") else None,
        )


@dataclass
class RunRecord:
    dataset: str
    task_kind: str
    metrics: tuple[str, ...]
    verdicts: list[SampleVerdict]
    method: str = "peerchair"
    run_tag: str = ""
    config: dict[str, Any] = field(default_factory=dict)
    ledger: CostLedger = field(default_factory=CostLedger)
    timing: dict[str, Any] = field(default_factory=dict)
    runtime: dict[str, Any] = field(default_factory=dict)
    format_version: int = RUN_FORMAT_VERSION

    @property
    def failures(self) -> list[SampleVerdict]:
        return [v for v in self.verdicts if not v.ok]

    def summary_dict(self) -> dict[str, Any]:
        totals = self.ledger.total()
        return {
            "format": "peerchair.run-summary",
            "version": self.format_version,
            "dataset": self.dataset,
            "task_kind": self.task_kind,
            "method": self.method,
            "run_tag": self.run_tag,
            "metrics": list(self.metrics),
            "n_verdicts": len(self.verdicts),
            "n_failures": len(self.failures),
            "config": self.config,
            "ledger": self.ledger.to_list(),
            "ledger_totals": {
                "calls": totals.calls,
                "input_tokens": totals.input_tokens,
                "output_tokens": totals.output_tokens,
                "monetary_cost": str(totals.monetary_cost),
            },
            "timing": self.timing,
            "runtime": self.runtime,
        }

    def verdict_key(self) -> list[tuple[str, str]]:
        return [(v.sample_id, v.metric) for v in self.verdicts]


def mask_volatile(obj: Any) -> Any:
    """Copy of ``obj`` with timing/runtime values replaced by ``None``."""
    if isinstance(obj, dict):
        return {k: (None if k in VOLATILE_KEYS else mask_volatile(v)) for k, v in obj.items()}
    if isinstance(obj, list):
        return [mask_volatile(v) for v in obj]
    return obj
