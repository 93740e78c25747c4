from __future__ import annotations

import threading
from collections.abc import Mapping
from dataclasses import dataclass
from decimal import Decimal
from typing import Any

from .types import ChatResponse, ModelHandle

_THOUSAND = Decimal(1000)


@dataclass
class LedgerEntry:
    calls: int = 0
    input_tokens: int = 0
    output_tokens: int = 0
    monetary_cost: Decimal = Decimal(0)
    wall_time: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "calls": self.calls,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "monetary_cost": str(self.monetary_cost),
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> LedgerEntry:
        return cls(
            calls=int(data["calls"]),
            input_tokens=int(data["input_tokens"]),
            output_tokens=int(data["output_tokens"]),
            monetary_cost=Decimal(str(data["monetary_cost"])),
            wall_time=float(data.get("wall_time") or 0.0),
        )


class CostLedger:
    """Per-(method, model) usage accumulators. Costs are exact Decimals."""

    def __init__(self):
        self._lock = threading.Lock()
        self.entries: dict[tuple[str, str], LedgerEntry] = {}

    def add(self, method: str, handle: ModelHandle, response: ChatResponse) -> None:
        usage = response.usage
        cost = (
            Decimal(usage.input_tokens) / _THOUSAND * handle.input_cost_per_1k_tokens
            + Decimal(usage.output_tokens) / _THOUSAND * handle.output_cost_per_1k_tokens
        )
        with self._lock:
            entry = self.entries.setdefault((method, handle.name), LedgerEntry())
            entry.calls += 1
            entry.input_tokens += usage.input_tokens
            entry.output_tokens += usage.output_tokens
            entry.monetary_cost += cost
            entry.wall_time += response.latency

    def merge(self, other: CostLedger) -> None:
        with self._lock:
            for key, src in other.entries.items():
                dst = self.entries.setdefault(key, LedgerEntry())
                dst.calls += src.calls
                dst.input_tokens += src.input_tokens
                dst.output_tokens += src.output_tokens
                dst.monetary_cost += src.monetary_cost
                dst.wall_time += src.wall_time

    def cost_by_method(self) -> dict[str, Decimal]:
        out: dict[str, Decimal] = {}
        for (method, _), entry in sorted(self.entries.items()):
            out[method] = out.get(method, Decimal(0)) + entry.monetary_cost
        return out

    def total(self) -> LedgerEntry:
        total = LedgerEntry()
        for entry in self.entries.values():
            total.calls += entry.calls
            total.input_tokens += entry.input_tokens
            total.output_tokens += entry.output_tokens
            total.monetary_cost += entry.monetary_cost
            total.wall_time += entry.wall_time
        return total

    def to_list(self) -> list[dict[str, Any]]:
        return [
            {"method": method, "model": model, **entry.to_dict()}
            for (method, model), entry in sorted(self.entries.items())
        ]

    @classmethod
    def from_list(cls, rows) -> CostLedger:
        ledger = cls()
        for row in rows:
            ledger.entries[(row["method"], row["model"])] = LedgerEntry.from_dict(row)
        return ledger


def record_usage(ledger: CostLedger, method: str, handle: ModelHandle, response: ChatResponse) -> CostLedger:
    ledger.add(method, handle, response)
    return ledger
