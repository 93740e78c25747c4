"""Agreement metrics between machine scores and human judgements."""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from decimal import Decimal
from enum import Enum
from fractions import Fraction
from typing import Any

from scipy import stats as _stats

from .errors import (
    AllZeroCosts,
    DegenerateInput,
    DegenerateVariance,
    LengthMismatch,
    MissingScale,
)
from .models import ScoreScale, to_fraction


class CorrelationKind(str, Enum):
    SPEARMAN = "spearman"
    KENDALL_TAU_B = "kendall_tau_b"


@dataclass(frozen=True)
class Correlation:
    value: float
    kind: CorrelationKind
    n_pairs: int

    def __float__(self) -> float:
        return self.value


def _check_pairs(x: Sequence[float], y: Sequence[float]) -> tuple[list[float], list[float]]:
    if len(x) != len(y):
        raise LengthMismatch(f"sequences differ in length: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise DegenerateInput("need at least two pairs")
    xs = [float(v) for v in x]
    ys = [float(v) for v in y]
    if any(not math.isfinite(v) for v in xs + ys):
        raise DegenerateInput("non-finite value")
    if len(set(xs)) == 1 or len(set(ys)) == 1:
        raise DegenerateInput("constant sequence: correlation undefined")
    return xs, ys


def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks; tied values share the mean of the positions they span."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = rank
        i = j + 1
    return ranks


def _pearson(a: Sequence[float], b: Sequence[float]) -> float:
    n = len(a)
    ma = math.fsum(a) / n
    mb = math.fsum(b) / n
    da = [v - ma for v in a]
    db = [v - mb for v in b]
    cov = math.fsum(p * q for p, q in zip(da, db))
    var = math.fsum(p * p for p in da) * math.fsum(q * q for q in db)
    return max(-1.0, min(1.0, cov / math.sqrt(var)))


def spearman(x: Sequence[float], y: Sequence[float]) -> Correlation:
    xs, ys = _check_pairs(x, y)
    rho = _pearson(average_ranks(xs), average_ranks(ys))
    return Correlation(rho, CorrelationKind.SPEARMAN, len(xs))


def _merge_count_inversions(seq: list[float]) -> tuple[list[float], int]:
    """Sort ``seq`` and count pairs i<j with seq[i] > seq[j] (ties not counted)."""
    if len(seq) <= 1:
        return seq, 0
    mid = len(seq) // 2
    left, a = _merge_count_inversions(seq[:mid])
    right, b = _merge_count_inversions(seq[mid:])
    merged = []
    inv = a + b
    i = j = 0
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            merged.append(left[i])
            i += 1
        else:
            merged.append(right[j])
            inv += len(left) - i
            j += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    return merged, inv


def _tied_pairs(values: Sequence[float]) -> int:
    counts: dict[float, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return sum(c * (c - 1) // 2 for c in counts.values())


def kendall_tau_b(x: Sequence[float], y: Sequence[float]) -> Correlation:
    """Tie-corrected Kendall correlation in O(n log n) (Knight's method).

    tau_b = (C - D) / sqrt((n0 - t_x) (n0 - t_y)).
    """
    xs, ys = _check_pairs(x, y)
    n = len(xs)
    n0 = n * (n - 1) // 2
    pairs = sorted(zip(xs, ys))
    t_x = _tied_pairs(xs)
    t_y = _tied_pairs(ys)
    t_xy = _tied_pairs(list(zip(xs, ys)))
    _, discordant = _merge_count_inversions([p[1] for p in pairs])
    # pairs neither tied in x nor in y, minus discordant, are concordant
    concordant = n0 - t_x - t_y + t_xy - discordant
    denom = math.sqrt((n0 - t_x) * (n0 - t_y))
    tau = (concordant - discordant) / denom
    return Correlation(max(-1.0, min(1.0, tau)), CorrelationKind.KENDALL_TAU_B, n)


def accuracy(pred: Sequence[Any], gold: Sequence[Any]) -> float:
    if len(pred) != len(gold) or not pred:
        raise LengthMismatch(f"need equal non-empty sequences, got {len(pred)} and {len(gold)}")
    hits = sum(1 for p, g in zip(pred, gold) if p == g)
    return hits / len(pred)


@dataclass(frozen=True)
class PartitionCounts:
    """Area-chair correctness split by whether any peer was correct."""

    some_peer_correct_ac_correct: int
    some_peer_correct_ac_wrong: int
    all_peers_wrong_ac_correct: int
    all_peers_wrong_ac_wrong: int
    threshold_fraction: float | None = None

    @property
    def total(self) -> int:
        return (
            self.some_peer_correct_ac_correct
            + self.some_peer_correct_ac_wrong
            + self.all_peers_wrong_ac_correct
            + self.all_peers_wrong_ac_wrong
        )

    def fractions(self) -> dict[str, float]:
        total = self.total or 1
        return {k: v / total for k, v in self.to_dict().items() if k != "threshold_fraction"}

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "some_peer_correct_ac_correct": self.some_peer_correct_ac_correct,
            "some_peer_correct_ac_wrong": self.some_peer_correct_ac_wrong,
            "all_peers_wrong_ac_correct": self.all_peers_wrong_ac_correct,
            "all_peers_wrong_ac_wrong": self.all_peers_wrong_ac_wrong,
        }
        if self.threshold_fraction is not None:
            out["threshold_fraction"] = self.threshold_fraction
        return out


def error_partition(
    peer_scores: Sequence[Sequence[Any]],
    ac_scores: Sequence[Any],
    truth: Sequence[Any],
    scale: ScoreScale | None = None,
    threshold_fraction: float = 0.25,
    *,
    mode: str = "rating",
) -> PartitionCounts:
    """Four-cell breakdown of area-chair correctness.

    Rating mode: a score counts as correct when it lies within
    ``threshold_fraction * (scale.max - scale.min)`` of the truth, inclusive.
    Reasoning mode: exact match.
    """
    if not (len(peer_scores) == len(ac_scores) == len(truth)):
        raise LengthMismatch("peer_scores, ac_scores and truth must align")
    if mode == "rating":
        if scale is None:
            raise MissingScale("rating-mode error partition needs a scale")
        band = to_fraction(threshold_fraction) * scale.span

        def correct(value, target) -> bool:
            return abs(to_fraction(value) - to_fraction(target)) <= band

    elif mode == "reasoning":

        def correct(value, target) -> bool:
            return value == target

    else:
        raise ValueError(f"unknown mode {mode!r}")

    cells = [0, 0, 0, 0]
    for peers, ac, target in zip(peer_scores, ac_scores, truth):
        any_peer = any(correct(p, target) for p in peers)
        ac_ok = correct(ac, target)
        cells[(0 if any_peer else 2) + (0 if ac_ok else 1)] += 1
    return PartitionCounts(*cells, threshold_fraction=threshold_fraction if mode == "rating" else None)


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: int


def paired_ttest(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Two-sided paired t-test on ``a[i] - b[i]``."""
    if len(a) != len(b):
        raise LengthMismatch(f"sequences differ in length: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise DegenerateInput("need at least two pairs")
    diffs = [Fraction(to_fraction(p) - to_fraction(q)) for p, q in zip(a, b)]
    if len(set(diffs)) == 1:
        raise DegenerateVariance("all differences are equal; t is undefined")
    mean = sum(diffs, Fraction(0)) / n
    var = sum(((d - mean) ** 2 for d in diffs), Fraction(0)) / (n - 1)
    t = float(mean) / math.sqrt(float(var) / n)
    p = float(2 * _stats.t.sf(abs(t), n - 1))
    return TTestResult(t=t, p=min(1.0, p), df=n - 1)


def relative_costs(costs: Mapping[str, Decimal | float] | Any) -> dict[str, float]:
    """Each method's cost as a fraction of the most expensive one.

    Accepts a ``{method: cost}`` mapping or a ``CostLedger``.
    """
    if hasattr(costs, "cost_by_method"):
        costs = costs.cost_by_method()
    if not costs:
        raise AllZeroCosts("no methods to compare")
    top = max(Decimal(str(v)) for v in costs.values())
    if top <= 0:
        raise AllZeroCosts("every method cost is zero")
    return {m: float(Decimal(str(v)) / top) for m, v in costs.items()}
