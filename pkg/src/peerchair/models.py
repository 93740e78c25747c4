"""Value types shared by the prompt engine, parser, orchestrator and dataset io."""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from enum import Enum
from fractions import Fraction
from typing import Any

Score = Fraction
Answer = str | Fraction


def to_fraction(value: Any) -> Fraction:
    """Convert an int, decimal string, float or Fraction to an exact Fraction.

    Floats go through their shortest repr so ``2.5`` and ``0.1`` map to the
    decimal the user wrote rather than the binary approximation.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not scores")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, Decimal):
        if not value.is_finite():
            raise ValueError(f"non-finite number: {value}")
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite number: {value}")
        return Fraction(Decimal(repr(value)))
    if isinstance(value, str):
        text = value.strip()
        if "/" in text:
            return Fraction(text)
        try:
            dec = Decimal(text)
        except InvalidOperation as exc:
            raise ValueError(f"not a number: {value!r}") from exc
        if not dec.is_finite():
            raise ValueError(f"non-finite number: {value!r}")
        return Fraction(dec)
    raise TypeError(f"cannot convert {type(value).__name__} to Fraction")


def _terminating_decimal(f: Fraction) -> str | None:
    den = f.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return None
    places = max(twos, fives)
    scaled = f * 10**places
    sign = "-" if scaled < 0 else ""
    digits = str(abs(scaled.numerator)).rjust(places + 1, "0")
    if places == 0:
        return sign + digits
    text = f"{sign}{digits[:-places]}.{digits[-places:]}".rstrip("0").rstrip(".")
    return text


def format_number(f: Fraction) -> str:
    """Human-readable text for a rational: ``3``, ``2.5`` or ``7/3``."""
    text = _terminating_decimal(f)
    return text if text is not None else f"{f.numerator}/{f.denominator}"


def number_to_json(f: Fraction) -> int | float | str:
    """JSON value that round-trips exactly through :func:`number_from_json`."""
    if f.denominator == 1:
        return f.numerator
    text = _terminating_decimal(f)
    if text is not None and repr(float(text)) == text:
        return float(text)
    return f"{f.numerator}/{f.denominator}"


def number_from_json(value: Any) -> Fraction:
    return to_fraction(value)


class Granularity(str, Enum):
    INTEGER = "integer"
    CONTINUOUS = "continuous"


@dataclass(frozen=True)
class ScoreScale:
    min: Fraction
    max: Fraction
    granularity: Granularity = Granularity.INTEGER

    def __post_init__(self):
        object.__setattr__(self, "min", to_fraction(self.min))
        object.__setattr__(self, "max", to_fraction(self.max))
        object.__setattr__(self, "granularity", Granularity(self.granularity))
        if not self.min < self.max:
            raise ValueError(f"scale min {self.min} must be below max {self.max}")

    @property
    def span(self) -> Fraction:
        return self.max - self.min

    def contains(self, value: Fraction) -> bool:
        return self.min <= value <= self.max

    def label(self) -> str:
        return f"{format_number(self.min)}-{format_number(self.max)}"

    def to_dict(self) -> dict:
        return {
            "min": number_to_json(self.min),
            "max": number_to_json(self.max),
            "granularity": self.granularity.value,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ScoreScale:
        return cls(
            min=to_fraction(data["min"]),
            max=to_fraction(data["max"]),
            granularity=Granularity(data.get("granularity", "integer")),
        )


class AnswerKind(str, Enum):
    LABELS = "labels"
    NUMBER = "number"


@dataclass(frozen=True)
class AnswerSpace:
    kind: AnswerKind
    labels: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "kind", AnswerKind(self.kind))
        object.__setattr__(self, "labels", frozenset(l.upper() for l in self.labels))
        if self.kind is AnswerKind.LABELS and not self.labels:
            raise ValueError("a label answer space needs at least one label")

    @classmethod
    def letters(cls, first: str, last: str) -> AnswerSpace:
        return cls(AnswerKind.LABELS, frozenset(chr(c) for c in range(ord(first), ord(last) + 1)))

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind.value}
        if self.kind is AnswerKind.LABELS:
            out["labels"] = sorted(self.labels)
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> AnswerSpace:
        return cls(AnswerKind(data["kind"]), frozenset(data.get("labels") or ()))


def answer_to_json(answer: Answer) -> Any:
    return answer if isinstance(answer, str) else number_to_json(answer)


def answer_from_json(value: Any) -> Answer:
    if isinstance(value, str) and not _looks_numeric(value):
        return value
    return to_fraction(value)


def _looks_numeric(text: str) -> bool:
    try:
        to_fraction(text)
    except (ValueError, ZeroDivisionError):
        return False
    return True


def format_answer(answer: Answer) -> str:
    return answer if isinstance(answer, str) else format_number(answer)


@dataclass(frozen=True)
class ReviewOutcome:
    """Parsed (comment, score) pair from one rating completion."""

    analysis: str
    score: Fraction
    raw: str

    def to_dict(self) -> dict:
        return {"analysis": self.analysis, "score": number_to_json(self.score), "raw": self.raw}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ReviewOutcome:
        return cls(data["analysis"], to_fraction(data["score"]), data["raw"])


@dataclass(frozen=True)
class AnswerOutcome:
    """Parsed (reasoning, answer) pair from one reasoning completion."""

    analysis: str
    answer: Answer
    raw: str

    def to_dict(self) -> dict:
        return {"analysis": self.analysis, "answer": answer_to_json(self.answer), "raw": self.raw}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> AnswerOutcome:
        return cls(data["analysis"], answer_from_json(data["answer"]), data["raw"])


Outcome = ReviewOutcome | AnswerOutcome


def outcome_from_dict(data: Mapping[str, Any]) -> Outcome:
    if "score" in data:
        return ReviewOutcome.from_dict(data)
    return AnswerOutcome.from_dict(data)


@dataclass(frozen=True)
class PeerReview:
    """One peer's parsed review, tagged with the handle name that produced it."""

    peer: str
    outcome: Outcome

    @property
    def analysis(self) -> str:
        return self.outcome.analysis

    def to_dict(self) -> dict:
        return {"peer": self.peer, **self.outcome.to_dict()}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> PeerReview:
        return cls(data["peer"], outcome_from_dict(data))


class DatasetKind(str, Enum):
    NLG_RATING = "nlg_rating"
    MULTIMODAL_RATING = "multimodal_rating"
    REASONING = "reasoning"

    @property
    def is_rating(self) -> bool:
        return self is not DatasetKind.REASONING


@dataclass(frozen=True)
class Sample:
    id: str
    slots: Mapping[str, str]
    image: str | None = None
    human_scores: Mapping[str, Fraction] = field(default_factory=dict)
    gold_answer: Answer | None = None
    scale: ScoreScale | None = None

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"id": self.id, "slots": dict(self.slots)}
        if self.image is not None:
            out["image"] = self.image
        if self.human_scores:
            out["human_scores"] = {k: number_to_json(v) for k, v in self.human_scores.items()}
        if self.gold_answer is not None:
            out["gold_answer"] = answer_to_json(self.gold_answer)
        return out


@dataclass(frozen=True)
class Dataset:
    name: str
    kind: DatasetKind
    samples: tuple[Sample, ...]
    metrics: tuple[str, ...]
    scale: ScoreScale | None = None
    answer_space: AnswerSpace | None = None

    def __post_init__(self):
        if not self.samples:
            raise ValueError("dataset must contain at least one sample")
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ValueError("sample ids must be unique")

    def __len__(self) -> int:
        return len(self.samples)

    def by_id(self) -> dict[str, Sample]:
        return {s.id: s for s in self.samples}
