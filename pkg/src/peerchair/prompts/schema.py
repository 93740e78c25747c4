"""Structured evaluation prompt schema and its validation rules."""

from __future__ import annotations

import re
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any

from ..models import ScoreScale

PLACEHOLDER = re.compile(r"\{\{([^{}]+)\}\}")
ANALYSIS_MARKER = "Analysis:"


class TaskKind(str, Enum):
    RATING = "rating"
    REASONING = "reasoning"

    @property
    def answer_marker(self) -> str:
        return "Rating" if self is TaskKind.RATING else "Answer"


class Role(str, Enum):
    PEER = "peer"
    AREA_CHAIR = "area_chair"


class CommunicationStrategy(str, Enum):
    """Which parts of each peer review the area chair gets to see."""

    SCORE_ONLY = "score_only"
    COMMENT_ONLY = "comment_only"
    BOTH = "both"


class StepsStyle(str, Enum):
    NUMBERED = "numbered"
    BULLETED = "bulleted"


@dataclass(frozen=True)
class SchemaIssue:
    field: str
    rule: str

    def __str__(self) -> str:
        return f"{self.field}: {self.rule}"


@dataclass(frozen=True)
class PromptSchema:
    """One role's prompt for one metric.

    The rendered order is fixed: task intro, criteria, steps, guidelines,
    input block, peer-review block (area chair only), evaluation form.
    Header strings are configurable because reasoning prompts use
    "Instructions:" rather than "Evaluation Steps:" and so on.
    """

    task_intro: str
    criteria: str
    steps: tuple[str, ...]
    input_slots: tuple[str, ...]
    eval_form: str
    metric_name: str
    task_kind: TaskKind = TaskKind.RATING
    scale: ScoreScale | None = None
    guidelines: str = ""
    input_template: str = ""
    criteria_header: str = "Evaluation Criteria:"
    steps_header: str = "Evaluation Steps:"
    guidelines_header: str = "Evaluation Guidelines:"
    input_header: str = "Example:"
    reviews_header: str = ""
    review_label: str = "{ordinal} Assistant's Evaluation:"
    steps_style: StepsStyle = StepsStyle.NUMBERED

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "input_slots", tuple(self.input_slots))
        object.__setattr__(self, "task_kind", TaskKind(self.task_kind))
        object.__setattr__(self, "steps_style", StepsStyle(self.steps_style))
        if isinstance(self.scale, Mapping):
            object.__setattr__(self, "scale", ScoreScale.from_dict(self.scale))

    @property
    def effective_input_template(self) -> str:
        if self.input_template.strip():
            return self.input_template
        return "\n\n".join(f"{slot}: {{{{{slot}}}}}" for slot in self.input_slots)

    def with_guidelines(self, guidelines: str) -> PromptSchema:
        return replace(self, guidelines=guidelines)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "metric_name": self.metric_name,
            "task_kind": self.task_kind.value,
            "task_intro": self.task_intro,
            "criteria": self.criteria,
            "steps": list(self.steps),
            "guidelines": self.guidelines,
            "input_slots": list(self.input_slots),
            "input_template": self.input_template,
            "eval_form": self.eval_form,
            "criteria_header": self.criteria_header,
            "steps_header": self.steps_header,
            "guidelines_header": self.guidelines_header,
            "input_header": self.input_header,
            "reviews_header": self.reviews_header,
            "review_label": self.review_label,
            "steps_style": self.steps_style.value,
        }
        if self.scale is not None:
            out["scale"] = self.scale.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> PromptSchema:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known - {"version", "role"}
        if unknown:
            raise ValueError(f"unknown schema keys: {sorted(unknown)}")
        kwargs = {k: v for k, v in data.items() if k in known}
        for key in ("task_intro", "criteria", "guidelines", "input_template", "eval_form"):
            if kwargs.get(key) is None:
                kwargs.pop(key, None)
            elif isinstance(kwargs[key], str):
                kwargs[key] = kwargs[key].strip("\n")
        kwargs.setdefault("criteria", "")
        kwargs.setdefault("steps", ())
        if kwargs.get("scale") is not None:
            kwargs["scale"] = ScoreScale.from_dict(kwargs["scale"])
        return cls(**kwargs)


_IDENT = re.compile(r"^[A-Za-z][A-Za-z0-9_ -]*$")


def validate_schema(schema: PromptSchema) -> list[SchemaIssue]:
    """Return every invariant violation; an empty list means the schema is usable."""
    issues: list[SchemaIssue] = []

    if not schema.input_slots:
        issues.append(SchemaIssue("input_slots", "must declare at least one slot"))
    seen: set[str] = set()
    for slot in schema.input_slots:
        if slot in seen:
            issues.append(SchemaIssue("input_slots", f"duplicate slot name {slot!r}"))
        seen.add(slot)
        if not slot.strip() or "{" in slot or "}" in slot:
            issues.append(SchemaIssue("input_slots", f"invalid slot name {slot!r}"))

    if schema.task_kind is TaskKind.RATING and schema.scale is None:
        issues.append(SchemaIssue("scale", "rating schemas need a score scale"))

    if ANALYSIS_MARKER not in schema.eval_form:
        issues.append(SchemaIssue("eval_form", f"missing the {ANALYSIS_MARKER!r} marker"))
    marker = schema.task_kind.answer_marker
    count = len(re.findall(rf"\b{marker}\b", schema.eval_form))
    if count != 1:
        issues.append(
            SchemaIssue("eval_form", f"needs exactly one {marker!r} answer marker, found {count}")
        )

    if not schema.metric_name or not _IDENT.match(schema.metric_name):
        issues.append(SchemaIssue("metric_name", f"not an identifier: {schema.metric_name!r}"))

    if not schema.task_intro.strip():
        issues.append(SchemaIssue("task_intro", "must not be empty"))

    used = PLACEHOLDER.findall(schema.effective_input_template)
    for name in used:
        if name not in seen:
            issues.append(SchemaIssue("input_template", f"unknown placeholder {{{{{name}}}}}"))
    for slot in schema.input_slots:
        if slot not in used:
            issues.append(SchemaIssue("input_template", f"slot {slot!r} is never placed"))

    for name in ("task_intro", "criteria", "guidelines", "eval_form"):
        for token in PLACEHOLDER.findall(getattr(schema, name)):
            issues.append(SchemaIssue(name, f"placeholder {{{{{token}}}}} outside the input block"))
    for i, step in enumerate(schema.steps):
        if not step.strip():
            issues.append(SchemaIssue("steps", f"step {i + 1} is empty"))
        for token in PLACEHOLDER.findall(step):
            issues.append(SchemaIssue("steps", f"placeholder {{{{{token}}}}} outside the input block"))

    if "{ordinal}" not in schema.review_label and "{index}" not in schema.review_label:
        issues.append(SchemaIssue("review_label", "must contain {ordinal} or {index}"))

    return issues


@dataclass(frozen=True)
class RoleSchemas:
    """Peer and area-chair schemas for a single metric."""

    peer: PromptSchema
    area_chair: PromptSchema

    def for_role(self, role: Role) -> PromptSchema:
        return self.peer if Role(role) is Role.PEER else self.area_chair


@dataclass(frozen=True)
class AnnotatedExample:
    """A dataset example with its human rating, used as auto-prompt input."""

    slots: Mapping[str, str]
    rating: Any
    notes: str = ""
    extra: Mapping[str, Any] = field(default_factory=dict)
