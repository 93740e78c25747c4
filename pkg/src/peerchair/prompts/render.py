from __future__ import annotations

from collections.abc import Mapping, Sequence

from ..errors import EmptyPeerSet, MissingSlot, PromptError
from ..models import (
    AnswerOutcome,
    PeerReview,
    ReviewOutcome,
    Sample,
    format_answer,
    format_number,
)
from .schema import PLACEHOLDER, CommunicationStrategy, PromptSchema, Role, StepsStyle

_ORDINALS = (
    "First", "Second", "Third", "Fourth", "Fifth",
    "Sixth", "Seventh", "Eighth", "Ninth", "Tenth",
)


def ordinal(index: int) -> str:
    """Ordinal word for a 0-based position (``0 -> "First"``)."""
    if index < len(_ORDINALS):
        return _ORDINALS[index]
    n = index + 1
    suffix = "th" if 10 <= n % 100 <= 20 else {1: "st", 2: "nd", 3: "rd"}.get(n % 10, "th")
    return f"{n}{suffix}"


def fill_slots(template: str, slots: Mapping[str, str], sample_id: str | None = None) -> str:
    """Replace every ``{{name}}`` in one pass; values are never re-expanded."""

    def sub(match):
        name = match.group(1)
        if name not in slots:
            raise MissingSlot(name, sample_id)
        return str(slots[name])

    return PLACEHOLDER.sub(sub, template)


def _steps_text(schema: PromptSchema) -> str:
    if schema.steps_style is StepsStyle.NUMBERED:
        return "\n".join(f"{i}. {step}" for i, step in enumerate(schema.steps, 1))
    return "\n".join(f"- {step}" for step in schema.steps)


def _review_body(review: PeerReview, strategy: CommunicationStrategy, marker: str) -> str:
    outcome = review.outcome
    if isinstance(outcome, ReviewOutcome):
        verdict = format_number(outcome.score)
    elif isinstance(outcome, AnswerOutcome):
        verdict = format_answer(outcome.answer)
    else:  # pragma: no cover - guarded by types
        raise PromptError(f"unsupported review outcome {type(outcome).__name__}")
    if strategy is CommunicationStrategy.SCORE_ONLY:
        return f"{marker}: {verdict}"
    if strategy is CommunicationStrategy.COMMENT_ONLY:
        return f"Analysis: {outcome.analysis}"
    return f"Analysis: {outcome.analysis}\n{marker}: {verdict}"


def _review_block(schema: PromptSchema, bodies: Sequence[str]) -> str:
    parts = []
    for i, body in enumerate(bodies):
        label = schema.review_label.format(ordinal=ordinal(i), index=i + 1)
        parts.append(f"{label}\n{body}")
    block = "\n\n".join(parts)
    if schema.reviews_header.strip():
        block = f"{schema.reviews_header}\n\n{block}"
    return block


def _assemble(schema: PromptSchema, sample: Sample, review_block: str | None) -> str:
    for slot in schema.input_slots:
        if slot not in sample.slots:
            raise MissingSlot(slot, sample.id)

    sections = [schema.task_intro.strip()]
    if schema.criteria.strip():
        sections.append(f"{schema.criteria_header}\n{schema.criteria.strip()}")
    if schema.steps:
        sections.append(f"{schema.steps_header}\n{_steps_text(schema)}")
    if schema.guidelines.strip():
        sections.append(f"{schema.guidelines_header}\n{schema.guidelines.strip()}")
    inputs = fill_slots(schema.effective_input_template.strip(), sample.slots, sample.id)
    sections.append(f"{schema.input_header}\n\n{inputs}" if schema.input_header else inputs)
    if review_block is not None:
        sections.append(review_block)
    sections.append(schema.eval_form.strip())
    return "\n\n".join(sections) + "\n"


def render_prompt(
    schema: PromptSchema,
    sample: Sample,
    role: Role | str,
    peer_reviews: Sequence[PeerReview] | None = None,
    strategy: CommunicationStrategy | str = CommunicationStrategy.SCORE_ONLY,
) -> str:
    """Render the prompt text for one agent.

    Peer prompts depend only on ``(schema, sample)``. Area-chair prompts add a
    block with one entry per peer review, labelled ordinally in the given
    order and filtered by ``strategy``.
    """
    role = Role(role)
    strategy = CommunicationStrategy(strategy)
    if role is Role.PEER:
        if peer_reviews:
            raise PromptError("peer prompts never include other reviews")
        return _assemble(schema, sample, None)
    if not peer_reviews:
        raise EmptyPeerSet("area-chair prompt needs at least one peer review")
    marker = schema.task_kind.answer_marker
    bodies = [_review_body(r, strategy, marker) for r in peer_reviews]
    return _assemble(schema, sample, _review_block(schema, bodies))


def render_area_chair_skeleton(schema: PromptSchema, sample: Sample, n_peers: int) -> str:
    """Area-chair prompt with ``{{Peer_response<i>}}`` placeholders in place of reviews.

    Used by dry runs, where no peer has been called yet.
    """
    if n_peers < 1:
        raise EmptyPeerSet("area-chair prompt needs at least one peer slot")
    bodies = [f"{{{{Peer_response{i + 1}}}}}" for i in range(n_peers)]
    return _assemble(schema, sample, _review_block(schema, bodies))
