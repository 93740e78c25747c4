"""Drafting evaluation guidelines from a prompt structure and rated examples."""

from __future__ import annotations

import re
from collections.abc import Sequence

from ..errors import UnparseableCompletion
from ..gateway import ChatRequest, Gateway, ModelHandle
from ..models import format_answer, to_fraction
from .schema import AnnotatedExample, PromptSchema, StepsStyle

_HEADER = re.compile(r"^\s*(?:#+\s*)?[*_]*\s*evaluation guidelines\b", re.IGNORECASE)
_SECTION = re.compile(r"^\s*(?:#+\s*)?[*_]*\s*[A-Z][A-Za-z /-]{2,40}:\s*[*_]*\s*$")
_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s+")
_MARKDOWN = re.compile(r"[*_`]+")

_INSTRUCTIONS = """\
Write an evaluation prompt for the task described below. Another model or a human
annotator will follow it, so keep it short and unambiguous. Cover:
- what the task is about;
- the criterion being measured;
- how to go about the evaluation, step by step;
- guidelines that say when each score should be given. Study the rated examples
  to work out how scores were assigned, then put the guidelines under a line
  reading "Evaluation Guidelines:" with one bullet per score."""


def _structure_text(structure: PromptSchema | str) -> str:
    if isinstance(structure, str):
        return structure.strip()
    parts = [structure.task_intro.strip()]
    if structure.criteria.strip():
        parts.append(f"{structure.criteria_header}\n{structure.criteria.strip()}")
    if structure.steps:
        if structure.steps_style is StepsStyle.NUMBERED:
            steps = "\n".join(f"{i}. {s}" for i, s in enumerate(structure.steps, 1))
        else:
            steps = "\n".join(f"- {s}" for s in structure.steps)
        parts.append(f"{structure.steps_header}\n{steps}")
    if structure.scale is not None:
        parts.append(f"Explain every score on the {structure.scale.label()} scale.")
    return "\n\n".join(parts)


def _rating_text(value) -> str:
    try:
        return format_answer(to_fraction(value))
    except (TypeError, ValueError):
        return str(value)


def build_autoprompt(structure: PromptSchema | str, examples: Sequence[AnnotatedExample]) -> str:
    """The text sent to the model that drafts guidelines."""
    if not examples:
        raise ValueError("at least one rated example is required")
    blocks = [_INSTRUCTIONS, "Prompt structure:\n\n" + _structure_text(structure), "Rated examples:"]
    for i, ex in enumerate(examples, 1):
        lines = [f"Example {i}:"]
        lines += [f"{name}: {value}" for name, value in ex.slots.items()]
        lines.append(f"Rating: {_rating_text(ex.rating)}")
        if ex.notes.strip():
            lines.append(f"Notes: {ex.notes.strip()}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def extract_guidelines(completion: str) -> str:
    """Pull the guideline block out of a drafted prompt.

    The block starts after a line beginning with "Evaluation Guidelines"
    and runs until the next section header, the first unindented prose
    line after the bullets, or a blank line not followed by a bullet. When the header
    occurs more than once the longest block wins.
    """
    lines = completion.splitlines()
    best: list[str] = []
    for start, line in enumerate(lines):
        if not _HEADER.match(line):
            continue
        block: list[str] = []
        # text after the colon on the header line itself counts
        tail = line.split(":", 1)[1].strip() if ":" in line else ""
        tail = _MARKDOWN.sub("", tail).strip()
        if tail:
            block.append(tail)
        seen_bullet = bool(tail) and bool(_BULLET.match(tail))
        rest = lines[start + 1:]
        for i, raw in enumerate(rest):
            text = raw.rstrip()
            if not text.strip():
                following = next((x for x in rest[i + 1:] if x.strip()), "")
                if block and not _BULLET.match(following):
                    break
                if block:
                    block.append("")
                continue
            if _HEADER.match(text) or _SECTION.match(text):
                break
            is_bullet = bool(_BULLET.match(text))
            if seen_bullet and not is_bullet and not raw[:1].isspace():
                break
            block.append(text.strip() if is_bullet else text)
            seen_bullet = seen_bullet or is_bullet
        while block and not block[-1]:
            block.pop()
        if sum(len(x) for x in block) > sum(len(x) for x in best):
            best = block
    result = "\n".join(best).strip()
    if not result:
        raise UnparseableCompletion("no evaluation guidelines found in completion")
    return result


def generate_guidelines(
    structure: PromptSchema | str,
    examples: Sequence[AnnotatedExample],
    gateway: Gateway,
    handle: ModelHandle,
    *,
    temperature: float = 1.0,
    top_p: float = 1.0,
    max_tokens: int | None = 256,
) -> str:
    """One backend call, then :func:`extract_guidelines` on the first completion.

    The caller decides whether to store the result into a schema.
    """
    prompt = build_autoprompt(structure, examples)
    request = ChatRequest(prompt=prompt, n=1, temperature=temperature, top_p=top_p, max_tokens=max_tokens)
    response = gateway.invoke(request, handle, method="autoprompt")
    return extract_guidelines(response.completions[0])
