"""Turn raw completions into structured reviews.

Rating completions follow the ``Analysis: ...`` / ``Rating: <n>`` form. The
score comes from, in priority order:

1. the last line starting with ``Rating:`` that carries a number,
2. the first line starting with ``<metric_name>:`` (underscores and spaces
   are interchangeable, case is ignored),
3. the first line after the analysis consisting of a bare number.

Ratings on integer scales are rounded half away from zero, then range
checked. Nothing is clamped: an out-of-range value raises ``OutOfScale``.
"""

from __future__ import annotations

import re
from decimal import Decimal
from fractions import Fraction

from .errors import LabelOutsideSpace, NoAnswerFound, NoRatingFound, OutOfScale
from .models import (
    AnswerKind,
    AnswerOutcome,
    AnswerSpace,
    Granularity,
    ReviewOutcome,
    ScoreScale,
)

_NUMBER = re.compile(r"[-+]?\d+(?:\.\d+)?")
_ANALYSIS = re.compile(r"^[\s*#>_-]*analysis[\s*_]*[:：]\**", re.IGNORECASE | re.MULTILINE)
_RATING_LINE = re.compile(r"^[\s*#>_-]*rating[\s*_]*[:：](.*)$", re.IGNORECASE)
_BARE_NUMBER = re.compile(r"^[\s*_]*([-+]?\d+(?:\.\d+)?)[\s*_.]*$")
_DECORATION = re.compile(r"^[\s*_]+|[\s*_]+$")


def _metric_line(metric_name: str) -> re.Pattern:
    words = re.split(r"[\s_]+", metric_name.strip())
    body = r"[\s_]+".join(re.escape(w) for w in words if w)
    return re.compile(rf"^[\s*#>_-]*{body}[\s*_]*[:：](.*)$", re.IGNORECASE)


def _clean(text: str) -> str:
    return _DECORATION.sub("", text.strip())


def round_half_away(value: Fraction) -> Fraction:
    sign = -1 if value < 0 else 1
    magnitude = abs(value)
    return Fraction(sign * int(magnitude + Fraction(1, 2)))


def _split_analysis(text: str, stop_line: int | None, lines: list[str]) -> str:
    """Analysis text: after the first ``Analysis:`` marker, up to ``stop_line``."""
    offsets = []
    pos = 0
    for line in lines:
        offsets.append(pos)
        pos += len(line) + 1
    end = offsets[stop_line] if stop_line is not None and stop_line < len(offsets) else len(text)
    marker = _ANALYSIS.search(text)
    if marker is not None and marker.end() <= end:
        start = marker.end()
    elif marker is not None and stop_line is not None and marker.start() >= end:
        # rating printed before the analysis
        start, end = marker.end(), len(text)
    else:
        start = 0
    return _clean(text[start:end])


def _find_rating(lines: list[str], metric_name: str | None) -> tuple[int, str] | None:
    for i in range(len(lines) - 1, -1, -1):
        m = _RATING_LINE.match(lines[i])
        if m and _NUMBER.search(m.group(1)):
            return i, _NUMBER.search(m.group(1)).group(0)
    if metric_name:
        pattern = _metric_line(metric_name)
        for i, line in enumerate(lines):
            m = pattern.match(line)
            if m and _NUMBER.search(m.group(1)):
                return i, _NUMBER.search(m.group(1)).group(0)
    start = 0
    for i, line in enumerate(lines):
        if _ANALYSIS.match(line):
            start = i + 1
            break
    for i in range(start, len(lines)):
        m = _BARE_NUMBER.match(lines[i])
        if m:
            return i, m.group(1)
    return None


def parse_rating(text: str, scale: ScoreScale, metric_name: str | None = None) -> ReviewOutcome:
    lines = text.split("\n")
    found = _find_rating(lines, metric_name)
    if found is None:
        raise NoRatingFound("no rating line found", text)
    line_no, number = found
    value = Fraction(Decimal(number))
    if scale.granularity is Granularity.INTEGER:
        value = round_half_away(value)
    if not scale.contains(value):
        raise OutOfScale(f"rating {number} outside scale {scale.label()}", text, value)
    return ReviewOutcome(analysis=_split_analysis(text, line_no, lines), score=value, raw=text)


# Answers

_ANSWER_MARKER = re.compile(r"\banswer\b(?:\s+label)?[\s*_]*(?:[:：]|\bis\b)", re.IGNORECASE)
_LABEL = re.compile(r"(?<![A-Za-z0-9])([A-F])(?![A-Za-z0-9])")
_LOOSE_LABEL = re.compile(r"\(([a-fA-F])\)")
_NUMERAL = re.compile(r"-?\d{1,3}(?:,\d{3})+(?:\.\d+)?|-?\d+(?:\.\d+)?")


def _label_in(region: str) -> str | None:
    stripped = region.strip().strip("*_.:()[] ")
    if len(stripped) == 1 and stripped.upper() in "ABCDEF":
        return stripped.upper()
    hits = [(m.start(), m.group(1).upper()) for m in _LABEL.finditer(region)]
    hits += [(m.start(), m.group(1).upper()) for m in _LOOSE_LABEL.finditer(region)]
    return max(hits)[1] if hits else None


def _number_in(region: str) -> Fraction | None:
    hits = _NUMERAL.findall(region)
    if not hits:
        return None
    return Fraction(Decimal(hits[-1].replace(",", "")))


def parse_answer(text: str, space: AnswerSpace) -> AnswerOutcome:
    """Extract the final label or number after the last usable ``Answer`` marker."""
    markers = list(_ANSWER_MARKER.finditer(text))
    if not markers:
        raise NoAnswerFound("no answer marker found", text)
    answer = None
    used = None
    for marker in reversed(markers):
        region = text[marker.end():]
        answer = _label_in(region) if space.kind is AnswerKind.LABELS else _number_in(region)
        if answer is not None:
            used = marker
            break
    if answer is None:
        raise NoAnswerFound("answer marker present but no answer follows it", text)
    if space.kind is AnswerKind.LABELS and answer not in space.labels:
        raise LabelOutsideSpace(f"label {answer} not in {sorted(space.labels)}", text)

    line_start = text.rfind("\n", 0, used.start()) + 1
    marker = _ANALYSIS.search(text)
    start = marker.end() if marker is not None and marker.end() <= used.start() else 0
    end = line_start if line_start > start else used.start()
    return AnswerOutcome(analysis=_clean(text[start:end]), answer=answer, raw=text)
