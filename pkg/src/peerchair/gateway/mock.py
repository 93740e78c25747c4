"""Deterministic scripted backend for tests and offline runs."""

from __future__ import annotations

import threading
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

from ..errors import BackendFailure, UnscriptedPrompt
from .types import ChatRequest, ModelHandle, Usage

Matcher = str | Callable[[str], bool]


class MockFailure(BackendFailure):
    """A scripted failure; raised in place of a completion when its turn comes up."""

    def __init__(self, message: str = "scripted failure", *, retryable: bool = True):
        super().__init__(message, retryable=retryable)


@dataclass
class _Script:
    matcher: Callable[[str], bool]
    items: tuple[str | MockFailure, ...]
    model: str | None
    cursor: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)

    def take(self, n: int) -> list[str]:
        out = []
        with self.lock:
            for _ in range(n):
                item = self.items[self.cursor % len(self.items)]
                self.cursor += 1
                if isinstance(item, BaseException):
                    raise item
                out.append(item)
        return out


def _as_predicate(matcher: Matcher) -> Callable[[str], bool]:
    if isinstance(matcher, str):
        needle = matcher
        return lambda prompt: needle in prompt
    return matcher


@dataclass(frozen=True)
class MockCall:
    model: str
    prompt: str
    n: int


class MockBackend:
    """Returns scripted completions; unmatched prompts raise :class:`UnscriptedPrompt`.

    Scripts are tried in registration order and the first match wins. Each
    script cycles through its items, one item per requested completion, so a
    request with ``n=4`` consumes four items.
    """

    def __init__(self):
        self._scripts: list[_Script] = []
        self._lock = threading.Lock()
        self.calls: list[MockCall] = []

    def script(self, matcher: Matcher, completions: Sequence[str | MockFailure], *, model: str | None = None) -> None:
        if not completions:
            raise ValueError("a script needs at least one completion")
        with self._lock:
            self._scripts.append(_Script(_as_predicate(matcher), tuple(completions), model))

    @property
    def call_count(self) -> int:
        with self._lock:
            return len(self.calls)

    def calls_for(self, model: str) -> list[MockCall]:
        with self._lock:
            return [c for c in self.calls if c.model == model]

    def reset_calls(self) -> None:
        with self._lock:
            self.calls.clear()

    def complete(self, handle: ModelHandle, request: ChatRequest) -> tuple[list[str], Usage]:
        with self._lock:
            self.calls.append(MockCall(handle.name, request.prompt, request.n))
            scripts = list(self._scripts)
        for script in scripts:
            if script.model is not None and script.model not in (handle.name, handle.model_id):
                continue
            if script.matcher(request.prompt):
                completions = script.take(request.n)
                usage = Usage(
                    input_tokens=len(request.prompt.split()),
                    output_tokens=sum(len(c.split()) for c in completions),
                )
                return completions, usage
        raise UnscriptedPrompt(handle.name, request.prompt)


def script_mock(
    backend: MockBackend,
    matcher: Matcher,
    completions: Sequence[str | MockFailure],
    *,
    model: str | None = None,
) -> None:
    backend.script(matcher, completions, model=model)
