from __future__ import annotations

import logging
import threading
import time
from collections.abc import Callable, Mapping
from dataclasses import dataclass, replace
from typing import Protocol

from ..errors import (
    BackendExhausted,
    BackendFailure,
    InvalidConfig,
    UnscriptedPrompt,
    UnsupportedImage,
)
from .cache import ResponseCache
from .ledger import CostLedger, record_usage
from .ratelimit import TokenBucket
from .types import ChatRequest, ChatResponse, ModelHandle, RetryPolicy, Usage

log = logging.getLogger(__name__)

_UNSET = object()


class Backend(Protocol):
    def complete(self, handle: ModelHandle, request: ChatRequest) -> tuple[list[str], Usage]: ...


@dataclass
class GatewayStats:
    requests: int = 0
    cache_hits: int = 0
    backend_attempts: int = 0
    failures: int = 0

    def to_dict(self) -> dict[str, int]:
        return dict(vars(self))


class Gateway:
    """Uniform entry point for chat completions across providers.

    Handles caching, retries with exponential backoff, per-provider rate
    limiting, a global cap on in-flight backend calls, and the ``supports_n``
    fallback. Safe to share between threads.
    """

    def __init__(
        self,
        backends: Mapping[str, Backend],
        *,
        cache: ResponseCache | None = None,
        ledger: CostLedger | None = None,
        policy: RetryPolicy | None = None,
        rate_limits: Mapping[str, float] | None = None,
        max_in_flight: int | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.backends = dict(backends)
        self.cache = cache
        self.ledger = ledger if ledger is not None else CostLedger()
        self.policy = policy or RetryPolicy()
        self.stats = GatewayStats()
        self._clock = clock
        self._sleep = sleep
        self._stats_lock = threading.Lock()
        self._limiters = {
            provider: TokenBucket(rpm, clock=clock, sleep=sleep)
            for provider, rpm in (rate_limits or {}).items()
            if rpm
        }
        self._slots = threading.BoundedSemaphore(max_in_flight) if max_in_flight else None

    def _bump(self, name: str, by: int = 1) -> None:
        with self._stats_lock:
            setattr(self.stats, name, getattr(self.stats, name) + by)

    def _backend(self, handle: ModelHandle) -> Backend:
        try:
            return self.backends[handle.provider]
        except KeyError:
            raise InvalidConfig(f"no backend registered for provider {handle.provider!r}") from None

    def _attempt_loop(self, handle: ModelHandle, request: ChatRequest, policy: RetryPolicy) -> tuple[list[str], Usage, int]:
        backend = self._backend(handle)
        last: BaseException | None = None
        for attempt in range(1, policy.max_attempts + 1):
            limiter = self._limiters.get(handle.provider)
            if limiter is not None:
                limiter.acquire()
            self._bump("backend_attempts")
            try:
                if self._slots is not None:
                    with self._slots:
                        completions, usage = backend.complete(handle, request)
                else:
                    completions, usage = backend.complete(handle, request)
                if len(completions) != request.n:
                    raise BackendFailure(f"asked for {request.n} completions, got {len(completions)}")
                return list(completions), usage, attempt
            except UnscriptedPrompt:
                raise
            except Exception as exc:
                last = exc
                self._bump("failures")
                if not policy.retryable(exc) or attempt == policy.max_attempts:
                    raise BackendExhausted(attempt, exc) from exc
                delay = policy.delay(attempt)
                log.info("attempt %d for %s failed (%s); retrying in %.1fs", attempt, handle.name, exc, delay)
                self._sleep(delay)
        raise BackendExhausted(policy.max_attempts, last)  # pragma: no cover

    def invoke(
        self,
        request: ChatRequest,
        handle: ModelHandle,
        policy: RetryPolicy | None = None,
        cache: ResponseCache | None | object = _UNSET,
        *,
        method: str | None = None,
    ) -> ChatResponse:
        """Run one request; if ``method`` is given, usage is recorded in the ledger."""
        if request.image is not None and not handle.supports_images:
            raise UnsupportedImage(f"model {handle.name!r} does not accept images")
        policy = policy or self.policy
        cache = self.cache if cache is _UNSET else cache
        self._bump("requests")

        key = request.cache_key(handle) if cache is not None else None
        if cache is not None:
            hit = cache.get(key)
            if hit is not None and len(hit[0]) == request.n:
                self._bump("cache_hits")
                response = ChatResponse(hit[0], hit[1], latency=0.0, from_cache=True, attempts=0)
                if method is not None:
                    record_usage(self.ledger, method, handle, response)
                return response

        started = self._clock()
        if request.n > 1 and not handle.supports_n:
            completions: list[str] = []
            usage = Usage()
            attempts = 0
            single = replace(request, n=1)
            for _ in range(request.n):
                got, u, a = self._attempt_loop(handle, single, policy)
                completions.extend(got)
                usage = usage + u
                attempts += a
        else:
            completions, usage, attempts = self._attempt_loop(handle, request, policy)
        latency = self._clock() - started

        if cache is not None:
            cache.put(key, tuple(completions), usage)
        response = ChatResponse(tuple(completions), usage, latency=latency, from_cache=False, attempts=attempts)
        if method is not None:
            record_usage(self.ledger, method, handle, response)
        return response

