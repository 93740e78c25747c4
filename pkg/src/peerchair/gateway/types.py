from __future__ import annotations

import base64
import hashlib
import json
import mimetypes
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Any

import httpx

from ..errors import BackendFailure, InvalidRequest


@dataclass(frozen=True)
class ModelHandle:
    """A named model on a provider, with pricing and capability flags.

    ``supports_n=False`` means the provider cannot return several completions
    for one request; the gateway then loops ``n`` single calls.
    """

    name: str
    provider: str
    model_id: str
    input_cost_per_1k_tokens: Decimal = Decimal(0)
    output_cost_per_1k_tokens: Decimal = Decimal(0)
    supports_n: bool = True
    supports_images: bool = False
    accepts_image_urls: bool = True
    base_url: str | None = None
    api_key_env: str | None = None

    def __post_init__(self):
        for attr in ("input_cost_per_1k_tokens", "output_cost_per_1k_tokens"):
            value = Decimal(str(getattr(self, attr)))
            if value < 0:
                raise ValueError(f"{attr} must be non-negative, got {value}")
            object.__setattr__(self, attr, value)

    @classmethod
    def from_dict(cls, name: str, data: Mapping[str, Any]) -> ModelHandle:
        pricing = data.get("pricing") or {}
        return cls(
            name=name,
            provider=data["provider"],
            model_id=data.get("model_id", name),
            input_cost_per_1k_tokens=Decimal(str(pricing.get("input_cost_per_1k_tokens", 0))),
            output_cost_per_1k_tokens=Decimal(str(pricing.get("output_cost_per_1k_tokens", 0))),
            supports_n=bool(data.get("supports_n", True)),
            supports_images=bool(data.get("supports_images", False)),
            accepts_image_urls=bool(data.get("accepts_image_urls", True)),
            base_url=data.get("base_url"),
            api_key_env=data.get("api_key_env"),
        )

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "provider": self.provider,
            "model_id": self.model_id,
            "pricing": {
                "input_cost_per_1k_tokens": str(self.input_cost_per_1k_tokens),
                "output_cost_per_1k_tokens": str(self.output_cost_per_1k_tokens),
            },
            "supports_n": self.supports_n,
            "supports_images": self.supports_images,
            "accepts_image_urls": self.accepts_image_urls,
        }
        if self.base_url:
            out["base_url"] = self.base_url
        if self.api_key_env:
            out["api_key_env"] = self.api_key_env
        return out


def _is_url(ref: str) -> bool:
    return ref.startswith(("http://", "https://"))


@dataclass(frozen=True)
class ImageAttachment:
    """An image reference plus the content digest used for cache keys.

    ``data`` is loaded lazily for base64 transport. A URL that has not been
    prefetched has no content to hash, so its digest falls back to a hash of
    the URL string (prefixed ``url-sha256:``).
    """

    source: str
    digest: str
    local_path: str | None = None

    @classmethod
    def from_reference(cls, ref: str, store_index: Mapping[str, str] | None = None) -> ImageAttachment:
        if store_index and ref in store_index:
            local = store_index[ref]
            return cls(source=ref, digest=_file_digest(Path(local)), local_path=local)
        if _is_url(ref):
            return cls(source=ref, digest="url-sha256:" + hashlib.sha256(ref.encode()).hexdigest())
        path = Path(ref)
        if not path.is_file():
            raise InvalidRequest(f"image file not found: {ref}")
        return cls(source=ref, digest=_file_digest(path), local_path=str(path))

    @property
    def is_url(self) -> bool:
        return _is_url(self.source)

    def data_uri(self) -> str:
        if self.local_path is not None:
            raw = Path(self.local_path).read_bytes()
            mime = mimetypes.guess_type(self.local_path)[0] or "image/png"
        else:
            resp = httpx.get(self.source, timeout=30.0, follow_redirects=True)
            resp.raise_for_status()
            raw = resp.content
            mime = resp.headers.get("content-type", "image/png").split(";")[0]
        return f"data:{mime};base64," + base64.b64encode(raw).decode("ascii")


def _file_digest(path: Path) -> str:
    return "sha256:" + hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion request.

    ``resample`` distinguishes deliberate re-draws of the same prompt (the
    parser's retry-once policy) so they do not hit the cached first draw.
    ``tag`` salts the cache key per run tag so repeated runs are independent.
    """

    prompt: str
    n: int = 1
    temperature: float = 1.0
    top_p: float = 1.0
    max_tokens: int | None = 256
    stop: tuple[str, ...] | None = None
    image: ImageAttachment | None = None
    resample: int = 0
    tag: str = ""

    def __post_init__(self):
        if self.stop is not None:
            object.__setattr__(self, "stop", tuple(self.stop))
        if not isinstance(self.n, int) or self.n < 1:
            raise InvalidRequest(f"n must be a positive integer, got {self.n!r}")
        if self.temperature < 0:
            raise InvalidRequest(f"temperature must be >= 0, got {self.temperature}")
        if not 0 < self.top_p <= 1:
            raise InvalidRequest(f"top_p must be in (0, 1], got {self.top_p}")
        if self.max_tokens is not None and self.max_tokens < 1:
            raise InvalidRequest(f"max_tokens must be positive or None, got {self.max_tokens}")

    def cache_key(self, handle: ModelHandle) -> str:
        payload = {
            "provider": handle.provider,
            "model_id": handle.model_id,
            "prompt": self.prompt,
            "image": self.image.digest if self.image else None,
            "n": self.n,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
            "stop": list(self.stop) if self.stop is not None else None,
        }
        if self.resample:
            payload["resample"] = self.resample
        if self.tag:
            payload["tag"] = self.tag
        canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Usage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")

    def __add__(self, other: Usage) -> Usage:
        return Usage(self.input_tokens + other.input_tokens, self.output_tokens + other.output_tokens)


@dataclass(frozen=True)
class ChatResponse:
    completions: tuple[str, ...]
    usage: Usage
    latency: float = 0.0
    from_cache: bool = False
    attempts: int = 0


def default_retryable(exc: BaseException) -> bool:
    if isinstance(exc, BackendFailure):
        return exc.retryable
    return isinstance(exc, (httpx.TransportError, TimeoutError, ConnectionError))


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    initial: float = 1.0
    multiplier: float = 2.0
    max_delay: float = 30.0
    retryable: Callable[[BaseException], bool] = field(default=default_retryable, compare=False)

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.multiplier < 1:
            raise ValueError("multiplier must be >= 1")
        if self.initial < 0 or self.max_delay < 0:
            raise ValueError("delays must be non-negative")

    def delay(self, failed_attempts: int) -> float:
        """Sleep before the next attempt, after ``failed_attempts`` failures."""
        return min(self.max_delay, self.initial * self.multiplier ** (failed_attempts - 1))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> RetryPolicy:
        backoff = data.get("backoff") or {}
        return cls(
            max_attempts=int(data.get("max_attempts", 5)),
            initial=float(backoff.get("initial", 1.0)),
            multiplier=float(backoff.get("multiplier", 2.0)),
            max_delay=float(backoff.get("max", 30.0)),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "max_attempts": self.max_attempts,
            "backoff": {"initial": self.initial, "multiplier": self.multiplier, "max": self.max_delay},
        }
