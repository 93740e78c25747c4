"""HTTP backend for OpenAI-compatible chat-completion endpoints.

Credentials come from environment variables only:

=============  =====================  ================================
provider       env var                default base URL
=============  =====================  ================================
openai         ``OPENAI_API_KEY``     https://api.openai.com/v1
together       ``TOGETHER_API_KEY``   https://api.together.xyz/v1
openrouter     ``OPENROUTER_API_KEY`` https://openrouter.ai/api/v1
=============  =====================  ================================

Other OpenAI-compatible servers (vLLM, llama.cpp, ...) work with
``base_url`` and ``api_key_env`` set on the model handle.
"""

from __future__ import annotations

import os
from typing import Any

import httpx

from ..errors import BackendFailure, InvalidConfig
from .types import ChatRequest, ModelHandle, Usage

PROVIDERS: dict[str, dict[str, str]] = {
    "openai": {"env": "OPENAI_API_KEY", "base_url": "https://api.openai.com/v1"},
    "together": {"env": "TOGETHER_API_KEY", "base_url": "https://api.together.xyz/v1"},
    "openrouter": {"env": "OPENROUTER_API_KEY", "base_url": "https://openrouter.ai/api/v1"},
}


def credential_env(handle: ModelHandle) -> str | None:
    if handle.api_key_env:
        return handle.api_key_env
    info = PROVIDERS.get(handle.provider)
    return info["env"] if info else None


def build_payload(handle: ModelHandle, request: ChatRequest) -> dict[str, Any]:
    if request.image is not None:
        url = request.image.source if (request.image.is_url and handle.accepts_image_urls) else request.image.data_uri()
        content: Any = [
            {"type": "text", "text": request.prompt},
            {"type": "image_url", "image_url": {"url": url}},
        ]
    else:
        content = request.prompt
    payload: dict[str, Any] = {
        "model": handle.model_id,
        "messages": [{"role": "user", "content": content}],
        "n": request.n,
        "temperature": request.temperature,
        "top_p": request.top_p,
    }
    if request.max_tokens is not None:
        payload["max_tokens"] = request.max_tokens
    if request.stop:
        payload["stop"] = list(request.stop)
    return payload


class OpenAICompatibleBackend:
    def __init__(self, *, timeout: float = 60.0, client: httpx.Client | None = None):
        self._client = client or httpx.Client(timeout=timeout)

    def _base_url(self, handle: ModelHandle) -> str:
        if handle.base_url:
            return handle.base_url.rstrip("/")
        info = PROVIDERS.get(handle.provider)
        if info is None:
            raise InvalidConfig(f"provider {handle.provider!r} needs a base_url")
        return info["base_url"]

    def complete(self, handle: ModelHandle, request: ChatRequest) -> tuple[list[str], Usage]:
        env = credential_env(handle)
        key = os.environ.get(env, "") if env else ""
        if env and not key:
            raise BackendFailure(f"missing credential: set {env}", retryable=False)
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        url = f"{self._base_url(handle)}/chat/completions"
        try:
            resp = self._client.post(url, json=build_payload(handle, request), headers=headers)
        except httpx.TransportError as exc:
            raise BackendFailure(f"transport error: {exc}", retryable=True) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise BackendFailure(f"HTTP {resp.status_code}: {resp.text[:200]}", retryable=True, status=resp.status_code)
        if resp.status_code >= 400:
            raise BackendFailure(f"HTTP {resp.status_code}: {resp.text[:200]}", retryable=False, status=resp.status_code)
        try:
            body = resp.json()
            completions = [choice["message"]["content"] or "" for choice in body["choices"]]
            usage = body.get("usage") or {}
            return completions, Usage(int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0)))
        except (ValueError, KeyError, TypeError) as exc:
            raise BackendFailure(f"malformed provider response: {exc}", retryable=True) from exc
