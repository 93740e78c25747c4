"""Chat-completion gateway: providers, mock backend, cache, retries and cost accounting."""

from .cache import ResponseCache
from .client import Backend, Gateway, GatewayStats
from .ledger import CostLedger, LedgerEntry, record_usage
from .mock import MockBackend, MockFailure, script_mock
from .providers import PROVIDERS, OpenAICompatibleBackend
from .ratelimit import TokenBucket
from .types import (
    ChatRequest,
    ChatResponse,
    ImageAttachment,
    ModelHandle,
    RetryPolicy,
    Usage,
)

__all__ = [
    "PROVIDERS",
    "Backend",
    "ChatRequest",
    "ChatResponse",
    "CostLedger",
    "Gateway",
    "GatewayStats",
    "ImageAttachment",
    "LedgerEntry",
    "MockBackend",
    "MockFailure",
    "ModelHandle",
    "OpenAICompatibleBackend",
    "ResponseCache",
    "RetryPolicy",
    "TokenBucket",
    "Usage",
    "record_usage",
    "script_mock",
]
