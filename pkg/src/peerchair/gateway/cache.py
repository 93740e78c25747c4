"""Append-only on-disk response cache.

One JSON object per line in ``responses.jsonl``::

    {"format": "peerchair.cache", "version": 1, "key": "<sha256>",
     "completions": [...], "usage": {"input_tokens": 0, "output_tokens": 0},
     "timestamp": "...", "checksum": "<sha256 of key+completions+usage>"}

Later lines for the same key win. Lines that fail to parse or whose checksum
does not match are logged and skipped, which turns them into cache misses.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from datetime import datetime, timezone
from pathlib import Path

from ..errors import CacheCorruption
from .types import Usage

log = logging.getLogger(__name__)

CACHE_FORMAT = "peerchair.cache"
CACHE_VERSION = 1
CACHE_FILENAME = "responses.jsonl"


def _checksum(key: str, completions: list[str], usage: dict) -> str:
    body = json.dumps(
        {"key": key, "completions": completions, "usage": usage},
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


class ResponseCache:
    def __init__(self, directory: str | Path, *, strict: bool = False):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.path = self.directory / CACHE_FILENAME
        self.strict = strict
        self.corrupt_records = 0
        self._lock = threading.Lock()
        self._entries: dict[str, tuple[tuple[str, ...], Usage]] = {}
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        with self.path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    if rec.get("format") != CACHE_FORMAT or rec.get("version") != CACHE_VERSION:
                        raise CacheCorruption(f"unknown cache record format {rec.get('format')!r} v{rec.get('version')!r}")
                    completions = list(rec["completions"])
                    usage = dict(rec["usage"])
                    if _checksum(rec["key"], completions, usage) != rec["checksum"]:
                        raise CacheCorruption("checksum mismatch")
                    entry = (tuple(completions), Usage(int(usage["input_tokens"]), int(usage["output_tokens"])))
                except (ValueError, KeyError, TypeError, CacheCorruption) as exc:
                    self.corrupt_records += 1
                    if self.strict:
                        raise CacheCorruption(f"{self.path}:{lineno}: {exc}") from exc
                    log.warning("ignoring corrupt cache record %s:%d (%s)", self.path, lineno, exc)
                    continue
                self._entries[rec["key"]] = entry

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def get(self, key: str) -> tuple[tuple[str, ...], Usage] | None:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: str, completions: tuple[str, ...], usage: Usage) -> None:
        usage_d = {"input_tokens": usage.input_tokens, "output_tokens": usage.output_tokens}
        record = {
            "format": CACHE_FORMAT,
            "version": CACHE_VERSION,
            "key": key,
            "completions": list(completions),
            "usage": usage_d,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "checksum": _checksum(key, list(completions), usage_d),
        }
        line = json.dumps(record, ensure_ascii=False) + "\n"
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line)
            self._entries[key] = (tuple(completions), usage)
