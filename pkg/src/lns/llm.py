"""Minimal chat-completions client used for refinement and summary extraction."""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence, TypeVar

import httpx

log = logging.getLogger(__name__)

ENV_BASE_URL = "LNS_LLM_BASE_URL"
ENV_API_KEY = "LNS_LLM_API_KEY"
ENV_MODEL = "LNS_LLM_MODEL"

T = TypeVar("T")
R = TypeVar("R")


class TransportError(RuntimeError):
    """The endpoint could not produce a usable completion."""


class ClientNotConfigured(RuntimeError):
    pass


@dataclass
class ChatClient:
    base_url: str
    model: str
    api_key: str = ""
    timeout: float = 60.0
    max_retries: int = 3
    backoff: float = 1.0
    max_in_flight: int = 4
    transport: httpx.BaseTransport | None = field(default=None, repr=False)

    @classmethod
    def from_env(cls, **overrides: Any) -> "ChatClient":
        base = os.environ.get(ENV_BASE_URL)
        model = os.environ.get(ENV_MODEL)
        if not base or not model:
            raise ClientNotConfigured(f"set {ENV_BASE_URL} and {ENV_MODEL}")
        return cls(base_url=base, model=model, api_key=os.environ.get(ENV_API_KEY, ""), **overrides)

    def _url(self) -> str:
        base = self.base_url.rstrip("/")
        return base if base.endswith("/chat/completions") else base + "/chat/completions"

    def complete(self, messages: list[dict[str, str]], **params: Any) -> str:
        """Text of the first choice; retries with exponential backoff."""
        payload = {"model": self.model, "messages": messages, **params}
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        last: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with httpx.Client(transport=self.transport, timeout=self.timeout) as http:
                    resp = http.post(self._url(), json=payload, headers=headers)
            except httpx.HTTPError as exc:
                last = exc
                log.debug("chat request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last = TransportError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                raise TransportError("malformed completion response") from None
            if not isinstance(content, str):
                raise TransportError("completion has no text content")
            return content
        raise TransportError(f"giving up after {self.max_retries + 1} attempts: {last}")

    def map(self, fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
        """Run ``fn`` over ``items`` with at most ``max_in_flight`` concurrent calls.

        Results line up with ``items`` by index.
        """
        if not items:
            return []
        with ThreadPoolExecutor(max_workers=max(1, self.max_in_flight)) as pool:
            return list(pool.map(fn, items))
