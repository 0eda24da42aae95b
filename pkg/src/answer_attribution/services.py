"""Thin JSON-over-HTTP client shared by the embedding, relevance, NLI and LLM backends."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass
from typing import Any

import httpx

from .errors import ConfigError, ServiceError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ServiceConfig:
    url: str
    timeout: float = 30.0
    retries: int = 2
    backoff: float = 0.5
    batch_size: int = 32
    api_key_env: str | None = None


class JsonServiceClient:
    """POST a JSON body to a fixed endpoint, retrying transport errors and 5xx replies.

    httpx clients are thread-safe, so one instance can be shared by worker
    threads; every call is a complete request/response pair.
    """

    def __init__(self, config: ServiceConfig, transport: httpx.BaseTransport | None = None):
        if not config.url:
            raise ConfigError("service endpoint URL is empty")
        self.config = config
        headers = {}
        if config.api_key_env:
            key = os.environ.get(config.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(timeout=config.timeout, transport=transport, headers=headers)

    @property
    def url(self) -> str:
        return self.config.url

    def post(self, payload: dict[str, Any]) -> dict[str, Any]:
        attempts = self.config.retries + 1
        last: Exception | None = None
        for attempt in range(attempts):
            if attempt:
                time.sleep(self.config.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post(self.config.url, json=payload)
            except httpx.HTTPError as exc:
                last = exc
                log.warning("%s: attempt %d/%d failed: %s", self.url, attempt + 1, attempts, exc)
                continue
            if resp.status_code >= 500:
                last = ServiceError(f"{self.url} returned HTTP {resp.status_code}")
                log.warning("%s: attempt %d/%d got HTTP %d", self.url, attempt + 1, attempts, resp.status_code)
                continue
            if resp.status_code >= 400:
                raise ServiceError(f"{self.url} returned HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                body = resp.json()
            except ValueError as exc:
                raise ServiceError(f"{self.url} returned a non-JSON body") from exc
            if not isinstance(body, dict):
                raise ServiceError(f"{self.url} returned JSON that is not an object")
            return body
        raise ServiceError(f"{self.url} unreachable after {attempts} attempts: {last}") from last

    def close(self) -> None:
        self._client.close()


def expect_list(body: dict[str, Any], key: str, length: int, url: str) -> list[Any]:
    value = body.get(key)
    if not isinstance(value, list):
        raise ServiceError(f"{url}: response is missing list field {key!r}")
    if len(value) != length:
        raise ServiceError(f"{url}: expected {length} items in {key!r}, got {len(value)}")
    return value


def batched(items: list[Any], size: int):
    for i in range(0, len(items), size):
        yield items[i : i + size]
