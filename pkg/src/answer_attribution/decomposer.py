"""Answer-sentence decomposition into information units, with a persistent JSONL cache."""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Protocol

import httpx

from .core import AnswerSentence
from .errors import AttributionError, DataError, ServiceError
from .services import JsonServiceClient, ServiceConfig

log = logging.getLogger(__name__)

PROMPT_PREFIX = "Please breakdown the following sentence into independent facts: "
# Bump when the prompt or the response parser changes; old cache entries then stop matching.
TEMPLATE_VERSION = "breakdown-v1/parse-v1"

_LIST_MARKER = re.compile(r"^(?:[-*•]|\d+[.)])(?:\s+|$)")


@dataclass(frozen=True)
class InformationUnit:
    parent_sentence_index: int
    unit_index: int
    text: str


class Decomposer(Protocol):
    decomposer_id: str
    model_id: str

    def split(self, text: str) -> list[str]: ...


class DecompositionFailed(AttributionError):
    def __init__(self, sentence_index: int, cause: Exception):
        super().__init__(f"decomposition failed for answer sentence {sentence_index}: {cause}")
        self.sentence_index = sentence_index
        self.exit_code = getattr(cause, "exit_code", 2)


class IdentityDecomposer:
    """Treats the whole sentence as one information unit (the no-decomposition ablation)."""

    decomposer_id = "identity"
    model_id = "none"

    def split(self, text: str) -> list[str]:
        return [text]


def build_prompt(sentence: str) -> str:
    return PROMPT_PREFIX + sentence


def parse_units(response: str) -> list[str]:
    units = []
    for line in response.splitlines():
        line = _LIST_MARKER.sub("", line.strip()).strip()
        if line:
            units.append(line)
    return units


class LLMDecomposer:
    """Completion-style client: ``{"model", "prompt", "temperature"} -> {"text"}``."""

    decomposer_id = "llm"

    def __init__(
        self,
        config: ServiceConfig,
        model_id: str,
        temperature: float = 0.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.model_id = model_id
        self.temperature = temperature
        self._http = JsonServiceClient(config, transport)
        self.calls = 0

    def complete(self, prompt: str) -> str:
        self.calls += 1
        body = self._http.post({"model": self.model_id, "prompt": prompt, "temperature": self.temperature})
        text = body.get("text")
        if not isinstance(text, str):
            raise ServiceError(f"{self._http.url}: response is missing string field 'text'")
        return text

    def split(self, text: str) -> list[str]:
        return parse_units(self.complete(build_prompt(text))) or [text]


@dataclass(frozen=True)
class DecompositionCacheEntry:
    key: str
    units: tuple[str, ...]
    created_at: str
    template_version: str = TEMPLATE_VERSION

    def __post_init__(self) -> None:
        object.__setattr__(self, "units", tuple(self.units))
        if not self.units:
            raise DataError(f"cache entry {self.key} has no units")


def cache_key(decomposer_id: str, model_id: str, text: str, template_version: str = TEMPLATE_VERSION) -> str:
    blob = json.dumps([decomposer_id, model_id, template_version, text], ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class DecompositionCache:
    """Append-only JSONL store; the last line written for a key wins.

    Writes are serialized by a lock. Reads hit an in-memory index built at
    open time and kept current by ``store``.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._index: dict[str, DecompositionCacheEntry] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        try:
            lines = self.path.read_text(encoding="utf-8").splitlines()
        except (OSError, UnicodeDecodeError) as exc:
            raise DataError(f"cannot read decomposition cache {self.path}: {exc}") from exc
        for lineno, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                entry = DecompositionCacheEntry(
                    key=raw["key"],
                    units=tuple(raw["units"]),
                    created_at=raw["created_at"],
                    template_version=raw.get("template_version", ""),
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"{self.path}:{lineno}: malformed cache entry: {exc}") from exc
            if entry.template_version != TEMPLATE_VERSION:
                continue
            self._index[entry.key] = entry

    def lookup(self, key: str) -> DecompositionCacheEntry | None:
        return self._index.get(key)

    def store(self, entry: DecompositionCacheEntry) -> None:
        line = json.dumps(
            {
                "key": entry.key,
                "units": list(entry.units),
                "created_at": entry.created_at,
                "template_version": entry.template_version,
            },
            ensure_ascii=False,
        )
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
            if entry.template_version == TEMPLATE_VERSION:
                self._index[entry.key] = entry

    def __len__(self) -> int:
        return len(self._index)


class CachedDecomposer:
    """Wraps a decomposer so each distinct sentence reaches the backend at most once."""

    def __init__(self, backend: Decomposer, cache: DecompositionCache):
        self.backend = backend
        self.cache = cache
        self.decomposer_id = backend.decomposer_id
        self.model_id = backend.model_id

    def split(self, text: str) -> list[str]:
        key = cache_key(self.decomposer_id, self.model_id, text)
        hit = self.cache.lookup(key)
        if hit is not None:
            return list(hit.units)
        units = self.backend.split(text)
        self.cache.store(
            DecompositionCacheEntry(key, tuple(units), datetime.now(timezone.utc).isoformat())
        )
        return units


def decompose(sentence: AnswerSentence, backend: Decomposer) -> list[InformationUnit]:
    try:
        texts = [t for t in backend.split(sentence.text) if t.strip()]
    except (ServiceError, httpx.HTTPError) as exc:
        raise DecompositionFailed(sentence.index, exc) from exc
    if not texts:
        texts = [sentence.text]
    return [InformationUnit(sentence.index, i, t) for i, t in enumerate(texts)]
