"""Declarative pipeline configuration (YAML or JSON) and wiring into a ``Pipeline``."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import httpx
import yaml

from .attributor import LexicalProxyScorer, NLIServiceScorer, Pipeline, SelectionConfig
from .decomposer import CachedDecomposer, DecompositionCache, IdentityDecomposer, LLMDecomposer
from .errors import AttributionError, ConfigError
from .retrieval import (
    Bm25Params,
    EmbeddingServiceClient,
    RelevanceServiceClient,
    make_ranker,
    prune_sources,
)
from .services import ServiceConfig


@dataclass(frozen=True)
class DecomposerConfig:
    kind: str = "identity"  # identity | llm
    url: str | None = None
    model: str | None = None
    api_key_env: str | None = None
    timeout: float = 60.0
    retries: int = 2
    backoff: float = 0.5
    temperature: float = 0.0


@dataclass(frozen=True)
class ScorerConfig:
    kind: str = "lexical_proxy"  # lexical_proxy | nli_service
    url: str | None = None
    timeout: float = 30.0
    retries: int = 2
    backoff: float = 0.5
    batch_size: int = 32


@dataclass(frozen=True)
class PruneConfig:
    ranker: str = "bm25"  # bm25 | dense | pairwise
    limit: int = 150
    k1: float = 1.2
    b: float = 0.75
    url: str | None = None
    timeout: float = 30.0
    retries: int = 2
    backoff: float = 0.5
    batch_size: int = 32


@dataclass(frozen=True)
class PipelineConfig:
    name: str = "pipeline"
    decomposer: DecomposerConfig = field(default_factory=DecomposerConfig)
    selection: str = "optimal"
    scorer: ScorerConfig = field(default_factory=ScorerConfig)
    prune: PruneConfig | None = None
    thresholds: SelectionConfig = field(default_factory=SelectionConfig)
    cache_path: str | None = None
    call_budget: int | None = 10_000
    workers: int = 1

    def __post_init__(self) -> None:
        if self.decomposer.kind not in ("identity", "llm"):
            raise ConfigError(f"decomposer.kind must be identity or llm, got {self.decomposer.kind!r}")
        if self.decomposer.kind == "llm" and not (self.decomposer.url and self.decomposer.model):
            raise ConfigError("decomposer.kind=llm needs decomposer.url and decomposer.model")
        if self.selection not in ("optimal", "ranked"):
            raise ConfigError(f"selection must be optimal or ranked, got {self.selection!r}")
        if self.scorer.kind not in ("lexical_proxy", "nli_service"):
            raise ConfigError(f"scorer.kind must be lexical_proxy or nli_service, got {self.scorer.kind!r}")
        if self.scorer.kind == "nli_service" and not self.scorer.url:
            raise ConfigError("scorer.kind=nli_service needs scorer.url")
        if self.prune is not None:
            if self.prune.ranker not in ("bm25", "dense", "pairwise"):
                raise ConfigError(f"prune.ranker must be bm25, dense or pairwise, got {self.prune.ranker!r}")
            if self.prune.ranker != "bm25" and not self.prune.url:
                raise ConfigError(f"prune.ranker={self.prune.ranker} needs prune.url")
            if self.prune.limit < 1:
                raise ConfigError("prune.limit must be >= 1")
            try:
                Bm25Params(self.prune.k1, self.prune.b)
            except AttributionError as exc:
                raise ConfigError(f"prune: {exc}") from exc
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _section(cls, raw: Any, name: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{name} must be a mapping")
    allowed = set(cls.__dataclass_fields__)
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, AttributionError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def config_from_dict(raw: dict[str, Any]) -> PipelineConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(raw) - set(PipelineConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"config: unknown keys {sorted(unknown)}")
    kw = dict(raw)
    kw["decomposer"] = _section(DecomposerConfig, raw.get("decomposer"), "decomposer")
    kw["scorer"] = _section(ScorerConfig, raw.get("scorer"), "scorer")
    kw["thresholds"] = _section(SelectionConfig, raw.get("thresholds"), "thresholds")
    kw["prune"] = None if raw.get("prune") is None else _section(PruneConfig, raw["prune"], "prune")
    try:
        return PipelineConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return config_from_dict(raw or {})


def build_pipeline(cfg: PipelineConfig, transport: httpx.BaseTransport | None = None) -> Pipeline:
    """Instantiate backends. ``transport`` lets tests route every HTTP client in-process."""
    d = cfg.decomposer
    if d.kind == "llm":
        backend = LLMDecomposer(
            ServiceConfig(d.url, d.timeout, d.retries, d.backoff, api_key_env=d.api_key_env),
            d.model,
            d.temperature,
            transport,
        )
        decomposer = CachedDecomposer(backend, DecompositionCache(cfg.cache_path)) if cfg.cache_path else backend
    else:
        decomposer = IdentityDecomposer()

    s = cfg.scorer
    if s.kind == "nli_service":
        scorer = NLIServiceScorer(ServiceConfig(s.url, s.timeout, s.retries, s.backoff, s.batch_size), transport)
    else:
        scorer = LexicalProxyScorer()

    pruner = None
    if cfg.prune is not None:
        p = cfg.prune
        svc = ServiceConfig(p.url or "", p.timeout, p.retries, p.backoff, p.batch_size)
        if p.ranker == "dense":
            ranker = make_ranker("dense", embedder=EmbeddingServiceClient(svc, transport))
        elif p.ranker == "pairwise":
            ranker = make_ranker("pairwise", scorer=RelevanceServiceClient(svc, transport))
        else:
            ranker = make_ranker("bm25", params=Bm25Params(p.k1, p.b))
        limit = p.limit
        pruner = lambda doc, answer: prune_sources(doc, answer, ranker, limit)  # noqa: E731

    return Pipeline(decomposer, scorer, cfg.selection, cfg.thresholds, pruner, cfg.call_budget)
