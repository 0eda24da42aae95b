"""Sentence rankers: native Okapi BM25 plus dense and pairwise external scorers."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import httpx

from .core import AnswerRecord, SourceDocument
from .errors import DataError, InvalidScoreError, ServiceError
from .services import JsonServiceClient, ServiceConfig, batched, expect_list

_NON_ALNUM = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[str]:
    return [t for t in _NON_ALNUM.split(text.lower()) if t]


@dataclass(frozen=True)
class RankedList:
    entries: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))

    @classmethod
    def from_scores(cls, scored: Sequence[tuple[int, float]]) -> "RankedList":
        return cls(tuple(sorted(scored, key=lambda e: (-e[1], e[0]))))

    def top(self, n: int) -> list[int]:
        return [idx for idx, _ in self.entries[:n]]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self) -> None:
        if self.k1 <= 0:
            raise DataError(f"k1 must be positive, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise DataError(f"b must lie in [0, 1], got {self.b}")


def bm25_rank(query: str, document: SourceDocument, params: Bm25Params = Bm25Params()) -> RankedList:
    """Score every source sentence against ``query`` with Okapi BM25.

    Each sentence is one retrieval unit. Query terms count once each and
    IDF uses the non-negative ``ln(1 + (N - df + 0.5) / (df + 0.5))`` form.
    """
    docs = [tokenize(s.text) for s in document.sentences]
    total = sum(len(d) for d in docs)
    if total == 0:
        raise DataError(f"document {document.question_id!r} has no tokens to index")
    n = len(docs)
    avgdl = total / n
    tfs = [Counter(d) for d in docs]
    df = Counter(t for tf in tfs for t in tf)
    terms = set(tokenize(query))
    idf = {t: math.log(1.0 + (n - df[t] + 0.5) / (df[t] + 0.5)) for t in terms}
    k1, b = params.k1, params.b
    scored = []
    for sent, tf, toks in zip(document.sentences, tfs, docs):
        norm = k1 * (1.0 - b + b * len(toks) / avgdl)
        score = 0.0
        for t in terms:
            f = tf.get(t, 0)
            if f:
                score += idf[t] * f * (k1 + 1.0) / (f + norm)
        scored.append((sent.index, score))
    return RankedList.from_scores(scored)


class EmbeddingScorer(Protocol):
    def embed(self, texts: list[str]) -> list[list[float]]: ...


class RelevanceScorer(Protocol):
    def relevance(self, pairs: list[tuple[str, str]]) -> list[float]: ...


class EmbeddingServiceClient:
    """Client for ``{"texts": [...]} -> {"embeddings": [[...], ...]}``."""

    def __init__(self, config: ServiceConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self._http = JsonServiceClient(config, transport)

    def embed(self, texts: list[str]) -> list[list[float]]:
        out: list[list[float]] = []
        for chunk in batched(list(texts), self.config.batch_size):
            body = self._http.post({"texts": chunk})
            vecs = expect_list(body, "embeddings", len(chunk), self.config.url)
            for v in vecs:
                if not isinstance(v, list) or not all(isinstance(x, (int, float)) for x in v):
                    raise ServiceError(f"{self.config.url}: malformed embedding vector")
                out.append([float(x) for x in v])
        return out


class RelevanceServiceClient:
    """Client for ``{"pairs": [{"query", "text"}]} -> {"scores": [...]}``."""

    def __init__(self, config: ServiceConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self._http = JsonServiceClient(config, transport)

    def relevance(self, pairs: list[tuple[str, str]]) -> list[float]:
        out: list[float] = []
        for chunk in batched(list(pairs), self.config.batch_size):
            body = self._http.post({"pairs": [{"query": q, "text": t} for q, t in chunk]})
            for s in expect_list(body, "scores", len(chunk), self.config.url):
                if not isinstance(s, (int, float)):
                    raise ServiceError(f"{self.config.url}: non-numeric relevance score {s!r}")
                out.append(float(s))
        return out


class JaccardRelevance:
    """Offline stand-in for a pairwise reranker: token-set Jaccard overlap."""

    def relevance(self, pairs: list[tuple[str, str]]) -> list[float]:
        out = []
        for q, t in pairs:
            a, b = set(tokenize(q)), set(tokenize(t))
            union = a | b
            out.append(len(a & b) / len(union) if union else 0.0)
        return out


def _cosine(u: Sequence[float], v: Sequence[float]) -> float:
    nu = math.sqrt(sum(x * x for x in u))
    nv = math.sqrt(sum(x * x for x in v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return sum(x * y for x, y in zip(u, v)) / (nu * nv)


def dense_rank(query: str, document: SourceDocument, embedder: EmbeddingScorer) -> RankedList:
    texts = [query] + [s.text for s in document.sentences]
    vecs = embedder.embed(texts)
    if len(vecs) != len(texts):
        raise ServiceError(f"embedder returned {len(vecs)} vectors for {len(texts)} texts")
    qv = vecs[0]
    scored = []
    for sent, v in zip(document.sentences, vecs[1:]):
        if len(v) != len(qv):
            raise ServiceError(
                f"embedding dimension mismatch: query has {len(qv)}, sentence {sent.index} has {len(v)}"
            )
        scored.append((sent.index, _cosine(qv, v)))
    return RankedList.from_scores(scored)


def pairwise_rank(query: str, document: SourceDocument, scorer: RelevanceScorer) -> RankedList:
    scores = scorer.relevance([(query, s.text) for s in document.sentences])
    if len(scores) != len(document):
        raise ServiceError(f"relevance scorer returned {len(scores)} scores for {len(document)} pairs")
    for sent, score in zip(document.sentences, scores):
        if not 0.0 <= score <= 1.0:
            raise InvalidScoreError(f"relevance score {score} for sentence {sent.index} is outside [0, 1]")
    return RankedList.from_scores([(s.index, sc) for s, sc in zip(document.sentences, scores)])


Ranker = Callable[[str, SourceDocument], RankedList]


def make_ranker(kind: str, *, params: Bm25Params = Bm25Params(), embedder=None, scorer=None) -> Ranker:
    if kind == "bm25":
        return lambda q, d: bm25_rank(q, d, params)
    if kind == "dense":
        if embedder is None:
            raise DataError("dense ranker needs an embedder")
        return lambda q, d: dense_rank(q, d, embedder)
    if kind == "pairwise":
        if scorer is None:
            raise DataError("pairwise ranker needs a relevance scorer")
        return lambda q, d: pairwise_rank(q, d, scorer)
    raise DataError(f"unknown ranker {kind!r}")


def prune_sources(document: SourceDocument, answer: AnswerRecord, ranker: Ranker, limit: int) -> SourceDocument:
    """Keep the union of each answer sentence's top-``limit`` source sentences.

    Original indices and document order are preserved, so gold labels stay valid.
    """
    if limit < 1:
        raise DataError(f"prune limit must be >= 1, got {limit}")
    if len(document) <= limit:
        return document
    keep: set[int] = set()
    for sent in answer.sentences:
        keep.update(ranker(sent.text, document).top(limit))
    return document.subset(keep)
