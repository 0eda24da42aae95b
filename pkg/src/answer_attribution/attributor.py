"""Entailment-based attribution of information units to source sentences.

Two selection strategies are provided. ``optimal_select`` greedily grows a
premise set while every addition lifts the entailment probability by more
than ``delta``; ``ranked_select`` scores each source sentence on its own and
keeps those above the entailment threshold.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import httpx

from .core import AnswerRecord, SourceDocument
from .decomposer import Decomposer, InformationUnit, decompose
from .errors import AttributionError, BudgetExceededError, InvalidScoreError, ServiceError
from .retrieval import tokenize
from .services import JsonServiceClient, ServiceConfig, batched, expect_list


class EntailmentScorer(Protocol):
    def score(self, premise: str, hypothesis: str) -> float: ...


def lexical_entailment_proxy(premise: str, hypothesis: str) -> float:
    """Share of the hypothesis' distinct tokens that also occur in the premise."""
    hyp = set(tokenize(hypothesis))
    if not hyp:
        return 0.0
    return len(hyp & set(tokenize(premise))) / len(hyp)


class LexicalProxyScorer:
    def score(self, premise: str, hypothesis: str) -> float:
        return lexical_entailment_proxy(premise, hypothesis)


class NLIServiceScorer:
    """Client for ``{"pairs": [{"premise", "hypothesis"}]} -> {"probabilities": [...]}``."""

    def __init__(self, config: ServiceConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self._http = JsonServiceClient(config, transport)

    def score(self, premise: str, hypothesis: str) -> float:
        return self.score_batch([(premise, hypothesis)])[0]

    def score_batch(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        out: list[float] = []
        for chunk in batched(list(pairs), self.config.batch_size):
            body = self._http.post(
                {"pairs": [{"premise": p, "hypothesis": h} for p, h in chunk]}
            )
            for v in expect_list(body, "probabilities", len(chunk), self.config.url):
                if not isinstance(v, (int, float)):
                    raise ServiceError(f"{self.config.url}: non-numeric probability {v!r}")
                out.append(float(v))
        return out


class CountingScorer:
    """Counts scorer invocations and enforces a per-record call budget."""

    def __init__(self, inner: EntailmentScorer, budget: int | None = None):
        self.inner = inner
        self.budget = budget
        self.calls = 0
        self._lock = threading.Lock()

    def _charge(self, n: int) -> None:
        with self._lock:
            self.calls += n
            if self.budget is not None and self.calls > self.budget:
                raise BudgetExceededError(
                    f"scorer call budget of {self.budget} exceeded ({self.calls} calls)"
                )

    def score(self, premise: str, hypothesis: str) -> float:
        self._charge(1)
        return self.inner.score(premise, hypothesis)

    def score_batch(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        self._charge(len(pairs))
        return score_pairs(self.inner, pairs)


def score_pairs(scorer: EntailmentScorer, pairs: Sequence[tuple[str, str]]) -> list[float]:
    batch = getattr(scorer, "score_batch", None)
    if batch is not None:
        return list(batch(pairs))
    return [scorer.score(p, h) for p, h in pairs]


@dataclass(frozen=True)
class SelectionConfig:
    delta: float = 0.3
    entail_threshold: float = 0.5
    max_iterations: int | None = None  # None: one per source sentence

    def __post_init__(self) -> None:
        if self.delta < 0:
            raise AttributionError(f"delta must be >= 0, got {self.delta}")
        if not 0.0 <= self.entail_threshold <= 1.0:
            raise AttributionError(f"entail_threshold must lie in [0, 1], got {self.entail_threshold}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise AttributionError(f"max_iterations must be positive, got {self.max_iterations}")


@dataclass(frozen=True)
class UnitAttribution:
    unit: InformationUnit
    selected: tuple[tuple[int, float], ...]
    # Everything Optimal Selection admitted, before the final threshold check.
    admitted: tuple[tuple[int, float], ...] = ()


@dataclass(frozen=True)
class AttributionList:
    answer_sentence_index: int
    attributions: tuple[tuple[int, float], ...] = ()

    @property
    def indices(self) -> list[int]:
        return [i for i, _ in self.attributions]


class UnitScoringError(AttributionError):
    def __init__(self, unit: InformationUnit, cause: Exception):
        super().__init__(
            f"scoring failed for unit {unit.unit_index} of answer sentence "
            f"{unit.parent_sentence_index}: {cause}"
        )
        self.exit_code = getattr(cause, "exit_code", 2)


def _checked(scores: Sequence[float], n: int) -> list[float]:
    scores = list(scores)
    if len(scores) != n:
        raise ServiceError(f"scorer returned {len(scores)} scores for {n} pairs")
    for s in scores:
        if not 0.0 <= s <= 1.0:
            raise InvalidScoreError(f"entailment score {s} is outside [0, 1]")
    return scores


def optimal_select(
    unit: InformationUnit,
    document: SourceDocument,
    scorer: EntailmentScorer,
    cfg: SelectionConfig = SelectionConfig(),
) -> UnitAttribution:
    texts = {s.index: s.text for s in document.sentences}
    remaining = sorted(texts)
    chosen: list[int] = []
    admitted: list[tuple[int, float]] = []
    prev_score = -1.0
    limit = cfg.max_iterations or len(remaining)
    try:
        for _ in range(limit):
            if not remaining:
                break
            premises = [
                " ".join(texts[i] for i in sorted(chosen + [cand])) for cand in remaining
            ]
            scores = _checked(score_pairs(scorer, [(p, unit.text) for p in premises]), len(premises))
            best = 0
            for j in range(1, len(scores)):
                if scores[j] > scores[best]:
                    best = j
            curr_score = scores[best]
            if not curr_score > prev_score + cfg.delta:
                break
            d_max = remaining.pop(best)
            chosen.append(d_max)
            admitted.append((d_max, curr_score))
            prev_score = curr_score
    except (ServiceError, httpx.HTTPError) as exc:
        raise UnitScoringError(unit, exc) from exc
    selected = tuple(admitted) if prev_score >= cfg.entail_threshold else ()
    return UnitAttribution(unit, selected, tuple(admitted))


def ranked_select(
    unit: InformationUnit,
    document: SourceDocument,
    scorer: EntailmentScorer,
    cfg: SelectionConfig = SelectionConfig(),
) -> UnitAttribution:
    idx = [s.index for s in document.sentences]
    try:
        scores = _checked(
            score_pairs(scorer, [(s.text, unit.text) for s in document.sentences]), len(idx)
        )
    except (ServiceError, httpx.HTTPError) as exc:
        raise UnitScoringError(unit, exc) from exc
    kept = [(i, s) for i, s in zip(idx, scores) if s >= cfg.entail_threshold]
    kept.sort(key=lambda e: (-e[1], e[0]))
    return UnitAttribution(unit, tuple(kept), tuple(kept))


def merge_unit_attributions(units: Sequence[UnitAttribution], sentence_index: int) -> AttributionList:
    """Pool per-unit selections, keep each source sentence's best score, sort descending."""
    best: dict[int, float] = {}
    for ua in units:
        if ua.unit.parent_sentence_index != sentence_index:
            raise AttributionError(
                f"unit belongs to sentence {ua.unit.parent_sentence_index}, not {sentence_index}"
            )
        for idx, score in ua.selected:
            if idx not in best or score > best[idx]:
                best[idx] = score
    ordered = sorted(best.items(), key=lambda e: (-e[1], e[0]))
    return AttributionList(sentence_index, tuple(ordered))


SELECTORS = {"optimal": optimal_select, "ranked": ranked_select}

Pruner = Callable[[SourceDocument, AnswerRecord], SourceDocument]


@dataclass
class Pipeline:
    """Wired-up components for one attribution system.

    The four systems compared in the experiments are (llm, optimal),
    (identity, optimal), (llm, ranked) and (identity, ranked).
    """

    decomposer: Decomposer
    scorer: EntailmentScorer
    selection: str = "optimal"
    thresholds: SelectionConfig = field(default_factory=SelectionConfig)
    pruner: Pruner | None = None
    call_budget: int | None = 10_000

    def __post_init__(self) -> None:
        if self.selection not in SELECTORS:
            raise AttributionError(f"unknown selection mode {self.selection!r}")


class RecordFailed(AttributionError):
    def __init__(self, question_id: str, answer_id: str, sentence_index: int | None, cause: Exception):
        where = f"question {question_id!r}, answer {answer_id!r}"
        if sentence_index is not None:
            where += f", sentence {sentence_index}"
        super().__init__(f"{where}: {cause}")
        self.exit_code = getattr(cause, "exit_code", 2)
        self.cause = cause


@dataclass
class AnswerAttribution:
    sentences: list[AttributionList]
    scorer_calls: int


def attribute_answer_counted(
    record: AnswerRecord, document: SourceDocument, pipeline: Pipeline
) -> AnswerAttribution:
    scorer = CountingScorer(pipeline.scorer, pipeline.call_budget)
    select = SELECTORS[pipeline.selection]
    try:
        sources = pipeline.pruner(document, record) if pipeline.pruner else document
    except AttributionError as exc:
        raise RecordFailed(record.question_id, record.answer_id, None, exc) from exc
    out = []
    for sent in record.sentences:
        try:
            units = decompose(sent, pipeline.decomposer)
            per_unit = [select(u, sources, scorer, pipeline.thresholds) for u in units]
        except AttributionError as exc:
            raise RecordFailed(record.question_id, record.answer_id, sent.index, exc) from exc
        out.append(merge_unit_attributions(per_unit, sent.index))
    return AnswerAttribution(out, scorer.calls)


def attribute_answer(record: AnswerRecord, document: SourceDocument, pipeline: Pipeline) -> list[AttributionList]:
    return attribute_answer_counted(record, document, pipeline).sentences
