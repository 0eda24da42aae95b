"""P/R/F1@k scoring of predicted attributions against gold labels."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .attributor import AttributionList
from .core import is_extractive
from .datasets import CanonicalRecord
from .errors import DataError

log = logging.getLogger(__name__)

DEFAULT_KS = (1, 2, 4)


@dataclass(frozen=True)
class SentenceEval:
    k: int
    precision: float
    recall: float
    f1: float
    evaluated: bool = True


def f1_score(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def score_sentence(pred: AttributionList | Sequence[int], gold: Iterable[int], k: int) -> SentenceEval:
    """Precision is taken over the predictions actually made (at most ``k``), not over ``k``."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    gold = set(gold)
    indices = pred.indices if isinstance(pred, AttributionList) else list(pred)
    top = indices[:k]
    if not top or not gold:
        return SentenceEval(k, 0.0, 0.0, 0.0)
    hits = len(set(top) & gold)
    p = hits / len(top)
    r = hits / len(gold)
    return SentenceEval(k, p, r, f1_score(p, r))


@dataclass(frozen=True)
class Counts:
    total_sentences: int = 0
    filtered_extractive: int = 0
    filtered_empty_gold: int = 0
    evaluated: int = 0


@dataclass(frozen=True)
class MetricsReport:
    # k -> (precision, recall, f1)
    scores: dict[int, tuple[float, float, float]]
    counts: Counts = field(default_factory=Counts)
    averaging: str = "macro"

    @property
    def warning(self) -> str | None:
        if self.counts.evaluated == 0:
            return "no sentences were evaluated; metrics are reported as 0"
        return None

    def to_dict(self) -> dict:
        out = {
            "k": {str(k): {"p": p, "r": r, "f1": f} for k, (p, r, f) in sorted(self.scores.items())},
            "counts": {
                "total_sentences": self.counts.total_sentences,
                "filtered_extractive": self.counts.filtered_extractive,
                "filtered_empty_gold": self.counts.filtered_empty_gold,
                "evaluated": self.counts.evaluated,
            },
            "averaging": self.averaging,
        }
        if self.warning:
            out["warning"] = self.warning
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "MetricsReport":
        scores = {int(k): (v["p"], v["r"], v["f1"]) for k, v in raw["k"].items()}
        return cls(scores, Counts(**raw["counts"]), raw.get("averaging", "macro"))


def evaluate(
    pairs: Iterable[tuple[CanonicalRecord, Sequence[AttributionList]]],
    ks: Sequence[int] = DEFAULT_KS,
    micro: bool = False,
) -> MetricsReport:
    """Average per-sentence metrics over every non-extractive sentence with gold labels."""
    total = extractive = empty = 0
    sums = {k: [0.0, 0.0, 0.0] for k in ks}
    # micro: hits, predicted, gold
    tallies = {k: [0, 0, 0] for k in ks}
    for rec, preds in pairs:
        if len(preds) != len(rec.answer.sentences):
            raise DataError(
                f"record {rec.question_id!r}/{rec.answer_id!r}: {len(preds)} predictions "
                f"for {len(rec.answer.sentences)} answer sentences"
            )
        for sent, pred in zip(rec.answer.sentences, preds):
            if pred.answer_sentence_index != sent.index:
                raise DataError(
                    f"record {rec.question_id!r}/{rec.answer_id!r}: prediction for sentence "
                    f"{pred.answer_sentence_index} is aligned with sentence {sent.index}"
                )
            total += 1
            if is_extractive(sent.text, rec.document):
                extractive += 1
                continue
            if not sent.gold_attributions:
                empty += 1
                continue
            for k in ks:
                ev = score_sentence(pred, sent.gold_attributions, k)
                acc = sums[k]
                acc[0] += ev.precision
                acc[1] += ev.recall
                acc[2] += ev.f1
                top = pred.indices[:k]
                t = tallies[k]
                t[0] += len(set(top) & sent.gold_attributions)
                t[1] += len(top)
                t[2] += len(sent.gold_attributions)
    n = total - extractive - empty
    scores: dict[int, tuple[float, float, float]] = {}
    for k in ks:
        if n == 0:
            scores[k] = (0.0, 0.0, 0.0)
        elif micro:
            hits, npred, ngold = tallies[k]
            p = hits / npred if npred else 0.0
            r = hits / ngold if ngold else 0.0
            scores[k] = (p, r, f1_score(p, r))
        else:
            scores[k] = (sums[k][0] / n, sums[k][1] / n, sums[k][2] / n)
    report = MetricsReport(scores, Counts(total, extractive, empty, n), "micro" if micro else "macro")
    if report.warning:
        log.warning(report.warning)
    return report


def emit_report(report: MetricsReport, fmt: str = "table", label: str = "system") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2)
    if fmt != "table":
        raise ValueError(f"unknown report format {fmt!r}")
    ks = sorted(report.scores)
    header = ["Model"] + [f"(P/R/F1)@{k}" for k in ks]
    row = [label] + ["/".join(f"{v:.3f}" for v in report.scores[k]) for k in ks]
    widths = [max(len(h), len(c)) for h, c in zip(header, row)]
    lines = [
        " | ".join(h.ljust(w) for h, w in zip(header, widths)),
        "-+-".join("-" * w for w in widths),
        " | ".join(c.ljust(w) for c, w in zip(row, widths)),
    ]
    c = report.counts
    lines.append(
        f"sentences: total={c.total_sentences} extractive={c.filtered_extractive} "
        f"empty_gold={c.filtered_empty_gold} evaluated={c.evaluated} ({report.averaging})"
    )
    if report.warning:
        lines.append(f"WARNING: {report.warning}")
    return "\n".join(lines)
