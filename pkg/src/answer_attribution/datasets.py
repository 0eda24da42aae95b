"""Canonical JSONL records, raw-corpus reformatters and dataset statistics.

Canonical line layout (field names are fixed)::

    {"question_id": ..., "answer_id": ..., "question": ..., "split": "train|dev|test",
     "document": {"sentences": [{"index": 0, "text": ...}, ...]},
     "answer": {"sentences": [{"index": 0, "text": ..., "gold_attributions": [3, 7]}, ...]}}

Raw adapters
------------
Upstream releases change shape often, so each reformatter reads one small,
documented layout. Convert the original release into it once.

Verifiability (``<raw_dir>/{train,dev,test}.jsonl``), one answer per line::

    {"question_id": str, "question": str, "answer_id": str,
     "pages": [{"id": str, "content": str}, ...],
     "sentences": [{"text": str,
                    "citations": [page id, ...],
                    "support": "full" | "partial" | "none" | null,
                    "supporting_sentences": [str, ...]}, ...]}

Hagrid (``<raw_dir>/{train,dev}.jsonl``), one question per line::

    {"query_id": str, "query": str,
     "quotes": [{"idx": int, "text": str}, ...],
     "answers": [{"answer": str,
                  "sentences": [{"text": str, "attributable": 0 | 1 | null}, ...]}, ...]}

``answers[].sentences`` is optional; without it the answer text is segmented.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .core import (
    AnswerRecord,
    AnswerSentence,
    SourceDocument,
    SourceSentence,
    normalize,
    segment_sentences,
)
from .errors import DataError

log = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")


@dataclass(frozen=True)
class CanonicalRecord:
    question_id: str
    answer_id: str
    question: str
    document: SourceDocument
    answer: AnswerRecord
    split: str

    def __post_init__(self) -> None:
        validate_record(self)


def validate_record(rec: CanonicalRecord) -> None:
    where = f"record {rec.question_id!r}/{rec.answer_id!r}"
    if rec.split not in SPLITS:
        raise DataError(f"{where}: unknown split {rec.split!r}")
    if not rec.document.is_contiguous():
        raise DataError(f"{where}: document indices must be 0..n-1")
    if (rec.answer.question_id, rec.answer.answer_id) != (rec.question_id, rec.answer_id):
        raise DataError(f"{where}: answer ids disagree with the record")
    seen: set[str] = set()
    for s in rec.document.sentences:
        key = normalize(s.text)
        if key in seen:
            raise DataError(f"{where}: duplicate document sentence {s.index} after normalization")
        seen.add(key)
    valid = set(rec.document.indices)
    for sent in rec.answer.sentences:
        dangling = sent.gold_attributions - valid
        if dangling:
            raise DataError(f"{where}: sentence {sent.index} cites missing source {sorted(dangling)}")


def make_record(
    question_id: str,
    answer_id: str,
    question: str,
    doc_texts: list[str],
    answer_texts: list[str],
    gold: list[Iterable[int]],
    split: str,
) -> CanonicalRecord:
    return CanonicalRecord(
        question_id,
        answer_id,
        question,
        SourceDocument.from_texts(question_id, doc_texts),
        AnswerRecord.from_texts(question_id, question, answer_id, answer_texts, gold),
        split,
    )


# ---------------------------------------------------------------------------
# JSONL round trip
# ---------------------------------------------------------------------------

_TOP_KEYS = {"question_id", "answer_id", "question", "split", "document", "answer"}


def record_to_dict(rec: CanonicalRecord) -> dict[str, Any]:
    return {
        "question_id": rec.question_id,
        "answer_id": rec.answer_id,
        "question": rec.question,
        "split": rec.split,
        "document": {"sentences": [{"index": s.index, "text": s.text} for s in rec.document.sentences]},
        "answer": {
            "sentences": [
                {"index": s.index, "text": s.text, "gold_attributions": sorted(s.gold_attributions)}
                for s in rec.answer.sentences
            ]
        },
    }


def _exact_keys(obj: Any, keys: set[str], what: str) -> dict[str, Any]:
    if not isinstance(obj, dict):
        raise DataError(f"{what} must be a JSON object")
    extra, missing = set(obj) - keys, keys - set(obj)
    if extra:
        raise DataError(f"{what}: unknown fields {sorted(extra)}")
    if missing:
        raise DataError(f"{what}: missing fields {sorted(missing)}")
    return obj


def record_from_dict(raw: Any) -> CanonicalRecord:
    top = _exact_keys(raw, _TOP_KEYS, "record")
    doc = _exact_keys(top["document"], {"sentences"}, "document")
    ans = _exact_keys(top["answer"], {"sentences"}, "answer")
    src = [SourceSentence(**_exact_keys(s, {"index", "text"}, "document sentence")) for s in doc["sentences"]]
    sents = []
    for s in ans["sentences"]:
        s = _exact_keys(s, {"index", "text", "gold_attributions"}, "answer sentence")
        sents.append(AnswerSentence(s["index"], s["text"], frozenset(s["gold_attributions"])))
    qid, aid, question = top["question_id"], top["answer_id"], top["question"]
    return CanonicalRecord(
        qid,
        aid,
        question,
        SourceDocument(qid, tuple(src)),
        AnswerRecord(qid, question, aid, tuple(sents)),
        top["split"],
    )


def write_canonical(records: Iterable[CanonicalRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_dict(rec), ensure_ascii=False) + "\n")


def read_canonical(path: str | Path) -> list[CanonicalRecord]:
    path = Path(path)
    out = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(record_from_dict(json.loads(line)))
            except (ValueError, TypeError, DataError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# Reformatters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DropRecord:
    source: str
    split: str
    question_id: str
    answer_id: str
    reason: str

    def to_dict(self) -> dict[str, str]:
        return asdict(self)


class _DocBuilder:
    """Accumulates source sentences, merging normalized duplicates."""

    def __init__(self) -> None:
        self.texts: list[str] = []
        self._pos: dict[str, int] = {}

    def add(self, text: str) -> int:
        text = " ".join(text.split())
        key = normalize(text)
        if key not in self._pos:
            self._pos[key] = len(self.texts)
            self.texts.append(text)
        return self._pos[key]

    def find(self, text: str) -> int | None:
        return self._pos.get(normalize(text))


def _iter_jsonl(path: Path):
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    yield lineno, json.loads(line)
                except ValueError as exc:
                    raise DataError(f"{path}:{lineno}: malformed JSON: {exc}") from exc


def _split_files(raw_dir: str | Path, splits: Iterable[str]) -> list[tuple[str, Path]]:
    raw_dir = Path(raw_dir)
    if not raw_dir.is_dir():
        raise DataError(f"raw directory not found: {raw_dir}")
    found = [(s, raw_dir / f"{s}.jsonl") for s in splits if (raw_dir / f"{s}.jsonl").is_file()]
    if not found:
        names = ", ".join(str(raw_dir / f"{s}.jsonl") for s in splits)
        raise DataError(f"no raw split files found; expected one of: {names}")
    return found


def _drop(drops: list[DropRecord] | None, rec: DropRecord) -> None:
    log.info("dropping %s %s/%s: %s", rec.source, rec.question_id, rec.answer_id, rec.reason)
    if drops is not None:
        drops.append(rec)


def _locate(builder: _DocBuilder, text: str) -> list[int] | None:
    hit = builder.find(text)
    if hit is not None:
        return [hit]
    parts = segment_sentences(text)
    idx = [builder.find(p) for p in parts]
    if not parts or any(i is None for i in idx):
        return None
    return idx  # type: ignore[return-value]


def reformat_verifiability(raw_dir: str | Path, drops: list[DropRecord] | None = None) -> list[CanonicalRecord]:
    """Build one record per answer, using fully supported cited pages as the document."""
    out: list[CanonicalRecord] = []
    for split, path in _split_files(raw_dir, SPLITS):
        for lineno, raw in _iter_jsonl(path):
            if not isinstance(raw, dict):
                raw = {}
            qid = str(raw.get("question_id", f"{split}:{lineno}"))
            aid = str(raw.get("answer_id", f"{qid}:{lineno}"))

            def drop(reason: str) -> None:
                _drop(drops, DropRecord("verifiability", split, qid, aid, reason))

            try:
                rec = _verifiability_record(raw, qid, aid, split)
            except (KeyError, TypeError, AttributeError, ValueError) as exc:
                drop(f"malformed raw entry at {path.name}:{lineno}: {exc!r}")
                continue
            except _Reject as exc:
                drop(str(exc))
                continue
            except DataError as exc:
                drop(f"invariant violation: {exc}")
                continue
            out.append(rec)
    return out


class _Reject(Exception):
    pass


def _verifiability_record(raw: dict, qid: str, aid: str, split: str) -> CanonicalRecord:
    pages = raw["pages"]
    if isinstance(pages, dict):
        contents = {str(k): v for k, v in pages.items()}
    else:
        contents = {str(p["id"]): p["content"] for p in pages}
    sentences = raw["sentences"]
    cited = [s for s in sentences if s.get("citations")]
    if not cited:
        raise _Reject("answer has no cited sentences")
    for i, s in enumerate(sentences):
        if s.get("citations") and s.get("support") != "full":
            raise _Reject(f"sentence {i} is judged {s.get('support')!r}, not fully supported")

    order: list[str] = []
    for s in cited:
        for pid in s["citations"]:
            pid = str(pid)
            if pid not in order:
                order.append(pid)
    builder = _DocBuilder()
    for pid in order:
        if pid not in contents:
            raise _Reject(f"cited page {pid!r} has no content")
        for sent in segment_sentences(contents[pid]):
            builder.add(sent)
    if not builder.texts:
        raise _Reject("pseudo-document is empty")

    texts, gold = [], []
    for i, s in enumerate(sentences):
        text = " ".join(s["text"].split())
        if not text:
            raise _Reject(f"answer sentence {i} is empty")
        g: set[int] = set()
        for support in s.get("supporting_sentences") or []:
            idx = _locate(builder, support)
            if idx is None:
                raise _Reject(f"supporting sentence for answer sentence {i} not found in document: {support[:80]!r}")
            g.update(idx)
        texts.append(text)
        gold.append(g)
    return make_record(qid, aid, raw["question"], builder.texts, texts, gold, split)


_MARKER = re.compile(r"\[(\d+(?:\s*,\s*\d+)*)\]")
_MARKER_AFTER_STOP = re.compile(r"([.!?])((?:\s*\[\d+(?:\s*,\s*\d+)*\])+)")
_SPACE_BEFORE_PUNCT = re.compile(r"\s+([.,;:!?])")


def strip_citations(text: str) -> tuple[str, list[int]]:
    """Remove ``[n]`` / ``[n, m]`` markers and return the cleaned text with the cited numbers."""
    cited = [int(n) for m in _MARKER.finditer(text) for n in m.group(1).split(",")]
    clean = _SPACE_BEFORE_PUNCT.sub(r"\1", _MARKER.sub("", text))
    return " ".join(clean.split()), cited


def reformat_hagrid(raw_dir: str | Path, drops: list[DropRecord] | None = None) -> list[CanonicalRecord]:
    """Treat the LLM answer as input and the labeled relevant passages as the document."""
    raw_dir = Path(raw_dir)
    if (raw_dir / "test.jsonl").is_file():
        log.info("ignoring %s: Hagrid has no test split", raw_dir / "test.jsonl")
    out: list[CanonicalRecord] = []
    for split, path in _split_files(raw_dir, ("train", "dev")):
        for lineno, raw in _iter_jsonl(path):
            if not isinstance(raw, dict):
                raw = {}
            qid = str(raw.get("query_id", f"{split}:{lineno}"))
            try:
                answers = raw["answers"]
                if not isinstance(answers, list):
                    raise TypeError(f"answers must be a list, got {type(answers).__name__}")
                builder = _DocBuilder()
                by_idx = {int(q["idx"]): builder.add(q["text"]) for q in raw["quotes"]}
                question = raw["query"]
            except (KeyError, TypeError, AttributeError, ValueError) as exc:
                _drop(drops, DropRecord("hagrid", split, qid, "*", f"malformed raw entry at {path.name}:{lineno}: {exc!r}"))
                continue
            for k, ans in enumerate(answers):
                aid = f"{qid}-{k}"
                try:
                    rec = _hagrid_record(ans, by_idx, builder.texts, qid, aid, question, split)
                except _Reject as exc:
                    _drop(drops, DropRecord("hagrid", split, qid, aid, str(exc)))
                    continue
                except (KeyError, TypeError, AttributeError, DataError) as exc:
                    _drop(drops, DropRecord("hagrid", split, qid, aid, f"malformed answer: {exc!r}"))
                    continue
                out.append(rec)
    return out


def _hagrid_record(ans, by_idx, doc_texts, qid, aid, question, split) -> CanonicalRecord:
    if not doc_texts:
        raise _Reject("no relevant passages")
    if ans.get("sentences"):
        pieces = [(s["text"], s.get("attributable")) for s in ans["sentences"]]
    else:
        moved = _MARKER_AFTER_STOP.sub(lambda m: m.group(2) + m.group(1), ans["answer"])
        pieces = [(s, None) for s in segment_sentences(moved)]
    texts, gold = [], []
    for raw_text, attributable in pieces:
        text, cited = strip_citations(raw_text)
        missing = sorted(set(cited) - set(by_idx))
        if missing:
            raise _Reject(f"citation {missing} points at an unlisted passage")
        if not text:
            continue
        texts.append(text)
        gold.append(set() if attributable == 0 else {by_idx[c] for c in cited})
    if not texts:
        raise _Reject("answer has no sentences")
    return make_record(qid, aid, question, doc_texts, texts, gold, split)


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetStats:
    size: int = 0
    avg_source_sentences: float = 0.0
    avg_attributions_per_sentence: float = 0.0
    avg_sentences_per_answer: float = 0.0
    avg_answers_per_question: float = 0.0
    # Same numerator, but averaged over every answer sentence.
    avg_attributions_per_sentence_all: float = field(default=0.0, compare=False)

    def as_tuple(self) -> tuple[float, ...]:
        return (
            self.size,
            self.avg_source_sentences,
            self.avg_attributions_per_sentence,
            self.avg_sentences_per_answer,
            self.avg_answers_per_question,
        )


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def compute_stats(records: list[CanonicalRecord]) -> DatasetStats:
    if not records:
        return DatasetStats()
    gold_sizes = [len(s.gold_attributions) for r in records for s in r.answer.sentences]
    per_question = Counter(r.question_id for r in records)
    return DatasetStats(
        size=len(records),
        avg_source_sentences=_mean([len(r.document) for r in records]),
        avg_attributions_per_sentence=_mean([g for g in gold_sizes if g > 0]),
        avg_sentences_per_answer=_mean([len(r.answer.sentences) for r in records]),
        avg_answers_per_question=_mean(list(per_question.values())),
        avg_attributions_per_sentence_all=_mean(gold_sizes),
    )
