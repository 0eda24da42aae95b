"""Domain types, sentence segmentation and the extractive-sentence filter."""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import DataError

# Tokens that end in a period but never close a sentence.
ABBREVIATIONS = frozenset(
    {"Dr.", "Mr.", "Mrs.", "Ms.", "St.", "vs.", "e.g.", "i.e.", "etc."}
)

_CANDIDATE_BREAK = re.compile(r"[.!?]+[\"'”’)\]]*(?= )")
_LEADING_PUNCT = "\"'(“‘["


@dataclass(frozen=True)
class SourceSentence:
    index: int
    text: str

    def __post_init__(self) -> None:
        if self.index < 0:
            raise DataError(f"source sentence index must be >= 0, got {self.index}")
        if not self.text or self.text != self.text.strip():
            raise DataError(
                f"source sentence {self.index} must be non-empty and stripped: {self.text!r}"
            )


@dataclass(frozen=True)
class SourceDocument:
    question_id: str
    sentences: tuple[SourceSentence, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "sentences", tuple(self.sentences))
        if not self.sentences:
            raise DataError(f"document for question {self.question_id!r} has no sentences")
        prev = -1
        for s in self.sentences:
            if s.index <= prev:
                raise DataError(
                    f"document {self.question_id!r}: indices must be strictly increasing"
                )
            prev = s.index

    @classmethod
    def from_texts(cls, question_id: str, texts: Iterable[str]) -> "SourceDocument":
        return cls(question_id, tuple(SourceSentence(i, t) for i, t in enumerate(texts)))

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(s.index for s in self.sentences)

    def is_contiguous(self) -> bool:
        return self.indices == tuple(range(len(self.sentences)))

    def subset(self, keep: Iterable[int]) -> "SourceDocument":
        """Restrict to the given indices, preserving document order and original indices."""
        wanted = set(keep)
        return SourceDocument(
            self.question_id, tuple(s for s in self.sentences if s.index in wanted)
        )


@dataclass(frozen=True)
class AnswerSentence:
    index: int
    text: str
    gold_attributions: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        object.__setattr__(self, "gold_attributions", frozenset(self.gold_attributions))
        if self.index < 0:
            raise DataError(f"answer sentence index must be >= 0, got {self.index}")
        if not self.text.strip():
            raise DataError(f"answer sentence {self.index} is empty")


@dataclass(frozen=True)
class AnswerRecord:
    question_id: str
    question: str
    answer_id: str
    sentences: tuple[AnswerSentence, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "sentences", tuple(self.sentences))
        if not self.sentences:
            raise DataError(f"answer {self.answer_id!r} has no sentences")
        if tuple(s.index for s in self.sentences) != tuple(range(len(self.sentences))):
            raise DataError(f"answer {self.answer_id!r}: sentence indices must be 0..m-1")

    @classmethod
    def from_texts(
        cls,
        question_id: str,
        question: str,
        answer_id: str,
        texts: Sequence[str],
        gold: Sequence[Iterable[int]] | None = None,
    ) -> "AnswerRecord":
        gold = gold if gold is not None else [()] * len(texts)
        return cls(
            question_id,
            question,
            answer_id,
            tuple(AnswerSentence(i, t, frozenset(g)) for i, (t, g) in enumerate(zip(texts, gold))),
        )


def segment_sentences(text: str) -> list[str]:
    """Split running text into sentences.

    A break happens after ``.``, ``!`` or ``?`` (plus any closing quotes or
    brackets) when the next token starts with an uppercase letter or a digit
    and the token carrying the punctuation is not a known abbreviation.
    Whitespace inside each sentence is collapsed to single spaces.
    """
    flat = " ".join(text.split())
    if not flat:
        return []
    out: list[str] = []
    start = 0
    for m in _CANDIDATE_BREAK.finditer(flat):
        end = m.end()
        nxt = flat[end + 1] if end + 1 < len(flat) else ""
        if not (nxt.isupper() or nxt.isdigit()):
            continue
        last_token = flat[start:end].rsplit(" ", 1)[-1].lstrip(_LEADING_PUNCT)
        if last_token in ABBREVIATIONS:
            continue
        out.append(flat[start:end])
        start = end + 1
    out.append(flat[start:])
    return out


def normalize(text: str) -> str:
    return " ".join(unicodedata.normalize("NFC", text.casefold()).split())


def is_extractive(answer_sentence: str, document: SourceDocument) -> bool:
    """True when the answer sentence is a verbatim (normalized) copy of a source sentence."""
    target = normalize(answer_sentence)
    return any(normalize(s.text) == target for s in document.sentences)
