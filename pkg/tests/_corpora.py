"""Synthetic corpora and stub scorers shared by the test modules."""

from __future__ import annotations

import random

from answer_attribution.datasets import CanonicalRecord, make_record


class TableScorer:
    """Entailment scorer driven by a table keyed on the set of premise sentences.

    Source sentences are single distinct tokens (``s0``, ``s1``, ...), so a
    premise string splits back into the index set it was built from.
    """

    def __init__(self, table: dict[frozenset[int], float], default: float = 0.0):
        self.table = table
        self.default = default
        self.calls = 0

    def score(self, premise: str, hypothesis: str) -> float:
        self.calls += 1
        key = frozenset(int(tok[1:]) for tok in premise.split())
        return self.table.get(key, self.default)


def token_doc_texts(n: int) -> list[str]:
    return [f"s{i}" for i in range(n)]


def random_table(rng: random.Random, n: int, quantum: float | None = None) -> dict[frozenset[int], float]:
    table = {}
    for mask in range(1, 1 << n):
        v = rng.random()
        if quantum:
            v = round(round(v / quantum) * quantum, 10)
        table[frozenset(i for i in range(n) if mask >> i & 1)] = min(1.0, max(0.0, v))
    return table


def _words(rec: int, sent: int, n: int = 4) -> list[str]:
    return [f"r{rec}x{sent}w{t}" for t in range(n)]


def disjoint_corpus(n_records: int = 20, doc_len: int = 5, answer_len: int = 2) -> list[CanonicalRecord]:
    """Every sentence has its own vocabulary; each answer sentence rewords exactly one source.

    Answer sentences reorder and drop tokens of their source, so they are
    never verbatim copies and survive the extractive filter.
    """
    out = []
    for r in range(n_records):
        doc = [" ".join(_words(r, j)).capitalize() + "." for j in range(doc_len)]
        texts, gold = [], []
        for a in range(answer_len):
            src = (r + 2 * a + 1) % doc_len
            w = _words(r, src)
            texts.append(f"{w[2].capitalize()} {w[0]} {w[3]}.")
            gold.append({src})
        out.append(make_record(f"q{r}", f"q{r}-a0", f"Question {r}?", doc, texts, gold, "test"))
    return out


def composition_corpus(n_records: int = 5) -> list[CanonicalRecord]:
    """Each answer sentence is supported jointly by two sources, split 2 and 3 of its 5 tokens.

    Alone each source scores 0.4 or 0.6 under the lexical proxy, so ranked
    selection at threshold 0.5 keeps only the 3-token source, while optimal
    selection composes both (0.6 then 1.0, a gain of 0.4 > 0.3).
    """
    out = []
    for r in range(n_records):
        t = [f"c{r}t{i}" for i in range(5)]
        doc = [
            f"Filler f{r}a f{r}b.",
            f"{t[0].capitalize()} {t[1]} g{r}a.",
            f"Filler f{r}c f{r}d.",
            f"{t[2].capitalize()} {t[3]} {t[4]} g{r}b.",
            f"Unrelated u{r}a u{r}b.",
        ]
        answer = [f"{t[4].capitalize()} {t[0]} {t[2]} {t[1]} {t[3]}."]
        out.append(make_record(f"cq{r}", f"cq{r}-a0", f"Composition {r}?", doc, answer, [{1, 3}], "test"))
    return out
