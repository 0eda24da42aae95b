import json
import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from answer_attribution.datasets import (
    CanonicalRecord,
    DatasetStats,
    compute_stats,
    make_record,
    read_canonical,
    record_to_dict,
    reformat_hagrid,
    reformat_verifiability,
    strip_citations,
    validate_record,
    write_canonical,
)
from answer_attribution.errors import DataError


def write_jsonl(path: Path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")


def verifiability_row(**over):
    row = {
        "question_id": "v1",
        "question": "What happened?",
        "answer_id": "v1-bing",
        "pages": [
            {"id": "P1", "content": "Alpha one. Alpha two. Alpha three."},
            {"id": "P2", "content": "Beta one. Beta two."},
        ],
        "sentences": [
            {"text": "Answer first.", "citations": ["P2"], "support": "full", "supporting_sentences": ["Beta two."]},
            {"text": "Answer second.", "citations": ["P1", "P2"], "support": "full",
             "supporting_sentences": ["Alpha three.", "Beta one."]},
            {"text": "Answer third.", "citations": ["P1"], "support": "full", "supporting_sentences": ["Alpha one."]},
        ],
    }
    row.update(over)
    return row


def test_verifiability_pseudo_document(tmp_path):
    write_jsonl(tmp_path / "train.jsonl", [verifiability_row()])
    drops = []
    (rec,) = reformat_verifiability(tmp_path, drops)
    assert drops == []
    # P2 is cited first, so its sentences open the pseudo-document
    assert [s.text for s in rec.document] == ["Beta one.", "Beta two.", "Alpha one.", "Alpha two.", "Alpha three."]
    assert [set(s.gold_attributions) for s in rec.answer.sentences] == [{1}, {0, 4}, {2}]
    assert (rec.split, rec.question_id, rec.answer_id) == ("train", "v1", "v1-bing")


def test_verifiability_partial_support_dropped(tmp_path):
    row = verifiability_row()
    row["sentences"][1]["support"] = "partial"
    write_jsonl(tmp_path / "dev.jsonl", [row])
    drops = []
    assert reformat_verifiability(tmp_path, drops) == []
    assert len(drops) == 1 and "partial" in drops[0].reason


def test_verifiability_dangling_gold_dropped(tmp_path):
    row = verifiability_row()
    row["sentences"][0]["supporting_sentences"] = ["Not on any page."]
    write_jsonl(tmp_path / "test.jsonl", [row, verifiability_row(answer_id="ok")])
    drops = []
    recs = reformat_verifiability(tmp_path, drops)
    assert [r.answer_id for r in recs] == ["ok"]
    assert [d.answer_id for d in drops] == ["v1-bing"]
    assert "not found" in drops[0].reason


def test_verifiability_uncited_sentence_has_empty_gold_and_duplicates_merge(tmp_path):
    row = verifiability_row(
        pages={"P1": "Shared line. Unique one.", "P2": "Shared   line. Unique two."},
        sentences=[
            {"text": "Intro.", "citations": [], "support": None},
            {"text": "Claim.", "citations": ["P1", "P2"], "support": "full",
             "supporting_sentences": ["Shared line.", "Unique two."]},
        ],
    )
    write_jsonl(tmp_path / "train.jsonl", [row])
    (rec,) = reformat_verifiability(tmp_path)
    assert [s.text for s in rec.document] == ["Shared line.", "Unique one.", "Unique two."]
    assert [set(s.gold_attributions) for s in rec.answer.sentences] == [set(), {0, 2}]


def test_verifiability_missing_dir(tmp_path):
    with pytest.raises(DataError, match=str(tmp_path / "nope")):
        reformat_verifiability(tmp_path / "nope")
    with pytest.raises(DataError, match="train.jsonl"):
        reformat_verifiability(tmp_path)


def hagrid_row(answers, quotes=None):
    return {
        "query_id": "h1",
        "query": "What is A?",
        "quotes": quotes or [{"idx": 1, "text": "Passage one."}, {"idx": 2, "text": "Passage two."}],
        "answers": answers,
    }


def test_hagrid_markers_become_gold(tmp_path):
    write_jsonl(tmp_path / "dev.jsonl", [hagrid_row([{"answer": "A is B [1]. C is D [2]."}])])
    (rec,) = reformat_hagrid(tmp_path)
    assert [s.text for s in rec.answer.sentences] == ["A is B.", "C is D."]
    assert [set(s.gold_attributions) for s in rec.answer.sentences] == [{0}, {1}]
    assert [s.text for s in rec.document] == ["Passage one.", "Passage two."]
    assert (rec.split, rec.answer_id) == ("dev", "h1-0")


def test_hagrid_variants(tmp_path):
    write_jsonl(
        tmp_path / "train.jsonl",
        [
            hagrid_row(
                [
                    {"answer": "No citation here. Both apply. [1][2] Then more [1, 2]."},
                    {"answer": "ignored", "sentences": [
                        {"text": "Marked [2].", "attributable": 1},
                        {"text": "Unsupported [1].", "attributable": 0},
                    ]},
                    {"answer": "Bad pointer [3]."},
                ]
            )
        ],
    )
    (tmp_path / "test.jsonl").write_text("this file is never read\n")
    drops = []
    recs = reformat_hagrid(tmp_path, drops)
    assert [r.answer_id for r in recs] == ["h1-0", "h1-1"]
    first, second = recs
    assert [s.text for s in first.answer.sentences] == ["No citation here.", "Both apply.", "Then more."]
    assert [set(s.gold_attributions) for s in first.answer.sentences] == [set(), {0, 1}, {0, 1}]
    assert [set(s.gold_attributions) for s in second.answer.sentences] == [{1}, set()]
    assert len(drops) == 1 and drops[0].answer_id == "h1-2" and "unlisted" in drops[0].reason


def test_strip_citations():
    assert strip_citations("A is B [1].") == ("A is B.", [1])
    assert strip_citations("X [1, 3] and Y [2]") == ("X and Y", [1, 3, 2])
    assert strip_citations("plain") == ("plain", [])


def test_hagrid_duplicate_passages_merge(tmp_path):
    quotes = [{"idx": 1, "text": "Same text."}, {"idx": 2, "text": "same  TEXT."}, {"idx": 3, "text": "Other."}]
    write_jsonl(tmp_path / "dev.jsonl", [hagrid_row([{"answer": "Claim [2]. Next [3]."}], quotes)])
    (rec,) = reformat_hagrid(tmp_path)
    assert [s.text for s in rec.document] == ["Same text.", "Other."]
    assert [set(s.gold_attributions) for s in rec.answer.sentences] == [{0}, {1}]


# --- fuzzing: reformatters only ever emit valid records ----------------------------------

_mutation = st.sampled_from(["none", "drop_key", "null", "wrong_type", "bad_support", "bad_cite"])


def _mutate(row, kind, rnd):
    if kind == "drop_key":
        row.pop(rnd.choice(sorted(row)))
    elif kind == "null":
        row[rnd.choice(sorted(row))] = None
    elif kind == "wrong_type":
        row[rnd.choice(sorted(row))] = 17
    return row


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.lists(_mutation, min_size=1, max_size=6), st.randoms())
def test_reformatters_fuzz(tmp_path, kinds, rnd):
    v_rows, h_rows = [], []
    for i, kind in enumerate(kinds):
        v = verifiability_row(answer_id=f"a{i}")
        if kind == "bad_support":
            v["sentences"][0]["support"] = rnd.choice(["partial", "none", None])
        if kind == "bad_cite":
            v["sentences"][2]["supporting_sentences"] = ["Missing."]
        v_rows.append(_mutate(v, kind, rnd))
        h = hagrid_row([{"answer": "A [1]. B [3]." if kind == "bad_cite" else "A [1]. B [2]."}])
        h["query_id"] = f"h{i}"
        h_rows.append(_mutate(h, kind, rnd))
    for name, rows, fn in (("v", v_rows, reformat_verifiability), ("h", h_rows, reformat_hagrid)):
        d = tmp_path / f"{name}{rnd.random()}"
        write_jsonl(d / "train.jsonl", rows)
        drops = []
        recs = fn(d, drops)
        for r in recs:
            validate_record(r)
        assert len(recs) + len(drops) == len(rows)


# --- canonical JSONL ------------------------------------------------------------------


def sample_records():
    return [
        make_record("q1", "q1-a", "Why?", ["One.", "Two.", "Three."], ["Ans one.", "Ans two."], [{0, 2}, set()], "train"),
        make_record("q1", "q1-b", "Why?", ["Ünïcode “quotes”."], ["Other."], [{0}], "dev"),
        make_record("q2", "q2-a", "How?", ["X.", "Y."], ["Z."], [{1}], "test"),
    ]


def test_round_trip(tmp_path):
    recs = sample_records()
    write_canonical(recs, tmp_path / "d.jsonl")
    assert read_canonical(tmp_path / "d.jsonl") == recs
    line = json.loads((tmp_path / "d.jsonl").read_text(encoding="utf-8").splitlines()[0])
    assert list(line) == ["question_id", "answer_id", "question", "split", "document", "answer"]
    assert line["answer"]["sentences"][0] == {"index": 0, "text": "Ans one.", "gold_attributions": [0, 2]}


_word = st.text(alphabet="abcdefgh", min_size=1, max_size=6)


@st.composite
def records(draw):
    n = draw(st.integers(1, 5))
    doc = [f"{w} {i}." for i, w in enumerate(draw(st.lists(_word, min_size=n, max_size=n)))]
    m = draw(st.integers(1, 3))
    ans = draw(st.lists(_word, min_size=m, max_size=m))
    gold = [draw(st.sets(st.integers(0, n - 1), max_size=n)) for _ in range(m)]
    qid = draw(st.sampled_from(["q1", "q2", "q3"]))
    aid = draw(st.text(alphabet="xyz", min_size=1, max_size=4))
    return make_record(qid, aid, draw(_word), doc, ans, gold, draw(st.sampled_from(["train", "dev", "test"])))


@settings(max_examples=50, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.lists(records(), max_size=5))
def test_round_trip_property(tmp_path, recs):
    path = tmp_path / "p.jsonl"
    write_canonical(recs, path)
    assert read_canonical(path) == recs


def test_truncated_line_names_line(tmp_path):
    path = tmp_path / "d.jsonl"
    write_canonical(sample_records(), path)
    text = path.read_text(encoding="utf-8").splitlines()
    path.write_text(text[0] + "\n" + text[1][:40] + "\n", encoding="utf-8")
    with pytest.raises(DataError, match=r"d\.jsonl:2"):
        read_canonical(path)


def test_empty_file(tmp_path):
    (tmp_path / "e.jsonl").write_text("")
    assert read_canonical(tmp_path / "e.jsonl") == []


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(extra=1),
        lambda d: d["document"]["sentences"][0].update(score=1),
        lambda d: d["answer"]["sentences"][0].update(gold_attributions=[99]),
        lambda d: d.update(split="validation"),
        lambda d: d["document"]["sentences"].append({"index": 3, "text": "one."}),
        lambda d: d.pop("question"),
    ],
)
def test_invalid_records_rejected(tmp_path, mutate):
    raw = record_to_dict(sample_records()[0])
    mutate(raw)
    (tmp_path / "bad.jsonl").write_text(json.dumps(raw) + "\n")
    with pytest.raises(DataError, match=":1:"):
        read_canonical(tmp_path / "bad.jsonl")


# --- stats -------------------------------------------------------------------------------


def test_stats_empty():
    assert compute_stats([]).as_tuple() == (0, 0, 0, 0, 0)


def test_stats_single_record():
    rec = make_record("q", "a", "?", ["a.", "b.", "c.", "d."], ["x.", "y."], [{0, 1}, {2}], "dev")
    assert compute_stats([rec]).as_tuple() == (1, 4.0, 1.5, 2.0, 1.0)


def test_stats_answers_per_question():
    recs = sample_records()[:2]
    assert compute_stats(recs).avg_answers_per_question == 2.0


def test_stats_reports_both_attribution_denominators():
    rec = make_record("q", "a", "?", ["a.", "b.", "c."], ["x.", "y.", "z."], [{0, 1}, set(), {2}], "dev")
    st_ = compute_stats([rec])
    assert st_.avg_attributions_per_sentence == 1.5
    assert st_.avg_attributions_per_sentence_all == 1.0


@settings(max_examples=50, deadline=None)
@given(st.lists(records(), min_size=1, max_size=5), st.lists(records(), min_size=1, max_size=5))
def test_stats_union_is_weighted_mean(a, b):
    # keep the question ids of the two parts disjoint
    b = [make_record("B" + r.question_id, r.answer_id, r.question, [s.text for s in r.document],
                     [s.text for s in r.answer.sentences],
                     [s.gold_attributions for s in r.answer.sentences], r.split) for r in b]
    sa, sb, su = compute_stats(a), compute_stats(b), compute_stats(a + b)
    assert su.size == sa.size + sb.size
    w = lambda x, y, wx, wy: (x * wx + y * wy) / (wx + wy)  # noqa: E731
    assert su.avg_source_sentences == pytest.approx(w(sa.avg_source_sentences, sb.avg_source_sentences, sa.size, sb.size))
    assert su.avg_sentences_per_answer == pytest.approx(
        w(sa.avg_sentences_per_answer, sb.avg_sentences_per_answer, sa.size, sb.size))
    qa, qb = len({r.question_id for r in a}), len({r.question_id for r in b})
    assert su.avg_answers_per_question == pytest.approx(
        w(sa.avg_answers_per_question, sb.avg_answers_per_question, qa, qb))
    ga = sum(1 for r in a for s in r.answer.sentences if s.gold_attributions)
    gb = sum(1 for r in b for s in r.answer.sentences if s.gold_attributions)
    if ga + gb:
        assert su.avg_attributions_per_sentence == pytest.approx(
            w(sa.avg_attributions_per_sentence, sb.avg_attributions_per_sentence, ga, gb))


def test_stats_type_defaults():
    assert DatasetStats() == DatasetStats(0, 0.0, 0.0, 0.0, 0.0)


def test_canonical_record_rejects_duplicate_sentences():
    with pytest.raises(DataError, match="duplicate"):
        make_record("q", "a", "?", ["Same.", "same."], ["x."], [set()], "dev")
