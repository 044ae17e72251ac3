import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from reviewqa.corpus import (
    BagOfWordsVectorizer,
    Vocabulary,
    build_vocabulary,
    featurize,
    ingest,
    read_jsonl,
)
from reviewqa.errors import DataError
from reviewqa.text import tokenize

from .conftest import make_corpus


def vocab(tokens):
    return Vocabulary({t: i for i, t in enumerate(tokens)}, {t: 1 for t in tokens})


def test_featurize_tf_l2():
    fv = featurize(["good", "good", "lens"], vocab(["good", "lens"]))
    assert fv.entries == pytest.approx([(0, 2 / math.sqrt(5)), (1, 1 / math.sqrt(5))])


def test_featurize_oov_and_single():
    v = vocab(["good", "lens"])
    empty = featurize(["zoom"], v)
    assert len(empty) == 0 and empty.norm == 0.0
    assert featurize(["lens"], v).entries == [(1, 1.0)]


@given(st.lists(st.sampled_from(list("abcdefgxyz")), min_size=1, max_size=40))
def test_featurize_invariants(tokens):
    v = vocab(list("abcdefg"))
    fv = featurize(tokens, v)
    if any(t in v for t in tokens):
        assert abs(fv.norm - 1.0) < 1e-9
    assert np.all(np.diff(fv.indices) > 0)
    assert np.all(fv.values > 0)
    assert np.all(fv.indices < v.size)
    assert featurize(tokenize(" ".join(tokens)), v) == fv


def test_vocabulary_cap_and_ties():
    docs = [["a", "b"]] * 5 + [["c"]]
    v = build_vocabulary(docs, max_size=2)
    assert v.tokens == ["a", "b"]
    assert build_vocabulary([["x", "y", "z"]], max_size=10).size == 3


def test_vocabulary_cap_binds():
    docs = [[f"t{k}"] for k in range(10_000)]
    assert build_vocabulary(docs, max_size=5000).size == 5000


def test_vocabulary_rejects_zero_cap():
    with pytest.raises(ValueError):
        build_vocabulary([["a"]], max_size=0)


@given(st.lists(st.lists(st.sampled_from(list("pqrstuvw")), max_size=6), max_size=20),
       st.integers(1, 10))
def test_vocabulary_invariants(docs, cap):
    v = build_vocabulary(docs, cap)
    assert sorted(v.token_to_index.values()) == list(range(v.size))
    assert all(v.doc_freq[t] >= 1 for t in v.tokens)
    assert build_vocabulary(list(reversed(docs)), cap).token_to_index == v.token_to_index


def test_linkage_and_drop_counts():
    corpus = make_corpus(
        {"p1": [("Nice lens. Sharp.", 5, "u1"), ("Too heavy.", 2, "u2"), ("Fine.", 3, "u3")]},
        [("q1", "p1", "Is it sharp?"), ("q2", "p1", "How heavy is it?"),
         ("q3", "ghost", "Is it real?")])
    assert set(corpus.questions) == {"q1", "q2"}
    assert corpus.dropped == {"questions": 1}
    experts = corpus.experts("q1")
    assert experts == corpus.experts("q2")
    assert len(experts) == 4 and {s.review_id for s in experts} == {"p1-r0", "p1-r1", "p1-r2"}
    assert corpus.questions["q1"].is_binary and not corpus.questions["q2"].is_binary


def test_helpfulness_and_rating_fields():
    corpus = make_corpus({"p": [("A.", 1, "u"), ("B.", 5, "v")]}, [])
    by_review = {s.review_id: s for s in corpus.sentences["p"]}
    assert by_review["p-r0"].helpfulness == (0.0, 0.0)
    assert by_review["p-r1"].helpfulness == (0.5, 0.5)
    assert by_review["p-r0"].centered_rating == -1.0
    assert by_review["p-r1"].centered_rating == 1.0


def _write(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return path


def test_read_jsonl_reports_line(tmp_path):
    p = tmp_path / "products.jsonl"
    p.write_text('{"product_id": "a", "category": "x"}\n{oops\n')
    with pytest.raises(DataError, match=r"products.jsonl:2"):
        read_jsonl(p, "products")


def test_read_jsonl_type_checks(tmp_path):
    p = _write(tmp_path / "reviews.jsonl",
               [{"review_id": "r", "product_id": "p", "reviewer_id": "u", "text": "t",
                 "rating": 7, "helpful_yes": 0, "helpful_total": 0}])
    with pytest.raises(DataError, match="rating"):
        read_jsonl(p, "reviews")


def test_ingest_duplicates_and_missing(tmp_path):
    prods = _write(tmp_path / "p.jsonl", [{"product_id": "a", "category": "x"}] * 2)
    empty = _write(tmp_path / "e.jsonl", [])
    with pytest.raises(DataError, match="duplicate"):
        ingest(prods, empty, empty, empty)
    with pytest.raises(DataError, match="nope.jsonl"):
        ingest(tmp_path / "nope.jsonl", empty, empty, empty)


def test_question_counts():
    corpus = make_corpus({"p": [("Works.", 4, "u")]}, [("q", "p", "Does it work?")])
    q = corpus.questions["q"]
    assert (q.n_pos, q.n_neg, q.n_total) == (0, 0, 0)
    assert q.pos_fraction is None


def test_bag_of_words_vectorizer():
    vec = BagOfWordsVectorizer(max_features=3).fit(["a a b", "a c", "d"])
    assert list(vec.get_feature_names_out()) == ["a", "b", "c"]
    X = vec.transform(["a b b"])
    assert X.shape == (1, 3)
    assert np.isclose(np.linalg.norm(X.toarray()), 1.0)
