"""Corpus ingestion, vocabulary and bag-of-words features.

Reviews are split into sentences and every sentence becomes one expert of
the mixture. Questions, answers and sentences share one vocabulary whose
document frequencies are counted over review sentences.
"""

import json
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import DataError
from .similarity import CorpusStats
from .text import is_binary_question, split_sentences, tokenize

DEFAULT_VOCAB_SIZE = 5000

BINARY = "binary"
OPEN = "open"


@dataclass(frozen=True)
class Vocabulary:
    token_to_index: dict
    doc_freq: dict

    @property
    def size(self):
        return len(self.token_to_index)

    def __len__(self):
        return len(self.token_to_index)

    def __contains__(self, token):
        return token in self.token_to_index

    @property
    def tokens(self):
        return list(self.token_to_index)

    def to_dict(self):
        return {"tokens": self.tokens,
                "doc_freq": [self.doc_freq[t] for t in self.token_to_index]}

    @classmethod
    def from_dict(cls, d):
        tokens = d["tokens"]
        return cls({t: i for i, t in enumerate(tokens)},
                   dict(zip(tokens, d["doc_freq"])))


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Sparse L2-normalized term-frequency vector."""

    indices: np.ndarray
    values: np.ndarray

    @classmethod
    def empty(cls):
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0))

    @property
    def entries(self):
        return list(zip(self.indices.tolist(), self.values.tolist()))

    @property
    def norm(self):
        return float(np.sqrt(np.dot(self.values, self.values)))

    def __len__(self):
        return len(self.indices)

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return (np.array_equal(self.indices, other.indices)
                and np.array_equal(self.values, other.values))

    def dot(self, dense):
        return float(np.dot(dense[self.indices], self.values))

    def hadamard(self, other):
        common, ia, ib = np.intersect1d(self.indices, other.indices,
                                        assume_unique=True, return_indices=True)
        return FeatureVector(common.astype(np.int64), self.values[ia] * other.values[ib])

    def to_dense(self, dim):
        out = np.zeros(dim)
        out[self.indices] = self.values
        return out


def build_vocabulary(token_docs, max_size=DEFAULT_VOCAB_SIZE):
    """Keep the ``max_size`` tokens with highest document frequency.

    Ties are broken lexicographically, so the result only depends on the
    multiset of documents.
    """
    if max_size < 1:
        raise ValueError(f"max_size must be >= 1, got {max_size}")
    df = Counter()
    for tokens in token_docs:
        df.update(set(tokens))
    ranked = sorted(df.items(), key=lambda kv: (-kv[1], kv[0]))[:max_size]
    return Vocabulary({t: i for i, (t, _) in enumerate(ranked)}, dict(ranked))


def featurize(tokens, vocabulary):
    counts = Counter(t for t in tokens if t in vocabulary.token_to_index)
    if not counts:
        return FeatureVector.empty()
    pairs = sorted((vocabulary.token_to_index[t], c) for t, c in counts.items())
    idx = np.fromiter((i for i, _ in pairs), dtype=np.int64, count=len(pairs))
    tf = np.fromiter((c for _, c in pairs), dtype=float, count=len(pairs))
    return FeatureVector(idx, tf / np.sqrt(np.dot(tf, tf)))


def stack_features(vectors, dim):
    """Row-stack feature vectors into a CSR matrix of shape (len, dim)."""
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    for k, v in enumerate(vectors):
        indptr[k + 1] = indptr[k] + len(v)
    if len(vectors):
        indices = np.concatenate([v.indices for v in vectors]).astype(np.int64)
        data = np.concatenate([v.values for v in vectors])
    else:
        indices = np.zeros(0, dtype=np.int64)
        data = np.zeros(0)
    return sp.csr_matrix((data, indices, indptr), shape=(len(vectors), dim))


class BagOfWordsVectorizer(TransformerMixin, BaseEstimator):
    """Fit a document-frequency capped vocabulary; transform to unit tf rows.

    Input documents are raw strings.
    """

    def __init__(self, max_features=DEFAULT_VOCAB_SIZE, drop_stopwords=False):
        self.max_features = max_features
        self.drop_stopwords = drop_stopwords

    def fit(self, X, y=None):
        self.vocabulary_ = build_vocabulary(
            (tokenize(doc, self.drop_stopwords) for doc in X), self.max_features)
        return self

    def transform(self, X):
        check_is_fitted(self, "vocabulary_")
        rows = [featurize(tokenize(doc, self.drop_stopwords), self.vocabulary_) for doc in X]
        return stack_features(rows, self.vocabulary_.size)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "vocabulary_")
        return np.asarray(self.vocabulary_.tokens, dtype=object)


@dataclass(frozen=True)
class Product:
    product_id: str
    category: str


@dataclass(frozen=True, eq=False)
class ExpertSentence:
    sentence_id: str
    review_id: str
    product_id: str
    text: str
    tokens: tuple
    features: FeatureVector
    rating: int
    helpfulness: tuple
    reviewer_id: str

    @property
    def centered_rating(self):
        return (self.rating - 3) / 2.0


@dataclass(frozen=True, eq=False)
class AnswerRecord:
    answer_id: str
    question_id: str
    text: str
    tokens: tuple
    features: FeatureVector
    top_voted: bool = False
    label: Optional[int] = None
    label_confidence: float = 0.0


@dataclass(frozen=True, eq=False)
class QuestionRecord:
    question_id: str
    product_id: str
    text: str
    tokens: tuple
    features: FeatureVector
    qtype: str
    answers: tuple = ()
    n_pos: int = 0
    n_neg: int = 0
    asker_id: Optional[str] = None

    @property
    def n_total(self):
        return self.n_pos + self.n_neg

    @property
    def pos_fraction(self):
        if self.n_total == 0:
            return None
        return self.n_pos / self.n_total

    @property
    def ambiguous(self):
        return self.n_pos > 0 and self.n_neg > 0

    @property
    def labels(self):
        return [a.label for a in self.answers if a.label is not None]

    @property
    def is_binary(self):
        return self.qtype == BINARY


@dataclass(frozen=True, eq=False)
class Corpus:
    products: dict
    questions: dict
    sentences: dict
    vocabulary: Vocabulary
    stats: dict
    dropped: dict = field(default_factory=dict)
    drop_stopwords: bool = False

    def __len__(self):
        return len(self.questions)

    def experts(self, question):
        if isinstance(question, str):
            question = self.questions[question]
        return self.sentences.get(question.product_id, ())

    def stats_for(self, product_id):
        return self.stats[self.products[product_id].category]

    def binary_questions(self):
        return [q for q in self.questions.values() if q.qtype == BINARY]

    def open_questions(self):
        return [q for q in self.questions.values() if q.qtype == OPEN]

    def subset(self, question_ids):
        keep = set(question_ids)
        return replace(self, questions={k: q for k, q in self.questions.items() if k in keep})

    def with_questions(self, questions):
        return replace(self, questions={q.question_id: q for q in questions})

    def answer_pool(self):
        return [a for q in self.questions.values() for a in q.answers]

    def featurize_text(self, text):
        tokens = tuple(tokenize(text, self.drop_stopwords))
        return tokens, featurize(tokens, self.vocabulary)

    def make_question(self, text, product_id, question_id="query"):
        if product_id not in self.products:
            raise DataError(f"unknown product {product_id!r}")
        tokens, feats = self.featurize_text(text)
        qtype = BINARY if is_binary_question(text) else OPEN
        return QuestionRecord(question_id, product_id, text, tokens, feats, qtype)

    def counts_by_category(self):
        """Per-category product/question/answer/review counts."""
        out = {}
        for p in self.products.values():
            row = out.setdefault(p.category, {"products": 0, "questions": 0, "answers": 0,
                                              "reviews": 0, "sentences": 0})
            row["products"] += 1
            sents = self.sentences.get(p.product_id, ())
            row["sentences"] += len(sents)
            row["reviews"] += len({s.review_id for s in sents})
        for q in self.questions.values():
            row = out[self.products[q.product_id].category]
            row["questions"] += 1
            row["answers"] += len(q.answers)
        return dict(sorted(out.items()))


# --- ingestion -----------------------------------------------------------

_SCHEMAS = {
    "products": {"product_id": str, "category": str},
    "reviews": {"review_id": str, "product_id": str, "reviewer_id": str, "text": str,
                "rating": int, "helpful_yes": int, "helpful_total": int},
    "questions": {"question_id": str, "product_id": str, "text": str},
    "answers": {"answer_id": str, "question_id": str, "text": str, "top_voted": bool},
}


def _check_record(kind, rec, where):
    if not isinstance(rec, dict):
        raise DataError(f"{where}: expected a JSON object")
    for key, typ in _SCHEMAS[kind].items():
        if key not in rec:
            raise DataError(f"{where}: missing field {key!r}")
        val = rec[key]
        # bool is a subclass of int; reject it where an int is wanted
        if not isinstance(val, typ) or (typ is int and isinstance(val, bool)):
            raise DataError(f"{where}: field {key!r} must be {typ.__name__}")
    if kind == "reviews":
        if not 1 <= rec["rating"] <= 5:
            raise DataError(f"{where}: rating must be in 1..5")
        if not 0 <= rec["helpful_yes"] <= rec["helpful_total"]:
            raise DataError(f"{where}: need 0 <= helpful_yes <= helpful_total")


def read_jsonl(path, kind):
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{where}: malformed JSON ({exc.msg})") from None
            _check_record(kind, rec, where)
            records.append(rec)
    return records


def _unique(records, key, kind):
    seen = {}
    for rec in records:
        if rec[key] in seen:
            raise DataError(f"duplicate {key} {rec[key]!r} in {kind}")
        seen[rec[key]] = rec
    return seen


def helpfulness(helpful_yes, helpful_total):
    if helpful_total == 0:
        return (0.0, 0.0)
    return (helpful_yes / helpful_total, (helpful_total - helpful_yes) / helpful_total)


def ingest(products_path, questions_path, answers_path, reviews_path,
           max_vocab=DEFAULT_VOCAB_SIZE, drop_stopwords=False):
    return build_corpus(read_jsonl(products_path, "products"),
                        read_jsonl(reviews_path, "reviews"),
                        read_jsonl(questions_path, "questions"),
                        read_jsonl(answers_path, "answers"),
                        max_vocab=max_vocab, drop_stopwords=drop_stopwords)


def build_corpus(products, reviews, questions, answers=(),
                 max_vocab=DEFAULT_VOCAB_SIZE, drop_stopwords=False):
    """Link raw records into a featurized :class:`Corpus`.

    Reviews and questions naming an unknown product, and answers naming an
    unknown question, are dropped and counted in ``Corpus.dropped``.
    """
    prods = {pid: Product(pid, r["category"])
             for pid, r in _unique(products, "product_id", "products").items()}
    review_map = _unique(reviews, "review_id", "reviews")
    question_map = _unique(questions, "question_id", "questions")
    answer_map = _unique(answers, "answer_id", "answers")
    dropped = Counter()

    raw_sentences = {}
    for rid, r in review_map.items():
        if r["product_id"] not in prods:
            dropped["reviews"] += 1
            continue
        for k, text in enumerate(split_sentences(r["text"])):
            raw_sentences.setdefault(r["product_id"], []).append(
                (f"{rid}:{k:03d}", r, text, tuple(tokenize(text, drop_stopwords))))

    vocab = build_vocabulary((s[3] for group in raw_sentences.values() for s in group),
                             max_vocab)

    sentences = {}
    by_category = {}
    for pid in sorted(raw_sentences):
        group = []
        for sid, r, text, tokens in raw_sentences[pid]:
            group.append(ExpertSentence(
                sid, r["review_id"], pid, text, tokens, featurize(tokens, vocab),
                r["rating"], helpfulness(r["helpful_yes"], r["helpful_total"]),
                r["reviewer_id"]))
            by_category.setdefault(prods[pid].category, []).append(tokens)
        sentences[pid] = tuple(sorted(group, key=lambda s: s.sentence_id))
    stats = {cat: CorpusStats.from_token_lists(toks) for cat, toks in sorted(by_category.items())}

    answers_by_q = {}
    for aid, a in answer_map.items():
        if a["question_id"] not in question_map:
            dropped["answers"] += 1
            continue
        answers_by_q.setdefault(a["question_id"], []).append(a)

    qrecords = {}
    for qid, q in question_map.items():
        if q["product_id"] not in prods:
            dropped["questions"] += 1
            dropped["answers"] += len(answers_by_q.get(qid, ()))
            continue
        tokens = tuple(tokenize(q["text"], drop_stopwords))
        ans = tuple(
            AnswerRecord(a["answer_id"], qid, a["text"],
                         tuple(tokenize(a["text"], drop_stopwords)),
                         featurize(tokenize(a["text"], drop_stopwords), vocab),
                         bool(a["top_voted"]))
            for a in answers_by_q.get(qid, ()))
        qrecords[qid] = QuestionRecord(
            qid, q["product_id"], q["text"], tokens, featurize(tokens, vocab),
            BINARY if is_binary_question(q["text"]) else OPEN, ans,
            asker_id=q.get("asker_id"))

    return Corpus(prods, qrecords, sentences, vocab, stats, dict(+dropped), drop_stopwords)


def attach_answers(corpus, answers):
    """Return a corpus with extra raw answer records featurized and attached."""
    grouped = {}
    for a in answers:
        grouped.setdefault(a["question_id"], []).append(a)
    questions = []
    for q in corpus.questions.values():
        extra = tuple(
            AnswerRecord(a["answer_id"], q.question_id, a["text"],
                         *corpus.featurize_text(a["text"]), bool(a["top_voted"]))
            for a in grouped.get(q.question_id, ()))
        questions.append(replace(q, answers=q.answers + extra))
    return corpus.with_questions(questions)
