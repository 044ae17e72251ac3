"""Yes/no labels for answers to binary questions.

Binary questions are detected by rule. Their answers are scored by a small
logistic regression over unigram frequencies plus first-word "yes"/"no"
indicators, and only the most confident share of predictions is kept.
"""

import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, log_expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .corpus import BagOfWordsVectorizer
from .errors import DataError
from .text import is_binary_question, tokenize
from .train.lbfgs import lbfgs_minimize

__all__ = ["is_binary_question", "AnswerLabeler", "LabeledAnswer", "train_answer_labeler",
           "label_answers", "aggregate_labels", "apply_labels", "label_corpus",
           "ambiguity_stats", "load_seeds", "bundled_seeds_path"]


@dataclass(frozen=True)
class LabeledAnswer:
    answer_id: str
    label: int
    confidence: float

    def to_dict(self):
        return {"answer_id": self.answer_id, "label": self.label,
                "confidence": self.confidence}


def _first_word_indicators(texts):
    out = np.zeros((len(texts), 2))
    for i, text in enumerate(texts):
        tokens = tokenize(text)
        if tokens:
            out[i, 0] = tokens[0] == "yes"
            out[i, 1] = tokens[0] == "no"
    return out


class AnswerLabeler(ClassifierMixin, BaseEstimator):
    """L2-regularized logistic regression on answer text.

    Features are unit-normalized unigram frequencies plus two indicators
    for a leading "yes" or "no"; the bias is not penalized.
    """

    def __init__(self, lam=1e-2, max_features=5000, max_iter=500):
        self.lam = lam
        self.max_features = max_features
        self.max_iter = max_iter

    def _features(self, texts):
        words = self.vectorizer_.transform(texts)
        return sp.hstack([words, sp.csr_matrix(_first_word_indicators(texts))]).tocsr()

    def fit(self, X, y):
        texts = list(X)
        y = np.asarray(y, dtype=float)
        if len(texts) != len(y):
            raise ValueError("X and y lengths differ")
        if len(np.unique(y)) < 2:
            raise DataError("seed set must contain both yes and no answers")
        self.classes_ = np.array([0, 1])
        self.vectorizer_ = BagOfWordsVectorizer(self.max_features).fit(texts)
        F = self._features(texts)
        n_feat = F.shape[1]
        lam = self.lam

        def negloglik(theta):
            w, b = theta[:n_feat], theta[n_feat]
            z = F @ w + b
            value = np.sum(y * log_expit(z) + (1 - y) * log_expit(-z)) - lam * np.dot(w, w)
            r = y - expit(z)
            grad = np.append(F.T @ r - 2 * lam * w, r.sum())
            return -value, -grad

        res = lbfgs_minimize(negloglik, np.zeros(n_feat + 1), max_iter=self.max_iter,
                             grad_tol=1e-6)
        self.coef_ = res.x[:n_feat]
        self.intercept_ = float(res.x[n_feat])
        return self

    @property
    def first_word_weights(self):
        check_is_fitted(self, "coef_")
        return {"yes": float(self.coef_[-2]), "no": float(self.coef_[-1])}

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return self._features(list(X)) @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        p = expit(self.decision_function(X))
        return np.column_stack([1 - p, p])

    def predict(self, X):
        return (self.decision_function(X) >= 0).astype(int)


def load_seeds(path):
    texts, labels = [], []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                texts.append(str(rec["answer_text"]))
                labels.append(int(rec["label"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                raise DataError(f"{path}:{lineno}: expected "
                                '{"answer_text": str, "label": 0|1}') from None
            if labels[-1] not in (0, 1):
                raise DataError(f"{path}:{lineno}: label must be 0 or 1")
    if not texts:
        raise DataError(f"seed file {path} is empty")
    return texts, labels


def bundled_seeds_path():
    return resources.files("reviewqa") / "data" / "seeds.jsonl"


def train_answer_labeler(seed_texts, seed_labels, lam=1e-2):
    return AnswerLabeler(lam=lam).fit(seed_texts, seed_labels)


def label_answers(answers, labeler, keep_fraction=0.5):
    """Label every answer, keep the ceil(keep_fraction * n) most confident.

    Confidence is max(p, 1 - p), which orders answers exactly as |score|.
    Ties are broken by answer id.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must lie in (0, 1]")
    answers = list(answers)
    if not answers:
        return []
    p = labeler.predict_proba([a.text for a in answers])[:, 1]
    conf = np.maximum(p, 1.0 - p)
    n_keep = math.ceil(round(keep_fraction * len(answers), 9))
    order = sorted(range(len(answers)), key=lambda i: (-conf[i], answers[i].answer_id))
    return [LabeledAnswer(answers[i].answer_id, int(p[i] >= 0.5), float(conf[i]))
            for i in order[:n_keep]]


def aggregate_labels(question, labeled_answers):
    """Attach labels to the question's answers and recount n+ / n-."""
    by_id = {la.answer_id: la for la in labeled_answers}
    answers = []
    for a in question.answers:
        la = by_id.get(a.answer_id)
        if la is None:
            answers.append(replace(a, label=None, label_confidence=0.0))
        else:
            answers.append(replace(a, label=la.label, label_confidence=la.confidence))
    n_pos = sum(1 for a in answers if a.label == 1)
    n_neg = sum(1 for a in answers if a.label == 0)
    return replace(question, answers=tuple(answers), n_pos=n_pos, n_neg=n_neg)


def apply_labels(corpus, labeled_answers):
    """Corpus with labels aggregated onto its binary questions.

    Labels for answers of open-ended questions are ignored.
    """
    labeled_answers = list(labeled_answers)
    questions = [aggregate_labels(q, labeled_answers) if q.is_binary else q
                 for q in corpus.questions.values()]
    return corpus.with_questions(questions)


def label_corpus(corpus, labeler, keep_fraction=0.5, per_category=False):
    """Run the labeler over all answers to binary questions and filter.

    The confidence filter is global unless ``per_category`` is set.
    """
    groups = {}
    for q in corpus.binary_questions():
        key = corpus.products[q.product_id].category if per_category else None
        groups.setdefault(key, []).extend(q.answers)
    labeled = []
    for key in sorted(groups, key=str):
        labeled.extend(label_answers(groups[key], labeler, keep_fraction))
    return apply_labels(corpus, labeled), labeled


def ambiguity_stats(questions):
    labeled = [q for q in questions if q.is_binary and q.n_total > 0]
    n_amb = sum(1 for q in labeled if q.ambiguous)
    n_labels = sum(q.n_total for q in labeled)
    n_pos = sum(q.n_pos for q in labeled)
    return {
        "binary_questions": sum(1 for q in questions if q.is_binary),
        "labeled_questions": len(labeled),
        "ambiguous_questions": n_amb,
        "ambiguous_share": n_amb / len(labeled) if labeled else 0.0,
        "labels": n_labels,
        "positive_share": n_pos / n_labels if n_labels else 0.0,
    }
