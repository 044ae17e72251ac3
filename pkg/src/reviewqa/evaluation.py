"""Test-set construction and metrics for binary and open-ended questions."""

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.stats import rankdata

from .errors import DataError

SILVER = "silver"
GOLD = "gold"
ACCURACY_GRID = tuple(round(0.1 * k, 1) for k in range(10))


@dataclass(frozen=True)
class BinaryTestSet:
    standard: str
    items: tuple  # (question_id, resolved_label)

    def __len__(self):
        return len(self.items)

    @property
    def question_ids(self):
        return [qid for qid, _ in self.items]

    @property
    def labels(self):
        return np.array([y for _, y in self.items], dtype=int)


def build_silver(questions):
    """Majority label per question; ties are dropped."""
    items = []
    for q in questions:
        if q.n_total == 0 or q.n_pos == q.n_neg:
            continue
        items.append((q.question_id, int(q.n_pos > q.n_neg)))
    return BinaryTestSet(SILVER, tuple(items))


def build_gold(questions):
    """Only unanimously labeled questions."""
    items = []
    for q in questions:
        if q.n_total == 0 or q.ambiguous:
            continue
        items.append((q.question_id, int(q.n_pos > 0)))
    return BinaryTestSet(GOLD, tuple(items))


def _aligned(predictions, testset):
    try:
        scores = np.array([predictions[qid] for qid in testset.question_ids], dtype=float)
    except KeyError as exc:
        raise DataError(f"no prediction for test question {exc.args[0]!r}") from None
    return scores, testset.labels


def auc_from_scores(scores, labels):
    """Rank-sum (Mann-Whitney) AUC; tied scores count one half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined unless both classes are present")
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_threshold_sweep(scores, labels):
    """Area under the ROC curve traced by thresholds ``p >= t`` (trapezoids)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    n_pos = np.sum(labels == 1)
    n_neg = np.sum(labels == 0)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined unless both classes are present")
    tpr, fpr = [0.0], [0.0]
    for t in np.unique(scores)[::-1]:
        above = scores >= t
        tpr.append(np.sum(above & (labels == 1)) / n_pos)
        fpr.append(np.sum(above & (labels == 0)) / n_neg)
    return float(trapezoid(tpr, fpr))


def auc_binary(predictions, testset):
    scores, labels = _aligned(predictions, testset)
    return auc_from_scores(scores, labels)


def confident_subset(predictions, question_ids, a):
    """The ceil((1 - a) |Q|) question ids with largest |p - 0.5|, ties by id."""
    if not 0.0 <= a < 1.0:
        raise ValueError("a must lie in [0, 1)")
    n_keep = math.ceil(round((1.0 - a) * len(question_ids), 9))
    ranked = sorted(question_ids, key=lambda qid: (-abs(predictions[qid] - 0.5), qid))
    return ranked[:n_keep]


def accuracy_at(predictions, testset, a):
    """Accuracy over the most confident (1 - a) share; p = 0.5 predicts yes."""
    labels = dict(testset.items)
    kept = confident_subset(predictions, list(labels), a)
    if not kept:
        raise DataError("accuracy@a: no questions kept")
    hits = sum(int(predictions[qid] >= 0.5) == labels[qid] for qid in kept)
    return hits / len(kept)


def accuracy_grid(predictions, testset, grid=ACCURACY_GRID):
    return {f"{a:.1f}": accuracy_at(predictions, testset, a) for a in grid}


@dataclass(frozen=True)
class OpenEvalSet:
    """Per question, each true answer paired with its sampled non-answers."""

    entries: dict  # question_id -> tuple of (answer, tuple of non-answers)
    neg_per_answer: int
    rng_seed: object = None

    def comparisons(self):
        return {qid: [(a, na) for a, nas in rows for na in nas]
                for qid, rows in self.entries.items()}

    def flat(self):
        return [(qid, a, na) for qid, rows in self.entries.items()
                for a, nas in rows for na in nas]

    def non_answers(self, question_id):
        return [na for _, nas in self.entries[question_id] for na in nas]


def sample_non_answers(questions, neg_per_answer=1, seed=None, rng=None, pool=None):
    """Draw ``neg_per_answer`` distinct non-answers for every answer.

    Non-answers come uniformly from ``pool`` (default: every answer of
    ``questions``) minus the question's own answers.
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    if pool is None:
        pool = [a for q in questions for a in q.answers]
    pool = list(pool)
    per_question = {}
    for a in pool:
        per_question[a.question_id] = per_question.get(a.question_id, 0) + 1
    entries = {}
    for q in questions:
        if not q.answers:
            continue
        if len(pool) - per_question.get(q.question_id, 0) < neg_per_answer:
            raise DataError(f"answer pool too small to sample {neg_per_answer} "
                            f"non-answers for question {q.question_id!r}")
        rows = []
        for a in q.answers:
            # rejection sampling is uniform over the allowed part of the pool
            picked = []
            while len(picked) < neg_per_answer:
                cand = int(rng.integers(len(pool)))
                other = pool[cand]
                if other.question_id == q.question_id or cand in picked:
                    continue
                picked.append(cand)
            rows.append((a, tuple(pool[i] for i in picked)))
        entries[q.question_id] = tuple(rows)
    return OpenEvalSet(entries, neg_per_answer, seed)


def auc_open(model, eval_set):
    """Mean over questions of the mean over answers of 1[p(a > abar) > 0.5].

    ``model`` is either a callable ``(question_id, answer, non_answer) -> p``
    or an array of probabilities aligned with ``eval_set.flat()``.
    """
    flat = eval_set.flat()
    if callable(model):
        probs = np.array([model(qid, a, na) for qid, a, na in flat], dtype=float)
    else:
        probs = np.asarray(model, dtype=float)
    if len(probs) != len(flat):
        raise ValueError("one probability per comparison required")
    per_question = {}
    for (qid, a, _), p in zip(flat, probs):
        per_question.setdefault(qid, {}).setdefault(a.answer_id, []).append(p > 0.5)
    if not per_question:
        raise DataError("open-ended evaluation set is empty")
    q_scores = [np.mean([np.mean(hits) for hits in answers.values()])
                for answers in per_question.values()]
    return float(np.mean(q_scores))


def question_split(question_ids, train_fraction=2 / 3):
    """Deterministic train/test assignment by a hash of the question id."""
    train, test = [], []
    for qid in question_ids:
        h = int.from_bytes(hashlib.sha1(qid.encode("utf-8")).digest()[:8], "big")
        (train if h / 2.0 ** 64 < train_fraction else test).append(qid)
    return train, test


def split_corpus(corpus, train_fraction=2 / 3):
    train, test = question_split(list(corpus.questions), train_fraction)
    return corpus.subset(train), corpus.subset(test)


METRICS_SCHEMA = {
    "type": "object",
    "required": ["category", "variant", "standard", "auc_b", "accuracy_at", "auc_o", "n_test"],
    "properties": {
        "category": {"type": "string"},
        "variant": {"type": "string"},
        "standard": {"enum": [SILVER, GOLD]},
        "auc_b": {"type": ["number", "null"]},
        "accuracy_at": {
            "type": "object",
            "propertyNames": {"pattern": "^0\\.[0-9]$"},
            "additionalProperties": {"type": "number"},
        },
        "auc_o": {"type": ["number", "null"]},
        "n_test": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}


@dataclass
class MetricsRecord:
    category: str
    variant: str
    standard: str
    auc_b: object
    accuracy_at: dict = field(default_factory=dict)
    auc_o: object = None
    n_test: int = 0

    def to_dict(self):
        return {"category": self.category, "variant": self.variant,
                "standard": self.standard, "auc_b": self.auc_b,
                "accuracy_at": self.accuracy_at, "auc_o": self.auc_o,
                "n_test": self.n_test}


def binary_metrics(predictions, testset, category, variant, auc_o=None):
    try:
        auc_b = auc_binary(predictions, testset)
    except ValueError:
        auc_b = None
    grid = accuracy_grid(predictions, testset) if len(testset) else {}
    return MetricsRecord(category, variant, testset.standard, auc_b, grid, auc_o, len(testset))
