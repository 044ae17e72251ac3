"""scikit-learn style front end for the mixture-of-experts models.

``X`` is always a :class:`~reviewqa.corpus.Corpus`: labels live on its
questions and the experts of each question are its product's sentences.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .corpus import Corpus
from .errors import DataError
from .moe import OPEN_VARIANTS, predict_binary, predict_preference, rank_reviews
from .train.design import (
    BinaryForward,
    ParamLayout,
    PreferenceForward,
    build_pair_design,
    build_preference_design,
)
from .train.trainer import TrainConfig, train


def check_corpus(X):
    if not isinstance(X, Corpus):
        raise TypeError(f"expected a Corpus, got {type(X).__name__}")
    return X


class MixtureOfExpertsQA(ClassifierMixin, BaseEstimator):
    """Review-sentence mixture of experts for product questions.

    Parameters mirror :class:`~reviewqa.train.TrainConfig`; ``variant``
    selects the objective (``moe``, ``kl-moe``, ``em-moe``, ``em-moe-s`` for
    yes/no questions, ``s-moe``, ``m-moe``, ``m-moe-s`` for open-ended ones).
    """

    def __init__(self, variant="moe", lam=1e-3, lbfgs_memory=10, lbfgs_max_iters=200,
                 lbfgs_grad_tol=1e-5, em_max_rounds=50, em_rel_tol=1e-6,
                 neg_samples_per_answer=1, label_policy="top_voted", random_state=0,
                 frozen=()):
        self.variant = variant
        self.lam = lam
        self.lbfgs_memory = lbfgs_memory
        self.lbfgs_max_iters = lbfgs_max_iters
        self.lbfgs_grad_tol = lbfgs_grad_tol
        self.em_max_rounds = em_max_rounds
        self.em_rel_tol = em_rel_tol
        self.neg_samples_per_answer = neg_samples_per_answer
        self.label_policy = label_policy
        self.random_state = random_state
        self.frozen = frozen

    def train_config(self):
        return TrainConfig(
            variant=self.variant, lam=self.lam, lbfgs_memory=self.lbfgs_memory,
            lbfgs_max_iters=self.lbfgs_max_iters, lbfgs_grad_tol=self.lbfgs_grad_tol,
            em_max_rounds=self.em_max_rounds, em_rel_tol=self.em_rel_tol,
            neg_samples_per_answer=self.neg_samples_per_answer,
            rng_seed=self.random_state, label_policy=self.label_policy,
            frozen=tuple(self.frozen))

    def fit(self, X, y=None, init=None):
        if y is not None:
            raise ValueError("labels are read from the corpus; pass y=None")
        corpus = check_corpus(X)
        result = train(corpus, self.train_config(), init)
        self._set_fitted(result.params, corpus.vocabulary, corpus.stats)
        self.objective_ = result.objective
        self.history_ = list(result.history)
        return self

    @classmethod
    def from_params(cls, params, vocabulary, stats, **kwargs):
        """Wrap already-learned parameters (e.g. loaded from an artifact)."""
        est = cls(variant=params.variant, lam=params.lam, **kwargs)
        est._set_fitted(params, vocabulary, stats)
        return est

    def _set_fitted(self, params, vocabulary, stats):
        self.params_ = params
        self.vocabulary_ = vocabulary
        self.stats_ = stats
        self.classes_ = np.array([0, 1])

    def _check_vocabulary(self, corpus):
        check_is_fitted(self, "params_")
        if corpus.vocabulary.token_to_index != self.vocabulary_.token_to_index:
            raise DataError("corpus vocabulary differs from the model's; "
                            "re-ingest with the same inputs")

    def _reviewers(self):
        return sorted(self.params_.expertise)

    def binary_probabilities(self, X, questions=None):
        """Yes-probability for every binary question of ``X`` (or ``questions``)."""
        corpus = check_corpus(X)
        self._check_vocabulary(corpus)
        questions = corpus.binary_questions() if questions is None else list(questions)
        if not questions:
            return np.zeros(0)
        design = build_pair_design(corpus, questions, reviewers=self._reviewers())
        layout = self._binary_layout(design)
        return BinaryForward(design, layout, layout.pack(self.params_)).p

    def _binary_layout(self, design):
        variant = self.params_.variant
        if variant in OPEN_VARIANTS:
            # an open-ended model still scores yes/no questions with its
            # relevance and interaction terms; xi stays at zero
            variant = "em-moe-s" if self.params_.subjective else "moe"
        return ParamLayout(variant, design.dim, design.reviewers)

    def predict_proba(self, X):
        p = self.binary_probabilities(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.binary_probabilities(X) >= 0.5).astype(int)

    def predictions_by_id(self, X):
        corpus = check_corpus(X)
        questions = [q for q in corpus.binary_questions() if corpus.experts(q)]
        p = self.binary_probabilities(corpus, questions)
        return {q.question_id: float(v) for q, v in zip(questions, p)}

    def preference_proba(self, X, eval_set):
        """p(a > abar) per comparison, aligned with ``eval_set.flat()``."""
        corpus = check_corpus(X)
        self._check_vocabulary(corpus)
        comparisons = eval_set.comparisons()
        pdesign = build_preference_design(corpus, comparisons, reviewers=self._reviewers())
        variant = self.params_.variant if self.params_.variant in OPEN_VARIANTS else (
            "m-moe-s" if self.params_.subjective else "m-moe")
        layout = ParamLayout(variant, pdesign.base.dim, pdesign.base.reviewers)
        p = PreferenceForward(pdesign, layout, layout.pack(self.params_)).p
        return self._align_preferences(pdesign, p, eval_set)

    @staticmethod
    def _align_preferences(pdesign, p, eval_set):
        lookup = {}
        for k, (q, aid, nid) in enumerate(zip(pdesign.pair_question, pdesign.answer_ids,
                                              pdesign.non_answer_ids)):
            lookup.setdefault((pdesign.base.question_ids[q], aid, nid), []).append(p[k])
        out = []
        for qid, a, na in eval_set.flat():
            out.append(lookup[(qid, a.answer_id, na.answer_id)].pop(0))
        return np.array(out)

    # per-question views -------------------------------------------------

    def explain(self, question, X):
        """Mixture output (weights and expert votes) for one question."""
        corpus = check_corpus(X)
        check_is_fitted(self, "params_")
        return predict_binary(question, corpus.experts(question), self.params_,
                              corpus.stats_for(question.product_id))

    def rank_reviews(self, question, X, top_k=10):
        corpus = check_corpus(X)
        check_is_fitted(self, "params_")
        return rank_reviews(question, corpus.experts(question), self.params_,
                            corpus.stats_for(question.product_id), top_k)

    def preference(self, question, answer, non_answer, X):
        corpus = check_corpus(X)
        check_is_fitted(self, "params_")
        return predict_preference(question, answer, non_answer, corpus.experts(question),
                                  self.params_, corpus.stats_for(question.product_id))
