"""Mixture-of-experts scoring over review sentences.

Every sentence of a product's reviews is one expert. Its relevance score
``v`` feeds a softmax over the product's sentences; its prediction score
``w`` feeds a sigmoid vote. The question-level probability is the
relevance-weighted average of the votes.

These are per-question reference implementations; the trainer evaluates
the same quantities in batch (see :mod:`reviewqa.train.design`).
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, logit

from .errors import DataError
from .similarity import similarity_vector

VARIANTS = ("moe", "kl-moe", "em-moe", "em-moe-s", "s-moe", "m-moe", "m-moe-s")
BINARY_VARIANTS = ("moe", "kl-moe", "em-moe", "em-moe-s")
OPEN_VARIANTS = ("s-moe", "m-moe", "m-moe-s")
EM_VARIANTS = ("em-moe", "em-moe-s")

DEFAULT_LAMBDA = 1e-3
LABEL_FIDELITY_PRIOR = 0.8


def is_subjective(variant):
    return variant.endswith("-s")


@dataclass(frozen=True, eq=False)
class ModelParams:
    """All learned weights.

    ``gamma1``/``gamma2`` carry the bias term in their last coordinate.
    Reviewer terms live in dicts keyed by reviewer id; unseen reviewers
    score as zero.
    """

    kappa: np.ndarray
    eta: np.ndarray
    mu: np.ndarray
    xi: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray
    g: np.ndarray
    c: float = 0.0
    expertise: dict = field(default_factory=dict)
    bias: dict = field(default_factory=dict)
    lam: float = DEFAULT_LAMBDA
    variant: str = "moe"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")

    @classmethod
    def zeros(cls, dim, variant="moe", lam=DEFAULT_LAMBDA, reviewers=(),
              gamma_prior=LABEL_FIDELITY_PRIOR):
        gamma = np.zeros(dim + 1)
        gamma[-1] = logit(gamma_prior)
        subj = is_subjective(variant)
        return cls(
            kappa=np.zeros(2), eta=np.zeros(dim), mu=np.zeros(dim), xi=np.zeros(dim),
            gamma1=gamma.copy(), gamma2=gamma.copy(), g=np.zeros(2), c=0.0,
            expertise={u: 0.0 for u in reviewers} if subj else {},
            bias={u: 0.0 for u in reviewers} if subj else {},
            lam=lam, variant=variant)

    @property
    def dim(self):
        return len(self.eta)

    @property
    def subjective(self):
        return is_subjective(self.variant)

    def with_variant(self, variant):
        return replace(self, variant=variant)

    def expertise_of(self, reviewer_id):
        return self.expertise.get(reviewer_id, 0.0)

    def bias_of(self, reviewer_id):
        return self.bias.get(reviewer_id, 0.0)

    def to_dict(self):
        def arr(a):
            return [float(x) for x in a]

        return {
            "variant": self.variant,
            "lambda": float(self.lam),
            "kappa": arr(self.kappa),
            "eta": arr(self.eta),
            "mu": arr(self.mu),
            "xi": arr(self.xi),
            "gamma1": arr(self.gamma1),
            "gamma2": arr(self.gamma2),
            "g": arr(self.g),
            "c": float(self.c),
            "expertise": {k: float(v) for k, v in sorted(self.expertise.items())},
            "bias": {k: float(v) for k, v in sorted(self.bias.items())},
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            kappa=np.array(d["kappa"], dtype=float), eta=np.array(d["eta"], dtype=float),
            mu=np.array(d["mu"], dtype=float), xi=np.array(d["xi"], dtype=float),
            gamma1=np.array(d["gamma1"], dtype=float), gamma2=np.array(d["gamma2"], dtype=float),
            g=np.array(d["g"], dtype=float), c=float(d["c"]),
            expertise=dict(d["expertise"]), bias=dict(d["bias"]),
            lam=float(d["lambda"]), variant=d["variant"])


@dataclass(frozen=True)
class MixtureOutput:
    weights: np.ndarray
    expert_preds: np.ndarray
    combined: float
    sentence_ids: tuple = ()


def _flag(params, subjective):
    return params.subjective if subjective is None else subjective


def amplifier(sentence, params):
    return 1.0 + params.c * sentence.centered_rating + params.bias_of(sentence.reviewer_id)


def relevance_score(question, sentence, params, stats, subjective=None):
    sim = similarity_vector(question.tokens, sentence.tokens, stats)
    v = params.kappa[0] * sim.bm25 + params.kappa[1] * sim.rouge_l
    v += question.features.hadamard(sentence.features).dot(params.eta)
    if _flag(params, subjective):
        v += params.g[0] * sentence.helpfulness[0] + params.g[1] * sentence.helpfulness[1]
        v += params.expertise_of(sentence.reviewer_id)
    return v


def prediction_score_binary(question, sentence, params, subjective=None):
    w = question.features.hadamard(sentence.features).dot(params.mu)
    w += sentence.features.dot(params.xi)
    if _flag(params, subjective):
        w *= amplifier(sentence, params)
    return w


def answer_pair_score(answer, non_answer, sentence, params, subjective=None):
    """Score of ``answer`` being better supported by ``sentence`` than ``non_answer``."""
    w = (answer.features.hadamard(sentence.features).dot(params.mu)
         - non_answer.features.hadamard(sentence.features).dot(params.mu))
    if _flag(params, subjective):
        w *= amplifier(sentence, params)
    return w


def softmax(scores):
    scores = np.asarray(scores, dtype=float)
    e = np.exp(scores - scores.max())
    return e / e.sum()


def relevance_weights(question, sentences, params, stats, subjective=None):
    if len(sentences) == 0:
        raise DataError(f"no reviews for product {question.product_id!r}")
    return softmax([relevance_score(question, s, params, stats, subjective) for s in sentences])


def predict_binary(question, sentences, params, stats, subjective=None):
    weights = relevance_weights(question, sentences, params, stats, subjective)
    preds = expit(np.array([prediction_score_binary(question, s, params, subjective)
                            for s in sentences]))
    return MixtureOutput(weights, preds, float(np.dot(weights, preds)),
                         tuple(s.sentence_id for s in sentences))


def predict_preference(question, answer, non_answer, sentences, params, stats,
                       subjective=None):
    weights = relevance_weights(question, sentences, params, stats, subjective)
    preds = expit(np.array([answer_pair_score(answer, non_answer, s, params, subjective)
                            for s in sentences]))
    return MixtureOutput(weights, preds, float(np.dot(weights, preds)),
                         tuple(s.sentence_id for s in sentences))


@dataclass(frozen=True)
class RankedSentence:
    sentence: object
    weight: float
    prediction: float


def rank_reviews(question, sentences, params, stats, top_k=10, subjective=None):
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    out = predict_binary(question, sentences, params, stats, subjective)
    order = sorted(range(len(sentences)),
                   key=lambda i: (-out.weights[i], sentences[i].sentence_id))
    return [RankedSentence(sentences[i], float(out.weights[i]), float(out.expert_preds[i]))
            for i in order[:top_k]]
