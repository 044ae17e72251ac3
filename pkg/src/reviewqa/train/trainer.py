"""Fitting loops for every model variant."""

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..errors import DataError
from ..moe import BINARY_VARIANTS, EM_VARIANTS, OPEN_VARIANTS, VARIANTS, ModelParams
from .design import ParamLayout, build_pair_design, build_preference_design
from .lbfgs import LINE_SEARCH_FAILED, lbfgs_minimize
from .objectives import (
    e_step,
    expected_complete_loglik,
    loglik_kl,
    loglik_open,
    loglik_single,
    observed_loglik,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "moe"
    lam: float = 1e-3
    lbfgs_memory: int = 10
    lbfgs_max_iters: int = 200
    lbfgs_grad_tol: float = 1e-5
    em_max_rounds: int = 50
    em_rel_tol: float = 1e-6
    neg_samples_per_answer: int = 1
    rng_seed: int = 0
    label_policy: str = "top_voted"
    frozen: tuple = ()

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if min(self.lam, self.lbfgs_grad_tol, self.em_rel_tol) <= 0:
            raise ValueError("lambda and tolerances must be positive")
        if self.lbfgs_memory < 1 or self.lbfgs_max_iters < 1 or self.em_max_rounds < 1:
            raise ValueError("memory and iteration caps must be >= 1")
        if self.neg_samples_per_answer < 1:
            raise ValueError("neg_samples_per_answer must be >= 1")
        if self.label_policy not in ("top_voted", "random"):
            raise ValueError("label_policy must be 'top_voted' or 'random'")
        object.__setattr__(self, "frozen", tuple(self.frozen))

    def to_dict(self):
        d = asdict(self)
        d["frozen"] = list(self.frozen)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{**d, "frozen": tuple(d.get("frozen", ()))})


@dataclass
class TrainResult:
    params: ModelParams
    objective: float
    history: list = field(default_factory=list)
    statuses: list = field(default_factory=list)


def single_labels(questions, policy="top_voted", rng=None):
    """One 0/1 label per question from its labeled answers.

    ``top_voted`` takes the top-voted labeled answer (falling back to the
    first labeled one); ``random`` draws one labeled answer uniformly.
    """
    out = []
    for q in questions:
        labeled = [a for a in q.answers if a.label is not None]
        if not labeled:
            out.append(np.nan)
        elif policy == "random":
            out.append(float(labeled[rng.integers(len(labeled))].label))
        else:
            top = [a for a in labeled if a.top_voted]
            out.append(float((top or labeled)[0].label))
    return np.array(out)


def _minimize(objective, theta, config, tag):
    res = lbfgs_minimize(lambda th: _negate(objective(th)), theta,
                         memory=config.lbfgs_memory, max_iter=config.lbfgs_max_iters,
                         grad_tol=config.lbfgs_grad_tol)
    log.info("%s: objective %.8f after %d iterations (%s)", tag, -res.value, res.n_iter,
             res.status)
    return res


def _negate(vg):
    value, grad = vg
    return -value, -grad


def initial_params(dim, config, reviewers):
    return ModelParams.zeros(dim, config.variant, config.lam, reviewers)


def binary_training_questions(corpus):
    return [q for q in corpus.binary_questions() if q.n_total > 0 and corpus.experts(q)]


def open_training_questions(corpus):
    return [q for q in corpus.open_questions() if q.answers and corpus.experts(q)]


def train(corpus, config, init=None):
    """Fit ``config.variant`` on the labeled questions of ``corpus``."""
    if config.variant in OPEN_VARIANTS:
        return train_open(corpus, config, init)
    questions = binary_training_questions(corpus)
    if not questions:
        raise DataError(f"variant {config.variant!r} needs labeled binary questions")
    design = build_pair_design(corpus, questions)
    params = init if init is not None else initial_params(design.dim, config, design.reviewers)
    layout = ParamLayout(config.variant, design.dim, design.reviewers, config.frozen, params)
    theta = layout.pack(params)
    if config.variant in EM_VARIANTS:
        return train_em(design, layout, params, config)
    if config.variant == "kl-moe":
        def objective(th):
            return loglik_kl(design, layout, th, config.lam)
    else:
        rng = np.random.default_rng(config.rng_seed)
        labels = single_labels(questions, config.label_policy, rng)

        def objective(th):
            return loglik_single(design, layout, th, labels, config.lam)
    res = _minimize(objective, theta, config, config.variant)
    return TrainResult(layout.unpack(res.x, params), -res.value, [-res.value], [res.status])


def train_em(design, layout, params, config):
    """Alternate E-steps and L-BFGS M-steps; keep the best observed likelihood."""
    theta = layout.pack(params)
    lam = config.lam
    current = observed_loglik(design, layout, theta, lam)
    history = [current]
    statuses = []
    best_value, best_theta = current, theta
    for rnd in range(1, config.em_max_rounds + 1):
        t = e_step(design, layout, theta).t

        def objective(th, t=t):
            return expected_complete_loglik(design, layout, th, t, lam)

        res = _minimize(objective, theta, config, f"em round {rnd} M-step")
        statuses.append(res.status)
        if res.status == LINE_SEARCH_FAILED:
            log.warning("EM round %d: M-step line search failed; keeping current params", rnd)
        theta = res.x
        value = observed_loglik(design, layout, theta, lam)
        log.info("EM round %d: observed log-likelihood %.10f", rnd, value)
        history.append(value)
        if value > best_value:
            best_value, best_theta = value, theta
        if abs(value - history[-2]) < config.em_rel_tol * abs(value):
            break
    return TrainResult(layout.unpack(best_theta, params), best_value, history, statuses)


def build_comparisons(questions, pool, config, multi_answer, rng):
    from ..evaluation import sample_non_answers

    if not multi_answer:
        questions = [_top_answer_only(q) for q in questions]
    sampled = sample_non_answers(questions, config.neg_samples_per_answer, rng=rng, pool=pool)
    return sampled.comparisons()


def _top_answer_only(q):
    top = [a for a in q.answers if a.top_voted]
    return replace(q, answers=((top or list(q.answers))[0],))


def train_open(corpus, config, init=None):
    questions = open_training_questions(corpus)
    if not questions:
        raise DataError(f"variant {config.variant!r} needs open-ended questions with answers")
    multi = config.variant != "s-moe"
    rng = np.random.default_rng(config.rng_seed)
    comparisons = build_comparisons(questions, corpus.answer_pool(), config, multi, rng)
    pdesign = build_preference_design(corpus, comparisons, multi_answer=multi)
    reviewers = pdesign.base.reviewers
    params = init if init is not None else initial_params(pdesign.base.dim, config, reviewers)
    layout = ParamLayout(config.variant, pdesign.base.dim, reviewers, config.frozen, params)

    def objective(th):
        return loglik_open(pdesign, layout, th, config.lam)

    res = _minimize(objective, layout.pack(params), config, config.variant)
    return TrainResult(layout.unpack(res.x, params), -res.value, [-res.value], [res.status])


__all__ = ["TrainConfig", "TrainResult", "train", "train_em", "train_open", "single_labels",
           "BINARY_VARIANTS", "OPEN_VARIANTS"]
