"""Training objectives with analytic gradients.

All functions return ``(value, gradient)`` of a quantity to be *maximized*;
the gradient is laid out by the :class:`ParamLayout` passed in. Every
objective subtracts ``lam * ||theta||^2`` over the active parameters.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .design import BinaryForward, PreferenceForward, label_fidelity, label_fidelity_grad

PROB_CLIP = 1e-12


def _log_clipped(x):
    """log of x clipped into [PROB_CLIP, 1 - PROB_CLIP], and its derivative."""
    inside = (x > PROB_CLIP) & (x < 1.0 - PROB_CLIP)
    xc = np.clip(x, PROB_CLIP, 1.0 - PROB_CLIP)
    return np.log(xc), np.where(inside, 1.0 / xc, 0.0)


def _penalized(value, grad, theta, lam):
    return value - lam * np.dot(theta, theta), grad - 2.0 * lam * theta


def _cross_entropy(design, layout, theta, target, weight, lam):
    fw = BinaryForward(design, layout, theta)
    log_p, dlog_p = _log_clipped(fw.p)
    log_q, dlog_q = _log_clipped(fw.q)
    value = float(np.sum(weight * (target * log_p + (1.0 - target) * log_q)))
    grad = fw.backward(weight * target * dlog_p, weight * (1.0 - target) * dlog_q)
    return _penalized(value, grad, theta, lam)


def loglik_single(design, layout, theta, labels, lam):
    """Cross-entropy against one 0/1 label per question (NaN = unlabeled)."""
    labels = np.asarray(labels, dtype=float)
    weight = (~np.isnan(labels)).astype(float)
    return _cross_entropy(design, layout, theta, np.nan_to_num(labels), weight, lam)


def positive_fractions(design):
    total = design.n_pos + design.n_neg
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(total > 0, design.n_pos / np.maximum(total, 1), 0.0)
    return r, (total > 0).astype(float)


def loglik_kl(design, layout, theta, lam):
    """Cross-entropy against the observed fraction of positive labels."""
    r, weight = positive_fractions(design)
    return _cross_entropy(design, layout, theta, r, weight, lam)


def _fidelity(design, layout, theta):
    if "gamma1" in layout:
        return label_fidelity(design, layout, theta)
    zeros = np.zeros(design.n_questions)
    return zeros, zeros, None, None


@dataclass
class EMState:
    t: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    observed_loglik: list = field(default_factory=list)


def e_step(design, layout, theta):
    """Posterior P(y_q = 1 | observed labels) under the current parameters."""
    fw = BinaryForward(design, layout, theta)
    log_a, log_b, alpha, beta = _fidelity(design, layout, theta)
    log_pos = log_a + np.log(np.clip(fw.p, PROB_CLIP, 1.0))
    log_neg = log_b + np.log(np.clip(fw.q, PROB_CLIP, 1.0))
    t = np.exp(log_pos - np.logaddexp(log_pos, log_neg))
    if alpha is None:
        alpha = beta = np.full(design.n_questions, np.nan)
    return EMState(t, alpha, beta)


def expected_complete_loglik(design, layout, theta, t, lam):
    """sum_q t log(a_q p_q) + (1 - t) log(b_q (1 - p_q)) for fixed posteriors t."""
    t = np.asarray(t, dtype=float)
    fw = BinaryForward(design, layout, theta)
    log_p, dlog_p = _log_clipped(fw.p)
    log_q, dlog_q = _log_clipped(fw.q)
    log_a, log_b, alpha, beta = _fidelity(design, layout, theta)
    value = float(np.sum(t * (log_a + log_p) + (1.0 - t) * (log_b + log_q)))
    grad = fw.backward(t * dlog_p, (1.0 - t) * dlog_q)
    if alpha is not None:
        label_fidelity_grad(design, layout, alpha, beta, t, 1.0 - t, grad)
    return _penalized(value, grad, theta, lam)


def observed_loglik(design, layout, theta, lam, penalized=True):
    """sum_q log(a_q p_q + b_q (1 - p_q)), optionally minus the L2 term.

    The penalized form is what EM with a regularized M-step increases
    monotonically, so it is the convergence monitor.
    """
    fw = BinaryForward(design, layout, theta)
    log_a, log_b, _, _ = _fidelity(design, layout, theta)
    log_p, _ = _log_clipped(fw.p)
    log_q, _ = _log_clipped(fw.q)
    value = float(np.sum(logsumexp(np.stack([log_a + log_p, log_b + log_q]), axis=0)))
    if penalized:
        value -= lam * float(np.dot(theta, theta))
    return value


def observed_loglik_grad(design, layout, theta, lam):
    """Value and gradient of the penalized observed log-likelihood.

    By Fisher's identity the gradient equals that of the expected complete
    log-likelihood evaluated at the current posterior.
    """
    state = e_step(design, layout, theta)
    _, grad = expected_complete_loglik(design, layout, theta, state.t, lam)
    return observed_loglik(design, layout, theta, lam), grad


def loglik_open(pdesign, layout, theta, lam):
    """Weighted sum of log p_{q, a > abar} over sampled comparisons.

    Comparison weights (1/|A_q| for the multi-answer objective, 1 for the
    single-answer one) are fixed when the design is built.
    """
    fw = PreferenceForward(pdesign, layout, theta)
    log_p, dlog_p = _log_clipped(fw.p)
    value = float(np.dot(pdesign.pair_weight, log_p))
    grad = fw.backward(pdesign.pair_weight * dlog_p)
    return _penalized(value, grad, theta, lam)
