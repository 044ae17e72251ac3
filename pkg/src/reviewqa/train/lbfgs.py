"""Limited-memory BFGS with a strong-Wolfe line search.

Minimizes ``f`` given a callable returning ``(value, gradient)``. The
search direction comes from the two-loop recursion over the last ``m``
curvature pairs; steps satisfy the strong Wolfe conditions, found by
bracketing followed by cubic-interpolation zoom.
"""

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITER = "max_iter"
LINE_SEARCH_FAILED = "line_search_failed"


@dataclass
class LBFGSResult:
    x: np.ndarray
    value: float
    grad: np.ndarray
    status: str
    n_iter: int
    n_evals: int


def _check_finite(value, grad, where):
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NumericalError(f"non-finite objective or gradient at {where}")


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic interpolating (a, fa, ga) and (b, fb, gb), or None."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - ga * gb
    if rad < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(rad)
    denom = gb - ga + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def strong_wolfe(phi, f0, g0, step=1.0, c1=1e-4, c2=0.9, max_evals=30):
    """Find a step along a line satisfying the strong Wolfe conditions.

    ``phi(t)`` returns ``(value, directional_derivative, payload)``. Returns
    ``(t, value, payload)`` or ``None`` when no acceptable step was found.
    """
    evals = 0
    t_prev, f_prev, g_prev = 0.0, f0, g0
    t = step
    best = None
    while evals < max_evals:
        f, g, payload = phi(t)
        evals += 1
        if best is None or f < best[1]:
            best = (t, f, payload)
        if f > f0 + c1 * t * g0 or (evals > 1 and f >= f_prev):
            return _zoom(phi, f0, g0, t_prev, f_prev, g_prev, t, f, g, c1, c2,
                         max_evals - evals)
        if abs(g) <= -c2 * g0:
            return t, f, payload
        if g >= 0:
            return _zoom(phi, f0, g0, t, f, g, t_prev, f_prev, g_prev, c1, c2,
                         max_evals - evals)
        t_prev, f_prev, g_prev = t, f, g
        t = 2.0 * t
    return None


def _zoom(phi, f0, g0, lo, f_lo, g_lo, hi, f_hi, g_hi, c1, c2, budget):
    for _ in range(max(budget, 0)):
        t = _cubic_min(lo, f_lo, g_lo, hi, f_hi, g_hi)
        left, right = min(lo, hi), max(lo, hi)
        margin = 0.1 * (right - left)
        if t is None or not (left + margin <= t <= right - margin):
            t = 0.5 * (lo + hi)
        f, g, payload = phi(t)
        if f > f0 + c1 * t * g0 or f >= f_lo:
            hi, f_hi, g_hi = t, f, g
        else:
            if abs(g) <= -c2 * g0:
                return t, f, payload
            if g * (hi - lo) >= 0:
                hi, f_hi, g_hi = lo, f_lo, g_lo
            lo, f_lo, g_lo = t, f, g
        if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
            break
    return None


def lbfgs_minimize(fun, x0, memory=10, max_iter=200, grad_tol=1e-5, c1=1e-4, c2=0.9,
                   callback=None):
    """Minimize ``fun`` from ``x0``.

    Stops when ``max|grad| < grad_tol`` (status ``converged``), after
    ``max_iter`` iterations (``max_iter``), or when the line search fails
    (``line_search_failed``; the best point so far is returned).
    """
    if memory < 1:
        raise ValueError("memory must be >= 1")
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    n_evals = 1
    _check_finite(f, g, "the initial point")
    history = deque(maxlen=memory)
    status = MAX_ITER
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g), initial=0.0) < grad_tol:
            status = CONVERGED
            it -= 1
            break
        d = _two_loop(g, history)
        slope = float(np.dot(g, d))
        if slope >= 0:
            # curvature memory went stale; restart from steepest descent
            history.clear()
            d = -g
            slope = -float(np.dot(g, g))
        step = 1.0 if history else min(1.0, 1.0 / max(np.linalg.norm(g), 1e-300))

        def phi(t, x=x, d=d):
            nonlocal n_evals
            xt = x + t * d
            ft, gt = fun(xt)
            n_evals += 1
            _check_finite(ft, gt, f"iteration {it}")
            return ft, float(np.dot(gt, d)), (xt, gt)

        found = strong_wolfe(phi, f, slope, step=step, c1=c1, c2=c2)
        if found is None:
            status = LINE_SEARCH_FAILED
            log.warning("line search failed at iteration %d (f=%.10g)", it, f)
            it -= 1
            break
        _, f_new, (x_new, g_new) = found
        s, y = x_new - x, g_new - g
        sy = float(np.dot(s, y))
        if sy > 1e-12 * np.dot(y, y):
            history.append((s, y, 1.0 / sy))
        x, f, g = x_new, f_new, g_new
        if callback is not None:
            callback(it, x, f)
    else:
        if np.max(np.abs(g), initial=0.0) < grad_tol:
            status = CONVERGED
    return LBFGSResult(x, float(f), g, status, it, n_evals)


def _two_loop(g, history):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(history):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    if history:
        s, y, _ = history[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for (s, y, rho), a in zip(history, reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return -q
