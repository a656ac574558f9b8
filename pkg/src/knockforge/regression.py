"""Penalized linear models used throughout the pipeline.

Two solvers live here: an L1-penalized least-squares fit (cyclic coordinate
descent on the Gram form, numba-compiled) that powers selection statistics,
per-column knockoff regressions and the Graphical Lasso inner problem, and an
L2-regularized logistic classifier (damped Newton) that powers the two-sample
diagnostic. Both are deterministic given their inputs: fixed cyclic update
order, zero initialization, no randomness.

Conventions. The lasso objective is

    (1 / (2n)) * ||y - b0 - X beta||^2 + lambda * ||beta||_1

with columns and response centered internally; columns are NOT rescaled, so
the stationarity conditions and the saturation point lambda_max(X, y) both
live on centered columns of the data as given. Callers that need coefficients
comparable across columns standardize before calling.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import expit

from .errors import ContractViolationError, ConvergenceWarning

__all__ = [
    "LassoFit",
    "LinearClassifierFit",
    "lambda_max",
    "default_lambda",
    "lasso_fit",
    "lasso_kkt_violation",
    "classifier_fit",
    "classifier_predict",
]

LASSO_TOL = 1e-8
LASSO_MAX_ITER = 10_000
LAMBDA_DIVISOR = 100.0
CLASSIFIER_TOL = 1e-8
CLASSIFIER_MAX_ITER = 100


@dataclass(frozen=True)
class LassoFit:
    """Solution of one lasso problem.

    Attributes
    ----------
    coef : ndarray of shape (d,)
        Coefficients on the scale of the columns as given.
    intercept : float
        Fitted intercept, ybar - xbar @ coef.
    lam : float
        Penalty level the problem was solved at.
    n_iter : int
        Coordinate-descent sweeps performed (full and active-set combined).
    converged : bool
        True when both the max coefficient change and the stationarity
        residual reached tolerance before the sweep cap.
    kkt : float
        Max stationarity violation at exit, from the solver's own gradient.
    """

    coef: np.ndarray
    intercept: float
    lam: float
    n_iter: int
    converged: bool
    kkt: float

    def predict(self, x):
        return x @ self.coef + self.intercept


@dataclass(frozen=True)
class LinearClassifierFit:
    """L2-regularized logistic classifier, labels in {0, 1}.

    objective_path holds the penalized negative log-likelihood after each
    accepted Newton step, starting from the zero-weight initial point; step
    halving makes the sequence non-increasing by construction.
    """

    weights: np.ndarray
    bias: float
    converged: bool
    n_iter: int
    objective_path: tuple


def _as_design(x, y=None):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ContractViolationError(f"design must be a nonempty 2-d array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ContractViolationError("design contains non-finite values")
    if y is None:
        return x
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != x.shape[0]:
        raise ContractViolationError(
            f"response shape {y.shape} does not match design with {x.shape[0]} rows"
        )
    if not np.all(np.isfinite(y)):
        raise ContractViolationError("response contains non-finite values")
    return x, y


def lambda_max(x, y):
    """Smallest penalty at which the lasso solution is identically zero.

    Computed as (1/n) * max_j |x_j^T y| with columns centered internally
    (the response is centered implicitly by the column centering).
    """
    x, y = _as_design(x, y)
    n = x.shape[0]
    xc = x - x.mean(axis=0)
    return float(np.max(np.abs(xc.T @ (y - y.mean()))) / n)


def default_lambda(x, y):
    """House penalty rule: lambda_max(x, y) / 100."""
    return lambda_max(x, y) / LAMBDA_DIVISOR


@njit(cache=True, nogil=True)
def _kkt_from_grad(grad, beta, lam):
    worst = 0.0
    for j in range(beta.shape[0]):
        if beta[j] > 0.0:
            v = abs(grad[j] - lam)
        elif beta[j] < 0.0:
            v = abs(grad[j] + lam)
        else:
            v = abs(grad[j]) - lam
            if v < 0.0:
                v = 0.0
        if v > worst:
            worst = v
    return worst


@njit(cache=True, nogil=True)
def _cd_gram(g, c, lam, beta, tol, max_iter, kkt_tol):
    """Cyclic coordinate descent for min 0.5 b'Gb - c'b + lam ||b||_1.

    Mutates beta in place; grad tracks c - G beta. Full sweeps alternate with
    active-set sweeps (glmnet-style); the first sweep is always full, which is
    what gives the first of two duplicate columns the shared weight. Returns
    (n_iter, converged_flag, kkt_violation).
    """
    d = g.shape[0]
    grad = c - np.dot(g, beta)
    it = 0
    kkt = np.inf
    while it < max_iter:
        # full sweep over all coordinates
        it += 1
        dmax = 0.0
        for j in range(d):
            gjj = g[j, j]
            if gjj <= 0.0:
                continue
            z = grad[j] + gjj * beta[j]
            if z > lam:
                bn = (z - lam) / gjj
            elif z < -lam:
                bn = (z + lam) / gjj
            else:
                bn = 0.0
            db = bn - beta[j]
            if db != 0.0:
                beta[j] = bn
                for k in range(d):
                    grad[k] -= g[k, j] * db
                adb = abs(db)
                if adb > dmax:
                    dmax = adb
        if dmax <= tol:
            kkt = _kkt_from_grad(grad, beta, lam)
            if kkt <= kkt_tol:
                return it, True, kkt
            continue
        # refine the current active set until it stops moving
        while it < max_iter:
            it += 1
            dmax = 0.0
            for j in range(d):
                if beta[j] == 0.0:
                    continue
                gjj = g[j, j]
                if gjj <= 0.0:
                    continue
                z = grad[j] + gjj * beta[j]
                if z > lam:
                    bn = (z - lam) / gjj
                elif z < -lam:
                    bn = (z + lam) / gjj
                else:
                    bn = 0.0
                db = bn - beta[j]
                if db != 0.0:
                    beta[j] = bn
                    for k in range(d):
                        grad[k] -= g[k, j] * db
                    adb = abs(db)
                    if adb > dmax:
                        dmax = adb
            if dmax <= tol:
                break
    kkt = _kkt_from_grad(grad, beta, lam)
    return max_iter, kkt <= kkt_tol, kkt


def solve_gram_lasso(g, c, lam, tol=LASSO_TOL, max_iter=LASSO_MAX_ITER, warm_start=None):
    """Solve min 0.5 b'Gb - c'b + lam ||b||_1 directly from Gram inputs.

    The Graphical Lasso inner problem arrives in this form; lasso_fit reduces
    to it with G = Xc'Xc/n, c = Xc'yc/n. Returns (beta, n_iter, converged, kkt).
    """
    g = np.ascontiguousarray(g, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    if warm_start is None:
        beta = np.zeros(c.shape[0])
    else:
        beta = np.array(warm_start, dtype=np.float64, copy=True)
    kkt_tol = 1e-8 * max(1.0, float(np.max(np.abs(c))) if c.size else 1.0)
    n_iter, ok, kkt = _cd_gram(g, c, float(lam), beta, float(tol), int(max_iter), kkt_tol)
    return beta, int(n_iter), bool(ok), float(kkt)


def lasso_fit(x, y, lam, tol=LASSO_TOL, max_iter=LASSO_MAX_ITER, warm_start=None):
    """Fit the lasso at penalty ``lam``.

    Parameters
    ----------
    x : ndarray of shape (n, d)
    y : ndarray of shape (n,)
    lam : float
        Penalty level, >= 0. lambda_max(x, y) saturates every coefficient to 0.
    tol : float
        Convergence tolerance on the max coefficient change per sweep; the
        solver additionally requires its stationarity residual to settle.
    max_iter : int
        Sweep cap. Hitting it emits a ConvergenceWarning, never fails silently.
    warm_start : ndarray, optional
        Initial coefficients (same scale as the output).

    Returns
    -------
    LassoFit
    """
    x, y = _as_design(x, y)
    lam = float(lam)
    if lam < 0:
        raise ContractViolationError(f"lambda must be >= 0, got {lam}")
    n = x.shape[0]
    xm = x.mean(axis=0)
    ym = y.mean()
    xc = x - xm
    g = xc.T @ xc / n
    c = xc.T @ (y - ym) / n
    coef, n_iter, ok, kkt = solve_gram_lasso(g, c, lam, tol=tol, max_iter=max_iter, warm_start=warm_start)
    if not ok:
        warnings.warn(
            f"lasso did not converge in {max_iter} sweeps (stationarity residual {kkt:.3e})",
            ConvergenceWarning,
            stacklevel=2,
        )
    intercept = float(ym - xm @ coef)
    return LassoFit(coef=coef, intercept=intercept, lam=lam, n_iter=n_iter, converged=ok, kkt=kkt)


def lasso_kkt_violation(x, y, fit):
    """Recompute the max stationarity violation of ``fit`` on (x, y).

    Independent of the solver's internal gradient: rebuilds the residual from
    the stored coefficients. Active coordinates must sit at |x_j' r / n| = lam,
    inactive ones below it.
    """
    x, y = _as_design(x, y)
    n = x.shape[0]
    xc = x - x.mean(axis=0)
    r = y - fit.predict(x)
    grad = xc.T @ r / n
    worst = 0.0
    for j in range(x.shape[1]):
        if fit.coef[j] > 0:
            v = abs(grad[j] - fit.lam)
        elif fit.coef[j] < 0:
            v = abs(grad[j] + fit.lam)
        else:
            v = max(0.0, abs(grad[j]) - fit.lam)
        worst = max(worst, v)
    return float(worst)


def _logistic_objective(s, y, w, l2):
    # sum log(1 + e^s) - y*s, stable via logaddexp
    return float(np.sum(np.logaddexp(0.0, s) - y * s) + 0.5 * l2 * (w @ w))


def classifier_fit(features, labels, l2_penalty=1.0, tol=CLASSIFIER_TOL, max_iter=CLASSIFIER_MAX_ITER):
    """Fit the L2-regularized logistic classifier.

    Objective: sum_i logloss_i + (l2_penalty / 2) * ||w||^2, bias unpenalized,
    minimized by damped Newton from a zero initial point. Step halving keeps
    the objective path non-increasing. Deterministic: no randomness anywhere.
    Convergence requires the largest gradient component to reach tol scaled
    by the row count: the objective is a sum over rows, so its float floor
    grows with n and an absolute cut would spin at large n.

    Raises
    ------
    ContractViolationError
        If labels are not {0, 1} or only one class is present.
    """
    z, y = _as_design(features, np.asarray(labels, dtype=np.float64))
    uniq = np.unique(y)
    if not np.all(np.isin(uniq, (0.0, 1.0))):
        raise ContractViolationError(f"labels must be 0/1, got values {uniq}")
    if uniq.size < 2:
        raise ContractViolationError("classifier needs both classes present in training data")
    l2 = float(l2_penalty)
    if l2 < 0:
        raise ContractViolationError(f"l2_penalty must be >= 0, got {l2}")
    n, d = z.shape
    w = np.zeros(d)
    b = 0.0
    s = np.zeros(n)
    obj = _logistic_objective(s, y, w, l2)
    path = [obj]
    converged = False
    it = 0
    flat_steps = 0
    gtol = tol * max(1.0, float(n))
    while True:
        p = expit(s)
        grad_w = z.T @ (p - y) + l2 * w
        grad_b = float(np.sum(p - y))
        gmax = max(float(np.max(np.abs(grad_w))), abs(grad_b))
        if gmax <= gtol:
            converged = True
            break
        if it >= int(max_iter) or flat_steps >= 2:
            break
        dia = p * (1.0 - p)
        # Newton system on (w, b) jointly; tiny floor on the curvature keeps
        # the system solvable when predictions saturate.
        h_ww = (z * dia[:, None]).T @ z
        h_ww[np.diag_indices(d)] += l2 + 1e-12
        h_wb = z.T @ dia
        h_bb = float(np.sum(dia)) + 1e-12
        h = np.empty((d + 1, d + 1))
        h[:d, :d] = h_ww
        h[:d, d] = h_wb
        h[d, :d] = h_wb
        h[d, d] = h_bb
        rhs = np.concatenate([grad_w, [grad_b]])
        try:
            step = np.linalg.solve(h, rhs)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(h, rhs, rcond=None)[0]
        scale = 1.0
        accepted = False
        for _ in range(60):
            w_new = w - scale * step[:d]
            b_new = b - scale * step[d]
            s_new = z @ w_new + b_new
            obj_new = _logistic_objective(s_new, y, w_new, l2)
            if obj_new <= obj:
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            # objective numerically flat in every damped direction; stop here
            break
        flat_steps = flat_steps + 1 if obj_new == obj else 0
        w, b, s, obj = w_new, b_new, s_new, obj_new
        it += 1
        path.append(obj)
    if not converged:
        warnings.warn(
            f"logistic solver did not converge in {max_iter} iterations",
            ConvergenceWarning,
            stacklevel=2,
        )
    return LinearClassifierFit(
        weights=w, bias=float(b), converged=converged, n_iter=it, objective_path=tuple(path)
    )


def classifier_predict(fit, features):
    """Predict 0/1 labels; a score of exactly zero maps to label 0."""
    z = _as_design(features)
    if z.shape[1] != fit.weights.shape[0]:
        raise ContractViolationError(
            f"feature count {z.shape[1]} does not match classifier with {fit.weights.shape[0]} weights"
        )
    return (z @ fit.weights + fit.bias > 0.0).astype(np.int64)
