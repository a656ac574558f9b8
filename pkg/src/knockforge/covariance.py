"""Covariance estimators feeding the Gaussian knockoff sampler.

Three estimators with one result type: the raw empirical covariance, its
Ledoit-Wolf shrinkage toward a scaled identity, and a Graphical Lasso fit by
block coordinate descent over columns of the covariance (each block is an L1
subproblem solved by the shared Gram-form kernel). A held-out log-likelihood
grid search picks the Graphical Lasso penalty when nothing better is known.

All estimators return exactly symmetric matrices with their smallest
eigenvalue recomputed and attached; assert_psd is the single gate through
which any matrix must pass before factorization, with an explicit jitter
budget and a warning whenever jitter was actually spent.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ._rng import NS_COVARIANCE, substream
from .errors import (
    ContractViolationError,
    ConvergenceWarning,
    DegenerateInputError,
    NonPsdError,
    NumericalFailureError,
    PsdRepairWarning,
)
from .regression import solve_gram_lasso

__all__ = [
    "CovarianceEstimate",
    "empirical_covariance",
    "ledoit_wolf",
    "graphical_lasso",
    "alpha_grid_select",
    "assert_psd",
]

GLASSO_TOL = 1e-4
GLASSO_MAX_ITER = 100
DEFAULT_ALPHA_GRID_SCALES = (0.01, 0.05, 0.1, 0.2, 0.5)
DEFAULT_JITTER_SCALE = 1e-8  # of mean diagonal, assert_psd default budget


@dataclass(frozen=True)
class CovarianceEstimate:
    """A p x p covariance estimate plus how it was obtained.

    sigma is exactly symmetric. min_eigenvalue is recomputed from the final
    sigma (not carried through the algebra), so downstream code can trust it.
    precision is populated by the Graphical Lasso, None elsewhere.
    """

    sigma: np.ndarray
    method: str
    shrinkage: float | None = None
    alpha: float | None = None
    converged: bool = True
    min_eigenvalue: float = field(default=np.nan)
    precision: np.ndarray | None = None
    dual_path: tuple | None = None  # graphical lasso: log det W per outer sweep


def _validate_data(x, min_rows=1):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < min_rows or x.shape[1] < 1:
        raise ContractViolationError(f"data must be 2-d with at least {min_rows} row(s), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ContractViolationError("data contains non-finite values")
    return x


def _symmetrize(m, budget=1e-12):
    asym = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
    if asym > budget * scale:
        raise ContractViolationError(f"matrix asymmetry {asym:.3e} exceeds budget")
    return (m + m.T) / 2.0


def _min_eig(m):
    return float(np.linalg.eigvalsh(m)[0])


def empirical_covariance(x):
    """Maximum-likelihood covariance, (1/n) normalization, columns centered."""
    x = _validate_data(x)
    n = x.shape[0]
    xc = x - x.mean(axis=0)
    s = _symmetrize(xc.T @ xc / n)
    return CovarianceEstimate(sigma=s, method="empirical", min_eigenvalue=_min_eig(s))


def ledoit_wolf(x):
    """Shrinkage toward the scaled identity (tr(S)/p) * I.

    The shrinkage intensity is the closed-form optimum for squared Frobenius
    risk; the output is positive definite whenever the data are not constant.
    """
    x = _validate_data(x)
    n, p = x.shape
    xc = x - x.mean(axis=0)
    s = _symmetrize(xc.T @ xc / n)
    mu = float(np.trace(s)) / p
    if mu <= 0.0:
        raise DegenerateInputError("all columns are constant; covariance has zero trace")
    delta_ = float(np.sum((s - mu * np.eye(p)) ** 2)) / p
    if delta_ == 0.0:
        shrink = 0.0
    else:
        x2 = xc**2
        beta_ = float(np.sum(x2.T @ x2 / n - s**2)) / (n * p)
        shrink = min(beta_, delta_) / delta_
    sigma = (1.0 - shrink) * s + shrink * mu * np.eye(p)
    sigma = _symmetrize(sigma)
    return CovarianceEstimate(
        sigma=sigma, method="ledoit_wolf", shrinkage=float(shrink), min_eigenvalue=_min_eig(sigma)
    )


def _glasso_dual_gap(s, theta, alpha):
    # primal minus dual at a feasible pair: tr(S Theta) - p + alpha * ||Theta||_1,off
    p = s.shape[0]
    off_l1 = float(np.sum(np.abs(theta)) - np.sum(np.abs(np.diag(theta))))
    return float(np.sum(s * theta)) - p + alpha * off_l1


def graphical_lasso(x, alpha, tol=GLASSO_TOL, max_iter=GLASSO_MAX_ITER):
    """Sparse-precision covariance estimate at penalty ``alpha``.

    Block coordinate descent over columns of the working covariance W; the
    diagonal is unpenalized, so W keeps the empirical variances. Each outer
    sweep maximizes the dual objective log det W block by block, which makes
    the recorded dual path monotone. Stops when the duality gap falls below
    ``tol``; hitting ``max_iter`` emits a ConvergenceWarning and returns the
    current iterate with converged=False.
    """
    x = _validate_data(x, min_rows=2)
    alpha = float(alpha)
    if alpha < 0:
        raise ContractViolationError(f"alpha must be >= 0, got {alpha}")
    n, p = x.shape
    xc = x - x.mean(axis=0)
    s = _symmetrize(xc.T @ xc / n)
    if float(np.trace(s)) <= 0.0:
        raise DegenerateInputError("all columns are constant; covariance has zero trace")
    if p == 1:
        sig = s.copy()
        return CovarianceEstimate(
            sigma=sig, method="graphical_lasso", alpha=alpha, converged=True,
            min_eigenvalue=_min_eig(sig), precision=np.array([[1.0 / sig[0, 0]]]),
        )

    w = s.copy()
    theta = np.linalg.pinv(w)
    betas = np.zeros((p, p - 1))  # warm starts, one row per column problem
    idx_cache = [np.concatenate([np.arange(j), np.arange(j + 1, p)]) for j in range(p)]
    gap = np.inf
    dual_path = []
    converged = False
    n_iter = 0
    for n_iter in range(1, int(max_iter) + 1):
        for j in range(p):
            idx = idx_cache[j]
            w11 = w[np.ix_(idx, idx)]
            s12 = s[idx, j]
            beta, _, _, _ = solve_gram_lasso(
                w11, s12, alpha, tol=1e-10, max_iter=2000, warm_start=betas[j]
            )
            betas[j] = beta
            w12 = w11 @ beta
            w[idx, j] = w12
            w[j, idx] = w12
            # precision column recovered from the block inverse identity
            den = w[j, j] - w12 @ beta
            if not np.isfinite(den) or den <= 0:
                raise NumericalFailureError(
                    f"graphical lasso lost positive definiteness at column {j}"
                )
            theta[j, j] = 1.0 / den
            theta[idx, j] = -beta / den
            theta[j, idx] = theta[idx, j]
        if not np.all(np.isfinite(w)):
            raise NumericalFailureError("graphical lasso produced non-finite values")
        sign, logdet = np.linalg.slogdet(w)
        if sign <= 0:
            raise NumericalFailureError("graphical lasso working covariance lost PD")
        dual_path.append(float(logdet))
        gap = _glasso_dual_gap(s, theta, alpha)
        if abs(gap) <= tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"graphical lasso did not converge in {max_iter} sweeps (gap {gap:.3e})",
            ConvergenceWarning,
            stacklevel=2,
        )
    sigma = _symmetrize(w)
    return CovarianceEstimate(
        sigma=sigma,
        method="graphical_lasso",
        alpha=alpha,
        converged=converged,
        min_eigenvalue=_min_eig(sigma),
        precision=_symmetrize(theta),
        dual_path=tuple(dual_path),
    )


def alpha_grid_select(x, grid=None, folds=3, seed=0):
    """Pick the Graphical Lasso penalty by held-out Gaussian log-likelihood.

    Default grid: {0.01, 0.05, 0.1, 0.2, 0.5} scaled by the largest
    off-diagonal of the empirical correlation. Rows are split into ``folds``
    deterministic seeded folds; the score of an alpha is the mean over folds
    of log det Theta - tr(S_test Theta). Ties go to the larger (sparser)
    alpha. Returns (best_alpha, {alpha: score}).
    """
    x = _validate_data(x, min_rows=2)
    n, p = x.shape
    if p < 2:
        raise ContractViolationError("alpha selection needs at least 2 columns")
    if folds < 2 or folds > n:
        raise ContractViolationError(f"folds must be in [2, n], got {folds}")
    if grid is None:
        emp = empirical_covariance(x).sigma
        d = np.sqrt(np.diag(emp))
        if np.any(d <= 0):
            raise DegenerateInputError("constant column; correlation undefined")
        corr = emp / np.outer(d, d)
        off_max = float(np.max(np.abs(corr - np.diag(np.diag(corr)))))
        if off_max <= 0:
            off_max = 1.0  # exactly orthogonal sample; any tiny alpha behaves alike
        grid = [scale * off_max for scale in DEFAULT_ALPHA_GRID_SCALES]
    grid = sorted(float(a) for a in grid)
    if not grid:
        raise ContractViolationError("alpha grid is empty")

    order = substream(seed, NS_COVARIANCE).permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[order] = np.arange(n) % folds
    scores = {}
    for alpha in grid:
        fold_scores = []
        for k in range(folds):
            train = x[fold_of != k]
            test = x[fold_of == k]
            try:
                est = graphical_lasso(train, alpha)
            except NumericalFailureError:
                fold_scores.append(-np.inf)
                continue
            theta = est.precision
            sign, logdet = np.linalg.slogdet(theta)
            if sign <= 0:
                fold_scores.append(-np.inf)
                continue
            s_test = empirical_covariance(test).sigma
            fold_scores.append(float(logdet - np.sum(s_test * theta)))
        scores[alpha] = float(np.mean(fold_scores))
    best = max(grid, key=lambda a: (scores[a], a))
    if not np.isfinite(scores[best]):
        raise NumericalFailureError("no alpha on the grid produced a usable fit")
    return best, scores


def assert_psd(m, jitter_max=None):
    """Gate a symmetric matrix through a positive-semidefiniteness check.

    Returns (matrix, eps). If the smallest eigenvalue is negative, the
    smallest diagonal jitter restoring PSD is added and reported through a
    PsdRepairWarning; a repair larger than ``jitter_max`` (default 1e-8 times
    the mean diagonal) raises NonPsdError instead of silently distorting.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractViolationError(f"expected a square matrix, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericalFailureError("matrix contains non-finite values")
    m = _symmetrize(m)
    if jitter_max is None:
        jitter_max = DEFAULT_JITTER_SCALE * max(float(np.trace(m)) / m.shape[0], 1e-300)
    lo = _min_eig(m)
    if lo >= 0.0:
        return m, 0.0
    eps = (-lo) * (1.0 + 1e-6) + np.finfo(np.float64).tiny
    if eps > jitter_max:
        raise NonPsdError(
            f"smallest eigenvalue {lo:.6e} needs jitter {eps:.3e}, over budget {jitter_max:.3e}"
        )
    warnings.warn(
        f"matrix repaired to PSD with diagonal jitter {eps:.3e}",
        PsdRepairWarning,
        stacklevel=2,
    )
    return m + eps * np.eye(m.shape[0]), float(eps)
