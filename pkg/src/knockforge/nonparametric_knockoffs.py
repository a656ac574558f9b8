"""Nonparametric knockoffs: regress each column on the rest, permute residuals.

Three schedules ship. The sequential one rebuilds the joint law column by
column, conditioning each regression on the knockoff columns already drawn.
The parallel one drops that conditioning so every column regression runs
independently; what that shortcut does to knockoff-knockoff covariances is
computable and exposed via parallel_cross_covariance rather than hidden.
The cross-fitted one trains on fold complements and takes residuals on the
held-out fold, so learners that overfit in-sample remain usable.

Randomness policy: every permutation or residual draw comes from a
substream keyed by (seed, module, schedule, column), so results are
bit-identical for a fixed seed no matter how work is scheduled.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._rng import NS_NONPARAMETRIC, resolve_seed, substream
from .errors import (
    ContractViolationError,
    DegenerateInputError,
    SmallSampleWarning,
)
from .regression import LASSO_MAX_ITER, LASSO_TOL, default_lambda, lasso_fit

__all__ = [
    "KNOCKOFF_METHODS",
    "ColumnRecord",
    "KnockoffPair",
    "ResidualPermutation",
    "LinearColumnModel",
    "LassoColumnLearner",
    "permute_residuals",
    "sequential_knockoffs",
    "parallel_knockoffs",
    "crossfit_knockoffs",
    "parallel_cross_covariance",
]

KNOCKOFF_METHODS = ("gaussian", "sequential", "parallel", "crossfit")

MIN_ROWS = 10  # below this, warn; at or below 2, refuse

# substream discriminators under NS_NONPARAMETRIC
_TAG_SEQUENTIAL = 1
_TAG_PARALLEL = 2
_TAG_CROSSFIT = 3
_TAG_PERMUTE = 4
_TAG_SHARED = 5

_MAX_FOLD_RESAMPLES = 100


@dataclass(frozen=True)
class ColumnRecord:
    """What one column's generation actually used."""

    column: int
    lam: float
    residual_variance: float


@dataclass(frozen=True)
class KnockoffPair:
    """A design and its knockoff copy, row i paired with row i."""

    x: np.ndarray
    x_tilde: np.ndarray
    method: str
    seed: int
    generation_log: tuple[ColumnRecord, ...]
    notes: tuple[str, ...] = ()
    internals: dict | None = None

    def __post_init__(self):
        if self.method not in KNOCKOFF_METHODS:
            raise ContractViolationError(
                f"method must be one of {KNOCKOFF_METHODS}, got {self.method!r}"
            )
        if self.x.shape != self.x_tilde.shape:
            raise ContractViolationError("x and x_tilde must have identical shape")


@dataclass(frozen=True)
class ResidualPermutation:
    """A bijection on row indices, validated at construction."""

    sigma_perm: np.ndarray
    seed: int

    def __post_init__(self):
        perm = np.asarray(self.sigma_perm)
        n = perm.size
        if n == 0 or perm.ndim != 1 or not np.array_equal(
            np.bincount(perm, minlength=n), np.ones(n, dtype=np.int64)
        ):
            raise ContractViolationError("sigma_perm is not a permutation of 0..n-1")

    def apply(self, eps):
        return np.asarray(eps)[self.sigma_perm]


@dataclass(frozen=True)
class LinearColumnModel:
    """Fitted column regressor: prediction is features @ coef + intercept."""

    coef: np.ndarray
    intercept: float
    lam: float

    def predict(self, features):
        return features @ self.coef + self.intercept


@dataclass(frozen=True)
class LassoColumnLearner:
    """Default column learner: lasso at lambda_rule(features, target).

    The rule defaults to one hundredth of the smallest penalty that zeroes
    every coefficient. Any object with a fit(features, target, column)
    method returning something with .predict may replace this; fits must be
    deterministic functions of their inputs or the parallel schedule loses
    its worker-count invariance.
    """

    lambda_rule: object = None
    tol: float = LASSO_TOL
    max_iter: int = LASSO_MAX_ITER

    def fit(self, features, target, column):
        rule = self.lambda_rule if self.lambda_rule is not None else default_lambda
        lam = float(rule(features, target))
        fit = lasso_fit(features, target, lam=lam, tol=self.tol, max_iter=self.max_iter)
        return LinearColumnModel(coef=fit.coef, intercept=fit.intercept, lam=lam)


def _validate_design(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ContractViolationError(f"design must be 2-d, got shape {x.shape}")
    n, p = x.shape
    if p < 2:
        raise ContractViolationError("need at least 2 columns to cross-predict")
    if not np.all(np.isfinite(x)):
        raise ContractViolationError("design contains non-finite values")
    if n <= 2:
        raise DegenerateInputError(
            f"{n} rows cannot support residual permutation; need at least 3"
        )
    if n < MIN_ROWS:
        warnings.warn(
            f"only {n} rows; permuted residuals are statistically fragile below {MIN_ROWS}",
            SmallSampleWarning,
            stacklevel=3,
        )
    spans = x.max(axis=0) - x.min(axis=0)
    dead = np.flatnonzero(spans == 0.0)
    if dead.size:
        raise DegenerateInputError(
            f"column {dead[0]} (0-based) is constant; cannot build its knockoff"
        )
    return x


def permute_residuals(eps, seed=None, strict=False):
    """Reorder a residual vector by one uniform random permutation."""
    seed = resolve_seed(seed, strict=strict)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.ndim != 1 or eps.size < 1:
        raise ContractViolationError("eps must be a 1-d vector with at least one entry")
    rng = substream(seed, NS_NONPARAMETRIC, _TAG_PERMUTE)
    perm = ResidualPermutation(rng.permutation(eps.size), seed)
    return perm.apply(eps)


def _rest_features(x, j, extra=None):
    parts = [x[:, :j], x[:, j + 1 :]]
    if extra is not None and extra.shape[1] > 0:
        parts.append(extra)
    return np.concatenate(parts, axis=1)


def _model_lambda(model):
    return float(getattr(model, "lam", np.nan))


def sequential_knockoffs(x, learner=None, seed=None, strict=False, keep_internals=False):
    """Column-by-column knockoffs, each conditioned on those already built.

    For column j (input order), a learner predicts x[:, j] from the other
    original columns plus knockoff columns 0..j-1; the knockoff column is
    that prediction plus a fresh uniform permutation of the residuals.
    """
    x = _validate_design(x)
    seed = resolve_seed(seed, strict=strict)
    if learner is None:
        learner = LassoColumnLearner()
    n, p = x.shape
    x_tilde = np.empty_like(x)
    log = []
    internals = (
        {"predictions": np.empty_like(x), "residuals": np.empty_like(x), "added": np.empty_like(x)}
        if keep_internals
        else None
    )
    for j in range(p):
        feats = _rest_features(x, j, x_tilde[:, :j])
        model = learner.fit(feats, x[:, j], j)
        pred = model.predict(feats)
        eps = x[:, j] - pred
        rng = substream(seed, NS_NONPARAMETRIC, _TAG_SEQUENTIAL, j)
        moved = ResidualPermutation(rng.permutation(n), seed).apply(eps)
        x_tilde[:, j] = pred + moved
        log.append(ColumnRecord(j, _model_lambda(model), float(np.var(eps))))
        if internals is not None:
            internals["predictions"][:, j] = pred
            internals["residuals"][:, j] = eps
            internals["added"][:, j] = moved
    return KnockoffPair(
        x=x, x_tilde=x_tilde, method="sequential", seed=seed,
        generation_log=tuple(log), internals=internals,
    )


def parallel_knockoffs(
    x,
    learner=None,
    seed=None,
    workers=1,
    shared_permutation=False,
    strict=False,
    keep_internals=False,
):
    """Knockoffs with all column regressions independent of each other.

    Phase 1 fits each column on the other original columns only, so fits
    run concurrently across ``workers`` threads; phase 2 adds permuted
    residuals. Output is bit-identical for a fixed seed at any worker
    count: fits are deterministic and every permutation comes from its own
    (seed, column) substream. ``shared_permutation`` reuses one permutation
    for every column instead, a deliberately different randomization whose
    covariance consequences parallel_cross_covariance(..., shared=True)
    predicts.
    """
    x = _validate_design(x)
    seed = resolve_seed(seed, strict=strict)
    if learner is None:
        learner = LassoColumnLearner()
    n, p = x.shape
    workers = max(int(workers), 1)

    def fit_column(j):
        feats = _rest_features(x, j)
        model = learner.fit(feats, x[:, j], j)
        return model, model.predict(feats)

    if workers == 1:
        fits = [fit_column(j) for j in range(p)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fits = list(pool.map(fit_column, range(p)))

    x_tilde = np.empty_like(x)
    log = []
    internals = (
        {"predictions": np.empty_like(x), "residuals": np.empty_like(x), "added": np.empty_like(x)}
        if keep_internals
        else None
    )
    if shared_permutation:
        shared = ResidualPermutation(
            substream(seed, NS_NONPARAMETRIC, _TAG_SHARED).permutation(n), seed
        )
    for j in range(p):
        model, pred = fits[j]
        eps = x[:, j] - pred
        if shared_permutation:
            perm = shared
        else:
            rng = substream(seed, NS_NONPARAMETRIC, _TAG_PARALLEL, j)
            perm = ResidualPermutation(rng.permutation(n), seed)
        moved = perm.apply(eps)
        x_tilde[:, j] = pred + moved
        log.append(ColumnRecord(j, _model_lambda(model), float(np.var(eps))))
        if internals is not None:
            internals["predictions"][:, j] = pred
            internals["residuals"][:, j] = eps
            internals["added"][:, j] = moved
    return KnockoffPair(
        x=x, x_tilde=x_tilde, method="parallel", seed=seed,
        generation_log=tuple(log), internals=internals,
    )


def _draw_fold_labels(n, k_folds, seed):
    """Uniform with-replacement fold labels; resample until no fold is empty."""
    notes = []
    for attempt in range(_MAX_FOLD_RESAMPLES):
        rng = substream(seed, NS_NONPARAMETRIC, _TAG_CROSSFIT, 0, attempt)
        labels = rng.integers(0, k_folds, size=n)
        if np.bincount(labels, minlength=k_folds).min() > 0:
            return labels, notes
        notes.append(f"fold assignment attempt {attempt} left a fold empty; resampled")
    raise DegenerateInputError(
        f"could not fill {k_folds} folds from {n} rows after "
        f"{_MAX_FOLD_RESAMPLES} attempts"
    )


def crossfit_knockoffs(
    x, learner=None, k_folds=5, seed=None, strict=False, keep_internals=False
):
    """Sequential-style knockoffs with residuals taken on held-out folds.

    Rows get uniform with-replacement fold labels (resampled, and noted,
    if a fold comes up empty). Per fold k and column j: the learner trains
    on the complement rows, whose earlier knockoff columns are a scratch
    draw rebuilt within the fold; residuals come from the held-out rows;
    both the scratch and the held-out knockoff columns add residuals drawn
    uniformly with replacement from that held-out pool.
    """
    x = _validate_design(x)
    seed = resolve_seed(seed, strict=strict)
    if learner is None:
        learner = LassoColumnLearner()
    k_folds = int(k_folds)
    if k_folds < 2:
        raise ContractViolationError(f"k_folds must be at least 2, got {k_folds}")
    n, p = x.shape
    labels, notes = _draw_fold_labels(n, k_folds, seed)
    x_tilde = np.empty_like(x)
    lam_sum = np.zeros(p)
    resid_all = np.empty_like(x)  # held-out residual for every row, per column
    internals = (
        {
            "predictions": np.empty_like(x),
            "residuals": resid_all,
            "added": np.empty_like(x),
            "fold_labels": labels,
        }
        if keep_internals
        else None
    )
    for k in range(k_folds):
        test = np.flatnonzero(labels == k)
        train = np.flatnonzero(labels != k)
        x_train, x_test = x[train], x[test]
        bar = np.empty((train.size, p))  # fold-local scratch knockoffs
        tilde_k = np.empty((test.size, p))
        for j in range(p):
            feats_train = _rest_features(x_train, j, bar[:, :j])
            model = learner.fit(feats_train, x_train[:, j], j)
            feats_test = _rest_features(x_test, j, tilde_k[:, :j])
            pred_test = model.predict(feats_test)
            pool = x_test[:, j] - pred_test
            rng = substream(seed, NS_NONPARAMETRIC, _TAG_CROSSFIT, 1, k, j)
            # draw order is fixed: scratch rows first, held-out rows second
            bar_draw = rng.integers(0, pool.size, size=train.size)
            tilde_draw = rng.integers(0, pool.size, size=test.size)
            bar[:, j] = model.predict(feats_train) + pool[bar_draw]
            tilde_k[:, j] = pred_test + pool[tilde_draw]
            lam_sum[j] += _model_lambda(model)
            resid_all[test, j] = pool
            if internals is not None:
                internals["predictions"][test, j] = pred_test
                internals["added"][test, j] = pool[tilde_draw]
        x_tilde[test] = tilde_k
    log = [
        ColumnRecord(j, float(lam_sum[j] / k_folds), float(np.var(resid_all[:, j])))
        for j in range(p)
    ]
    return KnockoffPair(
        x=x, x_tilde=x_tilde, method="crossfit", seed=seed,
        generation_log=tuple(log), notes=tuple(notes), internals=internals,
    )


def parallel_cross_covariance(sigma, shared=False):
    """Population covariance matrix the parallel schedule actually attains.

    With exact population regressions on Gaussian data, original-knockoff
    covariances match ``sigma`` off the diagonal, but the knockoff-knockoff
    block does not: entry (j, l) is b_j' Sigma_{-j,-l} b_l with
    b_j = Sigma_{-j,-j}^{-1} Sigma_{-j,j} under independent per-column
    permutations, plus the residual covariance Cov(eps_j, eps_l) when one
    shared permutation is reused. The diagonal is Var(X_j) unchanged.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ContractViolationError(f"sigma must be square, got {sigma.shape}")
    p = sigma.shape[0]
    if p < 2:
        raise ContractViolationError("need at least 2 variables")
    idx = np.arange(p)
    betas = []
    for j in range(p):
        keep = idx != j
        betas.append(np.linalg.solve(sigma[np.ix_(keep, keep)], sigma[keep, j]))
    out = np.empty((p, p))
    for j in range(p):
        keep_j = idx != j
        out[j, j] = sigma[j, j]
        for l in range(j + 1, p):
            keep_l = idx != l
            cross = sigma[np.ix_(keep_j, keep_l)]
            val = betas[j] @ cross @ betas[l]
            if shared:
                # Cov(eps_j, eps_l) for population residuals
                val += (
                    sigma[j, l]
                    - betas[j] @ sigma[keep_j, l]
                    - betas[l] @ sigma[keep_l, j]
                    + betas[j] @ cross @ betas[l]
                )
            out[j, l] = out[l, j] = val
    return out
