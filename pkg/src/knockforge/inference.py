"""Selection on knockoff-augmented designs: W statistics through error metrics.

The W statistic is the lasso coefficient difference on the concatenated
design [X, X_tilde] (columns standardized internally): W_j is the absolute
original coefficient minus the absolute knockoff coefficient. Selection
keeps W_j >= T_q, where T_q is the smallest candidate threshold whose
signed-count ratio (1 + #{W <= -t}) / #{W >= t} drops to the target level.
The >= convention matches the ratio's own denominator.

pi_statistics maps the same W to per-variable scores in (0, 1]; running the
standard step-up rule on them reproduces the threshold selection exactly,
which the test suite checks en masse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, DegenerateInputError
from .regression import default_lambda, lasso_fit

__all__ = [
    "KnockoffStatistics",
    "SelectionResult",
    "lcd_statistics",
    "knockoff_threshold",
    "knockoff_select",
    "pi_statistics",
    "bh_select",
    "fdp",
    "power",
]


@dataclass(frozen=True)
class KnockoffStatistics:
    """W vector plus the penalty and convergence state that produced it."""

    w: np.ndarray
    lam: float
    fit_converged: bool

    def __post_init__(self):
        w = np.asarray(self.w)
        if w.ndim != 1 or not np.all(np.isfinite(w)):
            raise ContractViolationError("w must be a finite 1-d vector")


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of thresholding one W vector at level q."""

    selected: np.ndarray  # sorted 0-based indices
    threshold: float  # +inf when nothing passes
    q: float
    pi: np.ndarray


def _check_q(q):
    q = float(q)
    if not 0.0 < q < 1.0:
        raise ContractViolationError(f"q must lie in (0, 1), got {q}")
    return q


def _check_w(w):
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ContractViolationError("w must be a nonempty 1-d vector")
    if not np.all(np.isfinite(w)):
        raise ContractViolationError("w contains non-finite values")
    return w


def _standardize_columns(m, what):
    # span check, not std: a constant column keeps an exactly zero range
    # even when the float mean rounds and leaves the std at ~1e-16
    dead = np.flatnonzero(m.max(axis=0) - m.min(axis=0) == 0.0)
    if dead.size:
        raise DegenerateInputError(
            f"{what} column {dead[0]} (0-based) has zero variance; "
            "cannot standardize for the joint fit"
        )
    return (m - m.mean(axis=0)) / m.std(axis=0)


def lcd_statistics(x, x_tilde, y, lam=None):
    """Lasso coefficient-difference statistics on the joint design.

    ``lam`` defaults to one hundredth of the joint design's saturation
    penalty. Non-convergence is reported through fit_converged, never
    raised: a truncated fit still yields a usable (if noisier) W.
    """
    x = np.asarray(x, dtype=np.float64)
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape != x_tilde.shape:
        raise ContractViolationError(
            f"x and x_tilde must share one 2-d shape, got {x.shape} vs {x_tilde.shape}"
        )
    n, p = x.shape
    if y.shape != (n,):
        raise ContractViolationError(f"y must have length {n}, got {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x_tilde)) and np.all(np.isfinite(y))):
        raise ContractViolationError("inputs contain non-finite values")
    joint = np.hstack([x, x_tilde])
    joint = _standardize_columns(joint, "joint design")
    if lam is None:
        lam = default_lambda(joint, y)
    lam = float(lam)
    fit = lasso_fit(joint, y, lam=lam)
    w = np.abs(fit.coef[:p]) - np.abs(fit.coef[p:])
    return KnockoffStatistics(w=w, lam=lam, fit_converged=fit.converged)


def knockoff_threshold(w, q):
    """Smallest candidate t with (1 + #{w <= -t}) / #{w >= t} <= q, else +inf.

    Candidates are the distinct magnitudes of nonzero entries: the ratio is
    piecewise constant between them.
    """
    w = _check_w(w)
    q = _check_q(q)
    w_sorted = np.sort(w)
    n = w.size
    for t in np.unique(np.abs(w[w != 0.0])):
        n_ge = n - np.searchsorted(w_sorted, t, side="left")
        if n_ge == 0:
            continue
        n_le_neg = np.searchsorted(w_sorted, -t, side="right")
        if (1.0 + n_le_neg) / n_ge <= q:
            return float(t)
    return float("inf")


def knockoff_select(w, q):
    """Threshold W at level q and package the full selection outcome."""
    w = _check_w(w)
    q = _check_q(q)
    t = knockoff_threshold(w, q)
    selected = np.flatnonzero(w >= t) if np.isfinite(t) else np.array([], dtype=np.intp)
    return SelectionResult(selected=selected, threshold=t, q=q, pi=pi_statistics(w))


def pi_statistics(w):
    """Per-variable scores in (0, 1]: sign-count rank for positive W, else 1."""
    w = _check_w(w)
    p = w.size
    w_sorted = np.sort(w)
    pi = np.ones(p)
    pos = np.flatnonzero(w > 0.0)
    counts = np.searchsorted(w_sorted, -w[pos], side="right")
    pi[pos] = (1.0 + counts) / p
    return pi


def bh_select(pvalues, q):
    """Step-up selection: reject the k* smallest with p_(k) <= q k / p."""
    pv = np.asarray(pvalues, dtype=np.float64)
    if pv.ndim != 1 or pv.size == 0:
        raise ContractViolationError("pvalues must be a nonempty 1-d vector")
    if np.any(~np.isfinite(pv)) or np.any(pv < 0.0) or np.any(pv > 1.0):
        raise ContractViolationError("pvalues must lie in [0, 1]")
    q = _check_q(q)
    p = pv.size
    order = np.argsort(pv, kind="stable")
    ranked = pv[order]
    passing = np.flatnonzero(ranked <= q * (np.arange(1, p + 1)) / p)
    if passing.size == 0:
        return np.array([], dtype=np.intp)
    k_star = passing[-1] + 1
    return np.sort(order[:k_star])


def _as_index_set(s, name):
    arr = np.asarray(sorted(set(int(i) for i in s)), dtype=np.intp)
    if arr.size and arr[0] < 0:
        raise ContractViolationError(f"{name} contains negative indices")
    return arr


def fdp(selected, h0):
    """False discovery proportion |S & H0| / max(|S|, 1)."""
    sel = _as_index_set(selected, "selected")
    nulls = _as_index_set(h0, "h0")
    if sel.size == 0:
        return 0.0
    return float(np.intersect1d(sel, nulls).size) / sel.size


def power(selected, h1):
    """True positive rate |S & H1| / |H1|; H1 must be nonempty."""
    sel = _as_index_set(selected, "selected")
    alts = _as_index_set(h1, "h1")
    if alts.size == 0:
        raise ContractViolationError("h1 is empty; power is undefined")
    return float(np.intersect1d(sel, alts).size) / alts.size
