"""Exchangeability diagnostics for knockoff pairs.

Two necessary-condition checks ship. The classifier two-sample test trains
a linear classifier to tell original rows from knockoff rows; accuracy
above chance is evidence the joint distributions differ, summarized by a
one-sided binomial p-value on the pooled correct count. The pairing check
solves an optimal assignment between original and knockoff rows; valid
knockoffs generated row-from-row should be matched back to their own row.

Neither check can certify exchangeability; both can only catch failures.

Fold design: each (original, knockoff) row pair lands in the same fold.
Folds therefore carry exactly equal label counts, and a pair never
straddles the train/test boundary; splitting twins lets a classifier that
memorizes a training row score its held-out near-copy wrong, which biases
accuracy below chance without any distributional difference.

Determinism: fold splits are drawn from the seed after putting pairs in a
canonical sorted order, so reports are invariant to jointly reordering the
input row pairs and identical across reruns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.stats import binom

from ._rng import NS_DIAGNOSTICS, resolve_seed, substream
from .errors import ContractViolationError, DegenerateInputError
from .regression import (
    CLASSIFIER_MAX_ITER,
    CLASSIFIER_TOL,
    classifier_fit,
    classifier_predict,
)

__all__ = [
    "C2STReport",
    "PairingReport",
    "ClassifierConfig",
    "build_c2st_dataset",
    "c2st",
    "c2st_pvalue",
    "pairing_check",
    "hungarian",
]

C2ST_VIOLATION_ALPHA = 0.01
PAIRING_IDENTITY_THRESHOLD = 0.99
PAIRING_DEFAULT_CAP = 5000

_MAX_RESPLITS = 5


@dataclass(frozen=True)
class ClassifierConfig:
    """Knobs forwarded to the linear classifier used by the C2ST."""

    l2_penalty: float = 1.0
    tol: float = CLASSIFIER_TOL
    max_iter: int = CLASSIFIER_MAX_ITER


@dataclass(frozen=True)
class C2STReport:
    fold_accuracies: tuple
    mean_accuracy: float
    n_test_total: int
    p_value: float
    verdict: str
    notes: tuple = ()


@dataclass(frozen=True)
class PairingReport:
    assignment: np.ndarray
    identity_fraction: float
    total_cost: float
    verdict: str


def _paired_matrices(x, x_tilde):
    x = np.asarray(x, dtype=np.float64)
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    if x.ndim != 2 or x.shape != x_tilde.shape:
        raise ContractViolationError(
            f"x and x_tilde must share one 2-d shape, got {x.shape} vs {x_tilde.shape}"
        )
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x_tilde))):
        raise ContractViolationError("inputs contain non-finite values")
    return x, x_tilde


def build_c2st_dataset(x, x_tilde):
    """Stack originals above knockoffs; label 0 for original, 1 for knockoff."""
    x, x_tilde = _paired_matrices(x, x_tilde)
    z = np.vstack([x, x_tilde])
    labels = np.repeat(np.array([0, 1]), x.shape[0])
    return z, labels


def c2st_pvalue(correct_total, n_test_total):
    """One-sided tail P[Binomial(n, 1/2) >= correct] of the chance-level null."""
    n = int(n_test_total)
    c = int(correct_total)
    if not 0 <= c <= n or n <= 0:
        raise ContractViolationError(
            f"need 0 <= correct ({c}) <= n_test_total ({n}) with n positive"
        )
    return float(binom.sf(c - 1, n, 0.5))


def _canonical_pair_order(x, x_tilde):
    # lexicographic over the concatenated pair content, first column primary
    key = np.hstack([x, x_tilde])
    return np.lexsort(tuple(key[:, j] for j in range(key.shape[1] - 1, -1, -1)))


def _pair_folds(n_pairs, order, folds, rng):
    assign = np.empty(n_pairs, dtype=np.intp)
    assign[order[rng.permutation(n_pairs)]] = np.arange(n_pairs) % folds
    return assign


def _train_standardizer(features):
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    span = features.max(axis=0) - features.min(axis=0)
    std = np.where(span == 0.0, 1.0, std)  # constant feature carries no signal
    return mean, std


def c2st(x, x_tilde, folds=5, classifier_config=None, seed=None, strict=False,
         violation_alpha=C2ST_VIOLATION_ALPHA):
    """Classifier two-sample test: can a linear model separate X from X_tilde?

    Stratified cross-validation over ``folds`` splits; each fold's accuracy
    comes from a classifier trained on the other folds with features
    standardized by training statistics. The verdict flags a violation when
    the pooled binomial p-value drops below ``violation_alpha``.
    """
    seed = resolve_seed(seed, strict=strict)
    folds = int(folds)
    if folds < 2:
        raise ContractViolationError(f"folds must be at least 2, got {folds}")
    z, labels = build_c2st_dataset(x, x_tilde)
    if z.shape[0] < 2 * folds:
        raise ContractViolationError(
            f"{z.shape[0]} stacked rows cannot fill {folds} folds"
        )
    if classifier_config is None:
        classifier_config = ClassifierConfig()
    x_arr, xt_arr = _paired_matrices(x, x_tilde)
    order = _canonical_pair_order(x_arr, xt_arr)

    notes = []
    for attempt in range(_MAX_RESPLITS):
        rng = substream(seed, NS_DIAGNOSTICS, 1, attempt)
        pair_assign = _pair_folds(x_arr.shape[0], order, folds, rng)
        assign = np.concatenate([pair_assign, pair_assign])
        ok = all(
            np.unique(labels[assign != f]).size == 2 for f in range(folds)
        )
        if ok:
            break
        notes.append(f"split attempt {attempt} left single-class training data; resplit")
    else:
        raise DegenerateInputError(
            f"could not build two-class training sets in {_MAX_RESPLITS} attempts"
        )

    fold_acc = []
    correct_total = 0
    for f in range(folds):
        test = assign == f
        train = ~test
        mean, std = _train_standardizer(z[train])
        clf = classifier_fit(
            (z[train] - mean) / std,
            labels[train],
            l2_penalty=classifier_config.l2_penalty,
            tol=classifier_config.tol,
            max_iter=classifier_config.max_iter,
        )
        pred = classifier_predict(clf, (z[test] - mean) / std)
        hits = int(np.sum(pred == labels[test]))
        correct_total += hits
        fold_acc.append(hits / int(test.sum()))

    n_test_total = z.shape[0]
    pval = c2st_pvalue(correct_total, n_test_total)
    return C2STReport(
        fold_accuracies=tuple(fold_acc),
        mean_accuracy=float(np.mean(fold_acc)),
        n_test_total=n_test_total,
        p_value=pval,
        verdict="violation_detected" if pval < violation_alpha
        else "consistent_with_exchangeability",
        notes=tuple(notes),
    )


def hungarian(cost):
    """Minimum-cost assignment; entry i of the result is the column for row i."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ContractViolationError(f"cost must be square, got {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ContractViolationError("cost contains non-finite values")
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=np.intp)
    perm[rows] = cols
    return perm


def pairing_check(x, x_tilde, cap=PAIRING_DEFAULT_CAP, subsample=False, seed=None,
                  identity_threshold=PAIRING_IDENTITY_THRESHOLD, strict=False):
    """Optimal-assignment check that knockoff rows sit nearest their own row.

    Costs are squared Euclidean distances on columns standardized over the
    pooled rows. The assignment problem is cubic in n, so inputs beyond
    ``cap`` rows are refused unless ``subsample`` draws a uniform subset.
    """
    x, x_tilde = _paired_matrices(x, x_tilde)
    n = x.shape[0]
    if n > cap:
        if not subsample:
            raise ContractViolationError(
                f"{n} rows exceed the assignment cap {cap}; "
                "pass subsample=True to check a uniform subset"
            )
        seed = resolve_seed(seed, strict=strict)
        rng = substream(seed, NS_DIAGNOSTICS, 2)
        keep = np.sort(rng.choice(n, size=cap, replace=False))
        x, x_tilde = x[keep], x_tilde[keep]
        n = cap
    pooled = np.vstack([x, x_tilde])
    mean, std = _train_standardizer(pooled)
    cost = cdist((x - mean) / std, (x_tilde - mean) / std, "sqeuclidean")
    assignment = hungarian(cost)
    identity_fraction = float(np.mean(assignment == np.arange(n)))
    total_cost = float(cost[np.arange(n), assignment].sum())
    return PairingReport(
        assignment=assignment,
        identity_fraction=identity_fraction,
        total_cost=total_cost,
        verdict="paired" if identity_fraction >= identity_threshold
        else "mispairing_detected",
    )
