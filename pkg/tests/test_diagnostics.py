"""C2ST and pairing diagnostics: calibration, power, and assignment checks."""

import itertools
import math

import numpy as np
import pytest

from knockforge.diagnostics import (
    C2STReport,
    ClassifierConfig,
    build_c2st_dataset,
    c2st,
    c2st_pvalue,
    hungarian,
    pairing_check,
)
from knockforge.errors import ContractViolationError
from knockforge.gaussian_knockoffs import build_sampler, sample_knockoffs


class TestBuildDataset:
    def test_three_row_construction(self):
        x = np.arange(6.0).reshape(3, 2)
        xt = -np.arange(6.0).reshape(3, 2)
        z, labels = build_c2st_dataset(x, xt)
        assert z.shape == (6, 2)
        np.testing.assert_array_equal(labels, [0, 0, 0, 1, 1, 1])
        np.testing.assert_array_equal(z[:3], x)
        np.testing.assert_array_equal(z[3:], xt)

    def test_identical_inputs_duplicate_rows_opposite_labels(self):
        x = np.random.default_rng(0).standard_normal((4, 3))
        z, labels = build_c2st_dataset(x, x)
        np.testing.assert_array_equal(z[:4], z[4:])
        assert labels[:4].sum() == 0 and labels[4:].sum() == 4

    def test_row_multiset_preserved(self):
        rng = np.random.default_rng(1)
        x, xt = rng.standard_normal((5, 2)), rng.standard_normal((5, 2))
        z, _ = build_c2st_dataset(x, xt)
        want = np.vstack([x, xt])
        got = z[np.lexsort((z[:, 1], z[:, 0]))]
        want = want[np.lexsort((want[:, 1], want[:, 0]))]
        np.testing.assert_array_equal(got, want)

    def test_shape_mismatch(self):
        with pytest.raises(ContractViolationError):
            build_c2st_dataset(np.zeros((3, 2)), np.zeros((4, 2)))


class TestC2stPvalue:
    def test_eight_of_ten_matches_exhaustive_sum(self):
        oracle = sum(math.comb(10, k) for k in range(8, 11)) / 2**10
        assert c2st_pvalue(8, 10) == pytest.approx(oracle, rel=1e-12)
        assert oracle == 56 / 1024

    def test_perfect_classification_tail(self):
        for n in (4, 10, 30):
            assert c2st_pvalue(n, n) == pytest.approx(0.5**n, rel=1e-9)

    def test_chance_level_is_not_significant(self):
        assert c2st_pvalue(500, 1000) >= 0.5

    def test_zero_correct(self):
        assert c2st_pvalue(0, 12) == pytest.approx(1.0)

    def test_validation(self):
        with pytest.raises(ContractViolationError):
            c2st_pvalue(11, 10)
        with pytest.raises(ContractViolationError):
            c2st_pvalue(-1, 10)


class TestC2st:
    def test_identical_distributions_score_chance(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((2000, 10))
        xt = rng.standard_normal((2000, 10))
        rep = c2st(x, xt, folds=5, seed=0)
        assert 0.45 <= rep.mean_accuracy <= 0.55
        assert rep.verdict == "consistent_with_exchangeability"
        assert rep.n_test_total == 4000
        assert rep.notes == ()

    def test_mean_shift_is_caught(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((400, 5))
        xt = rng.standard_normal((400, 5)) + 5.0
        rep = c2st(x, xt, folds=5, seed=1)
        assert rep.mean_accuracy >= 0.95
        assert rep.p_value < 1e-10
        assert rep.verdict == "violation_detected"

    def test_determinism(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((300, 4))
        xt = rng.standard_normal((300, 4))
        a = c2st(x, xt, folds=4, seed=9)
        b = c2st(x, xt, folds=4, seed=9)
        assert a == b
        c = c2st(x, xt, folds=4, seed=10)
        assert a.fold_accuracies != c.fold_accuracies

    def test_joint_row_permutation_invariance(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((200, 3))
        xt = x + 0.5 * rng.standard_normal((200, 3))
        perm = rng.permutation(200)
        a = c2st(x, xt, folds=5, seed=3)
        b = c2st(x[perm], xt[perm], folds=5, seed=3)
        assert a == b

    def test_mean_accuracy_is_fold_mean(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((150, 3))
        xt = rng.standard_normal((150, 3)) + 0.5
        rep = c2st(x, xt, folds=3, seed=0)
        assert rep.mean_accuracy == pytest.approx(np.mean(rep.fold_accuracies), abs=1e-12)
        assert len(rep.fold_accuracies) == 3

    def test_fold_and_size_validation(self):
        x = np.zeros((3, 2)) + np.arange(6).reshape(3, 2)
        with pytest.raises(ContractViolationError):
            c2st(x, x, folds=1, seed=0)
        with pytest.raises(ContractViolationError):
            c2st(x, x, folds=4, seed=0)  # 6 rows < 8

    def test_classifier_config_is_honored(self):
        # overlapping classes: the ridge strength moves decision boundaries
        # near the margin, so the per-fold accuracies must respond to it
        rng = np.random.default_rng(7)
        x = rng.standard_normal((150, 4))
        xt = rng.standard_normal((150, 4)) + 0.35
        light = c2st(x, xt, seed=0, classifier_config=ClassifierConfig(l2_penalty=1e-8))
        heavy = c2st(x, xt, seed=0, classifier_config=ClassifierConfig(l2_penalty=300.0))
        assert light.fold_accuracies != heavy.fold_accuracies


class TestHungarian:
    def test_diagonal_dominant_identity(self):
        cost = np.full((4, 4), 9.0) + np.eye(4) * -8.0
        np.testing.assert_array_equal(hungarian(cost), [0, 1, 2, 3])

    def test_three_by_three_brute_force(self):
        cost = np.array([[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])
        best_perm, best_cost = None, np.inf
        for perm in itertools.permutations(range(3)):
            c = sum(cost[i, perm[i]] for i in range(3))
            if c < best_cost:
                best_perm, best_cost = perm, c
        got = hungarian(cost)
        assert sum(cost[i, got[i]] for i in range(3)) == pytest.approx(best_cost)
        np.testing.assert_array_equal(got, best_perm)

    def test_constant_shift_invariance(self):
        rng = np.random.default_rng(8)
        cost = rng.random((6, 6))
        np.testing.assert_array_equal(hungarian(cost), hungarian(cost + 17.0))

    def test_never_beats_optimal_and_never_loses_to_identity(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            cost = rng.random((5, 5))
            perm = hungarian(cost)
            assert cost[np.arange(5), perm].sum() <= np.trace(cost) + 1e-12

    def test_validation(self):
        with pytest.raises(ContractViolationError):
            hungarian(np.zeros((2, 3)))
        with pytest.raises(ContractViolationError):
            hungarian(np.array([[1.0, np.nan], [0.0, 1.0]]))


class TestPairingCheck:
    def test_tiny_noise_keeps_identity(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal((50, 4))
        xt = x + 1e-6 * rng.standard_normal((50, 4))
        rep = pairing_check(x, xt)
        assert rep.identity_fraction == 1.0
        assert rep.verdict == "paired"
        np.testing.assert_array_equal(rep.assignment, np.arange(50))

    def test_reversed_rows_recovered(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((40, 3))
        rep = pairing_check(x, x[::-1])
        np.testing.assert_array_equal(rep.assignment, np.arange(40)[::-1])
        assert rep.identity_fraction == 0.0
        assert rep.verdict == "mispairing_detected"

    def test_total_cost_recomputes(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal((30, 3))
        xt = x + 0.3 * rng.standard_normal((30, 3))
        rep = pairing_check(x, xt)
        pooled = np.vstack([x, xt])
        mean, std = pooled.mean(0), pooled.std(0)
        xs, xts = (x - mean) / std, (xt - mean) / std
        direct = sum(
            np.sum((xs[i] - xts[rep.assignment[i]]) ** 2) for i in range(30)
        )
        assert rep.total_cost == pytest.approx(direct, abs=1e-8)

    def test_brute_force_small_instance(self):
        rng = np.random.default_rng(13)
        x = rng.standard_normal((7, 3))
        xt = rng.standard_normal((7, 3))
        rep = pairing_check(x, xt)
        pooled = np.vstack([x, xt])
        mean, std = pooled.mean(0), pooled.std(0)
        xs, xts = (x - mean) / std, (xt - mean) / std
        best = min(
            sum(np.sum((xs[i] - xts[perm[i]]) ** 2) for i in range(7))
            for perm in itertools.permutations(range(7))
        )
        assert rep.total_cost == pytest.approx(best, abs=1e-10)

    def test_half_shuffled_gaussian_knockoffs_flagged(self):
        rho = 0.9
        sampler = build_sampler(np.array([[1.0, rho], [rho, 1.0]]))
        rng = np.random.default_rng(14)
        x = rng.multivariate_normal([0, 0], sampler.sigma, size=200)
        xt = sample_knockoffs(sampler, x, seed=4)
        chosen = rng.choice(200, size=100, replace=False)
        xt_shuffled = xt.copy()
        xt_shuffled[chosen] = xt[np.roll(chosen, 1)]
        rep = pairing_check(x, xt_shuffled)
        assert rep.identity_fraction <= 0.6
        assert rep.verdict == "mispairing_detected"

    def test_cap_refusal_and_subsample(self):
        rng = np.random.default_rng(15)
        x = rng.standard_normal((60, 3))
        xt = x + 1e-6 * rng.standard_normal((60, 3))
        with pytest.raises(ContractViolationError, match="subsample"):
            pairing_check(x, xt, cap=50)
        rep = pairing_check(x, xt, cap=50, subsample=True, seed=0)
        assert rep.assignment.size == 50
        assert rep.identity_fraction == 1.0
        rep2 = pairing_check(x, xt, cap=50, subsample=True, seed=0)
        np.testing.assert_array_equal(rep.assignment, rep2.assignment)
