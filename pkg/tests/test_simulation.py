"""Synthetic benchmark: smoothing operators, planted truth, batch FDR tables."""

import dataclasses
import math

import numpy as np
import pytest

from knockforge import simulation
from knockforge._rng import NS_SIMULATION, substream
from knockforge.diagnostics import pairing_check
from knockforge.errors import (
    ContractViolationError,
    DegenerateInputError,
    NumericalFailureError,
)
from knockforge.gaussian_knockoffs import build_sampler, sample_knockoffs
from knockforge.inference import fdp, knockoff_select, lcd_statistics, power
from knockforge.simulation import (
    BENCHMARK_CSV_HEADER,
    GAUSSIAN_COV_OPTIONS,
    NONPARAMETRIC_METHODS,
    BenchmarkRow,
    SimulationConfig,
    draw_support,
    expand_method_specs,
    generate_design,
    generate_response,
    oracle_covariance,
    run_benchmark,
    run_w_sweep,
    shuffle_pairings,
)


def kernel_weights(w):
    # independent re-derivation: truncated Gaussian, radius four widths,
    # normalized to unit mass
    radius = math.ceil(4.0 * w)
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(k**2) / (2.0 * w * w))
    return k.astype(int), g / g.sum()


class TestSimulationConfig:
    def test_p_is_product_of_shape(self):
        assert SimulationConfig(shape=(4, 3, 2)).p == 24

    def test_defaults_are_desk_scale(self):
        cfg = SimulationConfig()
        assert (cfg.n, cfg.p, cfg.runs) == (200, 200, 30)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"shape": (4, 3)},
            {"shape": (4, 0, 2)},
            {"n": 0},
            {"kernel_width": -0.5},
            {"sparsity": 0.0},
            {"sparsity": 1.5},
            {"shape": (4, 3, 2), "sparsity": 0.01},  # floor(0.24) = 0
            {"snr": 0.0},
            {"q": 1.0},
            {"runs": 0},
        ],
    )
    def test_invalid_fields_rejected(self, kwargs):
        with pytest.raises(ContractViolationError):
            SimulationConfig(**kwargs)


class TestAxisOperator:
    def test_zero_width_is_identity(self):
        np.testing.assert_array_equal(simulation._axis_operator(5, 0.0), np.eye(5))

    @pytest.mark.parametrize("m,w", [(7, 0.5), (2, 1.25), (3, 2.0)])
    def test_rows_conserve_mass_under_reflection(self, m, w):
        op = simulation._axis_operator(m, w)
        np.testing.assert_allclose(op.sum(axis=1), np.ones(m), atol=1e-12)

    def test_interior_impulse_matches_direct_kernel(self):
        # m = 9, w = 0.8 puts radius 4 inside the grid from the center, so
        # column 4 is reflection-free and must equal the raw kernel
        m, w = 9, 0.8
        op = simulation._axis_operator(m, w)
        offsets, g = kernel_weights(w)
        expected = np.zeros(m)
        for k, gk in zip(offsets, g):
            expected[4 - k] = gk
        np.testing.assert_allclose(op[:, 4], expected, atol=1e-15)

    def test_reflect_folds_until_inside(self):
        assert simulation._reflect(-1, 5) == 0
        assert simulation._reflect(5, 5) == 4
        assert simulation._reflect(-3, 2) == 1  # -3 -> 2 -> 1, two folds
        assert simulation._reflect(4, 2) == 0

    def test_separable_impulse_is_kernel_product(self):
        # 3-d impulse response at an interior voxel factorizes axis by axis
        shape, w = (9, 9, 9), 0.8
        op_a, op_b, op_c = simulation._smoothing_operators(shape, w)
        a = np.kron(np.kron(op_a, op_b), op_c)
        center = np.ravel_multi_index((4, 4, 4), shape)
        got = a[:, center].reshape(shape)
        offsets, g = kernel_weights(w)
        line = np.zeros(9)
        for k, gk in zip(offsets, g):
            line[4 - k] = gk
        expected = np.einsum("i,j,k->ijk", line, line, line)
        np.testing.assert_allclose(got, expected, atol=1e-15)


class TestGenerateDesign:
    def test_unsmoothed_columns_nearly_uncorrelated(self):
        cfg = SimulationConfig(n=2000, shape=(4, 3, 2), kernel_width=0.0)
        x = generate_design(cfg, seed=0)
        corr = np.corrcoef(x, rowvar=False)
        off = np.abs(corr[~np.eye(cfg.p, dtype=bool)])
        assert off.mean() < 0.05

    def test_adjacent_correlation_grows_with_width(self):
        # columns 0 and 1 are neighbors along the last tensor axis
        rs = []
        for w in (0.0, 0.5, 1.0):
            cfg = SimulationConfig(n=2000, shape=(4, 3, 2), kernel_width=w)
            x = generate_design(cfg, seed=3)
            rs.append(np.corrcoef(x[:, 0], x[:, 1])[0, 1])
        assert abs(rs[0]) < 0.05
        assert rs[0] < rs[1] < rs[2]
        assert rs[2] > 0.5

    def test_einsum_path_matches_kron_operator(self):
        cfg = SimulationConfig(n=5, shape=(3, 2, 2), kernel_width=0.6)
        x = generate_design(cfg, seed=11)
        rng = substream(11, NS_SIMULATION, simulation._TAG_DESIGN)
        t = rng.standard_normal((5, 3, 2, 2))
        op_a, op_b, op_c = simulation._smoothing_operators(cfg.shape, 0.6)
        a = np.kron(np.kron(op_a, op_b), op_c)
        np.testing.assert_allclose(x, t.reshape(5, 12) @ a.T, atol=1e-12)

    def test_empirical_covariance_approaches_oracle(self):
        cfg = SimulationConfig(n=100_000, shape=(3, 3, 2), kernel_width=0.7)
        x = generate_design(cfg, seed=5)
        emp = x.T @ x / cfg.n  # the field is zero-mean by construction
        gap = np.abs(emp - oracle_covariance(cfg.shape, 0.7)).max()
        assert gap < 0.02

    def test_marginal_moments_are_gaussian(self):
        cfg = SimulationConfig(n=100_000, shape=(4, 3, 2), kernel_width=0.5)
        x = generate_design(cfg, seed=9)
        z = (x - x.mean(axis=0)) / x.std(axis=0)
        skew = (z**3).mean(axis=0)
        exkurt = (z**4).mean(axis=0) - 3.0
        assert np.abs(skew).max() < 0.1
        assert np.abs(exkurt).max() < 0.2

    def test_standardize_flag_gives_unit_columns(self):
        cfg = SimulationConfig(
            n=50, shape=(3, 2, 2), kernel_width=0.8, standardize_columns=True
        )
        x = generate_design(cfg, seed=2)
        np.testing.assert_allclose(x.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(x.std(axis=0), 1.0, atol=1e-12)

    def test_standardize_single_row_degenerate(self):
        cfg = SimulationConfig(n=1, shape=(3, 2, 2), standardize_columns=True)
        with pytest.raises(DegenerateInputError):
            generate_design(cfg, seed=0)

    def test_seed_controls_draw(self):
        cfg = SimulationConfig(n=20, shape=(3, 2, 2))
        np.testing.assert_array_equal(
            generate_design(cfg, seed=4), generate_design(cfg, seed=4)
        )
        assert not np.array_equal(
            generate_design(cfg, seed=4), generate_design(cfg, seed=5)
        )


class TestOracleCovariance:
    def test_zero_width_is_identity(self):
        np.testing.assert_array_equal(oracle_covariance((4, 3, 2), 0.0), np.eye(24))

    def test_symmetric_and_psd(self):
        sigma = oracle_covariance((4, 3, 2), 1.25)
        np.testing.assert_array_equal(sigma, sigma.T)
        assert np.linalg.eigvalsh(sigma).min() >= -1e-10

    def test_validates_shape_and_width(self):
        with pytest.raises(ContractViolationError):
            oracle_covariance((4, 3), 0.5)
        with pytest.raises(ContractViolationError):
            oracle_covariance((4, 3, 2), -0.1)


class TestDrawSupport:
    def test_full_sparsity_selects_everything(self):
        truth = draw_support(6, 1.0, seed=0)
        np.testing.assert_array_equal(truth.beta_star, np.ones(6))
        assert truth.h0.size == 0

    def test_tenth_of_five_hundred_is_fifty(self):
        truth = draw_support(500, 0.1, seed=0)
        assert truth.h1.size == 50

    def test_support_partitions_indices(self):
        truth = draw_support(30, 0.3, seed=7)
        assert truth.h1.size == 9
        np.testing.assert_array_equal(truth.h1, np.sort(truth.h1))
        np.testing.assert_array_equal(
            np.sort(np.concatenate([truth.h1, truth.h0])), np.arange(30)
        )
        np.testing.assert_array_equal(np.unique(truth.beta_star), [0.0, 1.0])
        assert truth.beta_star.sum() == 9

    def test_inclusion_frequency_is_uniform(self):
        counts = np.zeros(6)
        for s in range(10_000):
            counts[draw_support(6, 0.5, seed=s).h1] += 1
        np.testing.assert_allclose(counts / 10_000, 0.5, atol=0.01)

    def test_empty_support_rejected(self):
        with pytest.raises(ContractViolationError):
            draw_support(10, 0.05, seed=0)


class TestGenerateResponse:
    def test_realized_ratio_is_exact(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((20, 5))
        beta = np.zeros(5)
        beta[2] = 1.0
        y, sigma = generate_response(x, beta, snr=2.0, seed=1)
        eps = (y - x @ beta) / sigma
        ratio = np.linalg.norm(x @ beta) / (sigma * np.linalg.norm(eps))
        np.testing.assert_allclose(ratio, 2.0, rtol=1e-12)

    def test_noise_scale_inverse_in_snr(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((20, 5))
        beta = np.eye(5)[0]
        _, s1 = generate_response(x, beta, snr=1.0, seed=3)
        _, s10 = generate_response(x, beta, snr=10.0, seed=3)
        np.testing.assert_allclose(s1 / s10, 10.0, rtol=1e-12)

    def test_zero_signal_rejected(self):
        x = np.random.default_rng(2).standard_normal((10, 3))
        with pytest.raises(DegenerateInputError):
            generate_response(x, np.zeros(3), snr=2.0, seed=0)

    def test_shape_mismatch_rejected(self):
        x = np.random.default_rng(3).standard_normal((10, 3))
        with pytest.raises(ContractViolationError):
            generate_response(x, np.ones(4), snr=2.0, seed=0)


class TestShufflePairings:
    def test_fraction_zero_returns_untouched_copy(self):
        x = np.random.default_rng(0).standard_normal((8, 3))
        out = shuffle_pairings(x, 0.0, seed=1)
        np.testing.assert_array_equal(out, x)
        out[0, 0] = 99.0
        assert x[0, 0] != 99.0

    def test_full_shuffle_moves_every_row(self):
        x = np.random.default_rng(1).standard_normal((10, 3))
        out = shuffle_pairings(x, 1.0, seed=2)
        assert np.all((out != x).any(axis=1))
        got = sorted(map(tuple, out))
        want = sorted(map(tuple, x))
        assert got == want

    def test_half_shuffle_moves_exactly_half(self):
        x = np.random.default_rng(2).standard_normal((10, 3))
        out = shuffle_pairings(x, 0.5, seed=3)
        assert (out != x).any(axis=1).sum() == 5

    def test_single_chosen_row_is_noop(self):
        x = np.random.default_rng(3).standard_normal((1, 3))
        np.testing.assert_array_equal(shuffle_pairings(x, 1.0, seed=0), x)

    def test_fraction_out_of_range_rejected(self):
        x = np.zeros((4, 2))
        for bad in (-0.1, 1.5):
            with pytest.raises(ContractViolationError):
                shuffle_pairings(x, bad, seed=0)

    def test_pairing_identity_lands_near_half(self):
        # break half the pairings of real knockoffs, then re-derive the
        # pairing from scratch: about half the rows should still match
        cfg = SimulationConfig(n=200, shape=(5, 5, 2), kernel_width=0.5)
        x = generate_design(cfg, seed=13)
        sampler = build_sampler(oracle_covariance(cfg.shape, 0.5))
        x_tilde = sample_knockoffs(sampler, x, seed=13)
        shuffled = shuffle_pairings(x_tilde, 0.5, seed=13)
        report = pairing_check(x, shuffled, seed=13)
        assert 0.4 <= report.identity_fraction <= 0.6


class TestExpandMethodSpecs:
    def test_bare_nonparametric_names(self):
        assert expand_method_specs(["sequential", "parallel"]) == [
            ("sequential", "none"),
            ("parallel", "none"),
        ]

    def test_gaussian_crossed_with_options(self):
        got = expand_method_specs(["gaussian"], covariance_options=("oracle", "lw"))
        assert got == [("gaussian", "oracle"), ("gaussian", "lw")]

    def test_combined_names(self):
        assert expand_method_specs(["gaussian-glasso", "crossfit"]) == [
            ("gaussian", "glasso"),
            ("crossfit", "none"),
        ]

    def test_gaussian_without_options_rejected(self):
        with pytest.raises(ContractViolationError):
            expand_method_specs(["gaussian"])

    def test_unknown_method_lists_valid_ones(self):
        with pytest.raises(ContractViolationError, match="sequential"):
            expand_method_specs(["oracle"])

    def test_unknown_covariance_rejected(self):
        with pytest.raises(ContractViolationError):
            expand_method_specs(["gaussian"], covariance_options=("ridge",))


BENCH_CFG = SimulationConfig(
    n=120, shape=(4, 3, 2), kernel_width=0.5, sparsity=0.2, snr=2.0,
    seed=42, runs=2, q=0.2,
)
BENCH_METHODS = ["gaussian-oracle", "sequential"]


@pytest.fixture(scope="module")
def bench_table():
    return run_benchmark(BENCH_CFG, BENCH_METHODS, keep_details=True)


class TestRunBenchmark:
    def test_one_row_per_run_and_method(self, bench_table):
        rows = bench_table.rows
        assert len(rows) == BENCH_CFG.runs * len(BENCH_METHODS)
        cells = {(r.run, r.method, r.cov) for r in rows}
        assert len(cells) == len(rows)

    def test_rows_sorted_by_run_then_method(self, bench_table):
        keys = [(r.run, f"{r.method}-{r.cov}") for r in bench_table.rows]
        assert keys == sorted(keys)

    def test_methods_within_a_run_share_data_seed(self, bench_table):
        by_run = {}
        for r in bench_table.rows:
            by_run.setdefault(r.run, set()).add(r.seed)
        assert all(len(seeds) == 1 for seeds in by_run.values())

    def test_metrics_lie_in_range(self, bench_table):
        for r in bench_table.rows:
            assert r.error is None
            assert 0.0 <= r.fdp <= 1.0
            assert 0.0 <= r.power <= 1.0
            assert 0.0 <= r.c2st_acc <= 1.0
            assert 0.0 < r.c2st_pval <= 1.0
            assert r.wallclock_ms >= 0.0
            assert (r.n, r.p, r.q, r.w) == (120, 24, 0.2, 0.5)

    def test_repeat_is_identical_up_to_wallclock(self, bench_table):
        again = run_benchmark(BENCH_CFG, BENCH_METHODS, keep_details=True)
        strip = lambda r: dataclasses.replace(r, wallclock_ms=0.0)
        assert [strip(r) for r in bench_table.rows] == [strip(r) for r in again.rows]
        for d1, d2 in zip(bench_table.details, again.details):
            np.testing.assert_array_equal(d1["w_stats"], d2["w_stats"])
            np.testing.assert_array_equal(d1["selected"], d2["selected"])

    def test_row_seed_reproduces_its_cell(self, bench_table):
        row = next(
            r for r in bench_table.rows if r.method == "gaussian" and r.run == 1
        )
        x = generate_design(BENCH_CFG, seed=row.seed)
        truth = draw_support(BENCH_CFG.p, BENCH_CFG.sparsity, seed=row.seed)
        y, _ = generate_response(x, truth.beta_star, BENCH_CFG.snr, seed=row.seed)
        sampler = build_sampler(oracle_covariance(BENCH_CFG.shape, 0.5))
        x_tilde = sample_knockoffs(sampler, x, seed=row.seed)
        sel = knockoff_select(lcd_statistics(x, x_tilde, y).w, BENCH_CFG.q)
        assert fdp(sel.selected, truth.h0) == row.fdp
        assert power(sel.selected, truth.h1) == row.power

    def test_details_align_with_rows(self, bench_table):
        assert len(bench_table.details) == len(bench_table.rows)
        for row, det in zip(bench_table.rows, bench_table.details):
            assert (det["run"], det["method"], det["cov"]) == (
                row.run, row.method, row.cov,
            )
            assert det["w_stats"].shape == (BENCH_CFG.p,)
            assert set(det["h0"]) | set(det["h1"]) == set(range(BENCH_CFG.p))

    def test_summary_means_match_columns(self, bench_table):
        summary = bench_table.summary()
        assert len(summary) == len(BENCH_METHODS)
        for entry in summary:
            rows = [
                r for r in bench_table.rows
                if (r.method, r.cov, r.w) == (entry["method"], entry["cov"], entry["w"])
            ]
            assert entry["n_rows"] == BENCH_CFG.runs
            assert entry["n_errors"] == 0
            for name in ("fdp", "power", "c2st_acc", "c2st_pval"):
                want = np.mean([getattr(r, name) for r in rows])
                assert abs(entry[f"mean_{name}"] - want) < 1e-12

    def test_csv_layout_and_float_roundtrip(self, bench_table):
        text = bench_table.to_csv()
        lines = text.splitlines()
        assert lines[0] == BENCHMARK_CSV_HEADER
        assert len(lines) == 1 + len(bench_table.rows)
        assert text.endswith("\n")
        first = lines[1].split(",")
        assert len(first) == len(BENCHMARK_CSV_HEADER.split(","))
        # 17 significant digits reproduce the double exactly
        assert float(first[7]) == bench_table.rows[0].fdp

    def test_failing_cell_yields_error_row_and_batch_continues(self, monkeypatch):
        def boom(x, seed=None, strict=False):
            raise NumericalFailureError("synthetic failure")

        monkeypatch.setattr(simulation, "sequential_knockoffs", boom)
        cfg = dataclasses.replace(BENCH_CFG, runs=1)
        table = run_benchmark(cfg, BENCH_METHODS, keep_details=True)
        assert len(table.rows) == 2
        bad = [r for r in table.rows if r.method == "sequential"]
        good = [r for r in table.rows if r.method == "gaussian"]
        assert len(bad) == 1 and len(good) == 1
        assert "synthetic failure" in bad[0].error
        assert math.isnan(bad[0].fdp) and math.isnan(bad[0].c2st_acc)
        assert good[0].error is None and not math.isnan(good[0].fdp)
        assert table.errors == (bad[0],)
        by_method = {e["method"]: e for e in table.summary()}
        assert by_method["sequential"]["n_errors"] == 1
        idx = table.rows.index(bad[0])
        assert table.details[idx] is None

    def test_unknown_method_rejected_before_any_work(self):
        with pytest.raises(ContractViolationError):
            run_benchmark(BENCH_CFG, ["bogus"])

    def test_glasso_cv_alpha_produces_clean_rows(self):
        cfg = dataclasses.replace(BENCH_CFG, runs=1)
        table = run_benchmark(cfg, ["gaussian-glasso"], glasso_alpha="cv")
        assert len(table.rows) == 1
        assert table.rows[0].error is None
        assert 0.0 <= table.rows[0].fdp <= 1.0

    def test_width_feeds_seed_material(self):
        assert simulation._w_entropy(0.25) != simulation._w_entropy(0.5)
        assert simulation._w_entropy(0.5) == simulation._w_entropy(0.5)


class TestRunWSweep:
    def test_concatenates_per_width_tables(self):
        cfg = dataclasses.replace(BENCH_CFG, runs=1)
        sweep = run_w_sweep(cfg, (0.0, 0.5), ["sequential"])
        assert [r.w for r in sweep.rows] == [0.0, 0.5]
        single = run_benchmark(
            dataclasses.replace(cfg, kernel_width=0.0), ["sequential"]
        )
        strip = lambda r: dataclasses.replace(r, wallclock_ms=0.0)
        assert strip(sweep.rows[0]) == strip(single.rows[0])

    def test_sweep_rows_have_distinct_seeds(self):
        cfg = dataclasses.replace(BENCH_CFG, runs=1)
        sweep = run_w_sweep(cfg, (0.25, 0.5), ["sequential"])
        assert sweep.rows[0].seed != sweep.rows[1].seed


class TestPublicSurface:
    def test_method_and_cov_vocabularies(self):
        assert GAUSSIAN_COV_OPTIONS == ("empirical", "lw", "glasso", "oracle")
        assert NONPARAMETRIC_METHODS == ("sequential", "parallel", "crossfit")

    def test_benchmark_row_fields_match_csv_header(self):
        names = [f.name for f in dataclasses.fields(BenchmarkRow)]
        assert names[:-1] == BENCHMARK_CSV_HEADER.split(",")
        assert names[-1] == "error"
