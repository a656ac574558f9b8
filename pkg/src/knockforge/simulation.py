"""Synthetic benchmark: smoothed tensor designs through batch FDR tables.

Designs are i.i.d. standard-normal tensors of shape (a, b, c) smoothed by a
truncated isotropic Gaussian kernel (std ``kernel_width``, radius four
widths, reflected boundaries) and flattened row-major, so the kernel width
dials the column correlation from none upward. The same separable operator
is exposed as an exact covariance via oracle_covariance, which keeps every
oracle baseline consistent with the generator by construction.

run_benchmark ties the whole pipeline together: per run, one shared
dataset; per method, knockoffs, W statistics, selection at q, FDP/power
against the planted support, and a C2ST read; one table row per
(run, method). Every row carries the derived seed that reproduces it alone.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass

import numpy as np

from ._rng import NS_BENCHMARK, NS_SIMULATION, derive_seed, resolve_seed, substream
from .covariance import (
    alpha_grid_select,
    empirical_covariance,
    graphical_lasso,
    ledoit_wolf,
)
from .diagnostics import c2st
from .errors import (
    ContractViolationError,
    DegenerateInputError,
    KnockforgeError,
)
from .gaussian_knockoffs import build_sampler, sample_knockoffs
from .inference import fdp as fdp_of
from .inference import knockoff_select, lcd_statistics
from .inference import power as power_of
from .nonparametric_knockoffs import (
    crossfit_knockoffs,
    parallel_knockoffs,
    sequential_knockoffs,
)

__all__ = [
    "SimulationConfig",
    "SimulationTruth",
    "BenchmarkRow",
    "BenchmarkTable",
    "BENCHMARK_CSV_HEADER",
    "GAUSSIAN_COV_OPTIONS",
    "NONPARAMETRIC_METHODS",
    "generate_design",
    "oracle_covariance",
    "draw_support",
    "generate_response",
    "shuffle_pairings",
    "expand_method_specs",
    "run_benchmark",
    "run_w_sweep",
]

GAUSSIAN_COV_OPTIONS = ("empirical", "lw", "glasso", "oracle")
NONPARAMETRIC_METHODS = ("sequential", "parallel", "crossfit")
BENCHMARK_CSV_HEADER = "run,method,cov,w,n,p,q,fdp,power,c2st_acc,c2st_pval,seed,wallclock_ms"

GLASSO_ALPHA_CORR_SCALE = 0.1  # of the largest absolute off-diagonal correlation

# substream discriminators under NS_SIMULATION
_TAG_DESIGN = 1
_TAG_SUPPORT = 2
_TAG_RESPONSE = 3
_TAG_SHUFFLE = 4


@dataclass(frozen=True)
class SimulationConfig:
    """One benchmark operating point. Defaults are the desk-scale setting."""

    n: int = 200
    shape: tuple = (10, 10, 2)
    kernel_width: float = 0.5
    sparsity: float = 0.1
    snr: float = 2.0
    seed: int = 0
    runs: int = 30
    q: float = 0.1
    standardize_columns: bool = False

    def __post_init__(self):
        shape = tuple(int(d) for d in self.shape)
        object.__setattr__(self, "shape", shape)
        if len(shape) != 3 or any(d < 1 for d in shape):
            raise ContractViolationError(f"shape must be 3 positive ints, got {shape}")
        if self.n < 1:
            raise ContractViolationError(f"n must be positive, got {self.n}")
        if self.kernel_width < 0:
            raise ContractViolationError(
                f"kernel_width must be nonnegative, got {self.kernel_width}"
            )
        if not 0.0 < self.sparsity <= 1.0:
            raise ContractViolationError(f"sparsity must be in (0, 1], got {self.sparsity}")
        if math.floor(self.sparsity * self.p) < 1:
            raise ContractViolationError(
                f"sparsity {self.sparsity} leaves no nonzero coefficient at p={self.p}"
            )
        if self.snr <= 0:
            raise ContractViolationError(f"snr must be positive, got {self.snr}")
        if not 0.0 < self.q < 1.0:
            raise ContractViolationError(f"q must lie in (0, 1), got {self.q}")
        if self.runs < 1:
            raise ContractViolationError(f"runs must be positive, got {self.runs}")

    @property
    def p(self):
        a, b, c = self.shape
        return a * b * c


@dataclass(frozen=True)
class SimulationTruth:
    """Planted signal: one-hot coefficient vector and its index split."""

    beta_star: np.ndarray
    h1: np.ndarray
    h0: np.ndarray
    sigma_noise: float | None = None


def _reflect(idx, m):
    # fold until inside [0, m): mirror without repeating the edge sample twice
    while idx < 0 or idx >= m:
        if idx < 0:
            idx = -idx - 1
        else:
            idx = 2 * m - 1 - idx
    return idx


def _axis_operator(m, w):
    """Row-stochastic-by-mass smoothing matrix for one axis of length m."""
    if w == 0.0:
        return np.eye(m)
    radius = math.ceil(4.0 * w)
    offsets = np.arange(-radius, radius + 1)
    weights = np.exp(-(offsets.astype(np.float64) ** 2) / (2.0 * w * w))
    weights /= weights.sum()
    op = np.zeros((m, m))
    for i in range(m):
        for k, g in zip(offsets, weights):
            op[i, _reflect(i + int(k), m)] += g
    return op


def _smoothing_operators(shape, w):
    return [_axis_operator(m, w) for m in shape]


def generate_design(config, seed=None, strict=False):
    """Draw n smoothed tensors and flatten each to a length-p row."""
    seed = resolve_seed(seed, strict=strict)
    rng = substream(seed, NS_SIMULATION, _TAG_DESIGN)
    a, b, c = config.shape
    t = rng.standard_normal((config.n, a, b, c))
    if config.kernel_width > 0.0:
        op_a, op_b, op_c = _smoothing_operators(config.shape, config.kernel_width)
        t = np.einsum("ij,njbc->nibc", op_a, t)
        t = np.einsum("ij,najc->naic", op_b, t)
        t = np.einsum("ij,nabj->nabi", op_c, t)
    x = t.reshape(config.n, config.p)
    if config.standardize_columns:
        std = x.std(axis=0)
        if np.any(std == 0.0):
            raise DegenerateInputError("cannot standardize a zero-variance column")
        x = (x - x.mean(axis=0)) / std
    return x


def oracle_covariance(shape, w):
    """Exact covariance of the flattened smoothed field: (A A^T) for the
    separable operator A used by generate_design."""
    shape = tuple(int(d) for d in shape)
    if len(shape) != 3 or any(d < 1 for d in shape):
        raise ContractViolationError(f"shape must be 3 positive ints, got {shape}")
    if w < 0:
        raise ContractViolationError(f"kernel width must be nonnegative, got {w}")
    op_a, op_b, op_c = _smoothing_operators(shape, float(w))
    a = np.kron(np.kron(op_a, op_b), op_c)
    sigma = a @ a.T
    return (sigma + sigma.T) / 2.0


def draw_support(p, s_p, seed=None, strict=False):
    """Uniform support of size floor(s_p * p); beta_star is one-hot on it."""
    seed = resolve_seed(seed, strict=strict)
    p = int(p)
    size = math.floor(float(s_p) * p)
    if not 1 <= size <= p:
        raise ContractViolationError(
            f"support size floor({s_p} * {p}) = {size} is outside [1, {p}]"
        )
    rng = substream(seed, NS_SIMULATION, _TAG_SUPPORT)
    h1 = np.sort(rng.choice(p, size=size, replace=False))
    beta = np.zeros(p)
    beta[h1] = 1.0
    h0 = np.setdiff1d(np.arange(p), h1)
    return SimulationTruth(beta_star=beta, h1=h1, h0=h0)


def generate_response(x, beta_star, snr, seed=None, strict=False):
    """y = X beta + sigma eps with sigma chosen so the realized
    ||X beta|| / (sigma ||eps||) equals snr exactly."""
    seed = resolve_seed(seed, strict=strict)
    x = np.asarray(x, dtype=np.float64)
    beta_star = np.asarray(beta_star, dtype=np.float64)
    if x.ndim != 2 or beta_star.shape != (x.shape[1],):
        raise ContractViolationError(
            f"beta_star must match the {x.shape[1]} design columns"
        )
    snr = float(snr)
    if snr <= 0:
        raise ContractViolationError(f"snr must be positive, got {snr}")
    signal = x @ beta_star
    signal_norm = float(np.linalg.norm(signal))
    if signal_norm == 0.0:
        raise DegenerateInputError("X beta_star is identically zero; snr is undefined")
    rng = substream(seed, NS_SIMULATION, _TAG_RESPONSE)
    eps = rng.standard_normal(x.shape[0])
    sigma = signal_norm / (snr * float(np.linalg.norm(eps)))
    return signal + sigma * eps, sigma


def shuffle_pairings(x_tilde, fraction, seed=None, strict=False):
    """Break floor(fraction * n) row pairings by a uniform cycle on them.

    A cycle moves every chosen row, so the broken fraction is exactly what
    was asked for; the row multiset never changes.
    """
    seed = resolve_seed(seed, strict=strict)
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    if x_tilde.ndim != 2:
        raise ContractViolationError(f"x_tilde must be 2-d, got {x_tilde.shape}")
    fraction = float(fraction)
    if not 0.0 <= fraction <= 1.0:
        raise ContractViolationError(f"fraction must lie in [0, 1], got {fraction}")
    n = x_tilde.shape[0]
    m = math.floor(fraction * n)
    out = x_tilde.copy()
    if m <= 1:
        return out
    rng = substream(seed, NS_SIMULATION, _TAG_SHUFFLE)
    chosen = rng.choice(n, size=m, replace=False)
    cycle = chosen[rng.permutation(m)]
    out[cycle] = x_tilde[np.roll(cycle, -1)]
    return out


@dataclass(frozen=True)
class BenchmarkRow:
    run: int
    method: str
    cov: str
    w: float
    n: int
    p: int
    q: float
    fdp: float
    power: float
    c2st_acc: float
    c2st_pval: float
    seed: int
    wallclock_ms: float
    error: str | None = None


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


@dataclass(frozen=True)
class BenchmarkTable:
    rows: tuple
    details: tuple | None = None

    def to_csv(self):
        lines = [BENCHMARK_CSV_HEADER]
        for r in self.rows:
            lines.append(",".join(_fmt(v) for v in (
                r.run, r.method, r.cov, r.w, r.n, r.p, r.q,
                r.fdp, r.power, r.c2st_acc, r.c2st_pval, r.seed, r.wallclock_ms,
            )))
        return "\n".join(lines) + "\n"

    def summary(self):
        """Per (method, cov, w) means over clean rows, plus error counts."""
        groups = {}
        for r in self.rows:
            groups.setdefault((r.method, r.cov, r.w), []).append(r)
        out = []
        for (method, cov, w), rows in sorted(groups.items()):
            clean = [r for r in rows if r.error is None]
            entry = {
                "method": method,
                "cov": cov,
                "w": w,
                "n_rows": len(rows),
                "n_errors": len(rows) - len(clean),
            }
            for name in ("fdp", "power", "c2st_acc", "c2st_pval", "wallclock_ms"):
                vals = [getattr(r, name) for r in clean]
                entry[f"mean_{name}"] = float(np.mean(vals)) if vals else float("nan")
            out.append(entry)
        return out

    @property
    def errors(self):
        return tuple(r for r in self.rows if r.error is not None)


def expand_method_specs(methods, covariance_options=()):
    """Normalize method names to (method, cov) pairs.

    Accepts bare nonparametric names, combined 'gaussian-<cov>' names, and
    bare 'gaussian' crossed with ``covariance_options``.
    """
    valid_combined = [f"gaussian-{c}" for c in GAUSSIAN_COV_OPTIONS]
    valid = list(NONPARAMETRIC_METHODS) + ["gaussian"] + valid_combined
    pairs = []
    for name in methods:
        if name in NONPARAMETRIC_METHODS:
            pairs.append((name, "none"))
        elif name == "gaussian":
            if not covariance_options:
                raise ContractViolationError(
                    "method 'gaussian' needs covariance_options, or use one of "
                    + ", ".join(valid_combined)
                )
            for cov in covariance_options:
                if cov not in GAUSSIAN_COV_OPTIONS:
                    raise ContractViolationError(
                        f"unknown covariance {cov!r}; valid: {', '.join(GAUSSIAN_COV_OPTIONS)}"
                    )
                pairs.append(("gaussian", cov))
        elif name in valid_combined:
            pairs.append(("gaussian", name.split("-", 1)[1]))
        else:
            raise ContractViolationError(
                f"unknown method {name!r}; valid: {', '.join(valid)}"
            )
    return pairs


def _estimate_sigma(x, cov, config, glasso_alpha):
    if cov == "oracle":
        return oracle_covariance(config.shape, config.kernel_width)
    if cov == "empirical":
        return empirical_covariance(x).sigma
    if cov == "lw":
        return ledoit_wolf(x).sigma
    if cov == "glasso":
        if glasso_alpha == "cv":
            glasso_alpha, _ = alpha_grid_select(x)
        elif glasso_alpha is None:
            emp = empirical_covariance(x).sigma
            d = np.sqrt(np.diag(emp))
            corr = emp / np.outer(d, d)
            off = np.abs(corr - np.diag(np.diag(corr)))
            glasso_alpha = GLASSO_ALPHA_CORR_SCALE * float(off.max())
        return graphical_lasso(x, alpha=glasso_alpha).sigma
    raise ContractViolationError(f"unknown covariance {cov!r}")


def _make_knockoffs(x, method, cov, config, run_seed, workers, glasso_alpha):
    if method == "gaussian":
        sigma = _estimate_sigma(x, cov, config, glasso_alpha)
        if cov == "oracle":
            sampler = build_sampler(sigma)  # the true field is zero-mean
        else:
            sampler = build_sampler(sigma, mean=x.mean(axis=0))
        return sample_knockoffs(sampler, x, seed=run_seed)
    if method == "sequential":
        return sequential_knockoffs(x, seed=run_seed).x_tilde
    if method == "parallel":
        return parallel_knockoffs(x, seed=run_seed, workers=workers).x_tilde
    if method == "crossfit":
        return crossfit_knockoffs(x, seed=run_seed).x_tilde
    raise ContractViolationError(f"unknown method {method!r}")


def _w_entropy(w):
    # distinct widths must yield distinct seed material, including 0.25 vs 0.5
    return int(np.float64(w).view(np.uint64))


def run_benchmark(config, methods, covariance_options=(), workers=1,
                  glasso_alpha=None, keep_details=False):
    """Run the full pipeline ``config.runs`` times per method.

    Within a run every method sees the same design, support, and response,
    so method columns are paired. A failing cell becomes a row with an
    error message and NaN metrics; the batch continues.
    """
    pairs = expand_method_specs(methods, covariance_options)
    if not pairs:
        raise ContractViolationError("no methods requested")
    rows = []
    details = [] if keep_details else None
    w = float(config.kernel_width)
    for run in range(config.runs):
        run_seed = derive_seed(config.seed, NS_BENCHMARK, run, _w_entropy(w))
        x = generate_design(config, seed=run_seed)
        truth = draw_support(config.p, config.sparsity, seed=run_seed)
        y, _ = generate_response(x, truth.beta_star, config.snr, seed=run_seed)
        for method, cov in pairs:
            t0 = time.perf_counter()
            try:
                x_tilde = _make_knockoffs(
                    x, method, cov, config, run_seed, workers, glasso_alpha
                )
                gen_ms = (time.perf_counter() - t0) * 1000.0
                stats = lcd_statistics(x, x_tilde, y)
                sel = knockoff_select(stats.w, config.q)
                report = c2st(x, x_tilde, folds=5, seed=run_seed)
                rows.append(BenchmarkRow(
                    run=run, method=method, cov=cov, w=w, n=config.n, p=config.p,
                    q=config.q,
                    fdp=fdp_of(sel.selected, truth.h0),
                    power=power_of(sel.selected, truth.h1),
                    c2st_acc=report.mean_accuracy,
                    c2st_pval=report.p_value,
                    seed=run_seed,
                    wallclock_ms=gen_ms,
                ))
                if keep_details:
                    details.append({
                        "run": run, "method": method, "cov": cov,
                        "w_stats": stats.w, "selected": sel.selected,
                        "threshold": sel.threshold,
                        "h0": truth.h0, "h1": truth.h1,
                    })
            except (KnockforgeError, np.linalg.LinAlgError, FloatingPointError) as e:
                nan = float("nan")
                rows.append(BenchmarkRow(
                    run=run, method=method, cov=cov, w=w, n=config.n, p=config.p,
                    q=config.q, fdp=nan, power=nan, c2st_acc=nan, c2st_pval=nan,
                    seed=run_seed, wallclock_ms=nan,
                    error=f"{type(e).__name__}: {e}",
                ))
                if keep_details:
                    details.append(None)
    order = np.lexsort((
        np.array([f"{r.method}-{r.cov}" for r in rows]),
        np.array([r.run for r in rows]),
    ))
    rows = [rows[i] for i in order]
    if keep_details:
        details = [details[i] for i in order]
    return BenchmarkTable(
        rows=tuple(rows), details=tuple(details) if keep_details else None
    )


def run_w_sweep(config, widths, methods, covariance_options=(), workers=1,
                glasso_alpha=None, keep_details=False):
    """Concatenate run_benchmark tables across kernel widths."""
    all_rows = []
    all_details = [] if keep_details else None
    for w in widths:
        cfg = dataclasses.replace(config, kernel_width=float(w))
        table = run_benchmark(
            cfg, methods, covariance_options, workers=workers,
            glasso_alpha=glasso_alpha, keep_details=keep_details,
        )
        all_rows.extend(table.rows)
        if keep_details:
            all_details.extend(table.details)
    return BenchmarkTable(
        rows=tuple(all_rows),
        details=tuple(all_details) if keep_details else None,
    )
