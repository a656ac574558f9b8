"""Command-line surface: generate, select, diagnose, benchmark.

Subcommands
-----------
simulate    write a synthetic design, response, and planted coefficients
knockoffs   read a design CSV, write a knockoff CSV plus a generation log
select      read design/knockoffs/response, write the selection report
diagnose    c2st or pairing check on a design/knockoff pair
benchmark   batch FDR table from a TOML config and/or flags

Every command honors --seed (default 0); --strict makes an absent seed a
usage error. Each written artifact gets a JSON manifest sidecar recording
the command line, the resolved master seed, the tool version, input file
digests, and a UTC timestamp: re-running with the manifest's seed
reproduces the artifact byte for byte (the manifest itself carries the
timestamp and is not byte-stable).

CSV contract: comma separated, LF terminators, header v1,...,vp for
matrices and y for responses, values at 17 significant digits so a
read/write round trip is lossless.

Exit codes: 0 success, 2 usage, 3 I/O, 4 data contract, 5 numerical.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import shlex
import sys
from datetime import datetime, timezone

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__, simulation
from ._rng import resolve_seed
from .diagnostics import PAIRING_DEFAULT_CAP, ClassifierConfig, c2st, pairing_check
from .errors import (
    ContractViolationError,
    DegenerateInputError,
    NumericalFailureError,
)
from .gaussian_knockoffs import build_sampler, sample_knockoffs
from .inference import bh_select, knockoff_select, lcd_statistics, pi_statistics
from .nonparametric_knockoffs import (
    KNOCKOFF_METHODS,
    crossfit_knockoffs,
    parallel_knockoffs,
    sequential_knockoffs,
)
from .simulation import (
    GAUSSIAN_COV_OPTIONS,
    SimulationConfig,
    draw_support,
    expand_method_specs,
    generate_design,
    generate_response,
    run_benchmark,
    run_w_sweep,
    shuffle_pairings,
)

__all__ = ["main", "RunManifest"]


class _UsageError(Exception):
    """Bad flags or config content; maps to exit code 2."""


# ---------------------------------------------------------------- plumbing


def _build_hash():
    # content hash of the installed sources, so two differing builds never
    # report the same version string
    h = hashlib.sha256()
    pkg_dir = os.path.dirname(os.path.abspath(__file__))
    for name in sorted(os.listdir(pkg_dir)):
        if name.endswith(".py"):
            with open(os.path.join(pkg_dir, name), "rb") as f:
                h.update(name.encode())
                h.update(f.read())
    return h.hexdigest()[:12]


def _version_string():
    return f"knockforge {__version__}+{_build_hash()}"


@dataclasses.dataclass(frozen=True)
class RunManifest:
    command_line: str
    master_seed: int
    tool_version: str
    input_digests: dict
    timestamp: str


def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(path, args, seed, inputs):
    manifest = RunManifest(
        command_line=shlex.join(["knockforge", *args._argv]),
        master_seed=seed,
        tool_version=_version_string(),
        input_digests={p: _sha256_file(p) for p in inputs},
        timestamp=datetime.now(timezone.utc).isoformat(),
    )
    with open(path, "w", encoding="ascii", newline="") as f:
        json.dump(dataclasses.asdict(manifest), f, indent=2)
        f.write("\n")


def _sidecar(artifact_path, kind):
    stem, _ = os.path.splitext(artifact_path)
    return f"{stem}.{kind}.json"


def _fmt17(v):
    return f"{float(v):.17g}"


def _matrix_header(p):
    return ",".join(f"v{j + 1}" for j in range(p))


def _write_matrix_csv(path, x):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    with open(path, "w", encoding="ascii", newline="") as f:
        f.write(_matrix_header(x.shape[1]) + "\n")
        for row in x:
            f.write(",".join(_fmt17(v) for v in row) + "\n")


def _write_vector_csv(path, y):
    y = np.asarray(y, dtype=np.float64).ravel()
    with open(path, "w", encoding="ascii", newline="") as f:
        f.write("y\n")
        for v in y:
            f.write(_fmt17(v) + "\n")


def _read_csv(path, want):
    """Read a header-checked CSV; ``want`` is 'matrix' or 'vector'."""
    with open(path, "r", encoding="ascii") as f:
        header = f.readline().strip()
        try:
            data = np.loadtxt(f, delimiter=",", ndmin=2)
        except ValueError as e:
            raise ContractViolationError(f"{path}: {e}") from e
    names = header.split(",")
    if want == "vector":
        if names != ["y"]:
            raise ContractViolationError(f"{path}: expected header 'y', got {header!r}")
        return data[:, 0]
    if names != [f"v{j + 1}" for j in range(len(names))]:
        raise ContractViolationError(
            f"{path}: expected header v1,...,v{len(names)}, got {header!r}"
        )
    if data.shape[1] != len(names):
        raise ContractViolationError(
            f"{path}: header names {len(names)} columns but rows have {data.shape[1]}"
        )
    return data


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def _emit_json(payload, out_path, args, seed, inputs):
    text = json.dumps(payload, indent=2, default=_json_default) + "\n"
    if out_path:
        with open(out_path, "w", encoding="ascii", newline="") as f:
            f.write(text)
        _write_manifest(_sidecar(out_path, "manifest"), args, seed, inputs)
    else:
        sys.stdout.write(text)


def _parse_shape(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"shape must be a,b,c, got {text!r}")
    try:
        return tuple(int(p) for p in parts)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _parse_floats(text):
    try:
        return tuple(float(p) for p in text.split(","))
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _parse_names(text):
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _default_workers():
    env = os.environ.get("KNOCKFORGE_WORKERS")
    if env is None:
        return 1
    try:
        return max(1, int(env))
    except ValueError:
        return 1


# ------------------------------------------------------------- subcommands


def _cmd_simulate(args):
    try:
        cfg = SimulationConfig(
            n=args.n,
            shape=args.shape,
            kernel_width=args.kernel_width,
            sparsity=args.sparsity,
            snr=args.snr,
            standardize_columns=args.standardize,
        )
    except ContractViolationError as e:
        raise _UsageError(str(e)) from e
    seed = resolve_seed(args.seed)
    x = generate_design(cfg, seed=seed)
    truth = draw_support(cfg.p, cfg.sparsity, seed=seed)
    y, _ = generate_response(x, truth.beta_star, cfg.snr, seed=seed)
    os.makedirs(args.out_dir, exist_ok=True)
    paths = {
        "design": os.path.join(args.out_dir, "design.csv"),
        "response": os.path.join(args.out_dir, "response.csv"),
        "beta": os.path.join(args.out_dir, "beta.csv"),
    }
    _write_matrix_csv(paths["design"], x)
    _write_vector_csv(paths["response"], y)
    _write_matrix_csv(paths["beta"], truth.beta_star[None, :])
    _write_manifest(os.path.join(args.out_dir, "manifest.json"), args, seed, [])
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def _glasso_alpha_arg(args):
    # float alpha, the "cv" grid-selection sentinel, or None for the fixed rule
    if getattr(args, "glasso_cv", False):
        if args.glasso_alpha is not None:
            raise _UsageError("--glasso-cv and --glasso-alpha are mutually exclusive")
        return "cv"
    return args.glasso_alpha


def _cmd_knockoffs(args):
    x = _read_csv(args.design, "matrix")
    n, p = x.shape
    seed = resolve_seed(args.seed)
    inputs = [args.design]
    if args.method == "gaussian":
        if args.cov is None:
            raise _UsageError("--method gaussian requires --cov")
        if args.cov == "oracle":
            if args.oracle_sigma is None:
                raise _UsageError("--cov oracle requires --oracle-sigma FILE")
            sigma = _read_csv(args.oracle_sigma, "matrix")
            if sigma.shape != (p, p):
                raise ContractViolationError(
                    f"{args.oracle_sigma}: expected a {p}x{p} covariance to match "
                    f"{args.design}, got {sigma.shape[0]}x{sigma.shape[1]}"
                )
            inputs.append(args.oracle_sigma)
        else:
            sigma = simulation._estimate_sigma(x, args.cov, None, _glasso_alpha_arg(args))
        sampler = build_sampler(sigma, mean=x.mean(axis=0))
        x_tilde = sample_knockoffs(sampler, x, seed=seed)
        log = {
            "method": "gaussian",
            "cov": args.cov,
            "seed": seed,
            "entries": [
                {"column": j, "s": float(sampler.s[j])} for j in range(p)
            ],
        }
    else:
        fn = {
            "sequential": sequential_knockoffs,
            "parallel": lambda x, seed: parallel_knockoffs(
                x, seed=seed, workers=args.workers
            ),
            "crossfit": crossfit_knockoffs,
        }[args.method]
        result = fn(x, seed=seed)
        x_tilde = result.x_tilde
        log = {
            "method": result.method,
            "seed": result.seed,
            "notes": list(result.notes),
            "entries": [dataclasses.asdict(r) for r in result.generation_log],
        }
    _write_matrix_csv(args.out, x_tilde)
    with open(_sidecar(args.out, "log"), "w", encoding="ascii", newline="") as f:
        json.dump(log, f, indent=2, default=_json_default)
        f.write("\n")
    _write_manifest(_sidecar(args.out, "manifest"), args, seed, inputs)
    print(f"knockoffs: {args.out} ({n} rows, {p} columns, method {args.method})")
    return 0


def _read_aligned_pair(design_path, knockoffs_path):
    x = _read_csv(design_path, "matrix")
    x_tilde = _read_csv(knockoffs_path, "matrix")
    if x_tilde.shape != x.shape:
        raise ContractViolationError(
            f"{knockoffs_path}: shape {x_tilde.shape[0]}x{x_tilde.shape[1]} does not "
            f"match design {x.shape[0]}x{x.shape[1]} from {design_path}"
        )
    return x, x_tilde


def _cmd_select(args):
    x, x_tilde = _read_aligned_pair(args.design, args.knockoffs)
    y = _read_csv(args.response, "vector")
    if y.shape[0] != x.shape[0]:
        raise ContractViolationError(
            f"{args.response}: {y.shape[0]} rows do not match the "
            f"{x.shape[0]}-row design from {args.design}"
        )
    seed = resolve_seed(args.seed)
    stats = lcd_statistics(x, x_tilde, y, lam=args.lam)
    pi = pi_statistics(stats.w)
    if args.emit_pi_only:
        report = {
            "pi": pi.tolist(),
            "q": args.q,
            "selected": bh_select(pi, args.q).tolist(),
        }
    else:
        sel = knockoff_select(stats.w, args.q)
        report = {
            "w": stats.w.tolist(),
            "threshold": "inf" if math.isinf(sel.threshold) else sel.threshold,
            "q": args.q,
            "selected": sel.selected.tolist(),
            "pi": pi.tolist(),
            "lambda": stats.lam,
            "converged": stats.fit_converged,
        }
    inputs = [args.design, args.knockoffs, args.response]
    _emit_json(report, args.out, args, seed, inputs)
    return 0


def _cmd_diagnose(args):
    x, x_tilde = _read_aligned_pair(args.design, args.knockoffs)
    seed = resolve_seed(args.seed)
    if args.check == "c2st":
        report = c2st(
            x,
            x_tilde,
            folds=args.folds,
            classifier_config=ClassifierConfig(l2_penalty=args.l2),
            seed=seed,
        )
        payload = {
            "check": "c2st",
            "fold_accuracies": list(report.fold_accuracies),
            "mean_accuracy": report.mean_accuracy,
            "n_test_total": report.n_test_total,
            "p_value": report.p_value,
            "verdict": report.verdict,
            "notes": list(report.notes),
        }
    else:
        if args.shuffle_pairings is not None:
            x_tilde = shuffle_pairings(x_tilde, args.shuffle_pairings, seed=seed)
        report = pairing_check(
            x, x_tilde, cap=args.cap, subsample=args.subsample, seed=seed
        )
        payload = {
            "check": "pairing",
            "identity_fraction": report.identity_fraction,
            "total_cost": report.total_cost,
            "verdict": report.verdict,
            "assignment": report.assignment.tolist(),
        }
    _emit_json(payload, args.out, args, seed, [args.design, args.knockoffs])
    return 0


_BENCH_CONFIG_KEYS = {
    "n", "shape", "kernel_width", "sparsity", "snr", "seed", "runs", "q",
    "standardize", "methods", "cov_options", "w_sweep", "workers",
    "glasso_alpha",
}


def _load_bench_settings(args):
    settings = {}
    if args.config:
        with open(args.config, "rb") as f:
            try:
                settings = tomllib.load(f)
            except tomllib.TOMLDecodeError as e:
                raise _UsageError(f"{args.config}: {e}") from e
        unknown = set(settings) - _BENCH_CONFIG_KEYS
        if unknown:
            raise _UsageError(
                f"{args.config}: unknown keys {sorted(unknown)}; "
                f"valid: {sorted(_BENCH_CONFIG_KEYS)}"
            )
    # flags beat the config file
    for key in _BENCH_CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = val
    return settings


def _cmd_benchmark(args):
    settings = _load_bench_settings(args)
    methods = settings.get("methods")
    if not methods:
        raise _UsageError("no methods given; pass --methods or a config file")
    methods = list(methods) if not isinstance(methods, str) else [methods]
    cov_options = tuple(settings.get("cov_options", ()))
    try:
        expand_method_specs(methods, cov_options)
    except ContractViolationError as e:
        raise _UsageError(str(e)) from e
    try:
        cfg = SimulationConfig(
            n=int(settings.get("n", 200)),
            shape=tuple(settings.get("shape", (10, 10, 2))),
            kernel_width=float(settings.get("kernel_width", 0.5)),
            sparsity=float(settings.get("sparsity", 0.1)),
            snr=float(settings.get("snr", 2.0)),
            seed=resolve_seed(settings.get("seed")),
            runs=int(settings.get("runs", 30)),
            q=float(settings.get("q", 0.1)),
            standardize_columns=bool(settings.get("standardize", False)),
        )
    except (ContractViolationError, TypeError, ValueError) as e:
        raise _UsageError(str(e)) from e
    workers = int(settings.get("workers", _default_workers()))
    glasso_alpha = settings.get("glasso_alpha")
    if getattr(args, "glasso_cv", False):
        if args.glasso_alpha is not None:
            raise _UsageError("--glasso-cv and --glasso-alpha are mutually exclusive")
        glasso_alpha = "cv"
    widths = settings.get("w_sweep")
    if widths:
        table = run_w_sweep(
            cfg, tuple(float(w) for w in widths), methods, cov_options,
            workers=workers, glasso_alpha=glasso_alpha,
        )
    else:
        table = run_benchmark(
            cfg, methods, cov_options, workers=workers, glasso_alpha=glasso_alpha
        )
    summary = {
        "config": dataclasses.asdict(cfg),
        "methods": methods,
        "groups": table.summary(),
        "n_rows": len(table.rows),
        "n_errors": len(table.errors),
    }
    if args.compare_wallclock:
        by_method = {}
        for row in table.rows:
            if row.error is None:
                by_method.setdefault(row.method, []).append(row.wallclock_ms)
        wc = {m: float(np.mean(v)) for m, v in sorted(by_method.items())}
        comparison = {"mean_wallclock_ms": wc}
        if "sequential" in wc and "parallel" in wc and wc["parallel"] > 0:
            # measured on this machine and run; informational only
            comparison["sequential_over_parallel"] = wc["sequential"] / wc["parallel"]
        summary["wallclock_comparison"] = comparison
    inputs = [args.config] if args.config else []
    csv_text = table.to_csv()
    if args.out_csv:
        with open(args.out_csv, "w", encoding="ascii", newline="") as f:
            f.write(csv_text)
        _write_manifest(_sidecar(args.out_csv, "manifest"), args, cfg.seed, inputs)
    else:
        sys.stdout.write(csv_text)
    _emit_json(summary, args.out_summary, args, cfg.seed, inputs)
    return 0


# ------------------------------------------------------------------ parser


def _add_seed_flags(sp):
    sp.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    sp.add_argument(
        "--strict", action="store_true",
        help="refuse to run without an explicit --seed",
    )


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="knockforge",
        description="Knockoff generation, FDR-controlled selection, and diagnostics.",
    )
    parser.add_argument("--version", action="version", version=_version_string())
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="write a synthetic dataset")
    sim.add_argument("--n", type=int, default=200)
    sim.add_argument("--shape", type=_parse_shape, default=(10, 10, 2),
                     help="tensor shape a,b,c; p = a*b*c")
    sim.add_argument("--kernel-width", type=float, default=0.5)
    sim.add_argument("--sparsity", type=float, default=0.1)
    sim.add_argument("--snr", type=float, default=2.0)
    sim.add_argument("--standardize", action="store_true")
    sim.add_argument("--out-dir", required=True)
    _add_seed_flags(sim)
    sim.set_defaults(func=_cmd_simulate)

    kn = sub.add_parser("knockoffs", help="generate a knockoff copy of a design CSV")
    kn.add_argument("--design", required=True)
    kn.add_argument("--method", required=True, choices=KNOCKOFF_METHODS)
    kn.add_argument("--cov", choices=GAUSSIAN_COV_OPTIONS, default=None,
                    help="covariance source for --method gaussian")
    kn.add_argument("--oracle-sigma", default=None,
                    help="CSV with the exact covariance, for --cov oracle")
    kn.add_argument("--glasso-alpha", type=float, default=None)
    kn.add_argument("--glasso-cv", action="store_true",
                    help="pick the glasso penalty by grid cross-validation")
    kn.add_argument("--workers", type=int, default=_default_workers(),
                    help="worker threads for --method parallel "
                         "(default $KNOCKFORGE_WORKERS or 1)")
    kn.add_argument("--out", required=True)
    _add_seed_flags(kn)
    kn.set_defaults(func=_cmd_knockoffs)

    sel = sub.add_parser("select", help="W statistics and FDR-calibrated selection")
    sel.add_argument("--design", required=True)
    sel.add_argument("--knockoffs", required=True)
    sel.add_argument("--response", required=True)
    sel.add_argument("--q", type=float, default=0.1)
    sel.add_argument("--lam", type=float, default=None,
                     help="lasso penalty (default: saturation/100)")
    sel.add_argument("--emit-pi-only", action="store_true",
                     help="report pi scores with step-up selection instead")
    sel.add_argument("--out", default=None, help="JSON path (default stdout)")
    _add_seed_flags(sel)
    sel.set_defaults(func=_cmd_select)

    diag = sub.add_parser("diagnose", help="exchangeability diagnostics")
    dsub = diag.add_subparsers(dest="check", required=True)
    dc = dsub.add_parser("c2st", help="classifier two-sample test")
    dc.add_argument("--design", required=True)
    dc.add_argument("--knockoffs", required=True)
    dc.add_argument("--folds", type=int, default=5)
    dc.add_argument("--l2", type=float, default=1.0)
    dc.add_argument("--out", default=None)
    _add_seed_flags(dc)
    dc.set_defaults(func=_cmd_diagnose)
    dp = dsub.add_parser("pairing", help="optimal-assignment pairing check")
    dp.add_argument("--design", required=True)
    dp.add_argument("--knockoffs", required=True)
    dp.add_argument("--shuffle-pairings", type=float, default=None,
                    help="break this fraction of row pairings first")
    dp.add_argument("--cap", type=int, default=PAIRING_DEFAULT_CAP)
    dp.add_argument("--subsample", action="store_true")
    dp.add_argument("--out", default=None)
    _add_seed_flags(dp)
    dp.set_defaults(func=_cmd_diagnose)

    be = sub.add_parser("benchmark", help="batch FDR/power/C2ST table")
    be.add_argument("--config", default=None, help="TOML file; flags override it")
    be.add_argument("--n", type=int, default=None)
    be.add_argument("--shape", type=_parse_shape, default=None)
    be.add_argument("--kernel-width", type=float, default=None, dest="kernel_width")
    be.add_argument("--sparsity", type=float, default=None)
    be.add_argument("--snr", type=float, default=None)
    be.add_argument("--runs", type=int, default=None)
    be.add_argument("--q", type=float, default=None)
    be.add_argument("--standardize", action="store_true", default=None)
    be.add_argument("--methods", type=_parse_names, default=None,
                    help="comma list, e.g. gaussian-oracle,parallel")
    be.add_argument("--cov-options", type=_parse_names, default=None,
                    dest="cov_options", help="covariances crossed with 'gaussian'")
    be.add_argument("--w-sweep", type=_parse_floats, default=None, dest="w_sweep",
                    help="comma list of kernel widths, e.g. 0,0.5,1.0,1.25")
    be.add_argument("--workers", type=int, default=None)
    be.add_argument("--glasso-alpha", type=float, default=None, dest="glasso_alpha")
    be.add_argument("--glasso-cv", action="store_true",
                    help="pick the glasso penalty by grid cross-validation")
    be.add_argument("--compare-wallclock", action="store_true",
                    help="report measured per-method generation time")
    be.add_argument("--out-csv", default=None, help="row table (default stdout)")
    be.add_argument("--out-summary", default=None, help="summary JSON (default stdout)")
    _add_seed_flags(be)
    be.set_defaults(func=_cmd_benchmark)

    return parser


def main(argv=None):
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        args._argv = argv
        if args.strict and args.seed is None:
            parser.error(f"{args.command}: --strict requires an explicit --seed")
        return args.func(args)
    except SystemExit as e:
        return int(e.code or 0)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 3
    except (ContractViolationError, DegenerateInputError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 4
    except (NumericalFailureError, np.linalg.LinAlgError, FloatingPointError) as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
