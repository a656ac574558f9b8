#!/usr/bin/env python3
"""Sweep kernel width and compare estimated-covariance Gaussian knockoffs
against parallel permutation knockoffs on FDR, power, and C2ST accuracy.

The interesting contrast: as smoothing grows, a Graphical Lasso plug-in
covariance degrades where the C2ST flags it, while the permutation
construction keeps FDP at or under target throughout. How the glasso
degradation shows up depends on scale: at larger n and p its FDP climbs
past q; at the desk-scale defaults here the design goes so collinear that
selection dies out first and the damage is visible in the C2ST column
instead.

Writes the row table as CSV and prints per-(method, w) means.
"""

import argparse
import json
import sys

from knockforge.simulation import SimulationConfig, run_w_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--shape", default="10,10,2")
    ap.add_argument("--widths", default="0,0.5,1.0,1.25")
    ap.add_argument("--runs", type=int, default=30)
    ap.add_argument("--q", type=float, default=0.1)
    ap.add_argument("--snr", type=float, default=2.0)
    ap.add_argument("--sparsity", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--methods", default="gaussian-glasso,parallel")
    ap.add_argument("--glasso-alpha", type=float, default=None,
                    help="fixed glasso penalty (default: data-driven rule)")
    ap.add_argument("--glasso-cv", action="store_true",
                    help="pick the glasso penalty by grid cross-validation")
    ap.add_argument("--out", default="fdr_smoothing_sweep.csv")
    args = ap.parse_args()

    cfg = SimulationConfig(
        n=args.n,
        shape=tuple(int(d) for d in args.shape.split(",")),
        sparsity=args.sparsity,
        snr=args.snr,
        seed=args.seed,
        runs=args.runs,
        q=args.q,
    )
    widths = tuple(float(w) for w in args.widths.split(","))
    methods = [m for m in args.methods.split(",") if m]
    if args.glasso_cv and args.glasso_alpha is not None:
        ap.error("--glasso-cv and --glasso-alpha are mutually exclusive")
    glasso_alpha = "cv" if args.glasso_cv else args.glasso_alpha
    table = run_w_sweep(cfg, widths, methods, workers=args.workers,
                        glasso_alpha=glasso_alpha)

    with open(args.out, "w", newline="") as f:
        f.write(table.to_csv())
    print(f"wrote {len(table.rows)} rows to {args.out}", file=sys.stderr)
    print(json.dumps(table.summary(), indent=2))


if __name__ == "__main__":
    main()
