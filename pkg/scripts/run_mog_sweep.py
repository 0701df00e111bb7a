#!/usr/bin/env python3
"""Privacy/utility sweep for the private mixture estimator.

Fits a planted Gaussian mixture at several total budgets under each
composition method and writes median/IQR test log-likelihood curves plus
the non-private baseline, ready for plotting.

    python scripts/run_mog_sweep.py --out results/mog_sweep
"""
import argparse
import sys

from dpem.cli import main as dpem_main


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/mog_sweep")
    parser.add_argument("--n", type=int, default=20_000)
    parser.add_argument("--dim", type=int, default=5)
    parser.add_argument("--components", type=int, default=3)
    parser.add_argument("--iters", type=int, default=10)
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--eps-list", default="0.1,0.5,1,2,4")
    parser.add_argument("--methods", default="linear,advanced,zcdp,ma")
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()

    return dpem_main([
        "fit", "--model", "mog",
        "--synth-n", str(args.n), "--synth-d", str(args.dim),
        "--synth-k", str(args.components), "--synth-separation", "1.0",
        "--k", str(args.components), "--iters", str(args.iters),
        "--eps-list", args.eps_list, "--delta", "1e-4", "--delta-i", "1e-6",
        "--method", args.methods, "--scenario", "ggg", "--estimator", "map",
        "--seeds", str(args.seeds), "--seed", "7",
        "--jobs", str(args.jobs), "--out", args.out,
    ])


if __name__ == "__main__":
    sys.exit(main())
