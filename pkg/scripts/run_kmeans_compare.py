#!/usr/bin/env python3
"""Compare the three private k-means variants on planted blobs.

Runs count-and-sum perturbation with linear and zCDP budget splits against
centroid perturbation, all at one small total budget, and prints the
median NICV of each over several seeds.

    python scripts/run_kmeans_compare.py --eps 0.01
"""
import argparse

import numpy as np

import dpem


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=100_000)
    parser.add_argument("--blobs", type=int, default=5)
    parser.add_argument("--eps", type=float, default=0.01)
    parser.add_argument("--delta", type=float, default=1e-4)
    parser.add_argument("--iters", type=int, default=30)
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--data-seed", type=int, default=21)
    args = parser.parse_args()

    raw, _ = dpem.synth_mog(args.n, 2, args.blobs, separation=8.0,
                            seed=args.data_seed)
    data = dpem.preprocess(raw)
    budget = dpem.PrivacyBudget(args.eps, args.delta)

    scores = {"dplloyd-linear": [], "dplloyd-zcdp": [], "dpem": [],
              "lloyd (non-private)": []}
    for s in range(args.seeds):
        cl, _ = dpem.dplloyd(data, args.blobs, args.iters, args.eps,
                             composition="linear",
                             rng=np.random.default_rng(1000 + s))
        scores["dplloyd-linear"].append(dpem.nicv(data, cl.centers))
        cl, _ = dpem.dplloyd(data, args.blobs, args.iters, args.eps,
                             composition="zcdp", delta=args.delta,
                             rng=np.random.default_rng(1000 + s))
        scores["dplloyd-zcdp"].append(dpem.nicv(data, cl.centers))
        cl, _ = dpem.dpem_kmeans(data, args.blobs, args.iters, budget,
                                 np.random.default_rng(1000 + s))
        scores["dpem"].append(dpem.nicv(data, cl.centers))
        cl = dpem.lloyd(data, args.blobs, args.iters,
                        np.random.default_rng(1000 + s))
        scores["lloyd (non-private)"].append(dpem.nicv(data, cl.centers))

    print(f"n={args.n} blobs={args.blobs} eps={args.eps} delta={args.delta} "
          f"iters={args.iters} seeds={args.seeds}")
    for name, vals in scores.items():
        vals = np.array(vals)
        print(f"  {name:>22}: median NICV {np.median(vals):.4f} "
              f"(IQR {np.percentile(vals, 25):.4f}..{np.percentile(vals, 75):.4f})")


if __name__ == "__main__":
    main()
