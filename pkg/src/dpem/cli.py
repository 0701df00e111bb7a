"""Command-line experiment runner and budget-calibration tool.

Two subcommands:

* ``dpem calibrate``: per-iteration budgets for each composition method,
  side by side.
* ``dpem fit``: sweep epsilon x folds x seeds for a model (mog, fa or
  kmeans), writing line-delimited JSON results, a plot-ready CSV summary
  of median/IQR metric vs epsilon, and a non-private baseline row.

Exit codes: 0 success, 2 bad flags, 3 unattainable budget, 4 data error.
``DPEM_SEED`` overrides ``--seed``.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import dataio
from .accountant import (
    CompositionPlan,
    PrivacyBudget,
    calibrate,
    compose_trace,
    gaussian_sigma,
)
from .data import BoundedDataset, preprocess
from .dpem_mog import DpEmConfig, run_dpem_mog
from .errors import DataError, DpemError, UnattainableBudgetError
from .fa import fa_average_log_likelihood, perturb_second_moment, run_fa_em, second_moment
from .kmeans import dplloyd, dpem_kmeans, lloyd, nicv
from .mog import fit_em, log_likelihood

EXIT_OK = 0
EXIT_FLAGS = 2
EXIT_BUDGET = 3
EXIT_DATA = 4

MOG_METHODS = ("linear", "advanced", "zcdp", "ma")
KMEANS_METHODS = ("dplloyd-linear", "dplloyd-zcdp", "dpem")
AUDIT_SLACK = 1e-9


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpem", description="differentially private estimation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    cal = sub.add_parser("calibrate",
                         help="per-iteration budgets for each composition method")
    cal.add_argument("--eps", type=float, required=True)
    cal.add_argument("--delta", type=float, required=True)
    cal.add_argument("--delta-i", type=float, default=1e-6)
    cal.add_argument("--iters", type=int, required=True)
    cal.add_argument("--components", type=int, required=True)
    cal.add_argument("--scenario", choices=("llg", "ggg"), default="ggg")
    cal.add_argument("--method",
                     choices=MOG_METHODS + ("all",), default="all")
    cal.add_argument("--max-order", type=int, default=64,
                     help="largest moment order for the MA tail bound")
    cal.add_argument("--n", type=int, default=None,
                     help="dataset size, for concrete noise scales "
                          "(balanced components assumed)")

    fit = sub.add_parser("fit", help="run a privacy/utility sweep")
    fit.add_argument("--model", choices=("mog", "fa", "kmeans"), required=True)
    fit.add_argument("--data", type=str, default=None,
                     help="numeric CSV of raw data rows")
    fit.add_argument("--header", action="store_true",
                     help="skip the first CSV line")
    fit.add_argument("--synth-n", type=int, default=None,
                     help="generate a planted mixture instead of reading --data")
    fit.add_argument("--synth-d", type=int, default=2)
    fit.add_argument("--synth-k", type=int, default=3)
    fit.add_argument("--synth-separation", type=float, default=6.0)
    fit.add_argument("--synth-seed", type=int, default=0)
    fit.add_argument("--k", type=int, default=3,
                     help="mixture components / cluster count")
    fit.add_argument("--q", type=int, default=2, help="latent dimension (fa)")
    fit.add_argument("--iters", type=int, default=10)
    fit.add_argument("--eps-list", type=str, default="0.1,0.5,1,2,4")
    fit.add_argument("--delta", type=float, default=1e-4)
    fit.add_argument("--delta-i", type=float, default=1e-6)
    fit.add_argument("--method", type=str, default=None,
                     help="comma-separated composition methods "
                          "(mog: linear,advanced,zcdp,ma; "
                          "kmeans: dplloyd-linear,dplloyd-zcdp,dpem)")
    fit.add_argument("--scenario", choices=("llg", "ggg"), default="ggg")
    fit.add_argument("--estimator", choices=("mle", "map"), default="map")
    fit.add_argument("--folds", type=int, default=1,
                     help="cross-validation folds (1 = single 90/10 split)")
    fit.add_argument("--seeds", type=int, default=1,
                     help="independent noise seeds per cell")
    fit.add_argument("--seed", type=int, default=0, help="master seed")
    fit.add_argument("--max-order", type=int, default=512)
    fit.add_argument("--jobs", type=int, default=1)
    fit.add_argument("--out", type=str, required=True)
    return parser


# ---------------------------------------------------------------------------
# calibrate


def _calibrate_row(method: str, args) -> dict:
    plan = CompositionPlan(
        scenario=args.scenario, iterations=args.iters,
        components=args.components, delta_i=args.delta_i, method=method)
    total = PrivacyBudget(args.eps, args.delta)
    row = {"method": method}
    try:
        eps_i = calibrate(plan, total, max_order=args.max_order)
    except UnattainableBudgetError as exc:
        row["error"] = str(exc)
        return row
    row["eps_i"] = eps_i
    row["gauss_sigma_mult"] = gaussian_sigma(1.0, eps_i, args.delta_i)
    row["laplace_scale_mult"] = 1.0 / eps_i
    if args.n:
        balanced = args.n / args.components
        row["sigma_weights"] = row["gauss_sigma_mult"] * 2.0 / args.n
        row["sigma_means"] = row["gauss_sigma_mult"] * 2.0 / balanced
        row["sigma_covs"] = row["gauss_sigma_mult"] * 2.0 / balanced
    return row


def cmd_calibrate(args) -> int:
    methods = MOG_METHODS if args.method == "all" else (args.method,)
    rows = [_calibrate_row(m, args) for m in methods]
    cols = ["method", "eps_i", "gauss_sigma_mult", "laplace_scale_mult"]
    if args.n:
        cols += ["sigma_weights", "sigma_means", "sigma_covs"]
    print(f"scenario={args.scenario} J={args.iters} K={args.components} "
          f"eps={args.eps} delta={args.delta} delta_i={args.delta_i}")
    print("  ".join(f"{c:>18}" for c in cols))
    ok = 0
    for row in rows:
        if "error" in row:
            print(f"{row['method']:>18}  unattainable: {row['error']}")
            continue
        ok += 1
        cells = [f"{row['method']:>18}"]
        for c in cols[1:]:
            cells.append(f"{row[c]:>18.8g}")
        print("  ".join(cells))
    return EXIT_OK if ok else EXIT_BUDGET


# ---------------------------------------------------------------------------
# fit


def _load_matrix(args) -> np.ndarray:
    if args.data is not None:
        return dataio.load_csv(args.data, has_header=args.header)
    if args.synth_n is not None:
        raw, _ = dataio.synth_mog(args.synth_n, args.synth_d, args.synth_k,
                                  args.synth_separation, seed=args.synth_seed)
        return raw
    raise DataError("provide --data or --synth-n")


def _run_cell(task: dict):
    """One (method, epsilon, fold, seed) cell; must stay picklable."""
    t0 = time.perf_counter()
    model = task["model"]
    train = BoundedDataset(task["train"])
    test = BoundedDataset(task["test"])
    rng_seed = np.random.SeedSequence((task["master_seed"], task["cell_index"]))
    seed_ints = rng_seed.generate_state(1)
    cell_seed = int(seed_ints[0])
    eps = task["eps"]
    delta = task["delta"]
    method = task["method"]
    audited = (0.0, 0.0)

    if model == "mog":
        if method == "baseline":
            params = fit_em(train, task["k"], task["iters"],
                            estimator=task["estimator"], seed=cell_seed)
            metric = log_likelihood(test, params) / test.n
            n_mech = 0
        else:
            cfg = DpEmConfig(
                components=task["k"], iterations=task["iters"],
                total=PrivacyBudget(eps, delta), delta_i=task["delta_i"],
                scenario=task["scenario"], method=method,
                estimator=task["estimator"], seed=cell_seed,
                max_order=task["max_order"])
            params, trace = run_dpem_mog(train, cfg)
            metric = log_likelihood(test, params) / test.n
            n_mech = len(trace)
            spend = compose_trace(trace, method, delta,
                                  max_order=task["max_order"])
            audited = (spend.epsilon, spend.delta)
        metric_name = "test_loglik_per_point"
    elif model == "fa":
        mom = second_moment(train)
        if method == "baseline":
            params = run_fa_em(mom, task["q"])
            n_mech = 0
        else:
            rng = np.random.default_rng(cell_seed)
            noised, trace = perturb_second_moment(
                mom, PrivacyBudget(eps, delta), rng)
            params = run_fa_em(noised, task["q"])
            n_mech = len(trace)
            spend = compose_trace(trace, "linear", delta)
            audited = (spend.epsilon, spend.delta)
        metric = fa_average_log_likelihood(second_moment(test), params)
        metric_name = "test_loglik_per_point"
    else:  # kmeans
        rng = np.random.default_rng(cell_seed)
        if method == "baseline":
            clustering = lloyd(train, task["k"], task["iters"], rng)
            n_mech = 0
        elif method == "dplloyd-linear":
            clustering, trace = dplloyd(train, task["k"], task["iters"], eps,
                                        composition="linear", rng=rng)
            n_mech = len(trace)
            spend = compose_trace(trace, "linear", delta)
            audited = (spend.epsilon, spend.delta)
        elif method == "dplloyd-zcdp":
            clustering, trace = dplloyd(train, task["k"], task["iters"], eps,
                                        composition="zcdp", delta=delta, rng=rng)
            n_mech = len(trace)
            spend = compose_trace(trace, "zcdp", delta)
            audited = (spend.epsilon, spend.delta)
        else:  # dpem
            clustering, trace = dpem_kmeans(train, task["k"], task["iters"],
                                            PrivacyBudget(eps, delta), rng)
            n_mech = len(trace)
            spend = compose_trace(trace, "zcdp", delta)
            audited = (spend.epsilon, spend.delta)
        metric = nicv(test, clustering.centers)
        metric_name = "nicv"

    if method != "baseline":
        if audited[0] > eps + AUDIT_SLACK or audited[1] > delta + AUDIT_SLACK:
            raise DpemError(
                f"spend audit failed: ({audited[0]}, {audited[1]}) exceeds "
                f"({eps}, {delta})")

    return dataio.ExperimentResult(
        model=model, method=method, scenario=task["scenario"],
        epsilon=eps, delta=delta, fold=task["fold"], seed=task["seed"],
        metric=float(metric), metric_name=metric_name, n_mechanisms=n_mech,
        audited_epsilon=audited[0], audited_delta=audited[1],
        wall_time=time.perf_counter() - t0)


def cmd_fit(args) -> int:
    raw = _load_matrix(args)
    bounded = preprocess(raw)
    eps_list = [float(tok) for tok in args.eps_list.split(",") if tok.strip()]
    if args.method is None:
        methods = ["linear", "zcdp", "ma"] if args.model == "mog" else (
            list(KMEANS_METHODS) if args.model == "kmeans" else ["one-shot"])
    else:
        methods = [tok.strip() for tok in args.method.split(",") if tok.strip()]
    if args.model == "mog":
        bad = set(methods) - set(MOG_METHODS)
    elif args.model == "kmeans":
        bad = set(methods) - set(KMEANS_METHODS)
    else:
        bad = set(methods) - {"one-shot"}
    if bad:
        print(f"unknown methods for {args.model}: {sorted(bad)}", file=sys.stderr)
        return EXIT_FLAGS

    master_seed = int(os.environ.get("DPEM_SEED", args.seed))
    folds = max(args.folds, 1)
    if folds == 1:
        splits = dataio.cv_split(bounded.rows, 10, seed=master_seed)[:1]
    else:
        splits = dataio.cv_split(bounded.rows, folds, seed=master_seed)
    tasks = []
    cell_index = 0
    sweep_methods = list(methods) + ["baseline"]
    for method in sweep_methods:
        sweep_eps = eps_list if method != "baseline" else [math.inf]
        for eps in sweep_eps:
            for fold, (train, test) in enumerate(splits):
                for seed in range(args.seeds):
                    tasks.append({
                        "model": args.model, "method": method, "eps": eps,
                        "delta": args.delta, "delta_i": args.delta_i,
                        "scenario": args.scenario, "estimator": args.estimator,
                        "k": args.k, "q": args.q, "iters": args.iters,
                        "fold": fold, "seed": seed,
                        "train": train, "test": test,
                        "master_seed": master_seed, "cell_index": cell_index,
                        "max_order": args.max_order,
                    })
                    cell_index += 1

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_cell, tasks, chunksize=1))
    else:
        results = [_run_cell(task) for task in tasks]
    results.sort(key=lambda r: (r.method, r.epsilon, r.fold, r.seed))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataio.write_results_jsonl(out / "results.jsonl", results)
    dataio.write_summary_csv(out / "summary.csv", dataio.summarize(results))
    print(f"wrote {len(results)} cells to {out}/results.jsonl and summary.csv")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "calibrate":
            return cmd_calibrate(args)
        return cmd_fit(args)
    except UnattainableBudgetError as exc:
        print(f"unattainable budget: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
