"""End-to-end acceptance suite.

One test per criterion; each prints a summary line with the measured
quantities. Run with ``pytest tests/test_acceptance.py -v`` for the
per-criterion pass/fail table.
"""
import math
import time

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import linear_sum_assignment

import dpem
from dpem import (
    BoundedDataset,
    CompositionPlan,
    DpEmConfig,
    PrivacyBudget,
    preprocess,
)
from dpem.accountant import (
    advanced_calibrate,
    advanced_compose,
    gaussian_moment,
    laplace_moment,
    linear_calibrate,
    linear_compose,
    ma_calibrate,
    ma_tail_epsilon,
    ma_total_moment,
    zcdp_calibrate,
    zcdp_rho,
    zcdp_to_dp,
)


def report(criterion, detail):
    print(f"[criterion {criterion}] PASS  {detail}")


# ---------------------------------------------------------------------------
# 1. moment formulas against numerical quadrature


def _laplace_oracle(order, eps):
    b = 1.0 / eps
    atoms = 0.5 * math.exp(order * eps) \
        + 0.5 * math.exp(-eps) * math.exp(-order * eps)

    def integrand(x):
        loss = -eps * (2.0 * x - 1.0)
        return math.exp(order * loss) * math.exp(-x / b) / (2.0 * b)

    middle, _ = quad(integrand, 0.0, 1.0, epsabs=0, epsrel=1e-13, limit=200)
    return math.log(atoms + middle)


def _gaussian_oracle(order, sens, sigma):
    shift = order * sens
    ratio = sens / sigma

    def integrand(x):
        loss = ratio * (x / sigma) + 0.5 * ratio ** 2
        log_val = order * loss - 0.5 * (x / sigma) ** 2 \
            - math.log(sigma * math.sqrt(2.0 * math.pi))
        return math.exp(log_val)

    val, _ = quad(integrand, shift - 60 * sigma, shift + 60 * sigma,
                  epsabs=0, epsrel=1e-13, limit=500)
    return math.log(val)


def test_criterion_1_moment_formula_oracle():
    start = time.perf_counter()
    worst = 0.0
    for eps in (0.01, 0.1, 0.5, 1.0):
        for order in range(1, 33):
            diff = abs(laplace_moment(order, eps) - _laplace_oracle(order, eps))
            worst = max(worst, diff)
            assert diff < 1e-8
    for sigma in (1.0, 2.0, 10.0):
        for order in range(1, 33):
            diff = abs(gaussian_moment(order, 1.0, sigma)
                       - _gaussian_oracle(order, 1.0, sigma))
            worst = max(worst, diff)
            assert diff < 1e-8
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    report(1, f"max |formula - quadrature| = {worst:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. composition arithmetic and calibration round trips


def test_criterion_2_composition_arithmetic():
    ggg = lambda j, k, m="zcdp": CompositionPlan(
        scenario="ggg", iterations=j, components=k, delta_i=1e-6, method=m)
    llg = lambda j, k, m="zcdp": CompositionPlan(
        scenario="llg", iterations=j, components=k, delta_i=1e-6, method=m)

    # hand-derived values
    plan = ggg(20, 10, "linear")
    assert plan.n_mechanisms == 420
    spent = linear_compose(plan, 0.01)
    assert spent.epsilon == pytest.approx(4.2, abs=1e-12)
    assert spent.delta == pytest.approx(420e-6, abs=1e-15)

    spent = linear_compose(llg(1, 1, "linear"), 0.3)
    assert spent.epsilon == pytest.approx(0.9)
    assert spent.delta == pytest.approx(1e-6)

    eps_i, slack = 0.05, math.exp(-1.0)
    spent = advanced_compose(ggg(2, 1, "advanced"), eps_i, slack)
    m = 6
    expected = m * eps_i * (math.exp(eps_i) - 1) \
        + math.sqrt(2 * m * 1.0) * eps_i
    assert spent.epsilon == pytest.approx(expected, rel=1e-12)
    assert spent.delta == pytest.approx(slack + 6e-6)

    # zCDP building blocks
    assert zcdp_rho(llg(1, 0), 1.0) == pytest.approx(0.5)
    sig = {"weights": (1.0, 2.0), "means": (0.0, 1.0), "covariances": (0.0, 1.0)}
    assert zcdp_rho(ggg(1, 0), 0.5, sig) == pytest.approx(1.0 / 8.0)
    assert zcdp_rho(ggg(4, 2), 0.3) == pytest.approx(
        4 * zcdp_rho(ggg(1, 2), 0.3), rel=1e-12)
    assert zcdp_to_dp(1.0, math.exp(-1.0)) == pytest.approx(3.0, rel=1e-12)

    # calibration round trips stay inside the budget
    total = PrivacyBudget(1.0, 1e-4)
    j, k = 10, 3
    recompositions = {
        "linear": lambda e: linear_compose(ggg(j, k, "linear"), e).epsilon,
        "advanced": lambda e: advanced_compose(
            ggg(j, k, "advanced"), e, 1e-4 - 70e-6).epsilon,
        "zcdp": lambda e: zcdp_to_dp(zcdp_rho(ggg(j, k), e), total.delta),
        "ma": lambda e: ma_tail_epsilon(
            ma_total_moment(ggg(j, k, "ma"), e), 1e-4 - 70e-6),
    }
    calibrators = {
        "linear": linear_calibrate, "advanced": advanced_calibrate,
        "zcdp": zcdp_calibrate, "ma": ma_calibrate,
    }
    for name, cal in calibrators.items():
        eps_i = cal(CompositionPlan(scenario="ggg", iterations=j, components=k,
                                    delta_i=1e-6, method=name), total)
        assert recompositions[name](eps_i) <= total.epsilon + 1e-9
    report(2, "hand values exact; all four calibrations recompose <= budget")


# ---------------------------------------------------------------------------
# 3. calibration dominance with a grid-search oracle


def _grid_max_feasible(recompose, eps_budget):
    grid = np.linspace(1e-8, 1 - 1e-8, 4001)
    feas = [e for e in grid if recompose(e) <= eps_budget]
    if not feas:
        return None
    coarse, step = max(feas), grid[1] - grid[0]
    fine = np.linspace(coarse, min(coarse + step, 1 - 1e-8), 8001)
    return max(e for e in fine if recompose(e) <= eps_budget)


def test_criterion_3_calibration_dominance():
    total = PrivacyBudget(1.0, 1e-4)
    delta_i = 1e-6
    mk = lambda m: CompositionPlan(scenario="ggg", iterations=10, components=3,
                                   delta_i=delta_i, method=m)
    eps_lin = linear_calibrate(mk("linear"), total)
    eps_adv = advanced_calibrate(mk("advanced"), total)
    eps_z = zcdp_calibrate(mk("zcdp"), total)
    eps_ma = ma_calibrate(mk("ma"), total)
    assert eps_z > eps_adv > eps_lin
    assert eps_ma > eps_adv

    delta_ma = total.delta - mk("ma").n_gaussian * delta_i
    oracles = {
        "advanced": (_grid_max_feasible(
            lambda e: advanced_compose(mk("advanced"), e, delta_ma).epsilon,
            total.epsilon), eps_adv),
        "zcdp": (_grid_max_feasible(
            lambda e: zcdp_to_dp(zcdp_rho(mk("zcdp"), e), total.delta),
            total.epsilon), eps_z),
        "ma": (_grid_max_feasible(
            lambda e: ma_tail_epsilon(ma_total_moment(mk("ma"), e), delta_ma),
            total.epsilon), eps_ma),
    }
    for name, (oracle, got) in oracles.items():
        assert abs(got - oracle) / oracle < 1e-4, name
    report(3, f"eps_i: zcdp={eps_z:.4f} ma={eps_ma:.4f} adv={eps_adv:.4f} "
              f"lin={eps_lin:.4f}; grid oracles agree to 1e-4")


# ---------------------------------------------------------------------------
# 4. sensitivity audit over neighboring datasets


def test_criterion_4_sensitivity_audit():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    for trial in range(500):
        n = int(rng.integers(2, 51))
        d = int(rng.integers(1, 5))
        k = int(rng.integers(1, 4))

        def ball(m):
            raw = rng.normal(size=(m, d))
            raw /= np.maximum(np.linalg.norm(raw, axis=1, keepdims=True), 1.0)
            return raw * rng.uniform(0, 1, size=(m, 1)) ** (1.0 / d)

        X = ball(n)
        Xp = X.copy()
        Xp[0] = ball(1)[0]
        gamma = rng.dirichlet(np.ones(k), size=n)
        gamma_p = gamma.copy()
        gamma_p[0] = rng.dirichlet(np.ones(k))

        pi, pi_p = gamma.sum(axis=0) / n, gamma_p.sum(axis=0) / n
        assert np.abs(pi - pi_p).sum() <= 2.0 / n + 1e-12

        nk = float(rng.uniform(1.0, n))  # fixed public denominator
        for c in range(k):
            mu = gamma[:, c] @ X / nk
            mu_p = gamma_p[:, c] @ Xp / nk
            assert np.abs(mu - mu_p).sum() <= 2.0 * math.sqrt(d) / nk + 1e-12
            assert np.linalg.norm(mu - mu_p) <= 2.0 / nk + 1e-12
            s = (gamma[:, c, None] * X).T @ X / nk
            s_p = (gamma_p[:, c, None] * Xp).T @ Xp / nk
            assert np.linalg.norm(s - s_p, "fro") <= 2.0 / nk + 1e-12

        lam, lam_p = X.T @ X / n, Xp.T @ Xp / n
        assert np.linalg.norm(lam - lam_p, "fro") <= 2.0 / n + 1e-12
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    report(4, f"500 neighbor pairs within all five bounds, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 5. non-private correctness


def test_criterion_5_non_private_correctness():
    # EM never decreases the likelihood
    rng = np.random.default_rng(77)
    for trial in range(50):
        n = int(rng.integers(60, 200))
        d = int(rng.integers(1, 4))
        k = int(rng.integers(1, 4))
        X = rng.uniform(-0.5, 0.5, size=(n, d))
        X /= np.maximum(np.linalg.norm(X, axis=1, keepdims=True), 1.0)
        data = BoundedDataset(X)
        params = dpem.init_params(data, k, np.random.default_rng(trial))
        prev = dpem.log_likelihood(data, params)
        for _ in range(8):
            params = dpem.m_step_mle(data, dpem.e_step(data, params))
            cur = dpem.log_likelihood(data, params)
            assert cur >= prev - 1e-8
            prev = cur

    # planted mixture recovery
    raw, true = dpem.synth_mog(10_000, 2, 2, separation=4.0, seed=1)
    params = dpem.fit_em(preprocess(raw), 2, 40, estimator="mle", seed=0)
    cost = np.linalg.norm(params.means[:, None] - true.means[None], axis=2)
    rows, cols = linear_sum_assignment(cost)
    worst = cost[rows, cols].max()
    assert worst < 0.05

    # factor-analysis fixed point
    frng = np.random.default_rng(0)
    w_true = frng.normal(size=(6, 2)) * 0.3
    psi_true = frng.uniform(0.05, 0.2, size=6)
    lam = w_true @ w_true.T + np.diag(psi_true)
    mom = dpem.SecondMoment(0.5 * (lam + lam.T), 1000)
    fit = dpem.run_fa_em(mom, 2, iters=20_000, tol=1e-12)
    resid = np.linalg.norm(fit.model_covariance() - mom.matrix, "fro")
    assert resid < 1e-6
    report(5, f"EM monotone x50; mean recovery {worst:.4f} < 0.05; "
              f"FA residual {resid:.2e} < 1e-6")


# ---------------------------------------------------------------------------
# 6. private mixture utility trends


def test_criterion_6_dpem_utility_trends():
    start = time.perf_counter()
    raw, _ = dpem.synth_mog(20_000, 5, 3, separation=1.0, seed=7)
    data = preprocess(raw)
    train_rows, test_rows = dpem.cv_split(data.rows, 10, seed=11)[0]
    train, test = BoundedDataset(train_rows), BoundedDataset(test_rows)

    def test_ll(params):
        return dpem.log_likelihood(test, params) / test.n

    baseline = float(np.median([
        test_ll(dpem.fit_em(train, 3, 10, estimator="map", seed=100 + s))
        for s in range(10)]))

    eps_grid = (0.1, 0.5, 1.0, 2.0, 4.0)
    medians = {}
    for method in ("linear", "zcdp", "ma"):
        curve = []
        for eps in eps_grid:
            vals = []
            for s in range(10):
                cfg = DpEmConfig(components=3, iterations=10,
                                 total=PrivacyBudget(eps, 1e-4), delta_i=1e-6,
                                 scenario="ggg", method=method,
                                 estimator="map", seed=100 + s, max_order=512)
                params, _ = dpem.run_dpem_mog(train, cfg)
                vals.append(test_ll(params))
            curve.append(float(np.median(vals)))
        medians[method] = curve

    for method, curve in medians.items():
        for lo, hi in zip(curve, curve[1:]):
            assert hi >= lo, f"{method} curve not nondecreasing: {curve}"
    for z, m, l in zip(medians["zcdp"], medians["ma"], medians["linear"]):
        assert z > l and m > l
    gap = baseline - medians["zcdp"][-1]
    assert abs(gap) < 0.1
    elapsed = time.perf_counter() - start
    assert elapsed < 600.0
    report(6, f"curves monotone, zcdp/ma dominate linear, "
              f"gap@eps=4 {gap:.3f} nats, {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 7. private k-means ordering


def test_criterion_7_kmeans_nicv_ordering():
    start = time.perf_counter()
    raw, _ = dpem.synth_mog(100_000, 2, 5, separation=8.0, seed=21)
    data = preprocess(raw)
    eps, delta, iters = 0.01, 1e-4, 30
    res = {"dpem": [], "dplloyd-zcdp": [], "dplloyd-linear": []}
    for s in range(10):
        cl, _ = dpem.dpem_kmeans(data, 5, iters, PrivacyBudget(eps, delta),
                                 np.random.default_rng(1000 + s))
        res["dpem"].append(dpem.nicv(data, cl.centers))
        cl, _ = dpem.dplloyd(data, 5, iters, eps, composition="zcdp",
                             delta=delta, rng=np.random.default_rng(1000 + s))
        res["dplloyd-zcdp"].append(dpem.nicv(data, cl.centers))
        cl, _ = dpem.dplloyd(data, 5, iters, eps, composition="linear",
                             rng=np.random.default_rng(1000 + s))
        res["dplloyd-linear"].append(dpem.nicv(data, cl.centers))
    med = {k: float(np.median(v)) for k, v in res.items()}
    elapsed = time.perf_counter() - start
    assert elapsed < 300.0
    print(f"[criterion 7] medians: dpem={med['dpem']:.4f} "
          f"dplloyd-zcdp={med['dplloyd-zcdp']:.4f} "
          f"dplloyd-linear={med['dplloyd-linear']:.4f} ({elapsed:.0f}s)")
    assert med["dpem"] < med["dplloyd-zcdp"] < med["dplloyd-linear"]
    report(7, f"NICV ordering holds: {med}")


# ---------------------------------------------------------------------------
# 8. structural guarantees


def test_criterion_8_structural_guarantees():
    rng = np.random.default_rng(5150)
    methods = ("linear", "advanced", "zcdp", "ma")
    for trial in range(1000):
        n = int(rng.integers(60, 200))
        d = int(rng.integers(1, 4))
        k = int(rng.integers(1, 4))
        X = rng.uniform(-0.6, 0.6, size=(n, d))
        X /= np.maximum(np.linalg.norm(X, axis=1, keepdims=True), 1.0)
        cfg = DpEmConfig(
            components=k, iterations=int(rng.integers(1, 3)),
            total=PrivacyBudget(float(rng.uniform(0.05, 4.0)), 1e-4),
            delta_i=1e-6, scenario=str(rng.choice(["llg", "ggg"])),
            method=str(rng.choice(methods)),
            estimator=str(rng.choice(["mle", "map"])),
            seed=int(rng.integers(0, 2 ** 31)), max_order=1024)
        params, trace = dpem.run_dpem_mog(BoundedDataset(X), cfg)
        # type invariants, re-checked explicitly
        assert (params.weights >= -1e-12).all()
        assert abs(params.weights.sum() - 1.0) < 1e-9
        for cov in params.covariances:
            assert np.abs(cov - cov.T).max() < 1e-9
            assert np.linalg.eigvalsh(cov).min() >= cfg.psd_floor - 1e-9
        assert len(trace) == cfg.iterations * (2 * k + 1)

    # one-shot factor analysis: a single trace entry no matter how long the
    # post-processing runs
    raw, _ = dpem.synth_mog(500, 4, 1, separation=1.0, seed=3)
    mom = dpem.second_moment(preprocess(raw))
    noised, trace = dpem.perturb_second_moment(
        mom, PrivacyBudget(0.3, 1e-4), np.random.default_rng(0))
    for iters in (1, 7, 200):
        dpem.run_fa_em(noised, 2, iters=iters)
        assert len(trace) == 1
    report(8, "1000 randomized runs valid; FA trace stays single-entry")
