"""Privacy-loss accounting and per-iteration budget calibration.

Implements four ways to compose a fixed schedule of Laplace/Gaussian
releases into a total (epsilon, delta) guarantee:

* linear composition,
* advanced composition with a slack term,
* zCDP composition (pure-DP releases cost eps_i^2/2, Gaussian releases
  cost sens^2/(2 sigma^2); the total rho converts to approximate DP),
* a moments accountant that sums per-mechanism log-MGF bounds of the
  privacy loss and minimizes the Markov tail over integer orders.

Each method also has an inverse that finds the largest per-iteration
budget eps_i whose recomposed total stays inside a requested budget.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import UnattainableBudgetError
from .mechanisms import AccountingTrace, gaussian_sigma

DEFAULT_MAX_ORDER = 64

# Gaussian calibration is only valid for eps_i < 1, so every inversion
# searches this bracket.
EPS_I_LO = 1e-8
EPS_I_HI = 1.0 - 1e-8
SEARCH_REL_TOL = 1e-6

SCENARIOS = ("llg", "ggg")
METHODS = ("linear", "advanced", "zcdp", "ma")


@dataclass(frozen=True)
class PrivacyBudget:
    """A total (epsilon, delta) differential-privacy budget.

    Spend reports may carry epsilon == 0 or delta == 0; budgets passed to a
    calibrator must be strictly positive (checked there).
    """

    epsilon: float
    delta: float

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError("delta must lie in [0, 1)")


def _require_strict(total: PrivacyBudget) -> None:
    if total.epsilon <= 0 or total.delta <= 0:
        raise ValueError("calibration needs epsilon > 0 and delta > 0")


@dataclass(frozen=True)
class CompositionPlan:
    """Mechanism schedule of one private EM run.

    Scenario "llg": J(K+1) Laplace releases (weights + K means per
    iteration) and JK Gaussian releases (covariances). Scenario "ggg":
    J(2K+1) Gaussian releases.
    """

    scenario: str
    iterations: int
    components: int
    delta_i: float
    method: str = "zcdp"
    advanced_slack: Optional[float] = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.iterations < 0 or self.components < 0:
            raise ValueError("iterations and components must be nonnegative")
        if not 0.0 < self.delta_i < 1.0:
            raise ValueError("delta_i must lie in (0, 1)")
        if self.advanced_slack is not None and not 0.0 < self.advanced_slack < 1.0:
            raise ValueError("advanced_slack must lie in (0, 1)")

    @property
    def n_mechanisms(self) -> int:
        """Total releases per run: J(2K+1) in both scenarios."""
        return self.iterations * (2 * self.components + 1)

    @property
    def n_laplace(self) -> int:
        if self.scenario == "llg":
            return self.iterations * (self.components + 1)
        return 0

    @property
    def n_gaussian(self) -> int:
        if self.scenario == "llg":
            return self.iterations * self.components
        return self.n_mechanisms

    def gaussian_class_counts(self) -> dict[str, int]:
        """Gaussian releases per parameter class."""
        j, k = self.iterations, self.components
        if self.scenario == "llg":
            return {"covariances": j * k}
        return {"weights": j, "means": j * k, "covariances": j * k}


# ---------------------------------------------------------------------------
# per-mechanism log moments


def laplace_moment(order: int | np.ndarray, eps_i: float) -> float | np.ndarray:
    """Log of the order-th moment of the Laplace privacy loss.

    log[ (l+1)/(2l+1) e^{l eps} + l/(2l+1) e^{-eps(l+1)} ], evaluated with
    logaddexp so large l*eps does not overflow. order 0 gives 0.
    """
    lam = np.asarray(order, dtype=float)
    if (lam < 0).any():
        raise ValueError("order must be nonnegative")
    if eps_i <= 0:
        raise ValueError("eps_i must be positive")
    with np.errstate(divide="ignore"):
        a = np.log(lam + 1.0) - np.log(2.0 * lam + 1.0) + lam * eps_i
        b = np.where(lam > 0, np.log(np.maximum(lam, 1e-300)), -np.inf) \
            - np.log(2.0 * lam + 1.0) - eps_i * (lam + 1.0)
    out = np.logaddexp(a, b)
    if np.ndim(order) == 0:
        return float(out)
    return out


def gaussian_moment(order: int | np.ndarray, sensitivity: float,
                    sigma: float) -> float | np.ndarray:
    """Log moment of the Gaussian privacy loss: (l^2 + l) sens^2 / (2 sigma^2)."""
    lam = np.asarray(order, dtype=float)
    if (lam < 0).any():
        raise ValueError("order must be nonnegative")
    if sensitivity < 0:
        raise ValueError("sensitivity must be nonnegative")
    if sensitivity == 0:
        out = np.zeros_like(lam)
    else:
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        out = (lam ** 2 + lam) * sensitivity ** 2 / (2.0 * sigma ** 2)
    if np.ndim(order) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class MomentCurve:
    """Total log-moment bound alpha(order) for integer orders 1..max_order."""

    values: np.ndarray  # values[i] = alpha(i + 1)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.shape[0] < 1:
            raise ValueError("need at least one order")
        if (vals < -1e-12).any() or not np.isfinite(vals).all():
            raise ValueError("moments must be finite and nonnegative")
        object.__setattr__(self, "values", vals)

    @property
    def max_order(self) -> int:
        return self.values.shape[0]

    @property
    def orders(self) -> np.ndarray:
        return np.arange(1, self.max_order + 1)

    def __call__(self, order: int) -> float:
        if not 1 <= order <= self.max_order:
            raise ValueError(f"order {order} outside [1, {self.max_order}]")
        return float(self.values[order - 1])


def _unit_sigma_pairs(plan: CompositionPlan, eps_i: float) -> dict[str, tuple[float, float]]:
    """Exactly-calibrated (sensitivity, sigma) placeholders per class.

    Only the ratio sensitivity/sigma enters the moments, and calibrated
    sigmas are proportional to the sensitivity, so unit pairs reproduce the
    run-time accounting without knowing the data-dependent sensitivities.
    """
    sigma = gaussian_sigma(1.0, eps_i, plan.delta_i)
    return {name: (1.0, sigma) for name in plan.gaussian_class_counts()}


def ma_total_moment(plan: CompositionPlan, eps_i: float,
                    sigma_by_param: dict[str, tuple[float, float]] | None = None,
                    max_order: int = DEFAULT_MAX_ORDER) -> MomentCurve:
    """Sum the per-mechanism log moments over the whole schedule.

    ``sigma_by_param`` maps a parameter class to its (sensitivity, sigma)
    pair; omit it to assume minimally-calibrated sigmas.
    """
    if sigma_by_param is None:
        sigma_by_param = _unit_sigma_pairs(plan, eps_i)
    orders = np.arange(1, max_order + 1)
    total = np.zeros(max_order)
    if plan.n_laplace:
        total += plan.n_laplace * laplace_moment(orders, eps_i)
    for name, count in plan.gaussian_class_counts().items():
        if count == 0:
            continue
        sens, sigma = sigma_by_param[name]
        total += count * gaussian_moment(orders, sens, sigma)
    return MomentCurve(total)


def ma_tail_epsilon(curve: MomentCurve, delta: float) -> float:
    """Smallest epsilon whose Markov tail over integer orders is <= delta.

    exp(alpha(l) - l eps) <= delta resolves to eps >= (alpha(l) +
    log(1/delta))/l, so the answer is the minimum of that expression.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    orders = curve.orders
    eps = (curve.values + math.log(1.0 / delta)) / orders
    return float(eps.min())


# ---------------------------------------------------------------------------
# composition (forward direction)


def linear_compose(plan: CompositionPlan, eps_i: float) -> PrivacyBudget:
    """Budgets add up: (J(2K+1) eps_i, n_gaussian * delta_i)."""
    if eps_i < 0:
        raise ValueError("eps_i must be nonnegative")
    return PrivacyBudget(plan.n_mechanisms * eps_i,
                         plan.n_gaussian * plan.delta_i)


def advanced_compose(plan: CompositionPlan, eps_i: float,
                     slack: float) -> PrivacyBudget:
    """Advanced composition over m = J(2K+1) releases with slack delta'."""
    if eps_i < 0:
        raise ValueError("eps_i must be nonnegative")
    if not 0.0 < slack < 1.0:
        raise ValueError("slack must lie in (0, 1)")
    m = plan.n_mechanisms
    eps = (m * eps_i * (math.exp(eps_i) - 1.0)
           + math.sqrt(2.0 * m * math.log(1.0 / slack)) * eps_i)
    return PrivacyBudget(eps, slack + plan.n_gaussian * plan.delta_i)


def gaussian_rho(eps_i: float, delta_i: float) -> float:
    """zCDP cost of one minimally-calibrated Gaussian release.

    With sigma = sens sqrt(2 log(1.25/delta_i))/eps_i the cost
    sens^2/(2 sigma^2) collapses to eps_i^2 / (4 log(1.25/delta_i))
    independently of the sensitivity.
    """
    return eps_i ** 2 / (4.0 * math.log(1.25 / delta_i))


def zcdp_rho(plan: CompositionPlan, eps_i: float,
             sigma_by_param: dict[str, tuple[float, float]] | None = None) -> float:
    """Total zCDP parameter of the schedule.

    Laplace releases contribute eps_i^2/2 each; Gaussian releases contribute
    sens^2/(2 sigma^2), itemized per parameter class.
    """
    if eps_i < 0:
        raise ValueError("eps_i must be nonnegative")
    rho = plan.n_laplace * 0.5 * eps_i ** 2
    counts = plan.gaussian_class_counts()
    if sigma_by_param is None:
        rho += sum(counts.values()) * gaussian_rho(eps_i, plan.delta_i)
    else:
        for name, count in counts.items():
            if count == 0:
                continue
            sens, sigma = sigma_by_param[name]
            if sens == 0:
                continue
            rho += count * sens ** 2 / (2.0 * sigma ** 2)
    return rho


def zcdp_to_dp(rho: float, delta: float) -> float:
    """Convert rho-zCDP to (eps, delta)-DP: eps = rho + 2 sqrt(rho log(1/delta))."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    return rho + 2.0 * math.sqrt(rho * math.log(1.0 / delta))


# ---------------------------------------------------------------------------
# calibration (inverse direction)


def _bisect_max_eps_i(feasible, hi_cap: float = EPS_I_HI) -> float:
    """Largest eps_i in [EPS_I_LO, hi_cap] passing ``feasible`` (monotone)."""
    lo, hi = EPS_I_LO, hi_cap
    if feasible(hi):
        return hi
    if not feasible(lo):
        raise UnattainableBudgetError(
            "budget unattainable even at the smallest per-iteration eps"
        )
    while hi - lo > SEARCH_REL_TOL * lo:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def linear_calibrate(plan: CompositionPlan, total: PrivacyBudget) -> float:
    """Invert linear composition: eps_i = eps / (J(2K+1)).

    Capped at the Gaussian validity ceiling; a capped schedule spends less
    than the budget, never more.
    """
    _require_strict(total)
    if plan.n_mechanisms == 0:
        raise ValueError("empty plan")
    if plan.n_gaussian * plan.delta_i > total.delta:
        raise UnattainableBudgetError(
            f"delta budget {total.delta} below the Gaussian mass "
            f"{plan.n_gaussian * plan.delta_i}"
        )
    return min(total.epsilon / plan.n_mechanisms, EPS_I_HI)


def _default_slack(plan: CompositionPlan, total: PrivacyBudget) -> float:
    slack = total.delta - plan.n_gaussian * plan.delta_i
    if slack <= 0:
        raise UnattainableBudgetError(
            f"delta budget {total.delta} leaves no slack after the Gaussian "
            f"mass {plan.n_gaussian * plan.delta_i}"
        )
    return slack


def advanced_calibrate(plan: CompositionPlan, total: PrivacyBudget) -> float:
    """Largest eps_i whose advanced composition stays inside the budget.

    The slack defaults to whatever delta remains after the Gaussian
    mechanisms' own delta_i mass.
    """
    _require_strict(total)
    slack = plan.advanced_slack if plan.advanced_slack is not None \
        else _default_slack(plan, total)
    if slack + plan.n_gaussian * plan.delta_i > total.delta * (1 + 1e-12):
        raise UnattainableBudgetError("slack plus Gaussian delta mass exceeds delta")

    def feasible(eps_i: float) -> bool:
        return advanced_compose(plan, eps_i, slack).epsilon <= total.epsilon

    return _bisect_max_eps_i(feasible)


def zcdp_calibrate(plan: CompositionPlan, total: PrivacyBudget) -> float:
    """Largest eps_i whose zCDP recomposition stays inside the budget."""
    _require_strict(total)

    def feasible(eps_i: float) -> bool:
        return zcdp_to_dp(zcdp_rho(plan, eps_i), total.delta) <= total.epsilon

    return _bisect_max_eps_i(feasible)


def zcdp_calibrate_pure(n_mechanisms: int, total: PrivacyBudget) -> float:
    """Largest eps_i for n pure-DP releases under zCDP composition.

    Each release costs eps_i^2/2 in rho; used by the private k-means
    variants where every release is Laplace.
    """
    _require_strict(total)
    if n_mechanisms < 1:
        raise ValueError("need at least one mechanism")

    def feasible(eps_i: float) -> bool:
        rho = n_mechanisms * 0.5 * eps_i ** 2
        return zcdp_to_dp(rho, total.delta) <= total.epsilon

    return _bisect_max_eps_i(feasible)


def ma_calibrate(plan: CompositionPlan, total: PrivacyBudget,
                 max_order: int = DEFAULT_MAX_ORDER) -> float:
    """Largest eps_i whose moments-accountant tail stays inside the budget.

    The Gaussian mechanisms' delta_i mass is accounted additively outside
    the moment bound, so the tail is evaluated at delta - n_gaussian*delta_i.
    """
    _require_strict(total)
    delta_ma = _default_slack(plan, total)
    floor = math.log(1.0 / delta_ma) / max_order
    if floor > total.epsilon:
        raise UnattainableBudgetError(
            f"tail bound cannot reach eps={total.epsilon:.4g} with "
            f"max_order={max_order}; needs at least "
            f"{math.ceil(math.log(1.0 / delta_ma) / total.epsilon)} orders"
        )

    def feasible(eps_i: float) -> bool:
        curve = ma_total_moment(plan, eps_i, max_order=max_order)
        return ma_tail_epsilon(curve, delta_ma) <= total.epsilon

    return _bisect_max_eps_i(feasible)


def calibrate(plan: CompositionPlan, total: PrivacyBudget,
              max_order: int = DEFAULT_MAX_ORDER) -> float:
    """Dispatch to the plan's composition method."""
    if plan.method == "linear":
        return linear_calibrate(plan, total)
    if plan.method == "advanced":
        return advanced_calibrate(plan, total)
    if plan.method == "zcdp":
        return zcdp_calibrate(plan, total)
    return ma_calibrate(plan, total, max_order=max_order)


# ---------------------------------------------------------------------------
# trace audit


def compose_trace(trace: AccountingTrace, method: str, delta: float,
                  slack: Optional[float] = None,
                  max_order: int = DEFAULT_MAX_ORDER) -> PrivacyBudget:
    """Recompose a recorded trace into a total (epsilon, delta) spend.

    This is the audit path: it works from the per-record sensitivities and
    scales actually used, not from the plan that produced them.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if len(trace) == 0:
        return PrivacyBudget(0.0, 0.0)
    gauss_delta = trace.gaussian_delta()
    if method == "linear":
        return PrivacyBudget(sum(r.eps_i for r in trace), gauss_delta)
    if method == "advanced":
        eps_set = {r.eps_i for r in trace}
        if len(eps_set) != 1:
            raise ValueError("advanced composition audit needs a uniform eps_i")
        eps_i = eps_set.pop()
        m = len(trace)
        if slack is None:
            slack = delta - gauss_delta
        if slack <= 0:
            raise UnattainableBudgetError("no delta slack left for composition")
        eps = (m * eps_i * (math.exp(eps_i) - 1.0)
               + math.sqrt(2.0 * m * math.log(1.0 / slack)) * eps_i)
        return PrivacyBudget(eps, slack + gauss_delta)
    if method == "zcdp":
        return PrivacyBudget(zcdp_to_dp(trace.total_rho(), delta), delta)
    # moments accountant
    delta_ma = delta - gauss_delta
    if delta_ma <= 0:
        raise UnattainableBudgetError("no delta mass left for the tail bound")
    orders = np.arange(1, max_order + 1)
    curve_vals = np.zeros(max_order)
    for r in trace:
        if r.kind == "laplace":
            curve_vals += laplace_moment(orders, r.eps_i)
        else:
            curve_vals += gaussian_moment(orders, r.sensitivity, r.noise_scale)
    eps = ma_tail_epsilon(MomentCurve(curve_vals), delta_ma)
    return PrivacyBudget(eps, delta)
