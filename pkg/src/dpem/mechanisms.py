"""Noise mechanisms and output projections.

Laplace and Gaussian perturbation of released statistics, symmetric-matrix
(upper-triangle) Gaussian perturbation for covariances, and the simplex /
positive-semidefinite projections that keep released parameters valid.

A noise scale of exactly 0 makes every mechanism the identity, which lets
the private pipelines be exercised against their non-private counterparts
in tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .errors import DataError

# Noised per-component counts are clamped here before they enter a
# sensitivity denominator (one effective datapoint).
COUNT_FLOOR = 1.0


def gaussian_sigma(sensitivity: float, eps_i: float, delta_i: float) -> float:
    """Minimal Gaussian noise level for one (eps_i, delta_i)-DP release.

    sigma = sensitivity * sqrt(2 log(1.25/delta_i)) / eps_i. Valid only for
    eps_i in (0, 1). Zero sensitivity returns 0 so callers can skip noising.
    """
    if sensitivity < 0:
        raise ValueError("sensitivity must be nonnegative")
    if sensitivity == 0:
        return 0.0
    if not 0.0 < eps_i < 1.0:
        raise ValueError(f"eps_i must lie in (0, 1), got {eps_i}")
    if not 0.0 < delta_i < 1.0:
        raise ValueError(f"delta_i must lie in (0, 1), got {delta_i}")
    return sensitivity * math.sqrt(2.0 * math.log(1.25 / delta_i)) / eps_i


def laplace_scale(sensitivity: float, eps_i: float) -> float:
    """Laplace scale b = sensitivity / eps_i for one eps_i-DP release."""
    if sensitivity < 0:
        raise ValueError("sensitivity must be nonnegative")
    if eps_i <= 0:
        raise ValueError(f"eps_i must be positive, got {eps_i}")
    return sensitivity / eps_i


@dataclass(frozen=True)
class MechanismSpec:
    """One noise mechanism: kind, sensitivity and noise scale.

    ``noise_scale`` is the Laplace scale b or the Gaussian sigma. Scale 0 is
    the identity limit used in noise-free regression tests.
    """

    kind: str  # "laplace" | "gaussian"
    sensitivity: float
    noise_scale: float

    def __post_init__(self):
        if self.kind not in ("laplace", "gaussian"):
            raise ValueError(f"unknown mechanism kind {self.kind!r}")
        if self.sensitivity < 0:
            raise ValueError("sensitivity must be nonnegative")
        if self.noise_scale < 0:
            raise ValueError("noise scale must be nonnegative")

    @classmethod
    def laplace(cls, sensitivity: float, eps_i: float) -> "MechanismSpec":
        return cls("laplace", sensitivity, laplace_scale(sensitivity, eps_i))

    @classmethod
    def gaussian(cls, sensitivity: float, eps_i: float,
                 delta_i: float) -> "MechanismSpec":
        return cls("gaussian", sensitivity,
                   gaussian_sigma(sensitivity, eps_i, delta_i))


@dataclass(frozen=True)
class TraceRecord:
    """One mechanism invocation, with enough metadata to re-account it.

    ``beta`` stores the Gaussian variance sigma^2 directly (what zCDP
    accounting divides by); ``flagged`` marks records whose sensitivity used
    a floored count.
    """

    kind: str
    sensitivity: float
    noise_scale: float
    eps_i: float
    delta_i: Optional[float]  # None for Laplace
    label: str
    iteration: int
    component: Optional[int] = None
    flagged: bool = False
    beta: Optional[float] = None

    @classmethod
    def from_spec(cls, spec: MechanismSpec, eps_i: float, delta_i: Optional[float],
                  label: str, iteration: int, component: Optional[int] = None,
                  flagged: bool = False) -> "TraceRecord":
        beta = spec.noise_scale ** 2 if spec.kind == "gaussian" else None
        return cls(spec.kind, spec.sensitivity, spec.noise_scale, eps_i, delta_i,
                   label, iteration, component, flagged, beta)

    def zcdp_rho(self) -> float:
        """zCDP cost: eps_i^2/2 for a pure-DP release, sens^2/(2 beta) for
        Gaussian."""
        if self.kind == "laplace":
            return 0.5 * self.eps_i ** 2
        if self.beta is None or self.beta == 0.0:
            return 0.0 if self.sensitivity == 0 else float("inf")
        return self.sensitivity ** 2 / (2.0 * self.beta)


class AccountingTrace:
    """Ordered list of mechanism invocations for one private run."""

    def __init__(self, records: list[TraceRecord] | None = None):
        self.records: list[TraceRecord] = list(records) if records else []

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    def __getitem__(self, idx):
        return self.records[idx]

    @property
    def n_laplace(self) -> int:
        return sum(1 for r in self.records if r.kind == "laplace")

    @property
    def n_gaussian(self) -> int:
        return sum(1 for r in self.records if r.kind == "gaussian")

    def gaussian_delta(self) -> float:
        """Sum of the per-mechanism delta_i mass of all Gaussian releases."""
        return sum(r.delta_i for r in self.records
                   if r.kind == "gaussian" and r.delta_i is not None)

    def total_rho(self) -> float:
        return sum(r.zcdp_rho() for r in self.records)

    def flagged(self) -> list[TraceRecord]:
        return [r for r in self.records if r.flagged]


def _draw(kind: str, scale: float, size, rng: np.random.Generator) -> np.ndarray:
    if kind == "laplace":
        return rng.laplace(0.0, scale, size=size)
    return rng.normal(0.0, scale, size=size)


def perturb_simplex(weights: np.ndarray, spec: MechanismSpec,
                    rng: np.random.Generator) -> np.ndarray:
    """Noise a probability vector, clip to [0, 1] and renormalize.

    If clipping zeroes every coordinate the uniform vector is returned (the
    clip-renormalize rule is undefined at the all-zero corner).
    """
    w = np.asarray(weights, dtype=float)
    noisy = w + _draw(spec.kind, spec.noise_scale, w.shape, rng)
    clipped = np.clip(noisy, 0.0, 1.0)
    total = clipped.sum()
    if total <= 0.0:
        return np.full(w.shape, 1.0 / w.shape[0])
    return clipped / total


def perturb_mean(mean: np.ndarray, spec: MechanismSpec,
                 rng: np.random.Generator) -> np.ndarray:
    """Add elementwise i.i.d. noise to a mean vector (no projection)."""
    m = np.asarray(mean, dtype=float)
    return m + _draw(spec.kind, spec.noise_scale, m.shape, rng)


def psd_project(mat: np.ndarray, floor: float) -> np.ndarray:
    """Clamp eigenvalues below ``floor`` up to it.

    Already-compliant matrices are returned unchanged, so the projection is
    exactly idempotent.
    """
    mat = np.asarray(mat, dtype=float)
    if not np.isfinite(mat).all():
        raise DataError("non-finite entries in matrix")
    eigvals = np.linalg.eigvalsh(mat)
    if eigvals.min() >= floor:
        return mat
    vals, vecs = np.linalg.eigh(mat)
    vals = np.maximum(vals, floor)
    out = (vecs * vals) @ vecs.T
    return 0.5 * (out + out.T)


def analyze_gauss_perturb(cov: np.ndarray, spec: MechanismSpec,
                          rng: np.random.Generator,
                          psd_floor: float = 1e-6) -> np.ndarray:
    """Symmetric Gaussian perturbation of a covariance-like matrix.

    Draws d(d+1)/2 i.i.d. N(0, sigma^2) variates into the upper triangle
    (diagonal included), mirrors them to the lower triangle, adds the
    resulting symmetric matrix, and projects back to the PSD cone.
    """
    if spec.kind != "gaussian":
        raise ValueError("matrix perturbation requires a Gaussian spec")
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DataError(f"expected a square matrix, got shape {cov.shape}")
    if np.abs(cov - cov.T).max() > 1e-9:
        raise DataError("input matrix is not symmetric")
    d = cov.shape[0]
    iu = np.triu_indices(d)
    noise = np.zeros((d, d))
    noise[iu] = rng.normal(0.0, spec.noise_scale, size=iu[0].shape[0])
    noise = noise + np.triu(noise, 1).T
    return psd_project(cov + noise, psd_floor)
