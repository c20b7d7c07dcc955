"""Closed-form laws for the mean resultant length of a noisy emitted field."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ConfigError, DomainError

_SQRT_PI_2 = math.sqrt(math.pi) / 2.0


def _nonneg(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError(f"{name} must be non-negative")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def bessel_i0e(x):
    """exp(-x) * I0(x) for x >= 0."""
    return _out(special.i0e(_nonneg(x)))


def bessel_i1e(x):
    """exp(-x) * I1(x) for x >= 0."""
    return _out(special.i1e(_nonneg(x)))


def bessel_i0(x):
    """Modified Bessel function I0 for x >= 0 (overflows to inf beyond x ~ 713)."""
    x = _nonneg(x)
    with np.errstate(over="ignore"):
        return _out(special.i0e(x) * np.exp(x))


def bessel_i1(x):
    """Modified Bessel function I1 for x >= 0 (overflows to inf beyond x ~ 713)."""
    x = _nonneg(x)
    with np.errstate(over="ignore"):
        return _out(special.i1e(x) * np.exp(x))


def r_det(rho):
    """Mean resultant length of a fixed phasor in circular Gaussian noise.

    ``rho`` is the amplitude divided by the standard deviation of the complex
    noise (total over both quadratures). The exp(-rho^2/2) factor is folded
    into exponentially scaled Bessel functions so large rho cannot overflow.
    """
    rho = _nonneg(rho, "rho")
    x = 0.5 * rho * rho
    return _out(_SQRT_PI_2 * rho * (special.i0e(x) + special.i1e(x)))


def binomial_pmf(M: int, k: int, p: float) -> float:
    if M < 0 or not 0 <= k <= M:
        raise DomainError(f"k={k} outside [0, {M}]")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"probability {p} outside [0, 1]")
    if p == 0.0:
        return 1.0 if k == 0 else 0.0
    if p == 1.0:
        return 1.0 if k == M else 0.0
    if M <= 50:
        return math.comb(M, k) * p ** k * (1.0 - p) ** (M - k)
    logc = math.lgamma(M + 1) - math.lgamma(k + 1) - math.lgamma(M - k + 1)
    return math.exp(logc + k * math.log(p) + (M - k) * math.log1p(-p))


def _binomial_pmf_vector(M: int, p: float) -> np.ndarray:
    k = np.arange(M + 1)
    if p == 0.0:
        return (k == 0).astype(float)
    if p == 1.0:
        return (k == M).astype(float)
    logc = special.gammaln(M + 1) - special.gammaln(k + 1) - special.gammaln(M - k + 1)
    return np.exp(logc + k * math.log(p) + (M - k) * math.log1p(-p))


def effective_snr(k, eta, M):
    """SNR of the M-shot average when k of the M shots emitted: k * eta / sqrt(M)."""
    if np.any(np.asarray(M) < 1):
        raise DomainError("M must be at least 1")
    return np.asarray(k) * eta / np.sqrt(M)


def r_predicted(M: int, p: float, eta: float) -> float:
    """Binomially averaged mean resultant length of M-shot averages.

    Sums ``P(k) * r_det(k * eta / sqrt(M))`` over k. For M > 10^4 the terms
    with pmf below 1e-16 of the largest are dropped.
    """
    if int(M) != M or M < 1:
        raise DomainError("M must be a positive integer")
    if not 0.0 <= p <= 1.0:
        raise DomainError("p must lie in [0, 1]")
    if not eta >= 0:
        raise DomainError("eta must be non-negative")
    M = int(M)
    pmf = _binomial_pmf_vector(M, p)
    k = np.arange(M + 1)
    if M > 10_000:
        keep = pmf >= 1e-16 * pmf.max()
        pmf, k = pmf[keep], k[keep]
    return float(np.dot(pmf, r_det(effective_snr(k, eta, M))))


def r_predicted_curve(M_values, p: float, eta: float) -> np.ndarray:
    return np.array([r_predicted(int(M), p, eta) for M in M_values])


@dataclass(frozen=True)
class StochasticEmissionParams:
    p: float
    eta: float
    M: int = 1

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0 or not self.eta >= 0 or self.M < 1:
            raise ConfigError(f"invalid stochastic emission parameters {self}")

    def predicted_r(self):
        return r_predicted(self.M, self.p, self.eta)


@dataclass(frozen=True)
class SurfaceParams:
    """Parameters of ``A exp(-t_start/tau1) T^beta exp(-T/tau2) + C``."""

    A: float
    tau1: float
    beta: float
    tau2: float
    C: float

    def as_tuple(self):
        return (self.A, self.tau1, self.beta, self.tau2, self.C)


def r_phenomenological(t_start, T, params: SurfaceParams):
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise DomainError("integration time must be positive")
    t_start = np.asarray(t_start, dtype=float)
    A, tau1, beta, tau2, C = params.as_tuple()
    out = A * np.exp(-t_start / tau1) * T ** beta * np.exp(-T / tau2) + C
    return _out(out)
