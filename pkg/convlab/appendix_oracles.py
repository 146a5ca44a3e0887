# Copyright (C) 2025 ConvLab contributors
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program. If not, see <https://www.gnu.org/licenses/>.

"""
Independent numerical checks of the Hermite covariance bounds, the
delta-function moments of the OU process and the variance growth rate
of differentiable policies.

Hermite polynomials here are the probabilists' He_k scaled to unit
variance under N(0, 1): H_k = He_k / sqrt(k!). With a Gaussian pair of
correlation beta, Cov(H_i(x), H_j(y)) = beta^i when i == j and 0 otherwise.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.integrate import quad
from scipy.special import ndtr

from .analytics import phi, psi, optimal_leverage_given_S, RiskPreference, LN2
from .policies import LinearPolicy, DifferentiablePolicy, representation_wealth, wealth_path
from .process import OUParams, PathGrid, simulate, stationary_variance
from .utils import (DomainError, ValidationError, QuadratureError, McEstimate,
                    batch_means, parallel_map)

logger = logging.getLogger("ConvLab.Oracles")

NORMALIZATIONS = ("orthonormal", "factorial")
DEFAULT_NODES = 64
N_BATCHES = 20


# --- Hermite polynomials ---

def hermite_normalized(k: int, x, normalization: str = "orthonormal"):
    """He_k(x) / sqrt(k!) by the three-term recurrence.

    ``normalization="factorial"`` returns He_k(x) / k! instead, which is not
    orthonormal for k >= 2.
    """
    if k < 0 or int(k) != k:
        raise ValidationError(f"degree must be a non-negative integer, got {k}")
    if normalization not in NORMALIZATIONS:
        raise ValidationError(f"normalization must be one of {NORMALIZATIONS}, got '{normalization}'")
    x = np.asarray(x, dtype=np.float64)
    prev, cur = np.ones_like(x), x.copy()
    if k == 0:
        value = prev
    else:
        for n in range(1, k):
            prev, cur = cur, (x * cur - math.sqrt(n) * prev) / math.sqrt(n + 1)
        value = cur
    if normalization == "factorial":
        value = value / math.sqrt(math.factorial(k))
    return value


def gauss_nodes(n_nodes: int = DEFAULT_NODES):
    """Gauss-Hermite nodes and weights for E[g(Z)], Z ~ N(0, 1)."""
    nodes, weights = hermegauss(n_nodes)
    return nodes, weights / math.sqrt(2.0 * math.pi)


def hermite_gram(max_degree: int, n_nodes: int = DEFAULT_NODES, normalization: str = "orthonormal") -> np.ndarray:
    """Matrix of E[H_i(Z) H_j(Z)] for i, j <= max_degree."""
    nodes, weights = gauss_nodes(n_nodes)
    basis = np.array([hermite_normalized(k, nodes, normalization) for k in range(max_degree + 1)])
    return (basis * weights) @ basis.T


@dataclass(frozen=True)
class GaussianPair:
    beta: float

    def __post_init__(self):
        if not (0.0 <= self.beta < 1.0):
            raise ValidationError(f"pair correlation must lie in [0, 1), got {self.beta}")


@dataclass(frozen=True, eq=False)
class PolynomialPolicy:
    """f(x) = sum_k a_k H_k(x) for k = 1..N."""
    coeffs: np.ndarray
    normalization: str = "orthonormal"

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=np.float64).ravel()
        if coeffs.size < 1:
            raise ValidationError("a polynomial policy needs at least one coefficient")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def basis(cls, k: int, degree: Optional[int] = None) -> "PolynomialPolicy":
        """The unit vector e_k, padded with zeros up to ``degree``."""
        coeffs = np.zeros(max(k, degree or k))
        coeffs[k - 1] = 1.0
        return cls(coeffs)

    @classmethod
    def random_unit(cls, degree: int, rng: np.random.Generator) -> "PolynomialPolicy":
        a = rng.standard_normal(degree)
        return cls(a / np.linalg.norm(a))

    @property
    def degree(self) -> int:
        return self.coeffs.size

    def norm_squared(self) -> float:
        return float(np.dot(self.coeffs, self.coeffs))

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        total = np.zeros_like(x)
        for k, a in enumerate(self.coeffs, start=1):
            if a != 0.0:
                total = total + a * hermite_normalized(k, x, self.normalization)
        return total


def polynomial_cov(policy: PolynomialPolicy, pair: GaussianPair) -> float:
    """sum_k a_k^2 beta^k."""
    powers = pair.beta ** np.arange(1, policy.degree + 1)
    return float(np.dot(policy.coeffs ** 2, powers))


def cov_bruteforce(policy, pair: GaussianPair, n_nodes: int = DEFAULT_NODES) -> float:
    """Cov(f(x), f(y)) by tensor Gauss-Hermite quadrature, y = beta x + sqrt(1 - beta^2) z.

    ``policy`` may be a PolynomialPolicy (exactness is checked) or any
    vectorised callable.
    """
    if isinstance(policy, PolynomialPolicy) and 2 * n_nodes - 1 < 2 * policy.degree:
        raise ValidationError(
            f"{n_nodes} quadrature nodes cannot integrate degree {policy.degree} products exactly; "
            f"need at least {policy.degree + 1}")
    nodes, weights = gauss_nodes(n_nodes)
    x = nodes[:, None]
    y = pair.beta * x + math.sqrt(1.0 - pair.beta ** 2) * nodes[None, :]
    w2 = weights[:, None] * weights[None, :]
    fx = np.asarray(policy(x), dtype=np.float64) * np.ones_like(y)
    fy = np.asarray(policy(y), dtype=np.float64)
    mean = float(np.dot(weights, np.asarray(policy(nodes), dtype=np.float64)))
    return float(np.sum(w2 * fx * fy)) - mean * mean


def pair_moment(i: int, j: int, pair: GaussianPair, n_nodes: int = DEFAULT_NODES,
                normalization: str = "orthonormal") -> float:
    """E[H_i(x) H_j(y)] by tensor quadrature."""
    nodes, weights = gauss_nodes(n_nodes)
    x = nodes[:, None]
    y = pair.beta * x + math.sqrt(1.0 - pair.beta ** 2) * nodes[None, :]
    w2 = weights[:, None] * weights[None, :]
    hx = hermite_normalized(i, x, normalization) * np.ones_like(y)
    return float(np.sum(w2 * hx * hermite_normalized(j, y, normalization)))


# --- Occupation of a band ---

def band_occupation(values, lo: float, hi: float, dt: float, sampling: str = "interpolated") -> np.ndarray:
    """Time spent in [lo, hi] during each step, along the last axis.

    ``interpolated`` measures the piecewise-linear path exactly; ``points``
    charges dt whenever the left endpoint is inside the band.
    """
    x = np.asarray(values, dtype=np.float64)
    a, b = x[..., :-1], x[..., 1:]
    if sampling == "points":
        return dt * ((a >= lo) & (a <= hi))
    if sampling != "interpolated":
        raise ValidationError(f"sampling must be 'interpolated' or 'points', got '{sampling}'")
    seg_lo, seg_hi = np.minimum(a, b), np.maximum(a, b)
    overlap = np.clip(np.minimum(seg_hi, hi) - np.maximum(seg_lo, lo), 0.0, None)
    width = seg_hi - seg_lo
    inside = ((a >= lo) & (a <= hi)).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(width > 0, overlap / np.where(width > 0, width, 1.0), inside)
    return dt * frac


def occupation_band(p: OUParams, dt: float) -> float:
    """Band width 0.4 sigma sqrt(dt) for occupation-variance estimates.

    The piecewise-linear occupation overstates the variance for bands much
    narrower than the per-step move and understates it for much wider ones.
    """
    return 0.4 * p.sigma * math.sqrt(dt)


def delta_mean_mc(S: float, p: OUParams, band: float, n_steps: int, seed: int,
                  dt: float = 0.01, sampling: str = "interpolated") -> McEstimate:
    """Time average of (1/band) * 1{x_t in [S, S + band]} on one stationary path."""
    if not band > 0:
        raise ValidationError(f"band must be > 0, got {band}")
    path = simulate(p, PathGrid(dt, n_steps, seed), stationary=True)
    density = band_occupation(path.values, S, S + band, dt, sampling) / (band * dt)
    return batch_means(density, N_BATCHES)


def _one_minus_a_squared(p: OUParams, tau: float) -> float:
    return -math.expm1(-2.0 * p.alpha * abs(tau))


def delta_second_moment(S: float, tau: float, p: OUParams) -> float:
    """E(delta_S(x_t) delta_S(x_{t+tau})) = exp(-S^2 / (Sigma (1 + a))) / (2 pi Sigma sqrt(1 - a^2))."""
    if tau == 0:
        raise DomainError("the two-time delta moment is singular at tau = 0")
    Sigma = stationary_variance(p)
    a = math.exp(-p.alpha * abs(tau))
    return math.exp(-S * S / (Sigma * (1.0 + a))) / (2.0 * math.pi * Sigma * math.sqrt(_one_minus_a_squared(p, tau)))


def band_second_moment(S: float, tau: float, p: OUParams, band: float) -> float:
    """E[(1/band)^2 1{x_t in B} 1{x_{t+tau} in B}], B = [S, S + band], by 1-D quadrature."""
    if tau == 0:
        raise DomainError("lag must be non-zero")
    Sigma = stationary_variance(p)
    a = math.exp(-p.alpha * abs(tau))
    cond_sd = math.sqrt(Sigma * _one_minus_a_squared(p, tau))
    sd = math.sqrt(Sigma)

    def integrand(x):
        density = math.exp(-x * x / (2.0 * Sigma)) / (sd * math.sqrt(2.0 * math.pi))
        return density * (ndtr((S + band - a * x) / cond_sd) - ndtr((S - a * x) / cond_sd))

    prob, _ = quad(integrand, S, S + band, epsabs=0.0, epsrel=1e-12)
    return prob / band ** 2


def delta_second_moment_mc(S: float, tau: float, p: OUParams, band: float, n_steps: int,
                           seed: int, dt: float = 0.01) -> McEstimate:
    """Two-time band estimate of E(delta_S delta_S) at lag tau on one stationary path."""
    lag = int(round(abs(tau) / dt))
    if lag < 1:
        raise DomainError(f"lag tau={tau} is shorter than one step dt={dt}")
    if n_steps <= lag + 2 * N_BATCHES:
        raise ValidationError("path too short for the requested lag")
    path = simulate(p, PathGrid(dt, n_steps, seed), stationary=True)
    inside = ((path.values >= S) & (path.values <= S + band)).astype(np.float64) / band
    return batch_means(inside[:-lag] * inside[lag:], N_BATCHES)


def theta(tau: float, S: float, p: OUParams) -> float:
    """Cov(delta_S(x_t), delta_S(x_{t+tau})) = phi(S)^2 [exp(q a / (1 + a)) / sqrt(1 - a^2) - 1]."""
    if tau == 0:
        raise DomainError("the delta covariance is singular at tau = 0")
    Sigma = stationary_variance(p)
    q = S * S / Sigma
    a = math.exp(-p.alpha * abs(tau))
    bracket = math.expm1(q * a / (1.0 + a) - 0.5 * math.log(_one_minus_a_squared(p, tau)))
    return phi(S, Sigma) ** 2 * bracket


def theta_integral(S: float, p: OUParams) -> float:
    """int_0^inf theta(tau, S) dtau, with tau = v^2 to absorb the 1/sqrt(tau) singularity."""
    Sigma = stationary_variance(p)
    limit_at_zero = 2.0 * math.exp(-S * S / (2.0 * Sigma)) / (2.0 * math.pi * Sigma * math.sqrt(2.0 * p.alpha))

    def integrand(v):
        if v * v == 0.0:
            return limit_at_zero
        return 2.0 * v * theta(v * v, S, p)

    value, abserr, *info = quad(integrand, 0.0, math.inf, epsabs=0.0, epsrel=1e-11, limit=500, full_output=1)
    if len(info) > 1 and abserr > 1e-8 * abs(value):
        raise QuadratureError(f"theta integral did not converge: {info[1]}", achieved=abserr)
    return value


def _occupation_integral(task):
    p, dt, n_steps, seed, stream, S, band = task
    path = simulate(p, PathGrid(dt, n_steps, seed, stream), stationary=True)
    return math.fsum(band_occupation(path.values, S, S + band, dt)) / band


def delta_integral_variance_mc(S: float, p: OUParams, T: float, band: float, seed: int,
                               n_realizations: int = 2000, dt: float = 0.001,
                               threads: int = 1) -> McEstimate:
    """Var over realizations of int_0^T (1/band) 1{x_t in [S, S + band]} dt, divided by T.

    The standard error uses the Gaussian approximation value * sqrt(2 / (n - 1)).
    """
    if p.alpha * T < 100:
        logger.warning(f"alpha*T = {p.alpha * T:.3g} is short of 100 mean-reversion times; the rate is biased")
    if n_realizations < 2:
        raise ValidationError("need at least two realizations for a variance")
    n_steps = int(round(T / dt))
    tasks = [(p, dt, n_steps, seed, i, S, band) for i in range(n_realizations)]
    integrals = np.array(parallel_map(_occupation_integral, tasks, threads))
    rate = float(np.var(integrals, ddof=1)) / (n_steps * dt)
    return McEstimate(rate, rate * math.sqrt(2.0 / (n_realizations - 1)))


# --- Variance growth of differentiable policies ---

@dataclass(frozen=True)
class VarianceGrowth:
    r: float
    stderr: float
    slope_z: float
    var_f_prime: float
    slope: float = field(default=0.0)


def gaussian_expectation(func: Callable, Sigma: float) -> float:
    sd = math.sqrt(Sigma)

    def integrand(z):
        return float(np.asarray(func(np.array([sd * z])))[0]) * math.exp(-0.5 * z * z)

    value, _ = quad(integrand, -math.inf, math.inf, epsabs=1e-13, epsrel=1e-11, limit=400)
    return value / math.sqrt(2.0 * math.pi)


def var_f_prime(policy, p: OUParams) -> float:
    """Var(f'(x)) for x ~ N(0, Sigma)."""
    Sigma = stationary_variance(p)
    mean = gaussian_expectation(policy.derivative, Sigma)
    second = gaussian_expectation(lambda x: policy.derivative(x) ** 2, Sigma)
    return max(second - mean * mean, 0.0)


def hermite_coefficients(func: Callable, Sigma: float, degree: int) -> np.ndarray:
    """c_k = E[func(sqrt(Sigma) Z) H_k(Z)] for k = 0..degree."""
    sd = math.sqrt(Sigma)
    coeffs = []
    for k in range(degree + 1):
        def integrand(z, k=k):
            return (float(np.asarray(func(np.array([sd * z])))[0])
                    * float(hermite_normalized(k, z)) * math.exp(-0.5 * z * z))
        value, _ = quad(integrand, -math.inf, math.inf, epsabs=1e-13, epsrel=1e-10, limit=400)
        coeffs.append(value / math.sqrt(2.0 * math.pi))
    return np.array(coeffs)


def variance_growth_rate_hermite(policy, p: OUParams, degree: int = 40) -> float:
    """r = (2 / alpha) sum_{k >= 1} c_k^2 / k, c_k the Hermite coefficients of f'(x)."""
    c = hermite_coefficients(policy.derivative, stationary_variance(p), degree)
    k = np.arange(1, degree + 1)
    return 2.0 / p.alpha * float(np.sum(c[1:] ** 2 / k))


def _wealth_samples(task):
    policy, p, dt, n_steps, seed, stream, every, method = task
    path = simulate(p, PathGrid(dt, n_steps, seed, stream), stationary=True)
    if method == "direct":
        u = wealth_path(path, policy, 0.0).values
    else:
        u = representation_wealth(path, policy, p)
    return u[::every]


def _slope(t, v):
    tc = t - t.mean()
    return float(np.dot(tc, v - v.mean()) / np.dot(tc, tc))


def variance_growth_rate_mc(policy, p: OUParams, T: float, n_realizations: int, seed: int,
                            dt: float = 0.01, method: str = "representation",
                            sample_every: float = 1.0, threads: int = 1) -> VarianceGrowth:
    """Slope of Var(u_t) against t over the latter half of [0, T], divided by sigma^4 / 4.

    ``method="representation"`` evaluates u_t as g(x_t) - g(x_0) - (sigma^2/2) int f',
    ``method="direct"`` uses the discrete wealth recursion. The standard error comes
    from slopes fitted on 20 disjoint groups of realizations.
    """
    if method not in ("representation", "direct"):
        raise ValidationError(f"method must be 'representation' or 'direct', got '{method}'")
    if n_realizations < 2 * N_BATCHES:
        raise ValidationError(f"need at least {2 * N_BATCHES} realizations, got {n_realizations}")
    if isinstance(policy, LinearPolicy):
        policy = policy.as_differentiable()
    n_steps = int(round(T / dt))
    every = max(1, int(round(sample_every / dt)))
    tasks = [(policy, p, dt, n_steps, seed, i, every, method) for i in range(n_realizations)]
    u = np.vstack(parallel_map(_wealth_samples, tasks, threads))
    t = np.arange(u.shape[1]) * every * dt
    late = t >= 0.5 * t[-1]

    slope = _slope(t[late], np.var(u[:, late], axis=0, ddof=1))
    group = n_realizations // N_BATCHES
    group_slopes = [_slope(t[late], np.var(u[g * group:(g + 1) * group][:, late], axis=0, ddof=1))
                    for g in range(N_BATCHES)]
    se = float(np.std(group_slopes, ddof=1) / math.sqrt(N_BATCHES))
    scale = p.sigma ** 4 / 4.0
    z = slope / se if se > 0 else 0.0
    logger.info(f"variance slope {slope:.4g} +/- {se:.2g} (z={z:.2f})")
    return VarianceGrowth(slope / scale, se / scale, z, var_f_prime(policy, p), slope)


# --- Suite ---

@dataclass(frozen=True)
class CheckResult:
    name: str
    achieved: float
    required: float
    passed: bool


DEFAULT_TOLERANCES = {
    "orthonormality": 1e-10,
    "hermite_covariance": 1e-8,
    "prop2_bounds": 1e-12,
    "prop1_positivity": 1e-10,
    "psi_closed_form": 1e-8,
    "leverage_closure": 1e-6,
    "theta_chain": 1e-6,
    "delta_mean_z": 4.0,
    "local_time_variance": 0.2,
    "linear_variance_z": 4.0,
    "tanh_rate_z": 4.0,
}


def _check(name, achieved, tolerances):
    required = tolerances[name]
    result = CheckResult(name, float(achieved), float(required), bool(achieved <= required))
    logger.info(f"{name}: achieved {result.achieved:.3g}, required {required:.3g} -> "
                f"{'pass' if result.passed else 'FAIL'}")
    return result


def run_checks(seed: int = 0, tolerances: Optional[dict] = None,
               normalization: str = "orthonormal", threads: int = 1, quick: bool = False):
    """Every oracle check with its achieved and required tolerance.

    ``quick`` skips the Monte-Carlo checks.
    """
    tol = dict(DEFAULT_TOLERANCES)
    unknown = set(tolerances or {}) - set(tol)
    if unknown:
        raise ValidationError(f"unknown tolerance names: {sorted(unknown)}")
    tol.update(tolerances or {})
    results = []

    gram = hermite_gram(8, normalization=normalization)
    results.append(_check("orthonormality", np.max(np.abs(gram - np.eye(9))), tol))

    worst = 0.0
    for beta in (0.1, 0.5, 0.9):
        pair = GaussianPair(beta)
        for i in range(7):
            for j in range(7):
                expected = beta ** i if i == j else 0.0
                worst = max(worst, abs(pair_moment(i, j, pair, normalization=normalization) - expected))
    results.append(_check("hermite_covariance", worst, tol))

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(0,))))
    violation = 0.0
    for n in range(100):
        degree = 1 + n % 6
        policy = PolynomialPolicy.random_unit(degree, rng)
        for beta in (0.1, 0.5, 0.9):
            c = polynomial_cov(policy, GaussianPair(beta))
            violation = max(violation, beta ** degree - c, c - beta)
    for degree in range(1, 7):
        for beta in (0.1, 0.5, 0.9):
            pair = GaussianPair(beta)
            violation = max(violation,
                            abs(polynomial_cov(PolynomialPolicy.basis(1, degree), pair) - beta),
                            abs(polynomial_cov(PolynomialPolicy.basis(degree), pair) - beta ** degree))
    results.append(_check("prop2_bounds", max(violation, 0.0), tol))

    candidates = [
        lambda x: -np.tanh(x),
        lambda x: -np.clip(x, -1.0, 1.0),
        PolynomialPolicy([0.6, 0.0, 0.8]),
    ]
    lowest = min(cov_bruteforce(f, GaussianPair(beta)) for f in candidates for beta in (0.1, 0.5, 0.9))
    results.append(_check("prop1_positivity", max(-lowest, 0.0), tol))

    worst = 0.0
    for alpha in (0.01, 1.0, 10.0):
        for Sigma in (1e-4, 1.0, 10.0):
            closed = 2.0 * LN2 / (alpha * math.sqrt(2.0 * math.pi * Sigma))
            worst = max(worst, abs(psi(0.0, alpha, Sigma) / closed - 1.0))
    results.append(_check("psi_closed_form", worst, tol))

    unit = OUParams.from_stationary(1.0, 1.0)
    L0 = optimal_leverage_given_S(0.0, unit, RiskPreference(1.0))
    results.append(_check("leverage_closure", abs(L0 / (math.pi / (4.0 * LN2)) - 1.0), tol))

    # the displayed psi closes the chain exactly when Sigma = 1 / (2 pi)
    chain = OUParams.from_stationary(1.0, 1.0 / (2.0 * math.pi))
    Sigma = stationary_variance(chain)
    worst = 0.0
    for m in (0.0, 1.0, 2.0):
        S = m * math.sqrt(Sigma)
        target = phi(S, Sigma) ** 2 * psi(S, chain.alpha, Sigma)
        worst = max(worst, abs(2.0 * theta_integral(S, chain) / target - 1.0))
    results.append(_check("theta_chain", worst, tol))

    if quick:
        return results

    est = delta_mean_mc(0.0, unit, 0.01, 200_000, seed, dt=0.01)
    results.append(_check("delta_mean_z", abs(est.z_score(phi(0.0, 1.0))), tol))

    dt = 0.002
    lt = delta_integral_variance_mc(0.0, chain, 100.0, occupation_band(chain, dt), seed,
                                    n_realizations=1000, dt=dt, threads=threads)
    target = phi(0.0, Sigma) ** 2 * psi(0.0, chain.alpha, Sigma)
    results.append(_check("local_time_variance", abs(lt.value / target - 1.0), tol))

    lin = variance_growth_rate_mc(LinearPolicy(5.0), unit, 500.0, 200, seed, threads=threads)
    results.append(_check("linear_variance_z", abs(lin.slope_z), tol))

    tanh = DifferentiablePolicy.tanh()
    mc = variance_growth_rate_mc(tanh, unit, 500.0, 200, seed, threads=threads)
    exact = variance_growth_rate_hermite(tanh, unit)
    results.append(_check("tanh_rate_z", abs(mc.r - exact) / mc.stderr if mc.stderr > 0 else math.inf, tol))
    return results
