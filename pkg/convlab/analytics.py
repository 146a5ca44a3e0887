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
Closed-form growth and variance rates of threshold and linear policies.

Asymptotic utility of a policy is U = c1 - gamma * c2, where c1 is the
growth rate of E(u_t) and c2 the growth rate of Var(u_t). For a simple
threshold policy with leverage L and threshold S:

    c1 = sigma^2 L phi(S)
    c2 = c1^2 psi(S)

phi is the N(0, Sigma) density and psi the variance-rate factor built on
the integral I(q) = int_0^1 (1/xi) [ (1 - xi^2)^(-1/2) exp(q xi / (1 + xi)) - 1 ] dxi,
q = S^2 / Sigma.
"""

import math
import logging
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .process import OUParams, stationary_variance
from .utils import DomainError, ValidationError, QuadratureError, UnboundedLeverageError

logger = logging.getLogger("ConvLab.Analytics")

# [0, 1 - SPLIT] by direct quadrature, the sliver by xi = 1 - w^2
PSI_SPLIT = 1e-6
PSI_ABS_TOL = 1e-10
QUAD_LIMIT = 500

LN2 = math.log(2.0)


@dataclass(frozen=True)
class RiskPreference:
    gamma: float

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise ValidationError(f"gamma must be >= 0, got {self.gamma}")


KELLY = RiskPreference(0.0)


@dataclass(frozen=True)
class ThresholdAnalytics:
    c1: float
    c2: float
    utility: float


@dataclass(frozen=True)
class ThresholdOptimum:
    S: float
    L: float
    U: float


@dataclass(frozen=True)
class LinearRates:
    growth: float
    variance_rate: float
    long_run_variance: float


def _check_sigma(Sigma):
    if not (math.isfinite(Sigma) and Sigma > 0):
        raise DomainError(f"Sigma must be > 0, got {Sigma}")


def phi(S: float, Sigma: float) -> float:
    _check_sigma(Sigma)
    if S < 0:
        raise DomainError(f"threshold S must be >= 0, got {S}")
    return math.exp(-S * S / (2.0 * Sigma)) / math.sqrt(2.0 * math.pi * Sigma)


def _same_side(xi, q):
    if xi == 0.0:
        return q
    return math.expm1(q * xi / (1.0 + xi) - 0.5 * math.log1p(-xi * xi)) / xi


def _cross_side(xi, q):
    if xi == 0.0:
        return -q
    return math.expm1(-q * xi / (1.0 - xi) - 0.5 * math.log1p(-xi * xi)) / xi


def _same_side_sliver(w, q):
    xi = 1.0 - w * w
    return 2.0 / xi * (math.exp(q * xi / (1.0 + xi)) / math.sqrt(2.0 - w * w) - w)


def _cross_side_sliver(w, q):
    xi = 1.0 - w * w
    if w == 0.0:
        decay = 1.0 if q == 0.0 else 0.0
    else:
        decay = math.exp(-q * xi / (w * w))
    return 2.0 / xi * (decay / math.sqrt(2.0 - w * w) - w)


def _checked_quad(func, a, b, args, what):
    result = quad(func, a, b, args=args, epsabs=PSI_ABS_TOL / 100, epsrel=1e-11,
                  limit=QUAD_LIMIT, full_output=1)
    value, abserr = result[0], result[1]
    if len(result) > 3 and abserr > PSI_ABS_TOL * max(1.0, abs(value)):
        raise QuadratureError(f"{what} did not converge: {result[3]}", achieved=abserr)
    return value, abserr


def psi_integral(S: float, Sigma: float, kind: str = "same") -> float:
    """Dimensionless integral I(S^2/Sigma).

    ``kind="same"`` is the level-S self term; ``kind="cross"`` the term
    coupling the levels S and -S, with exp(-q xi / (1 - xi)) in place of
    exp(q xi / (1 + xi)). Both equal ln 2 at S = 0.
    """
    _check_sigma(Sigma)
    q = S * S / Sigma
    if kind == "same":
        body, sliver = _same_side, _same_side_sliver
    elif kind == "cross":
        body, sliver = _cross_side, _cross_side_sliver
    else:
        raise ValidationError(f"kind must be 'same' or 'cross', got '{kind}'")
    main, err_main = _checked_quad(body, 0.0, 1.0 - PSI_SPLIT, (q,), f"psi integral ({kind}) on [0, 1)")
    tail, err_tail = _checked_quad(sliver, 0.0, math.sqrt(PSI_SPLIT), (q,), f"psi integral ({kind}) endpoint")
    logger.debug(f"I_{kind}(q={q:.6g}) = {main + tail:.15g} (abs err {err_main + err_tail:.2g})")
    return main + tail


def psi(S: float, alpha: float, Sigma: float) -> float:
    """psi(S) = (1 / sqrt(2 pi Sigma)) (2 / alpha) I(S^2 / Sigma)."""
    if not alpha > 0:
        raise DomainError(f"alpha must be > 0, got {alpha}")
    return 2.0 * psi_integral(S, Sigma, "same") / (alpha * math.sqrt(2.0 * math.pi * Sigma))


def local_time_variance_factor(S: float, alpha: float, Sigma: float) -> float:
    """Long-run Var(int_0^T delta_S(x_t) dt) / (T phi(S)^2) = 2 I(S^2/Sigma) / alpha.

    Equals sqrt(2 pi Sigma) * psi(S); the two coincide at Sigma = 1 / (2 pi).
    """
    if not alpha > 0:
        raise DomainError(f"alpha must be > 0, got {alpha}")
    return 2.0 * psi_integral(S, Sigma, "same") / alpha


def threshold_rates(L: float, S: float, p: OUParams, pref: RiskPreference = KELLY) -> ThresholdAnalytics:
    if L < 0:
        raise ValidationError(f"leverage L must be >= 0, got {L}")
    Sigma = stationary_variance(p)
    c1 = p.sigma ** 2 * L * phi(S, Sigma)
    c2 = c1 * c1 * psi(S, p.alpha, Sigma) if L > 0 else 0.0
    return ThresholdAnalytics(c1, c2, c1 - pref.gamma * c2)


def local_time_rates(L: float, S: float, p: OUParams, sided: str = "two") -> ThresholdAnalytics:
    """Exact long-run growth and variance rates of the simple threshold policy.

    Two-sided: growth sigma^2 L phi(S), variance (sigma^2 L phi(S))^2 (I_same + I_cross) / alpha.
    One-sided: growth sigma^2 L phi(S) / 2, variance (sigma^2 L phi(S))^2 I_same / (2 alpha).
    ``utility`` is reported for the Kelly investor (the growth rate).
    """
    if L < 0:
        raise ValidationError(f"leverage L must be >= 0, got {L}")
    Sigma = stationary_variance(p)
    scale = p.sigma ** 2 * L * phi(S, Sigma)
    if sided == "two":
        growth = scale
        variance = scale * scale * (psi_integral(S, Sigma, "same") + psi_integral(S, Sigma, "cross")) / p.alpha
    elif sided == "one":
        growth = 0.5 * scale
        variance = scale * scale * psi_integral(S, Sigma, "same") / (2.0 * p.alpha)
    else:
        raise ValidationError(f"sided must be 'one' or 'two', got '{sided}'")
    return ThresholdAnalytics(growth, variance, growth)


def discrete_threshold_growth(L: float, S: float, p: OUParams, dt: float, sided: str = "two") -> float:
    """Expected growth per unit time of the zero-cost simple threshold policy traded every dt.

    E[f(x_k)(x_{k+1} - x_k)] / dt = 2 Sigma L phi(S) (1 - exp(-alpha dt)) / dt for the
    two-sided rule (half of it one-sided); tends to sigma^2 L phi(S) as dt -> 0.
    """
    if not dt > 0:
        raise ValidationError(f"dt must be > 0, got {dt}")
    Sigma = stationary_variance(p)
    rate = 2.0 * Sigma * L * phi(S, Sigma) * -math.expm1(-p.alpha * dt) / dt
    if sided == "one":
        return 0.5 * rate
    if sided != "two":
        raise ValidationError(f"sided must be 'one' or 'two', got '{sided}'")
    return rate


def discrete_linear_growth(k: float, p: OUParams, dt: float) -> float:
    """Expected growth per unit time of f(x) = -k x traded every dt, without costs.

    E[-k x_k (x_{k+1} - x_k)] / dt = k Sigma (1 - exp(-alpha dt)) / dt, which is
    below the continuous rate sigma^2 k / 2 by the factor (1 - exp(-alpha dt)) / (alpha dt).
    """
    if not dt > 0:
        raise ValidationError(f"dt must be > 0, got {dt}")
    if k < 0:
        raise ValidationError(f"k must be >= 0, got {k}")
    return k * stationary_variance(p) * -math.expm1(-p.alpha * dt) / dt


def _require_risk_aversion(pref: RiskPreference):
    if pref.gamma == 0:
        raise UnboundedLeverageError(
            "gamma = 0: the Kelly investor's utility is linear in L for threshold policies, "
            "so the optimal leverage is unbounded")


def optimal_leverage_given_S(S: float, p: OUParams, pref: RiskPreference) -> float:
    """L(S) = 1 / (4 gamma alpha Sigma phi(S) psi(S))."""
    _require_risk_aversion(pref)
    Sigma = stationary_variance(p)
    return 1.0 / (4.0 * pref.gamma * p.alpha * Sigma * phi(S, Sigma) * psi(S, p.alpha, Sigma))


def reduced_utility(S: float, p: OUParams, pref: RiskPreference) -> float:
    """U(S) = 1 / (4 gamma psi(S)), the utility at the optimal leverage for S."""
    _require_risk_aversion(pref)
    return 1.0 / (4.0 * pref.gamma * psi(S, p.alpha, stationary_variance(p)))


def optimal_threshold_policy(p: OUParams, pref: RiskPreference) -> ThresholdOptimum:
    """S = 0, L = pi / (4 gamma ln 2), U = alpha sqrt(2 pi Sigma) / (8 gamma ln 2)."""
    _require_risk_aversion(pref)
    Sigma = stationary_variance(p)
    L = math.pi / (4.0 * pref.gamma * LN2)
    U = p.alpha * math.sqrt(2.0 * math.pi * Sigma) / (8.0 * pref.gamma * LN2)
    return ThresholdOptimum(0.0, L, U)


def linear_policy_rates(k: float, p: OUParams) -> LinearRates:
    """Rates of f(x) = -k x.

    Growth sigma^2 k / 2 and zero variance growth; the variance of u_t settles
    at k^2 Sigma^2 / 2 (conditional on the starting point).
    """
    if k < 0:
        raise ValidationError(f"k must be >= 0, got {k}")
    Sigma = stationary_variance(p)
    return LinearRates(0.5 * p.sigma ** 2 * k, 0.0, 0.5 * (k * Sigma) ** 2)


def gbm_utility(mu: float, sigma: float, pref: RiskPreference) -> float:
    return mu - pref.gamma * sigma * sigma


def utility_table(S_values, p: OUParams, pref: RiskPreference):
    """Rows of (S, phi, psi, L(S), U(S)) for each threshold."""
    Sigma = stationary_variance(p)
    rows = []
    for S in S_values:
        S = float(S)
        psi_S = psi(S, p.alpha, Sigma)
        phi_S = phi(S, Sigma)
        if pref.gamma > 0:
            L = 1.0 / (4.0 * pref.gamma * p.alpha * Sigma * phi_S * psi_S)
            U = 1.0 / (4.0 * pref.gamma * psi_S)
        else:
            L = U = math.nan
        rows.append({"S": S, "phi": phi_S, "psi": psi_S, "L": L, "U": U})
    return rows


def threshold_grid(Sigma: float, multiples=(0.0, 0.5, 1.0, 1.5, 2.0)) -> np.ndarray:
    """Thresholds at fixed multiples of the stationary standard deviation."""
    _check_sigma(Sigma)
    return np.asarray(multiples, dtype=np.float64) * math.sqrt(Sigma)
