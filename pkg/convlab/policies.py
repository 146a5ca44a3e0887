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
Leverage policies and the log-wealth they produce.

Wealth follows du = f(x) dx. On a sampled path the leverage chosen at x[k]
is held over step k (left-point rule) and every change of leverage pays
half the round-trip cost:

    u[k+1] = u[k] + f[k] * (x[k+1] - x[k]) - (c / 2) * |f[k] - f[k-1]|,   f[-1] = 0
"""

import math
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .process import MispricingPath, OUParams
from .utils import ValidationError, UnsupportedPolicyError

logger = logging.getLogger("ConvLab.Policies")

SIDED_MODES = ("two", "one")

# Finite-difference step is FD_REL_STEP * max(1, |x|)
FD_REL_STEP = 1e-6
# Half-width and density of the grid used to validate |f'| <= K
BOUND_CHECK_HALF_WIDTH = 10.0
BOUND_CHECK_POINTS = 4001


@dataclass(frozen=True)
class LinearPolicy:
    """f(x) = -k x."""
    k: float

    def __post_init__(self):
        if not (math.isfinite(self.k) and self.k >= 0):
            raise ValidationError(f"k must be >= 0, got {self.k}")

    @property
    def deriv_bound(self) -> float:
        return self.k

    def leverage(self, x):
        return -self.k * np.asarray(x, dtype=np.float64)

    def derivative(self, x):
        return np.full_like(np.asarray(x, dtype=np.float64), -self.k)

    def antiderivative(self, x):
        x = np.asarray(x, dtype=np.float64)
        return -0.5 * self.k * x * x

    def as_differentiable(self) -> "DifferentiablePolicy":
        return DifferentiablePolicy(self.leverage, self.derivative, deriv_bound=self.k or None,
                                    antiderivative=self.antiderivative)


@dataclass(frozen=True, eq=False)
class DifferentiablePolicy:
    """A D-policy: f continuously differentiable with |f'| <= K.

    ``f`` and ``f_prime`` must accept numpy arrays. When ``f_prime`` is omitted a
    central finite difference is used. When ``deriv_bound`` is omitted it is
    measured on the validation grid.
    """
    f: Callable
    f_prime: Optional[Callable] = None
    deriv_bound: Optional[float] = None
    antiderivative: Optional[Callable] = None
    check_half_width: float = BOUND_CHECK_HALF_WIDTH

    def __post_init__(self):
        f0 = float(np.asarray(self.f(np.array([0.0])))[0])
        if not math.isfinite(f0):
            raise ValidationError("f(0) must be finite")
        grid = np.linspace(-self.check_half_width, self.check_half_width, BOUND_CHECK_POINTS)
        slopes = np.abs(self.derivative(grid))
        if not np.all(np.isfinite(slopes)):
            raise ValidationError("f' is not finite on the validation grid")
        measured = float(slopes.max())
        if self.deriv_bound is None:
            object.__setattr__(self, "deriv_bound", measured)
        elif self.deriv_bound <= 0:
            raise ValidationError(f"deriv_bound must be > 0, got {self.deriv_bound}")
        elif measured > self.deriv_bound * (1.0 + 1e-9) + 1e-12:
            raise ValidationError(
                f"|f'| reaches {measured:.6g} on the validation grid, above the bound K={self.deriv_bound:.6g}")

    @classmethod
    def tanh(cls, scale: float = 1.0, L: float = 1.0) -> "DifferentiablePolicy":
        """f(x) = -L tanh(x / scale)."""
        if scale <= 0 or L <= 0:
            raise ValidationError("tanh policy needs scale > 0 and L > 0")
        return cls(
            lambda x: -L * np.tanh(np.asarray(x, dtype=np.float64) / scale),
            lambda x: -(L / scale) / np.cosh(np.asarray(x, dtype=np.float64) / scale) ** 2,
            deriv_bound=L / scale,
            antiderivative=lambda x: -L * scale * np.log(np.cosh(np.asarray(x, dtype=np.float64) / scale)),
            check_half_width=max(BOUND_CHECK_HALF_WIDTH * scale, scale),
        )

    def leverage(self, x):
        return np.asarray(self.f(np.asarray(x, dtype=np.float64)), dtype=np.float64)

    def derivative(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.f_prime is not None:
            return np.asarray(self.f_prime(x), dtype=np.float64)
        return finite_difference(self.f, x)


def finite_difference(f, x):
    """Central difference with step 1e-6 * max(1, |x|)."""
    x = np.asarray(x, dtype=np.float64)
    h = FD_REL_STEP * np.maximum(1.0, np.abs(x))
    return (np.asarray(f(x + h)) - np.asarray(f(x - h))) / (2.0 * h)


@dataclass(frozen=True)
class ThresholdPolicy:
    """Open -sign(x) * L when |x| >= S, close when |x| <= s, hold in between.

    ``sided="one"`` only trades the short side: open at x >= S, close at x <= s.
    The two-sided rule is antisymmetric under x -> -x; the one-sided rule is not.
    """
    open_threshold: float
    close_threshold: float
    leverage: float = 1.0
    sided: str = "two"

    def __post_init__(self):
        S, s, L = self.open_threshold, self.close_threshold, self.leverage
        if not (math.isfinite(S) and S >= 0):
            raise ValidationError(f"open threshold S must be >= 0, got {S}")
        if not (0 <= s <= S):
            raise ValidationError(f"close threshold s must lie in [0, S={S}], got {s}")
        if not (math.isfinite(L) and L > 0):
            raise ValidationError(f"leverage L must be > 0, got {L}")
        if self.sided not in SIDED_MODES:
            raise ValidationError(f"sided must be one of {SIDED_MODES}, got '{self.sided}'")

    def simple(self) -> bool:
        return self.close_threshold == self.open_threshold

    def with_leverage(self, L: float) -> "ThresholdPolicy":
        return ThresholdPolicy(self.open_threshold, self.close_threshold, L, self.sided)


Policy = Union[LinearPolicy, DifferentiablePolicy, ThresholdPolicy]


@dataclass(frozen=True)
class PositionState:
    open: bool = False
    sign: int = 0

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValidationError(f"position sign must be -1, 0 or 1, got {self.sign}")
        if self.open != (self.sign != 0):
            raise ValidationError("an open position needs a non-zero sign")

    @classmethod
    def closed(cls) -> "PositionState":
        return cls(False, 0)

    def mirrored(self) -> "PositionState":
        return PositionState(self.open, -self.sign)


def _threshold_events(x, policy: ThresholdPolicy):
    """Target sign where the rule fires, NaN where it holds."""
    S, s = policy.open_threshold, policy.close_threshold
    if policy.sided == "two":
        opening = (np.abs(x) >= S) & (x != 0)
        target = -np.sign(x)
        closing = np.abs(x) <= s
    else:
        opening = (x >= S) & (x > 0)
        target = np.full_like(x, -1.0)
        closing = x <= s
    events = np.full_like(x, np.nan)
    events = np.where(closing, 0.0, events)
    # opening wins when both fire, which only happens at |x| == S == s
    return np.where(opening, target, events)


def leverage_at(policy: Policy, x: float, state: PositionState = PositionState()):
    """Leverage chosen at mispricing ``x`` and the position state after the decision."""
    if isinstance(policy, ThresholdPolicy):
        event = float(_threshold_events(np.array([float(x)]), policy)[0])
        if math.isnan(event):
            return state.sign * policy.leverage, state
        sign = int(event)
        return sign * policy.leverage, PositionState(sign != 0, sign)
    if isinstance(policy, (LinearPolicy, DifferentiablePolicy)):
        return float(policy.leverage(np.array([float(x)]))[0]), state
    raise UnsupportedPolicyError(f"unknown policy type {type(policy).__name__}")


def threshold_positions(values, policy: ThresholdPolicy) -> np.ndarray:
    """Position signs along the last axis, starting flat. Same rule as ``leverage_at``."""
    x = np.asarray(values, dtype=np.float64)
    events = _threshold_events(x, policy)
    fired = ~np.isnan(events)
    idx = np.where(fired, np.arange(x.shape[-1]), -1)
    last = np.maximum.accumulate(idx, axis=-1)
    held = np.take_along_axis(np.nan_to_num(events), np.maximum(last, 0), axis=-1)
    return np.where(last >= 0, held, 0.0)


def leverage_series(values, policy: Policy) -> np.ndarray:
    """Leverage at every point of ``values`` (1-D path or 2-D stack of paths)."""
    x = np.asarray(values, dtype=np.float64)
    if isinstance(policy, ThresholdPolicy):
        return policy.leverage * threshold_positions(x, policy)
    if isinstance(policy, (LinearPolicy, DifferentiablePolicy)):
        return policy.leverage(x)
    raise UnsupportedPolicyError(f"unknown policy type {type(policy).__name__}")


def wealth_increments(values, policy: Policy, cost: float = 0.0):
    """Per-step log-wealth increments and position-change counts along the last axis."""
    if not (math.isfinite(cost) and cost >= 0):
        raise ValidationError(f"cost must be >= 0, got {cost}")
    x = np.asarray(values, dtype=np.float64)
    held = leverage_series(x[..., :-1], policy)
    prev = np.concatenate([np.zeros_like(held[..., :1]), held[..., :-1]], axis=-1)
    change = np.abs(held - prev)
    increments = held * np.diff(x, axis=-1) - 0.5 * cost * change
    if isinstance(policy, ThresholdPolicy):
        transactions = np.rint(change / policy.leverage).sum(axis=-1)
    else:
        transactions = np.count_nonzero(change, axis=-1)
    return increments, transactions


@dataclass(frozen=True)
class WealthPath:
    values: np.ndarray
    transactions: int = 0

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise ValidationError("wealth path contains non-finite values")
        if self.transactions < 0:
            raise ValidationError("transactions must be >= 0")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def wealth_path(path: MispricingPath, policy: Policy, cost: float = 0.0) -> WealthPath:
    increments, transactions = wealth_increments(path.values, policy, cost)
    values = np.concatenate(([0.0], np.cumsum(increments)))
    return WealthPath(values, int(transactions))


def _antiderivative_on(policy, x):
    """g(x) = integral of f from 0 to x, closed form if the policy has one."""
    closed_form = getattr(policy, "antiderivative", None)
    if closed_form is not None:
        return np.asarray(closed_form(x), dtype=np.float64) - float(np.asarray(closed_form(np.array([0.0])))[0])
    lo, hi = min(float(x.min()), 0.0), max(float(x.max()), 0.0)
    if hi == lo:
        return np.zeros_like(x)
    nodes = np.union1d(np.linspace(lo, hi, 20001), [0.0])
    cumulative = cumulative_trapezoid(policy.leverage(nodes), nodes, initial=0.0)
    cumulative -= np.interp(0.0, nodes, cumulative)
    return np.interp(x, nodes, cumulative)


def representation_wealth(path: MispricingPath, policy, params: Optional[OUParams] = None) -> np.ndarray:
    """u_t = g(x_t) - g(x_0) - (sigma^2 / 2) * sum_j f'(x_j) dt, with g the antiderivative of f."""
    if isinstance(policy, ThresholdPolicy) or not hasattr(policy, "derivative"):
        raise UnsupportedPolicyError("the representation formula needs a differentiable policy")
    params = params if params is not None else path.params
    if params is None:
        raise ValidationError("process parameters are needed; pass params or use a simulated path")
    x = path.values
    g = _antiderivative_on(policy, x)
    slopes = policy.derivative(x[:-1])
    drift = np.concatenate(([0.0], np.cumsum(slopes))) * path.grid.dt
    return g - g[0] - 0.5 * params.sigma ** 2 * drift


def representation_residuals(path: MispricingPath, policy, params: Optional[OUParams] = None) -> np.ndarray:
    """Zero-cost wealth from the recursion minus the representation formula."""
    return wealth_path(path, policy, 0.0).values - representation_wealth(path, policy, params)


def representation_check(path: MispricingPath, policy, params: Optional[OUParams] = None) -> float:
    return float(np.max(np.abs(representation_residuals(path, policy, params))))


@dataclass(frozen=True)
class GrowthStats:
    mean_growth: float
    terminal: float
    increment_variance_rate: float


def realized_growth_stats(wealth: WealthPath, dt: float) -> GrowthStats:
    u = wealth.values
    if u.size < 2:
        raise ValidationError("growth statistics need at least one step")
    if not dt > 0:
        raise ValidationError(f"dt must be > 0, got {dt}")
    T = (u.size - 1) * dt
    increments = np.diff(u)
    var_rate = float(np.var(increments, ddof=1) / dt) if increments.size > 1 else 0.0
    return GrowthStats((u[-1] - u[0]) / T, float(u[-1]), var_rate)
