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
Ornstein-Uhlenbeck mispricing process and its exact AR(1) discretization.

    dx = -alpha * x dt + sigma dz            (continuous)
    x[k+1] = beta * x[k] + sigma_d * eps[k]  (sampled every dt)

with beta = exp(-alpha dt) and sigma_d^2 = Sigma (1 - beta^2), Sigma = sigma^2 / (2 alpha).
"""

import math
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import lfilter

from .utils import DomainError, ValidationError, stream_generator, parallel_map

logger = logging.getLogger("ConvLab.Process")


@dataclass(frozen=True)
class OUParams:
    alpha: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise DomainError(f"alpha must be > 0, got {self.alpha}")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise DomainError(f"sigma must be > 0, got {self.sigma}")

    @classmethod
    def from_stationary(cls, alpha: float, Sigma: float) -> "OUParams":
        """Build the process with a given long-run variance."""
        if Sigma <= 0:
            raise DomainError(f"Sigma must be > 0, got {Sigma}")
        return cls(alpha, math.sqrt(2.0 * alpha * Sigma))


@dataclass(frozen=True)
class Ar1Params:
    beta: float
    sigma_d: float

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise DomainError(f"beta must lie in (0, 1), got {self.beta}")
        if not (math.isfinite(self.sigma_d) and self.sigma_d > 0):
            raise DomainError(f"sigma_d must be > 0, got {self.sigma_d}")

    def stationary_variance(self) -> float:
        return self.sigma_d ** 2 / (1.0 - self.beta ** 2)


@dataclass(frozen=True)
class PathGrid:
    dt: float
    n_steps: int
    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValidationError(f"dt must be > 0, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValidationError(f"n_steps must be an integer >= 1, got {self.n_steps}")
        if self.seed < 0 or self.stream < 0:
            raise ValidationError("seed and stream must be non-negative")

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1, dtype=np.float64) * self.dt


@dataclass(frozen=True)
class MispricingPath:
    grid: PathGrid
    values: np.ndarray
    params: Optional[OUParams] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size != self.grid.n_steps + 1:
            raise ValidationError(
                f"path needs {self.grid.n_steps + 1} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("path contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def times(self) -> np.ndarray:
        return self.grid.times()


def stationary_variance(p: OUParams) -> float:
    return p.sigma ** 2 / (2.0 * p.alpha)


def ou_to_ar1(p: OUParams, dt: float) -> Ar1Params:
    if not dt > 0:
        raise ValidationError(f"dt must be > 0, got {dt}")
    a = p.alpha * dt
    beta = math.exp(-a)
    # 1 - beta^2 = -expm1(-2a) keeps precision for small alpha*dt
    sigma_d = math.sqrt(stationary_variance(p) * -math.expm1(-2.0 * a))
    return Ar1Params(beta, sigma_d)


def ar1_to_ou(p: Ar1Params, dt: float) -> OUParams:
    if not dt > 0:
        raise ValidationError(f"dt must be > 0, got {dt}")
    if not (0.0 < p.beta < 1.0):
        raise DomainError(f"beta must lie in (0, 1) to map to an OU process, got {p.beta}")
    alpha = -math.log(p.beta) / dt
    Sigma = p.sigma_d ** 2 / -math.expm1(2.0 * math.log(p.beta))
    return OUParams(alpha, math.sqrt(2.0 * alpha * Sigma))


def simulate(p: OUParams, grid: PathGrid, x0: float = 0.0, stationary: bool = False) -> MispricingPath:
    """Exact-discretization path of the OU process.

    With ``stationary=True`` the start is drawn from N(0, Sigma) on the same
    stream, before the innovations, and ``x0`` is ignored.
    """
    ar = ou_to_ar1(p, grid.dt)
    rng = stream_generator(grid.seed, grid.stream)
    if stationary:
        x0 = math.sqrt(stationary_variance(p)) * rng.standard_normal()
    shocks = ar.sigma_d * rng.standard_normal(grid.n_steps)
    # y[n] = beta * y[n-1] + shock[n], seeded with beta * x0
    tail, _ = lfilter([1.0], [1.0, -ar.beta], shocks, zi=[ar.beta * x0])
    values = np.concatenate(([float(x0)], tail))
    return MispricingPath(grid, values, p)


def simulate_batch(p: OUParams, grid: PathGrid, n_realizations: int,
                   stationary: bool = True, x0: float = 0.0, threads: int = 1) -> np.ndarray:
    """Stack of ``n_realizations`` paths; row i uses stream ``grid.stream + i``."""
    if n_realizations < 1:
        raise ValidationError(f"n_realizations must be >= 1, got {n_realizations}")

    def one(i):
        g = PathGrid(grid.dt, grid.n_steps, grid.seed, grid.stream + i)
        return simulate(p, g, x0=x0, stationary=stationary).values

    rows = parallel_map(one, range(n_realizations), threads)
    logger.debug(f"simulated {n_realizations} paths of {grid.n_steps} steps")
    return np.vstack(rows)


def autocovariance(p: OUParams, tau: float) -> float:
    return stationary_variance(p) * math.exp(-p.alpha * abs(tau))


def sample_autocovariance(values, lag: int) -> float:
    """Mean-corrected lag-``lag`` autocovariance with the 1/n convention."""
    x = np.asarray(values, dtype=np.float64)
    if lag < 0 or lag >= x.size:
        raise ValidationError(f"lag {lag} out of range for {x.size} values")
    d = x - x.mean()
    return float(np.dot(d[: x.size - lag], d[lag:]) / x.size)
