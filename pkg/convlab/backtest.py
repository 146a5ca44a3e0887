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
Monte-Carlo backtest of threshold strategies on AR(1) mispricing.

Realization i of an experiment always comes from stream i of the master
seed, and every strategy of a grid is evaluated on the same realizations.
Statistics are aggregated with exactly rounded sums, so results do not
depend on chunking, thread count or realization order.
"""

import os
import math
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from .policies import ThresholdPolicy, SIDED_MODES, wealth_increments
from .process import Ar1Params, OUParams, PathGrid, ar1_to_ou, simulate_batch
from .utils import ConfigError, ValidationError, OutputError, parallel_map

logger = logging.getLogger("ConvLab.Backtest")

METRICS = ("mean", "std", "sharpe")
CONTOUR_COLUMNS = ["S_pct", "Sms_pct", "value"]
GRID_STEP = 0.00125


@dataclass(frozen=True)
class BacktestConfig:
    process: Ar1Params
    n_realizations: int = 100
    horizon: int = 1250
    cost: float = 0.0025
    master_seed: int = 0
    sided: str = "two"
    substeps: int = 1
    chunk_size: int = 50

    def __post_init__(self):
        if self.n_realizations < 1:
            raise ConfigError(f"n_realizations must be >= 1, got {self.n_realizations}")
        if self.horizon < 2:
            raise ConfigError(f"horizon must be >= 2 datapoints, got {self.horizon}")
        if not (math.isfinite(self.cost) and self.cost >= 0):
            raise ConfigError(f"cost must be >= 0, got {self.cost}")
        if self.master_seed < 0:
            raise ConfigError(f"master_seed must be non-negative, got {self.master_seed}")
        if self.sided not in SIDED_MODES:
            raise ConfigError(f"sided must be one of {SIDED_MODES}, got '{self.sided}'")
        if self.substeps < 1:
            raise ConfigError(f"substeps must be >= 1, got {self.substeps}")
        if self.chunk_size < 1:
            raise ConfigError(f"chunk_size must be >= 1, got {self.chunk_size}")

    @property
    def ou(self) -> OUParams:
        """Continuous process with one datapoint per unit of time."""
        return ar1_to_ou(self.process, 1.0)

    @property
    def length(self) -> float:
        """Time length T of a realization, in datapoint intervals (days)."""
        return float(self.horizon - 1)

    def path_grid(self, stream: int = 0) -> PathGrid:
        return PathGrid(1.0 / self.substeps, (self.horizon - 1) * self.substeps, self.master_seed, stream)

    def chunks(self):
        for start in range(0, self.n_realizations, self.chunk_size):
            yield start, min(self.chunk_size, self.n_realizations - start)


@dataclass(frozen=True)
class StrategyGrid:
    S_values: tuple
    s_values: tuple

    def __post_init__(self):
        S_values = tuple(float(S) for S in self.S_values)
        s_values = tuple(tuple(float(s) for s in row) for row in self.s_values)
        if not S_values:
            raise ConfigError("strategy grid is empty")
        if len(S_values) != len(s_values):
            raise ConfigError("need one list of close thresholds per open threshold")
        if any(b <= a for a, b in zip(S_values, S_values[1:])):
            raise ConfigError("open thresholds must be strictly ascending")
        for S, row in zip(S_values, s_values):
            if not row:
                raise ConfigError(f"no close thresholds for S={S}")
            if any(not (0.0 <= s <= S) for s in row):
                raise ConfigError(f"close thresholds for S={S} must lie in [0, S]")
        object.__setattr__(self, "S_values", S_values)
        object.__setattr__(self, "s_values", s_values)

    @classmethod
    def from_ranges(cls, S_min: float = 0.005, S_max: float = 0.02,
                    S_step: float = GRID_STEP, s_step: float = GRID_STEP) -> "StrategyGrid":
        """S from S_min to S_max; s = S - m * s_step for m = 0, 1, ... while s >= 0."""
        if S_step <= 0 or s_step <= 0:
            raise ConfigError("grid steps must be > 0")
        if S_min < 0 or S_max < S_min:
            raise ConfigError(f"need 0 <= S_min <= S_max, got [{S_min}, {S_max}]")
        n_S = int(math.floor((S_max - S_min) / S_step + 1e-9)) + 1
        S_values, s_values = [], []
        for i in range(n_S):
            S = round(S_min + i * S_step, 12)
            n_s = int(math.floor(S / s_step + 1e-9)) + 1
            S_values.append(S)
            s_values.append([max(round(S - m * s_step, 12), 0.0) for m in range(n_s)])
        return cls(tuple(S_values), tuple(tuple(r) for r in s_values))

    @classmethod
    def default(cls) -> "StrategyGrid":
        return cls.from_ranges()

    @classmethod
    def single(cls, S: float, s: float) -> "StrategyGrid":
        return cls((S,), ((s,),))

    def cells(self):
        return [(S, s) for S, row in zip(self.S_values, self.s_values) for s in row]


@dataclass(frozen=True)
class ReturnStats:
    mean_daily: float
    std_daily: float
    n: int
    horizon: float

    @property
    def sharpe(self) -> float:
        if not self.std_daily > 0:
            return math.nan
        return self.mean_daily / self.std_daily

    @property
    def mean_stderr(self) -> float:
        return self.std_daily / math.sqrt(self.n)

    @property
    def variance_rate(self) -> float:
        """Var(u_T) / T."""
        return self.horizon * self.std_daily ** 2

    @property
    def variance_rate_stderr(self) -> float:
        if self.n < 2:
            return math.nan
        return self.variance_rate * math.sqrt(2.0 / (self.n - 1))

    def scaled(self, L: float) -> "ReturnStats":
        if L <= 0:
            raise ValidationError(f"leverage must be > 0, got {L}")
        return ReturnStats(self.mean_daily * L, self.std_daily * L, self.n, self.horizon)

    def metric(self, name: str) -> float:
        if name == "mean":
            return self.mean_daily
        if name == "std":
            return self.std_daily
        if name == "sharpe":
            return self.sharpe
        raise ValidationError(f"metric must be one of {METRICS}, got '{name}'")


def aggregate(growth, horizon: float) -> ReturnStats:
    """Mean and sample standard deviation of per-realization growth rates."""
    values = [float(g) for g in growth]
    n = len(values)
    mean = math.fsum(values) / n
    std = math.sqrt(math.fsum((g - mean) ** 2 for g in values) / (n - 1)) if n > 1 else math.nan
    return ReturnStats(mean, std, n, horizon)


@dataclass(frozen=True)
class GridRow:
    S: float
    s: float
    stats: ReturnStats


@dataclass(frozen=True)
class GridResult:
    rows: tuple

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{
            "S": r.S, "s": r.s,
            "mean_daily": r.stats.mean_daily, "std_daily": r.stats.std_daily,
            "sharpe": r.stats.sharpe, "n": r.stats.n, "horizon": r.stats.horizon,
        } for r in self.rows])

    def argmax(self, metric: str) -> Optional[GridRow]:
        best = None
        for row in self.rows:
            value = row.stats.metric(metric)
            if math.isnan(value):
                continue
            if best is None or value > best.stats.metric(metric):
                best = row
        return best


def _unit_policies(config: BacktestConfig, cells):
    return [ThresholdPolicy(S, s, 1.0, config.sided) for S, s in cells]


def _chunk_growth(config: BacktestConfig, policies, start: int, count: int) -> np.ndarray:
    """Growth rates (u_T - u_0) / T, shape (len(policies), count)."""
    paths = simulate_batch(config.ou, config.path_grid(start), count, stationary=True)
    out = np.empty((len(policies), count))
    for j, policy in enumerate(policies):
        increments, _ = wealth_increments(paths, policy, config.cost)
        out[j] = [math.fsum(row) / config.length for row in increments]
    return out


def _growth_table(config: BacktestConfig, cells, threads: int) -> np.ndarray:
    policies = _unit_policies(config, cells)
    chunks = list(config.chunks())
    parts = parallel_map(lambda c: _chunk_growth(config, policies, *c), chunks, threads)
    return np.concatenate(parts, axis=1)


def run_strategy(config: BacktestConfig, policy: ThresholdPolicy, threads: int = 1) -> ReturnStats:
    """Statistics of one strategy. Computed at unit leverage and scaled by L afterwards."""
    if policy.sided != config.sided:
        raise ConfigError(f"policy is {policy.sided}-sided but the experiment is {config.sided}-sided")
    growth = _growth_table(config, [(policy.open_threshold, policy.close_threshold)], threads)[0]
    stats = aggregate(growth, config.length)
    return stats if policy.leverage == 1.0 else stats.scaled(policy.leverage)


def grid_search(config: BacktestConfig, grid: StrategyGrid, threads: int = 1) -> GridResult:
    cells = grid.cells()
    logger.info(f"backtest grid: {len(cells)} strategies x {config.n_realizations} realizations "
                f"x {config.horizon} datapoints")
    table = _growth_table(config, cells, threads)
    rows = tuple(GridRow(S, s, aggregate(table[i], config.length)) for i, (S, s) in enumerate(cells))
    result = GridResult(rows)
    for metric in ("mean", "sharpe"):
        best = result.argmax(metric)
        if best is not None:
            logger.info(f"argmax {metric} at S={best.S:.4g} s={best.s:.4g} ({best.stats.metric(metric):.6g})")
    return result


def emit_contours(result: GridResult, metric: str) -> pd.DataFrame:
    """Long table (S, S - s, value) in percent, the axes of the contour figures."""
    if not result.rows:
        raise ValidationError("cannot emit contours of an empty result")
    if metric not in METRICS:
        raise ValidationError(f"metric must be one of {METRICS}, got '{metric}'")
    records = [[round(100.0 * r.S, 12), round(100.0 * (r.S - r.s), 12), r.stats.metric(metric)]
               for r in result.rows]
    return pd.DataFrame(records, columns=CONTOUR_COLUMNS)


def write_table(frame: pd.DataFrame, path, fmt: str = "csv", digits: int = 6):
    """CSV with %.<digits>g and empty missing cells, or newline-delimited JSON with null."""
    try:
        if fmt == "csv":
            frame.to_csv(path, index=False, float_format=f"%.{digits}g", na_rep="", lineterminator="\n")
        elif fmt == "json":
            frame.to_json(path, orient="records", lines=True, double_precision=15)
        else:
            raise ValidationError(f"format must be 'csv' or 'json', got '{fmt}'")
    except OSError as e:
        raise OutputError(f"cannot write '{path}': {e}")
    return path


def read_contours(path) -> pd.DataFrame:
    """Re-ingest a table written by ``write_table``."""
    if not os.path.exists(path):
        raise OutputError(f"no such file '{path}'")
    if str(path).endswith((".json", ".jsonl")):
        frame = pd.read_json(path, orient="records", lines=True)
    else:
        frame = pd.read_csv(path)
    return frame.astype({"value": "float64"}) if "value" in frame else frame
