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

"""Price/NAV ingestion, the mispricing factor and its AR(1) fit."""

import os
import math
import logging
import datetime
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
import statsmodels.api as sm
from statsmodels.stats.stattools import durbin_watson as sm_durbin_watson

from .process import Ar1Params, OUParams, ar1_to_ou
from .utils import ValidationError, IngestionError, DegenerateSeriesError, OutputError

logger = logging.getLogger("ConvLab.Estimation")

PRICE_COLUMNS = ["date", "price", "nav"]


@dataclass(frozen=True, eq=False)
class PriceSeries:
    dates: tuple
    price: np.ndarray
    nav: np.ndarray

    def __post_init__(self):
        dates = tuple(self.dates)
        price = np.array(self.price, dtype=np.float64)
        nav = np.array(self.nav, dtype=np.float64)
        if not (len(dates) == price.size == nav.size):
            raise ValidationError("dates, price and nav must have equal lengths")
        problems = []
        for i in range(len(dates)):
            if i > 0 and not dates[i] > dates[i - 1]:
                problems.append((i + 1, f"date {dates[i]} does not follow {dates[i - 1]}"))
            problems.extend(_positivity_problems(i + 1, price[i], nav[i]))
        if problems:
            raise IngestionError(problems)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "price", price)
        object.__setattr__(self, "nav", nav)

    def __len__(self):
        return len(self.dates)


def _positivity_problems(row, price, nav):
    problems = []
    if not (math.isfinite(price) and price > 0):
        problems.append((row, f"price must be positive, got {price}"))
    if not (math.isfinite(nav) and nav > 0):
        problems.append((row, f"nav must be positive, got {nav}"))
    return problems


@dataclass(frozen=True, eq=False)
class MispricingSeries:
    dates: tuple
    x: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64)
        if len(self.dates) != x.size:
            raise ValidationError("dates and x must have equal lengths")
        if not np.all(np.isfinite(x)):
            raise ValidationError("mispricing contains non-finite values")
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "x", x)

    @classmethod
    def from_values(cls, x) -> "MispricingSeries":
        """Series indexed by consecutive integers, for simulated data."""
        x = np.asarray(x, dtype=np.float64)
        return cls(tuple(range(x.size)), x)


@dataclass(frozen=True, eq=False)
class Ar1Fit:
    beta_hat: float
    sigma_hat: float
    beta_stderr: float
    durbin_watson: float
    n_obs: int
    residuals: np.ndarray
    intercept: Optional[float] = None

    def to_ar1(self) -> Ar1Params:
        return Ar1Params(self.beta_hat, self.sigma_hat)

    def to_ou(self, dt: float = 1.0) -> OUParams:
        """Implied OU process; refuses fits outside 0 < beta < 1."""
        return ar1_to_ou(self.to_ar1(), dt)


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    std: float
    min: float
    max: float
    n: int


def read_price_csv(path) -> PriceSeries:
    """Read ``date,price,nav`` rows. Every failing row is reported with its line number."""
    if not os.path.exists(path):
        raise OutputError(f"no such input file '{path}'")
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise IngestionError([(1, f"unreadable CSV: {e}")], path)
    if list(raw.columns) != PRICE_COLUMNS:
        raise IngestionError([(1, f"header must be {','.join(PRICE_COLUMNS)}, got {','.join(raw.columns)}")], path)

    problems, dates, prices, navs = [], [], [], []
    for i, (d, p, n) in enumerate(raw.itertuples(index=False, name=None)):
        line = i + 2
        try:
            day = datetime.date.fromisoformat(d.strip())
        except ValueError:
            problems.append((line, f"bad ISO-8601 date '{d}'"))
            continue
        try:
            price, nav = float(p), float(n)
        except ValueError:
            problems.append((line, f"bad number in '{p}','{n}'"))
            continue
        problems.extend(_positivity_problems(line, price, nav))
        if dates and not day > dates[-1][1]:
            problems.append((line, f"date {day} does not follow {dates[-1][1]}"))
        dates.append((line, day))
        prices.append(price)
        navs.append(nav)
    if problems:
        raise IngestionError(problems, path)
    logger.info(f"read {len(dates)} rows from {path}")
    return PriceSeries(tuple(day for _, day in dates), prices, navs)


def mispricing(series: PriceSeries) -> MispricingSeries:
    """x_t = ln(price_t / nav_t)."""
    problems = []
    for i in range(len(series)):
        problems.extend(_positivity_problems(i + 1, series.price[i], series.nav[i]))
    if problems:
        raise IngestionError(problems)
    return MispricingSeries(series.dates, np.log(series.price / series.nav))


def ar1_ols(series: MispricingSeries, intercept: bool = False) -> Ar1Fit:
    """Least-squares fit of x_t = beta x_{t-1} + sigma eps_t.

    Consecutive observations are paired regardless of calendar gaps.
    """
    x = series.x
    if x.size < 3:
        raise ValidationError(f"AR(1) fit needs at least 3 observations, got {x.size}")
    lagged, current = x[:-1], x[1:]
    if np.dot(lagged, lagged) == 0.0:
        raise DegenerateSeriesError("lagged series is identically zero; beta is undefined")
    exog = sm.add_constant(lagged, has_constant="add") if intercept else lagged
    fit = sm.OLS(current, exog).fit()
    beta = float(fit.params[-1])
    sigma = math.sqrt(float(fit.ssr) / float(fit.df_resid)) if fit.df_resid > 0 else 0.0
    resid = np.asarray(fit.resid, dtype=np.float64)
    dw = durbin_watson(resid) if np.any(resid != 0) else math.nan
    if not (0.0 < beta < 1.0):
        logger.warning(f"fitted beta {beta:.4g} lies outside (0, 1); no OU process corresponds to it")
    return Ar1Fit(
        beta_hat=beta,
        sigma_hat=sigma,
        beta_stderr=float(fit.bse[-1]) if sigma > 0 else 0.0,
        durbin_watson=dw,
        n_obs=int(x.size),
        residuals=resid,
        intercept=float(fit.params[0]) if intercept else None,
    )


def durbin_watson(residuals) -> float:
    e = np.asarray(residuals, dtype=np.float64)
    if e.size < 2:
        raise ValidationError("Durbin-Watson needs at least 2 residuals")
    if not np.any(e != 0):
        raise DegenerateSeriesError("Durbin-Watson is undefined for all-zero residuals")
    return float(sm_durbin_watson(e))


def summary_stats(series: MispricingSeries) -> SummaryStats:
    x = series.x
    if x.size == 0:
        raise ValidationError("summary of an empty series")
    std = float(np.std(x, ddof=1)) if x.size > 1 else math.nan
    return SummaryStats(float(np.mean(x)), std, float(np.min(x)), float(np.max(x)), int(x.size))
