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

import math
import logging

import numpy as np
import pandas as pd

from .common import CommandOutput, FORMAT_INPUT, SEED_INPUT, SIDED_INPUT
from ..analytics import discrete_linear_growth, discrete_threshold_growth
from ..policies import (LinearPolicy, DifferentiablePolicy, ThresholdPolicy,
                        wealth_path, realized_growth_stats)
from ..process import OUParams, PathGrid, simulate, stationary_variance
from ..utils import ValidationError, batch_means

logger = logging.getLogger("ConvLab.Simulate")

POLICIES = ["zero", "linear", "tanh", "threshold"]
START_DATE = "2000-01-01"


def build_policy(name, k, L, S, s, sided, scale):
    if name == "zero":
        return LinearPolicy(0.0)
    if name == "linear":
        return LinearPolicy(k)
    if name == "tanh":
        return DifferentiablePolicy.tanh(scale, L)
    if name == "threshold":
        return ThresholdPolicy(S, s if s is not None else S, L, sided)
    raise ValidationError(f"unknown policy '{name}'")


def _expected_growth(rule, p, dt, cost):
    """Stationary mean growth per unit time at this dt, where a closed form exists."""
    if cost != 0.0:
        return None
    if isinstance(rule, LinearPolicy):
        return discrete_linear_growth(rule.k, p, dt)
    if isinstance(rule, ThresholdPolicy) and rule.simple():
        return discrete_threshold_growth(rule.leverage, rule.open_threshold, p, dt, rule.sided)
    return None


class ConvLabSimulate:
    """
    Simulates one OU mispricing path, trades it with the chosen policy and writes
    the mispricing, wealth and a synthetic price/NAV file (price = nav * e^x) that
    `estimate` can read back.
    """

    @classmethod
    def INPUT_TYPES(s):
        return {
            "required": {
                "alpha": ("FLOAT", {"default": 0.5, "min": 0.0, "exclusive_min": True}),
                "sigma": ("FLOAT", {"default": 0.01, "min": 0.0, "exclusive_min": True}),
                "dt": ("FLOAT", {"default": 1.0, "min": 0.0, "exclusive_min": True}),
                "steps": ("INT", {"default": 1000, "min": 1}),
                "policy": (POLICIES, {"default": "zero"}),
                "out": ("PATH", {"default": None, "required": True, "help": "output directory"}),
            },
            "optional": {
                "k": ("FLOAT", {"default": 20.0, "min": 0.0}),
                "L": ("FLOAT", {"default": 1.0, "min": 0.0, "exclusive_min": True, "flag": "--L"}),
                "S": ("FLOAT", {"default": 0.01, "min": 0.0, "flag": "--S"}),
                "s": ("FLOAT", {"default": None, "min": 0.0, "flag": "--s",
                                "help": "close threshold (defaults to S)"}),
                "scale": ("FLOAT", {"default": None, "min": 0.0, "exclusive_min": True,
                                    "help": "tanh scale (defaults to sqrt(Sigma))"}),
                "sided": SIDED_INPUT,
                "cost": ("FLOAT", {"default": 0.0, "min": 0.0}),
                "x0": ("FLOAT", {"default": 0.0}),
                "stationary": ("BOOLEAN", {"default": False, "help": "draw x0 from N(0, Sigma)"}),
                "nav": ("FLOAT", {"default": 100.0, "min": 0.0, "exclusive_min": True}),
                "seed": SEED_INPUT,
                "format": FORMAT_INPUT,
            },
        }

    RETURN_TYPES = ("REPORT",)
    RETURN_NAMES = ("report",)
    FUNCTION = "cmd_simulate"
    CATEGORY = "ConvLab/Simulation"

    def cmd_simulate(self, alpha, sigma, dt, steps, policy, out, k=20.0, L=1.0, S=0.01, s=None,
                     scale=None, sided="two", cost=0.0, x0=0.0, stationary=False, nav=100.0,
                     seed=0, format="csv"):
        p = OUParams(alpha, sigma)
        grid = PathGrid(dt, steps, seed)
        scale = scale if scale is not None else math.sqrt(stationary_variance(p))
        rule = build_policy(policy, k, L, S, s, sided, scale)

        path = simulate(p, grid, x0=x0, stationary=stationary)
        wealth = wealth_path(path, rule, cost)
        stats = realized_growth_stats(wealth, dt)
        t = path.times()

        output = CommandOutput()
        output.add_table("mispricing", pd.DataFrame({"t": t, "x": path.values}), digits=17, file_only=True)
        output.add_table("wealth", pd.DataFrame({"t": t, "u": wealth.values}), digits=17, file_only=True)
        dates = pd.date_range(START_DATE, periods=t.size, freq="D").strftime("%Y-%m-%d")
        output.add_table("prices", pd.DataFrame({"date": dates, "price": nav * np.exp(path.values),
                                                 "nav": np.full(t.size, nav)}), digits=17, file_only=True)

        output.summary.update({"mean_growth": stats.mean_growth, "terminal": stats.terminal,
                               "increment_variance_rate": stats.increment_variance_rate,
                               "transactions": wealth.transactions, "horizon": grid.horizon})
        expected = _expected_growth(rule, p, dt, cost)
        if expected is not None:
            output.summary["expected_growth"] = expected
        if steps >= 40:
            # per-step growth with a batch-means error bar
            est = batch_means(np.diff(wealth.values) / dt)
            output.summary.update({"growth_batch_mean": est.value, "growth_stderr": est.stderr})
        logger.info(f"simulated {steps} steps, mean growth {stats.mean_growth:.6g}")
        return (output,)
