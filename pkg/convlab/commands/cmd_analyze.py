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

import logging

import pandas as pd

from .common import CommandOutput, FORMAT_INPUT, OUT_INPUT
from ..analytics import (RiskPreference, utility_table, optimal_threshold_policy,
                         linear_policy_rates, threshold_rates)
from ..process import OUParams, stationary_variance

logger = logging.getLogger("ConvLab.Analyze")


class ConvLabAnalyze:
    """
    Tabulates the optimal leverage L(S) and the reduced utility U(S) of threshold
    policies over a list of thresholds, plus the overall optimum (S = 0) and the
    rates of the linear policy f(x) = -k x for comparison.
    """

    @classmethod
    def INPUT_TYPES(s):
        return {
            "required": {
                "alpha": ("FLOAT", {"default": 0.5, "min": 0.0, "exclusive_min": True,
                                    "help": "mean-reversion rate per unit time"}),
                "sigma": ("FLOAT", {"default": 0.01, "min": 0.0, "exclusive_min": True,
                                    "help": "diffusion volatility"}),
                "gamma": ("FLOAT", {"default": 1.0, "min": 0.0, "help": "risk aversion (0 = Kelly)"}),
                # Thresholds in log-price units; 0 always gives the optimum.
                "S": ("FLOAT_LIST", {"default": [0.0], "min": 0.0, "flag": "--S", "help": "thresholds"}),
            },
            "optional": {
                "k": ("FLOAT", {"default": 20.0, "min": 0.0, "help": "linear-policy sensitivity"}),
                "format": FORMAT_INPUT,
                "out": OUT_INPUT,
            },
        }

    RETURN_TYPES = ("REPORT",)
    RETURN_NAMES = ("report",)
    FUNCTION = "cmd_analyze"
    CATEGORY = "ConvLab/Analytics"

    def cmd_analyze(self, alpha, sigma, gamma, S, k=20.0, format="csv", out=None):
        p = OUParams(alpha, sigma)
        pref = RiskPreference(gamma)
        output = CommandOutput()

        output.add_table("curve", pd.DataFrame(utility_table(S, p, pref),
                                               columns=["S", "phi", "psi", "L", "U"]))
        output.summary["Sigma"] = stationary_variance(p)
        if gamma > 0:
            best = optimal_threshold_policy(p, pref)
            rates = threshold_rates(best.L, best.S, p, pref)
            output.summary.update({"optimum_S": best.S, "optimum_L": best.L, "optimum_U": best.U,
                                   "optimum_c1": rates.c1, "optimum_c2": rates.c2})
        else:
            logger.warning("gamma = 0: threshold-policy leverage is unbounded for a Kelly investor")
            output.summary["note"] = ("gamma=0: utility is linear in L for threshold policies, "
                                      "so L(S) and U(S) are unbounded; linear-policy rates follow")

        lin = linear_policy_rates(k, p)
        output.summary.update({"linear_k": k, "linear_growth": lin.growth,
                               "linear_variance_rate": lin.variance_rate,
                               "linear_long_run_variance": lin.long_run_variance})
        return (output,)
