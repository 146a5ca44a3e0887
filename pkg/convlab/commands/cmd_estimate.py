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

from .common import CommandOutput, FORMAT_INPUT, OUT_INPUT
from ..estimation import read_price_csv, mispricing, ar1_ols, summary_stats
from ..utils import DomainError, DegenerateSeriesError

logger = logging.getLogger("ConvLab.EstimateCmd")


class ConvLabEstimate:
    """
    Reads a date,price,nav file, forms the mispricing x = ln(price/nav), fits the
    no-intercept AR(1) and reports the implied daily OU parameters.
    """

    @classmethod
    def INPUT_TYPES(s):
        return {
            "required": {
                "input": ("PATH", {"default": None, "required": True, "help": "CSV with header date,price,nav"}),
            },
            "optional": {
                "intercept": ("BOOLEAN", {"default": False, "help": "add an intercept (diagnostics only)"}),
                "format": FORMAT_INPUT,
                "out": OUT_INPUT,
            },
        }

    RETURN_TYPES = ("REPORT",)
    RETURN_NAMES = ("report",)
    FUNCTION = "cmd_estimate"
    CATEGORY = "ConvLab/Estimation"

    def cmd_estimate(self, input, intercept=False, format="csv", out=None):
        series = mispricing(read_price_csv(input))
        output = CommandOutput()
        stats = summary_stats(series)
        output.summary.update({"n": stats.n, "mean": stats.mean, "std": stats.std,
                               "min": stats.min, "max": stats.max})
        try:
            fit = ar1_ols(series, intercept=intercept)
        except DegenerateSeriesError as e:
            # the summary is still reported before the failure
            e.partial = output
            raise
        output.summary.update({"beta_hat": fit.beta_hat, "sigma_hat": fit.sigma_hat,
                               "beta_stderr": fit.beta_stderr, "durbin_watson": fit.durbin_watson,
                               "n_obs": fit.n_obs})
        if intercept:
            output.summary["intercept"] = fit.intercept
        try:
            ou = fit.to_ou(1.0)
            output.summary.update({"alpha": ou.alpha, "sigma": ou.sigma})
        except DomainError as e:
            logger.warning(f"no implied OU process: {e}")
            output.summary["note"] = f"beta_hat={fit.beta_hat:.6g} is outside (0, 1); no implied OU process"
        return (output,)
