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

from .common import CommandOutput, FORMAT_INPUT, OUT_INPUT, SEED_INPUT, SIDED_INPUT, THREADS_INPUT
from ..backtest import (BacktestConfig, StrategyGrid, GridResult, GridRow, METRICS, GRID_STEP,
                        grid_search, emit_contours)
from ..process import Ar1Params

logger = logging.getLogger("ConvLab.BacktestCmd")


class ConvLabBacktest:
    """
    Runs every (S, s) threshold strategy of a grid on the same seeded AR(1)
    realizations and writes the grid statistics and the contour tables.
    """

    @classmethod
    def INPUT_TYPES(s):
        return {
            "required": {
                "beta": ("FLOAT", {"default": 0.3, "min": 0.0, "max": 1.0,
                                   "exclusive_min": True, "exclusive_max": True}),
                "sigma_d": ("FLOAT", {"default": 0.01, "min": 0.0, "exclusive_min": True}),
                "cost": ("FLOAT", {"default": 0.0025, "min": 0.0, "help": "round-trip cost"}),
                "realizations": ("INT", {"default": 100, "min": 1}),
                "horizon": ("INT", {"default": 1250, "min": 2, "help": "datapoints per realization"}),
            },
            "optional": {
                "seed": SEED_INPUT,
                "sided": SIDED_INPUT,
                "substeps": ("INT", {"default": 1, "min": 1}),
                "L": ("FLOAT", {"default": 1.0, "min": 0.0, "exclusive_min": True, "flag": "--L"}),
                "S_min": ("FLOAT", {"default": 0.005, "min": 0.0, "flag": "--S-min"}),
                "S_max": ("FLOAT", {"default": 0.02, "min": 0.0, "flag": "--S-max"}),
                "S_step": ("FLOAT", {"default": GRID_STEP, "min": 0.0, "exclusive_min": True, "flag": "--S-step"}),
                "s_step": ("FLOAT", {"default": GRID_STEP, "min": 0.0, "exclusive_min": True, "flag": "--s-step"}),
                "metric": (list(METRICS) + ["all"], {"default": "all"}),
                "threads": THREADS_INPUT,
                "format": FORMAT_INPUT,
                "out": OUT_INPUT,
            },
        }

    RETURN_TYPES = ("REPORT",)
    RETURN_NAMES = ("report",)
    FUNCTION = "cmd_backtest"
    CATEGORY = "ConvLab/Backtest"

    def cmd_backtest(self, beta, sigma_d, cost, realizations, horizon, seed=0, sided="two", substeps=1,
                     L=1.0, S_min=0.005, S_max=0.02, S_step=GRID_STEP, s_step=GRID_STEP,
                     metric="all", threads=1, format="csv", out=None):
        config = BacktestConfig(Ar1Params(beta, sigma_d), realizations, horizon, cost, seed, sided, substeps)
        grid = StrategyGrid.from_ranges(S_min, S_max, S_step, s_step)
        result = grid_search(config, grid, threads)
        if L != 1.0:
            result = GridResult(tuple(GridRow(r.S, r.s, r.stats.scaled(L)) for r in result.rows))

        output = CommandOutput()
        output.add_table("grid", result.to_frame(), digits=12, file_only=True)
        for name in (METRICS if metric == "all" else (metric,)):
            output.add_table(f"contour_{name}", emit_contours(result, name), digits=6)

        output.summary["cells"] = len(result.rows)
        for name in ("mean", "sharpe"):
            best = result.argmax(name)
            if best is None:
                output.summary[f"argmax_{name}"] = None
                continue
            output.summary.update({f"argmax_{name}_S": best.S, f"argmax_{name}_s": best.s,
                                   f"argmax_{name}_value": best.stats.metric(name)})
        return (output,)
