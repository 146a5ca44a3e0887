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

from .common import CommandOutput, FORMAT_INPUT, OUT_INPUT, SEED_INPUT, THREADS_INPUT
from ..appendix_oracles import run_checks, NORMALIZATIONS
from ..utils import ConfigError, ToleranceFailure

logger = logging.getLogger("ConvLab.VerifyCmd")


def parse_tolerances(items):
    """['name=value', ...] -> {name: float}."""
    tolerances = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"tolerance override '{item}' is not NAME=VALUE")
        try:
            tolerances[name.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"tolerance override '{item}' has a non-numeric value")
    return tolerances


class ConvLabVerifyAppendix:
    """Runs the Hermite, delta-moment and variance-growth oracle suite."""

    @classmethod
    def INPUT_TYPES(s):
        return {
            "required": {
                "seed": SEED_INPUT,
            },
            "optional": {
                "tol": ("STRING_LIST", {"default": [], "help": "tolerance overrides NAME=VALUE"}),
                "hermite_normalization": (list(NORMALIZATIONS), {"default": "orthonormal"}),
                "quick": ("BOOLEAN", {"default": False, "help": "skip the Monte-Carlo checks"}),
                "threads": THREADS_INPUT,
                "format": FORMAT_INPUT,
                "out": OUT_INPUT,
            },
        }

    RETURN_TYPES = ("REPORT",)
    RETURN_NAMES = ("report",)
    FUNCTION = "cmd_verify_appendix"
    CATEGORY = "ConvLab/Verification"

    def cmd_verify_appendix(self, seed=0, tol=(), hermite_normalization="orthonormal",
                            quick=False, threads=1, format="csv", out=None):
        results = run_checks(seed, parse_tolerances(tol), hermite_normalization, threads, quick)
        output = CommandOutput()
        output.add_table("checks", pd.DataFrame(
            [{"name": r.name, "achieved": r.achieved, "required": r.required, "passed": r.passed}
             for r in results]), digits=6)
        failed = [r.name for r in results if not r.passed]
        output.summary.update({"checks": len(results), "failed": len(failed)})
        if failed:
            error = ToleranceFailure(f"{len(failed)} check(s) failed: {', '.join(failed)}")
            error.partial = output
            raise error
        return (output,)
