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

__version__ = "1.0.0"

from .commands import (ConvLabAnalyze, ConvLabSimulate, ConvLabBacktest,
                       ConvLabEstimate, ConvLabVerifyAppendix)

# Maps CLI sub-command names to the command implementation.
COMMAND_CLASS_MAPPINGS = {
    "analyze": ConvLabAnalyze,
    "simulate": ConvLabSimulate,
    "backtest": ConvLabBacktest,
    "estimate": ConvLabEstimate,
    "verify-appendix": ConvLabVerifyAppendix,
}

# Maps sub-command names to the help text shown by `convlab --help`.
COMMAND_DISPLAY_NAME_MAPPINGS = {
    "analyze": "Optimal threshold leverage and utility tables",
    "simulate": "Simulate a mispricing path and trade it",
    "backtest": "Monte-Carlo threshold grid backtest",
    "estimate": "Fit AR(1) to a price/NAV series",
    "verify-appendix": "Run the Hermite and delta-moment oracle suite",
}

__all__ = ["COMMAND_CLASS_MAPPINGS", "COMMAND_DISPLAY_NAME_MAPPINGS", "__version__"]
