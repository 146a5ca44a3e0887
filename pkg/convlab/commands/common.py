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

"""Shared pieces of the command classes: the output bundle and common input specs."""

from dataclasses import dataclass, field

import pandas as pd

# Input specs reused by several commands, in INPUT_TYPES form.
FORMAT_INPUT = (["csv", "json"], {"default": "csv", "flag": "--format", "help": "output format"})
OUT_INPUT = ("PATH", {"default": None, "help": "output directory"})
SEED_INPUT = ("INT", {"default": None, "min": 0, "help": "master seed (falls back to $CONVLAB_SEED, then 0)"})
THREADS_INPUT = ("INT", {"default": 1, "min": 1, "help": "worker threads; results do not depend on it"})
SIDED_INPUT = (["two", "one"], {"default": "two", "help": "symmetric or short-only threshold trading"})


@dataclass
class CommandOutput:
    """Named tables plus a flat summary. ``digits`` sets the CSV precision per table."""
    tables: dict = field(default_factory=dict)
    digits: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    # tables that are only ever written to files, never to stdout
    file_only: set = field(default_factory=set)

    def add_table(self, name: str, frame: pd.DataFrame, digits: int = 12, file_only: bool = False):
        self.tables[name] = frame
        self.digits[name] = digits
        if file_only:
            self.file_only.add(name)
        return frame
