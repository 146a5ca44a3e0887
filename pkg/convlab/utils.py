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

"""Shared utilities for ConvLab modules."""

import os
import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger("ConvLab")

SEED_ENV_VAR = "CONVLAB_SEED"

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


# --- Error hierarchy ---

class ConvLabError(Exception):
    """Base class for every error raised by the library."""
    exit_code = 1


class ValidationError(ConvLabError, ValueError):
    exit_code = EXIT_VALIDATION


class DomainError(ValidationError):
    """A parameter lies outside the mathematical domain of an operation."""


class ConfigError(ValidationError):
    pass


class UnsupportedPolicyError(ValidationError):
    pass


class DegenerateSeriesError(ValidationError):
    pass


class IngestionError(ValidationError):
    """Input rows failed validation. ``problems`` holds (line_number, message) pairs."""

    def __init__(self, problems, path=None):
        self.problems = list(problems)
        self.path = path
        where = f"{path}: " if path else ""
        details = "; ".join(f"line {line}: {msg}" for line, msg in self.problems)
        super().__init__(f"{where}{details}")


class NumericalError(ConvLabError, ArithmeticError):
    exit_code = EXIT_NUMERICAL


class QuadratureError(NumericalError):
    def __init__(self, message, achieved=None):
        self.achieved = achieved
        if achieved is not None:
            message = f"{message} (achieved abs error {achieved:.3g})"
        super().__init__(message)


class UnboundedLeverageError(NumericalError):
    pass


class ToleranceFailure(NumericalError):
    pass


class OutputError(ConvLabError, OSError):
    exit_code = EXIT_IO


# --- Seeding ---

def stream_generator(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream).

    Stream ``i`` always yields the same numbers regardless of which thread
    asks for it or in which order streams are requested.
    """
    if seed < 0 or stream < 0:
        raise ValidationError(f"seed and stream must be non-negative, got seed={seed}, stream={stream}")
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(sequence))


def resolve_seed(seed=None) -> int:
    """Explicit seed, else $CONVLAB_SEED, else 0."""
    if seed is not None:
        return int(seed)
    env_value = os.environ.get(SEED_ENV_VAR)
    if env_value is None or env_value.strip() == "":
        return 0
    try:
        value = int(env_value)
    except ValueError:
        raise ConfigError(f"{SEED_ENV_VAR}='{env_value}' is not an integer")
    if value < 0:
        raise ConfigError(f"{SEED_ENV_VAR} must be non-negative, got {value}")
    return value


# --- Monte-Carlo error bars ---

@dataclass(frozen=True)
class McEstimate:
    value: float
    stderr: float

    def z_score(self, target: float) -> float:
        if self.stderr == 0:
            return 0.0 if self.value == target else math.inf
        return (self.value - target) / self.stderr


def batch_means(values, n_batches: int = 20) -> McEstimate:
    """Mean of a serially dependent series with a batch-means standard error.

    The tail that does not fill a whole batch is dropped from the error
    estimate but kept in the mean.
    """
    data = np.asarray(values, dtype=np.float64).ravel()
    if data.size < 2 * n_batches:
        raise ValidationError(f"batch means needs at least {2 * n_batches} values, got {data.size}")
    batch_len = data.size // n_batches
    batches = data[: batch_len * n_batches].reshape(n_batches, batch_len).mean(axis=1)
    stderr = float(np.std(batches, ddof=1) / math.sqrt(n_batches))
    return McEstimate(float(np.mean(data)), stderr)


# --- Execution ---

def parallel_map(func, items, threads: int = 1):
    """Ordered map, optionally on a thread pool. Output order always follows ``items``."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(func, items))


# --- Output helpers ---

def prepare_output_dir(path):
    """Create ``path`` if needed. Wraps filesystem failures in OutputError naming the path."""
    abs_path = os.path.abspath(os.path.expanduser(str(path)))
    try:
        os.makedirs(abs_path, exist_ok=True)
    except OSError as e:
        raise OutputError(f"cannot create output directory '{abs_path}': {e}")
    if not os.access(abs_path, os.W_OK):
        raise OutputError(f"output directory '{abs_path}' is not writable")
    return abs_path


def format_float(value, digits: int = 17) -> str:
    """Locale-independent formatting; NaN becomes an empty field."""
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return ""
    return f"{value:.{digits}g}"
