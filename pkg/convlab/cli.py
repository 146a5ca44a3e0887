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
Command-line front end. Sub-commands and their options are generated from the
``INPUT_TYPES`` schema of each registered command class.

Exit codes: 0 success, 2 validation, 3 numerical tolerance, 4 IO.
"""

import os
import csv
import sys
import json
import math
import logging
import argparse
import datetime
from dataclasses import dataclass, asdict

from . import __version__, COMMAND_CLASS_MAPPINGS, COMMAND_DISPLAY_NAME_MAPPINGS
from .backtest import write_table
from .utils import (ConvLabError, ConfigError, OutputError, EXIT_OK, EXIT_IO, EXIT_VALIDATION,
                    resolve_seed, prepare_output_dir, format_float)

logger = logging.getLogger("ConvLab.CLI")

SCALAR_TYPES = {"FLOAT": float, "INT": int, "STRING": str, "PATH": str}
LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]
MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class RunManifest:
    command: str
    params: dict
    master_seed: int
    version: str
    timestamp: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def load(cls, path) -> "RunManifest":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except OSError as e:
            raise OutputError(f"cannot read manifest '{path}': {e}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"manifest '{path}' is not valid JSON: {e}")
        missing = {"command", "params"} - set(data)
        if missing:
            raise ConfigError(f"manifest '{path}' lacks {sorted(missing)}")
        if data["command"] not in COMMAND_CLASS_MAPPINGS:
            raise ConfigError(f"manifest '{path}' names unknown command '{data['command']}'")
        return cls(data["command"], data["params"], data.get("master_seed", 0),
                   data.get("version", ""), data.get("timestamp", ""))


def _iter_inputs(cls):
    schema = cls.INPUT_TYPES()
    for section in ("required", "optional"):
        for name, spec in schema.get(section, {}).items():
            yield name, spec[0], (spec[1] if len(spec) > 1 else {})


def _add_option(parser, name, kind, opts):
    flag = opts.get("flag", "--" + name.replace("_", "-"))
    kwargs = {"dest": name, "default": opts.get("default"), "help": opts.get("help")}
    if isinstance(kind, list):
        kwargs["choices"] = kind
    elif kind == "BOOLEAN":
        kwargs["action"] = "store_true"
    elif kind == "FLOAT_LIST":
        kwargs.update(type=float, nargs="+")
    elif kind == "STRING_LIST":
        kwargs.update(type=str, nargs="*")
    elif kind in SCALAR_TYPES:
        kwargs["type"] = SCALAR_TYPES[kind]
    else:
        raise ConfigError(f"unsupported input type {kind!r} for '{name}'")
    if opts.get("required"):
        kwargs["required"] = True
    parser.add_argument(flag, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="convlab", allow_abbrev=False,
                                     description="Convergence-trading analytics, simulation and backtests.")
    parser.add_argument("--version", action="version", version=f"convlab {__version__}")
    parser.add_argument("--log-level", choices=LOG_LEVELS, default="WARNING")
    parser.add_argument("--manifest", default=None, help="replay the run recorded in a manifest.json")
    parser.add_argument("--replay-out", default=None, help="output directory for a replayed run")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name, cls in COMMAND_CLASS_MAPPINGS.items():
        cmd = sub.add_parser(name, help=COMMAND_DISPLAY_NAME_MAPPINGS.get(name), allow_abbrev=False)
        for key, kind, opts in _iter_inputs(cls):
            _add_option(cmd, key, kind, opts)
    return parser


def validate_params(cls, params: dict):
    """Apply the min/max bounds declared in INPUT_TYPES."""
    for name, kind, opts in _iter_inputs(cls):
        value = params.get(name)
        if value is None or isinstance(kind, list) or kind in ("BOOLEAN", "STRING", "PATH", "STRING_LIST"):
            continue
        for v in (value if isinstance(value, (list, tuple)) else [value]):
            if isinstance(v, float) and not math.isfinite(v):
                raise ConfigError(f"--{name} must be finite, got {v}")
            lo, hi = opts.get("min"), opts.get("max")
            if lo is not None and (v < lo or (opts.get("exclusive_min") and v == lo)):
                raise ConfigError(f"--{name} must be {'>' if opts.get('exclusive_min') else '>='} {lo}, got {v}")
            if hi is not None and (v > hi or (opts.get("exclusive_max") and v == hi)):
                raise ConfigError(f"--{name} must be {'<' if opts.get('exclusive_max') else '<='} {hi}, got {v}")


def _json_value(value):
    if hasattr(value, "item"):
        value = value.item()
    # NaN and infinities have no JSON literal
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def render(output, fmt: str, out_dir, stream):
    """Write tables to ``out_dir`` (or ``stream``) and the summary to ``stream``."""
    if out_dir:
        for name, frame in output.tables.items():
            ext = "csv" if fmt == "csv" else "jsonl"
            write_table(frame, os.path.join(out_dir, f"{name}.{ext}"), fmt, output.digits[name])
    else:
        for name, frame in output.tables.items():
            if name in output.file_only:
                continue
            if fmt == "csv":
                stream.write(f"# {name}\n")
                frame.to_csv(stream, index=False, float_format=f"%.{output.digits[name]}g",
                             na_rep="", lineterminator="\n")
            else:
                for record in frame.to_dict(orient="records"):
                    record = {k: _json_value(v) for k, v in record.items()}
                    stream.write(json.dumps({"table": name, **record}) + "\n")
    if fmt == "csv":
        stream.write("# summary\n")
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["key", "value"])
        for key, value in output.summary.items():
            text = format_float(value, 12) if isinstance(value, float) else ("" if value is None else str(value))
            writer.writerow([key, text])
    else:
        stream.write(json.dumps({"table": "summary", **{k: _json_value(v) for k, v in output.summary.items()}}) + "\n")


def write_manifest(manifest: RunManifest, out_dir):
    """manifest.json in ``out_dir``, or one JSON line on stderr without one."""
    if not out_dir:
        sys.stderr.write(manifest.to_json() + "\n")
        return
    try:
        with open(os.path.join(out_dir, MANIFEST_NAME), "w", encoding="utf-8") as f:
            f.write(manifest.to_json() + "\n")
    except OSError as e:
        raise OutputError(f"cannot write manifest in '{out_dir}': {e}")


def run_command(command: str, params: dict, stream=None):
    """Validate, execute and render one command. Returns the manifest."""
    stream = stream or sys.stdout
    cls = COMMAND_CLASS_MAPPINGS[command]
    params = dict(params)
    if any(name == "seed" for name, _, _ in _iter_inputs(cls)):
        params["seed"] = resolve_seed(params.get("seed"))
    validate_params(cls, params)
    out_dir = prepare_output_dir(params["out"]) if params.get("out") else None
    manifest = RunManifest(command, params, params.get("seed", 0) or 0, __version__,
                           datetime.datetime.now(datetime.timezone.utc).isoformat())

    instance = cls()
    try:
        (output,) = getattr(instance, cls.FUNCTION)(**params)
    except ConvLabError as e:
        partial = getattr(e, "partial", None)
        if partial is not None:
            render(partial, params.get("format", "csv"), out_dir, stream)
        # failed runs get a manifest too
        write_manifest(manifest, out_dir)
        raise
    render(output, params.get("format", "csv"), out_dir, stream)
    write_manifest(manifest, out_dir)
    return manifest


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.manifest:
            manifest = RunManifest.load(args.manifest)
            params = dict(manifest.params)
            if args.replay_out is not None:
                params["out"] = args.replay_out
            run_command(manifest.command, params)
        elif args.command:
            params = {k: v for k, v in vars(args).items()
                      if k not in ("command", "log_level", "manifest", "replay_out")}
            run_command(args.command, params)
        else:
            parser.print_help(sys.stderr)
            return EXIT_VALIDATION
    except ConvLabError as e:
        logger.error(f"{e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"{e}")
        return EXIT_IO
    return EXIT_OK
