"""Device-data CSV files, experiment configs and JSON report helpers."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .model import DeviceData, TestPlan, WeibullTruth
from .simulation import (
    DEFAULT_SEED,
    Contamination,
    SimDesign,
    balanced_design,
    unbalanced_design,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

TIME_COLUMN = "inspection_time"
COUNT_COLUMNS = ("tested", "failures")


@dataclass(frozen=True, eq=False)
class DeviceTable:
    """Parsed device data together with the stress column names."""

    data: DeviceData
    factor_names: tuple


def _number(text, line, column):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"column {column!r}: {text!r} is not a number", line) from None
    if not math.isfinite(value):
        raise ParseError(f"column {column!r}: value must be finite", line)
    return value


def _count(text, line, column):
    value = _number(text, line, column)
    if value != int(value) or value < 0:
        raise ParseError(f"column {column!r}: {text!r} is not a nonnegative integer", line)
    return int(value)


def read_device_table(source):
    """Parse one-shot device data from a path or open text stream.

    The header is ``inspection_time, <stress columns...>, tested, failures``
    with one row per (time, condition) cell.  Conditions are numbered in
    order of first appearance; cells absent from the file get zero devices.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise ValidationError(f"cannot read {source}: {exc.strerror}") from None
    rows = list(csv.reader(io.StringIO(text)))
    while rows and not any(cell.strip() for cell in rows[-1]):
        rows.pop()
    if not rows:
        raise ParseError("file is empty", 1)
    header = [h.strip() for h in rows[0]]
    if len(header) < 4 or header[0] != TIME_COLUMN or tuple(header[-2:]) != COUNT_COLUMNS:
        raise ParseError(
            f"header must be '{TIME_COLUMN}, <stress columns>, tested, failures', got {','.join(header)!r}", 1
        )
    names = tuple(header[1:-2])
    if len(set(names)) != len(names):
        raise ParseError("duplicate stress column names", 1)
    cells = {}
    times, stresses = [], []
    for line, row in enumerate(rows[1:], start=2):
        if not any(cell.strip() for cell in row):
            raise ParseError("blank line inside data", line)
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
        t = _number(row[0], line, header[0])
        x = tuple(_number(v, line, c) for v, c in zip(row[1:-2], names))
        k = _count(row[-2], line, "tested")
        n = _count(row[-1], line, "failures")
        if n > k:
            raise ValidationError(f"line {line}: failures ({n}) exceed tested ({k})")
        if (t, x) in cells:
            raise ParseError(f"duplicate cell at inspection time {row[0]} and stress {row[1:-2]}", line)
        cells[(t, x)] = (k, n)
        if t not in times:
            times.append(t)
        if x not in stresses:
            stresses.append(x)
    if not cells:
        raise ParseError("no data rows", 2)
    times.sort()
    K = np.zeros((len(times), len(stresses)), dtype=np.int64)
    N = np.zeros_like(K)
    for (t, x), (k, n) in cells.items():
        K[times.index(t), stresses.index(x)] = k
        N[times.index(t), stresses.index(x)] = n
    plan = TestPlan(times, stresses, K)
    return DeviceTable(DeviceData(plan, N), names)


def parse_device_csv(path):
    """Validated :class:`DeviceData` from a device CSV file."""
    return read_device_table(path).data


def _plain(value):
    value = float(value)
    return str(int(value)) if value.is_integer() else repr(value)


def format_device_csv(data, factor_names=None):
    """Canonical CSV text: rows by inspection time, then condition; empty cells omitted."""
    plan = data.plan
    names = tuple(factor_names) if factor_names else tuple(f"x{j + 1}" for j in range(plan.n_factors))
    if len(names) != plan.n_factors:
        raise ValidationError("one name per stress factor is required")
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow((TIME_COLUMN, *names, *COUNT_COLUMNS))
    for i, t in enumerate(plan.inspection_times):
        for s, x in enumerate(plan.stress_levels):
            k = int(plan.group_sizes[i, s])
            if k == 0:
                continue
            w.writerow((_plain(t), *(_plain(v) for v in x), k, int(data.failures[i, s])))
    return out.getvalue()


def write_device_csv(data, path, factor_names=None):
    Path(path).write_text(format_device_csv(data, factor_names), encoding="utf-8")


def electric_current_path():
    """Path of the bundled Electric Current data file."""
    return resources.files("oneshot") / "data" / "electric_current.csv"


def electric_current():
    """The bundled Electric Current data (12 cells, 10 devices each)."""
    with resources.as_file(electric_current_path()) as p:
        return parse_device_csv(p)


def file_sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---- experiment configs -------------------------------------------------------

def _require(table, key, where):
    if key not in table:
        raise ValidationError(f"config [{where}] is missing {key!r}")
    return table[key]


def _truth(table, where):
    return WeibullTruth(
        float(_require(table, "b", where)),
        float(_require(table, "c0", where)),
        [float(v) for v in _require(table, "c", where)],
    )


def design_from_config(cfg, seed=None, replicates=None):
    """Build a :class:`SimDesign` from a parsed config mapping.

    ``[design]`` has ``kind`` = ``"balanced"``, ``"unbalanced"`` or
    ``"custom"``.  Custom designs also need ``[plan]``, ``[truth]`` and
    ``normal_condition``; cells in configs are 1-based ``[i, s]``.
    """
    d = cfg.get("design")
    if not isinstance(d, dict):
        raise ValidationError("config needs a [design] table")
    kind = d.get("kind", "balanced")
    reps = int(replicates if replicates is not None else d.get("replicates", 100))
    betas = tuple(float(b) for b in d.get("betas", [0.0]))
    seed = int(seed if seed is not None else d.get("seed", DEFAULT_SEED))
    contaminated = bool(d.get("contaminated", False))
    if kind == "balanced":
        return balanced_design(
            int(_require(d, "K_cell", "design")), float(_require(d, "b", "design")),
            float(_require(d, "c0", "design")), contaminated, reps, betas, seed,
        )
    if kind == "unbalanced":
        return unbalanced_design(
            int(_require(d, "r", "design")), contaminated, reps, betas, seed, float(d.get("c0", 6.5))
        )
    if kind == "custom":
        plan_t = cfg.get("plan") or {}
        plan = TestPlan(
            _require(plan_t, "inspection_times", "plan"),
            _require(plan_t, "stress_levels", "plan"),
            _require(plan_t, "group_sizes", "plan"),
        )
        truth = _truth(cfg.get("truth") or {}, "truth")
        contamination = None
        ct = cfg.get("contamination")
        if ct:
            i, s = (int(v) - 1 for v in _require(ct, "cell", "contamination"))
            contamination = Contamination((i, s), _truth(ct, "contamination"))
        return SimDesign(
            plan, truth, contamination, reps, betas, seed,
            normal_condition=tuple(_require(d, "normal_condition", "design")),
            report_time=float(d.get("report_time", plan.inspection_times[-1])),
            label=str(d.get("label", "custom")),
        )
    raise ValidationError(f"unknown design kind {kind!r}")


def load_config(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"invalid config {path}: {exc}") from None


# ---- JSON reports --------------------------------------------------------------

def round_sig(obj, digits=6):
    """Round every float in a nested structure to ``digits`` significant digits.

    Non-finite floats become ``None`` so the output is strict JSON.
    """
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return None
        return float(f"{v:.{digits}g}") if digits else v
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): round_sig(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_sig(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return round_sig(obj.tolist(), digits)
    return obj


def dump_report(report, raw=False):
    return json.dumps(round_sig(report, 0 if raw else 6), indent=2, allow_nan=False) + "\n"


def report_schema():
    return json.loads((resources.files("oneshot") / "schemas" / "report.schema.json").read_text())


def write_long_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("x_name", "x", "series", "quantity", "value"))
        for x_name, x, series, quantity, value in rows:
            w.writerow((x_name, _plain(x), series, quantity, "" if not math.isfinite(value) else repr(float(value))))
