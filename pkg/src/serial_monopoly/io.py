"""Deterministic CSV/JSON output and solution round trips.

Floats are written with ``repr`` (shortest string that round-trips), CSV
files use '.' decimals, a header row and LF line endings, and JSON keys
keep insertion order. Every file is written to a temporary name in the
target directory and then renamed over the destination.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .benchmark import FirstBestAllocation, ObservableOutcome
from .equilibrium import AllocationCurve, EquilibriumCdf, EquilibriumSolution, Support
from .errors import ConfigError
from .model import MarketPrimitives, QuadraticUtility

SOLUTION_CSV = "solution.csv"
SOLUTION_JSON = "solution.json"
SOLUTION_COLUMNS = ("x", "y_hat", "F", "f", "q", "U", "log_mass")


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def csv_text(columns: dict) -> str:
    names = list(columns)
    cols = [np.asarray(columns[n]) for n in names]
    lengths = {c.shape[0] for c in cols}
    if len(lengths) > 1:
        raise ValueError(f"columns have different lengths: {sorted(lengths)}")
    from io import StringIO

    buf = StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    for row in zip(*cols):
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns: dict) -> None:
    atomic_write(path, csv_text(columns))


def write_rows(path, header, rows) -> None:
    from io import StringIO

    buf = StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    atomic_write(path, buf.getvalue())


def read_csv(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    return {name: np.array([float(r[i]) for r in rows]) for i, name in enumerate(header)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        # JSON has no infinities or NaN; keep them as strings that float() reads back
        return v if math.isfinite(v) else repr(v)
    return obj


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, ensure_ascii=True) + "\n"


def write_json(path, obj) -> None:
    atomic_write(path, json_text(obj))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def primitives_to_dict(primitives: MarketPrimitives) -> dict:
    return {"utility": primitives.utility.to_dict(), "k": primitives.k,
            "domain": {"x_max": primitives.x_max, "y_max": primitives.y_max}}


def primitives_from_dict(d: dict, path="") -> MarketPrimitives:
    util = d.get("utility")
    if not isinstance(util, dict):
        raise ConfigError(f"{path}utility: missing or not an object")
    family = util.get("family")
    if family != "quadratic":
        raise ConfigError(f"{path}utility.family: only 'quadratic' can be read from a file, got {family!r}")
    coeffs = {}
    for name in ("axx", "ayy", "axy", "bx", "by"):
        v = util.get(name)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"{path}utility.{name}: expected a finite number, got {v!r}")
        coeffs[name] = float(v)
    k = d.get("k")
    if isinstance(k, bool) or not isinstance(k, (int, float)) or not (math.isfinite(k) and k > 0):
        raise ConfigError(f"{path}k: expected a positive number, got {k!r}")
    domain = d.get("domain") or {}
    if not isinstance(domain, dict):
        raise ConfigError(f"{path}domain: expected an object")
    box = {}
    for name in ("x_max", "y_max"):
        v = domain.get(name)
        if v is None:
            box[name] = None
            continue
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not (math.isfinite(v) and v > 0):
            raise ConfigError(f"{path}domain.{name}: expected a positive number, got {v!r}")
        box[name] = float(v)
    return MarketPrimitives(QuadraticUtility(**coeffs), float(k), box["x_max"], box["y_max"])


def solution_summary(solution: EquilibriumSolution) -> dict:
    sup = solution.support
    return {
        "primitives": primitives_to_dict(solution.primitives),
        "modularity": solution.modularity,
        "support": {"x_top": sup.x_top, "x_bottom": sup.x_bottom, "lo": sup.lo, "hi": sup.hi},
        "y_top": solution.curve.y_top,
        "n_grid": int(solution.x.size),
        "Sigma": solution.sigma,
        "entry_fee": solution.entry_fee,
        "per_unit_price": solution.per_unit_price,
        "outside_value": solution.outside_value,
        "extension_y": solution.extension_y,
        "atom_mass": solution.cdf.atom_mass,
        "pole_strength": solution.cdf.pole_strength,
        "price_tol": solution.price_tol,
        "integral_form_gap": solution.integral_form_gap,
        "first_best": solution.first_best.to_dict(),
        "observable": solution.observable.to_dict(),
    }


def save_solution(solution: EquilibriumSolution, out_dir) -> tuple:
    out_dir = Path(out_dir)
    csv_path, json_path = out_dir / SOLUTION_CSV, out_dir / SOLUTION_JSON
    write_csv(csv_path, solution.table())
    write_json(json_path, solution_summary(solution))
    return csv_path, json_path


def _num(v):
    return float(v) if v is not None else None


def load_solution(in_dir) -> EquilibriumSolution:
    """Rebuild a solution from ``solution.csv`` and ``solution.json`` without re-solving."""
    in_dir = Path(in_dir)
    try:
        summary = read_json(in_dir / SOLUTION_JSON)
        table = read_csv(in_dir / SOLUTION_CSV)
    except FileNotFoundError as exc:
        raise ConfigError(f"solution: {exc.filename} not found") from exc
    missing = [c for c in SOLUTION_COLUMNS if c not in table]
    if missing:
        raise ConfigError(f"solution.csv: missing columns {missing}")
    primitives = primitives_from_dict(summary["primitives"], "solution.primitives.")
    sup = Support(float(summary["support"]["x_top"]), float(summary["support"]["x_bottom"]))
    curve = AllocationCurve(primitives, sup, float(summary["y_top"]), table["x"], table["y_hat"])
    cdf = EquilibriumCdf(primitives, curve, table["log_mass"], table["F"], table["f"],
                         float(summary["atom_mass"]), float(summary["pole_strength"]))
    fb = FirstBestAllocation(**{k: float(v) for k, v in summary["first_best"].items()})
    obs = ObservableOutcome(**{k: float(v) for k, v in summary["observable"].items()})
    return EquilibriumSolution(
        primitives, fb, obs, curve, cdf, table["q"], table["U"],
        sigma=float(summary["Sigma"]), entry_fee=float(summary["entry_fee"]),
        outside_value=float(summary["outside_value"]),
        extension_y=_num(summary["extension_y"]), price_tol=float(summary["price_tol"]),
        integral_form_gap=float(summary["integral_form_gap"]),
    )
