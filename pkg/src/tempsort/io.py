"""Dataset CSV files, model JSON files and plot-ready export tables.

Datasets are wide CSV: ``id,label,g1_t1,...,g1_tT,g2_t1,...`` with one row
per alternative and a blank label for unlabeled rows. Floats are written
with 17 significant digits so every value reads back bit-identical.
"""

from __future__ import annotations

import csv
import json
import math
import re
from pathlib import Path

import numpy as np

from .core import Alternative, ClassStructure, Dataset, DiscountSchedule, Grid, PiecewiseValueFunction
from .core import encode_array
from .errors import (
    ConfigError,
    HeaderMismatch,
    KindError,
    LabelOutOfRange,
    NonFiniteValue,
    ParseError,
    SchemaVersionMismatch,
)
from .mrnn import PARAM_NAMES, MrnnConfig, MrnnModel, MrnnParams, export_marginals
from .tpl import TplModel

SCHEMA_VERSION = 1
MODEL_KINDS = ("tpl", "mrnn")
_COLUMN = re.compile(r"^g(\d+)_t(\d+)$")


def fmt(x: float) -> str:
    return format(float(x), ".17g")


# -- datasets -----------------------------------------------------------------


def dataset_header(m: int, T: int) -> list:
    return ["id", "label"] + [f"g{j}_t{t}" for j in range(1, m + 1) for t in range(1, T + 1)]


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(dataset_header(dataset.m, dataset.horizon))
        for alt in dataset.alternatives:
            label = "" if alt.label is None else str(alt.label)
            w.writerow([alt.id, label] + [fmt(x) for x in alt.series.ravel()])


def _parse_header(header: list):
    if len(header) < 3 or header[0] != "id" or header[1] != "label":
        raise HeaderMismatch("header must start with 'id,label' followed by g<j>_t<t> columns", 1)
    cells = []
    for col, name in enumerate(header[2:], start=3):
        match = _COLUMN.match(name)
        if not match:
            raise HeaderMismatch(f"column {name!r} does not match g<j>_t<t>", 1, col)
        cells.append((int(match.group(1)), int(match.group(2))))
    m = max(j for j, _ in cells)
    T = max(t for _, t in cells)
    expected = [(j, t) for j in range(1, m + 1) for t in range(1, T + 1)]
    if cells != expected:
        raise HeaderMismatch(
            f"expected {m * T} columns g1_t1..g{m}_t{T} in criterion-major order", 1
        )
    return m, T


def load_dataset(path, class_count=None) -> Dataset:
    """Read a wide CSV; H is ``class_count`` if given, else the largest label (at least 2)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise HeaderMismatch("empty file", 1)
    m, T = _parse_header(rows[0])
    width = 2 + m * T
    alts = []
    seen = set()
    for r, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise ParseError(f"expected {width} cells, found {len(row)}", r, min(len(row), width) + 1)
        ident = row[0]
        if ident in seen:
            raise ParseError(f"duplicate id {ident!r}", r, 1)
        seen.add(ident)
        label = None
        if row[1].strip():
            try:
                label = int(row[1])
            except ValueError:
                raise ParseError(f"label {row[1]!r} is not an integer", r, 2) from None
            if label < 1:
                raise LabelOutOfRange(f"row {r}: label {label} must be >= 1")
        values = np.empty(m * T)
        for c, cell in enumerate(row[2:]):
            try:
                x = float(cell)
            except ValueError:
                raise ParseError(f"cell {cell!r} is not a number", r, c + 3) from None
            if not math.isfinite(x):
                raise NonFiniteValue(f"non-finite value {cell!r}", r, c + 3)
            values[c] = x
        alts.append(Alternative(ident, values.reshape(m, T), label))
    labels = [a.label for a in alts if a.label is not None]
    if class_count is None:
        class_count = max([2] + labels)
    elif labels and max(labels) > class_count:
        raise LabelOutOfRange(f"label {max(labels)} exceeds the declared {class_count} classes")
    return Dataset(alts, [f"g{j}" for j in range(1, m + 1)], T, int(class_count))


# -- models -------------------------------------------------------------------


def _grid_dict(grid: Grid) -> dict:
    return {"gamma": grid.gamma, "alpha": grid.alpha.tolist(), "beta": grid.beta.tolist()}


def _array(value, name, shape=None):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ParseError(f"field {name!r} is not a numeric array") from None
    if shape is not None and arr.shape != tuple(shape):
        raise ParseError(f"field {name!r} has shape {arr.shape}, expected {tuple(shape)}")
    return arr


def model_to_dict(model) -> dict:
    kind = getattr(model, "kind", None)
    if kind == "tpl":
        payload = {
            "delta_f": model.pvf.delta_f.tolist(),
            "offsets": model.pvf.offsets.tolist(),
            "tau": model.schedule.tau,
            "horizon": model.schedule.horizon,
            "thresholds": list(model.classes.thresholds),
            "large": model.classes.large,
            "c_param": model.c_param,
        }
    elif kind == "mrnn":
        payload = {
            "config": model.config.to_dict(),
            "params": {n: {"shape": list(a.shape), "data": a.ravel().tolist()} for n, a in model.params.items()},
        }
    else:
        raise KindError(f"cannot serialize model of kind {kind!r}")
    return {
        "kind": kind,
        "schema_version": SCHEMA_VERSION,
        "grid": _grid_dict(model.grid),
        "payload": payload,
        "info": model.info,
    }


def model_from_dict(doc: dict):
    if not isinstance(doc, dict):
        raise ParseError("model document must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"schema_version {version!r} is not supported (expected {SCHEMA_VERSION})")
    kind = doc.get("kind")
    if kind not in MODEL_KINDS:
        raise KindError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    try:
        g = doc["grid"]
        grid = Grid.from_bounds(_array(g["alpha"], "alpha"), _array(g["beta"], "beta"), int(g["gamma"]))
        p = doc["payload"]
        info = doc.get("info", {})
        if kind == "tpl":
            pvf = PiecewiseValueFunction(_array(p["delta_f"], "delta_f", grid.shape), _array(p["offsets"], "offsets"))
            schedule = DiscountSchedule(float(p["tau"]), int(p["horizon"]))
            classes = ClassStructure(tuple(p["thresholds"]), float(p.get("large", 1e30)))
            return TplModel(grid, pvf, schedule, classes, float(p["c_param"]), info)
        config = MrnnConfig(**p["config"])
        arrays = {}
        for name in PARAM_NAMES:
            entry = p["params"][name]
            arrays[name] = _array(entry["data"], name).reshape(entry["shape"])
        return MrnnModel(grid, config, MrnnParams(**arrays), info)
    except KeyError as exc:
        raise ParseError(f"model document is missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ParseError(f"malformed model document: {exc}") from None


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)), encoding="utf-8")


def load_model(path):
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None
    return model_from_dict(doc)


# -- tables -------------------------------------------------------------------


def marginal_table(model, dataset=None) -> np.ndarray:
    """Sub-marginal values at the characteristic points, shape (m, T, gamma + 1)."""
    if model.kind == "tpl":
        return model.pvf.values_at_points()
    if dataset is None or len(dataset) == 0:
        raise ConfigError("an mRNN export needs a non-empty sample to hold other inputs at")
    curves, _ = export_marginals(model.params, model.config, model.grid, encode_array(dataset.series, model.grid))
    return curves


def discount_traces(model, dataset) -> np.ndarray:
    """Gate outputs for each sample, shape (n, T - 1, m)."""
    return model.trace(dataset.series).discount


def export_tables(model, dataset, out_dir) -> list:
    """Write marginals.csv (and discounts.csv for mRNN); returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    values = marginal_table(model, dataset)
    points = model.grid.points
    m, T, K = values.shape
    paths = [out / "marginals.csv"]
    with open(paths[0], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["criterion", "timestamp", "point_index", "g_value", "sub_marginal"])
        for j in range(m):
            for t in range(T):
                for k in range(K):
                    w.writerow([j + 1, t + 1, k, fmt(points[j, t, k]), fmt(values[j, t, k])])
    if model.kind == "mrnn":
        tau = discount_traces(model, dataset)
        paths.append(out / "discounts.csv")
        with open(paths[1], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample_id", "criterion", "timestamp", "tau"])
            for i, ident in enumerate(dataset.ids):
                for j in range(m):
                    for t in range(T - 1):
                        w.writerow([ident, j + 1, t + 1, fmt(tau[i, t, j])])
    return paths


def save_predictions(ids, labels, predicted, values, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label", "predicted", "comprehensive_value"])
        for ident, y, p, u in zip(ids, labels, predicted, values):
            w.writerow([ident, "" if not y else int(y), int(p), fmt(u)])


def save_json(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
