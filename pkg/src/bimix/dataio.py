"""File formats: dataset/label/posterior CSVs and JSON documents.

CSV floats use repr, which round-trips exactly at 17 significant digits.
All writes go through a temporary file in the target directory followed by
an atomic rename, so readers never see partial output.  JSON output maps
non-finite numbers to null; readers map null back to NaN.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from importlib import resources
from pathlib import Path

import numpy as np

from .model import (
    FitResult,
    InvalidModelError,
    ModelSpec,
    Observation,
    PanelDataset,
    Unit,
)


def atomic_write_text(path, text: str) -> None:
    """Write text to path via a same-directory temp file and atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def jsonable(value):
    """Recursively convert to plain JSON types; non-finite numbers become null."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        value = float(value)
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    return value


def write_json(doc, path) -> None:
    atomic_write_text(path, json.dumps(jsonable(doc), indent=2) + "\n")


def read_json(path):
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def dataset_to_csv_text(data: PanelDataset) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    y_cols = ["y1"] if data.J == 1 else ["y1", "y2"]
    writer.writerow(["unit", "time", *y_cols, *data.covariate_names])
    for unit in data.units:
        for obs in unit.observations:
            writer.writerow(
                [unit.unit_id, obs.time]
                + [repr(v) for v in obs.y]
                + [repr(obs.covariates[name]) for name in data.covariate_names]
            )
    return buffer.getvalue()


def write_dataset_csv(data: PanelDataset, path) -> None:
    atomic_write_text(path, dataset_to_csv_text(data))


def dataset_from_csv_text(text: str, source: str = "<csv>") -> PanelDataset:
    """Parse a long-format panel CSV into a dataset, preserving unit order."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise InvalidModelError(f"{source}: empty file") from None
    if header[:2] != ["unit", "time"] or len(header) < 3 or header[2] != "y1":
        raise InvalidModelError(
            f"{source}: header must start with unit,time,y1; got {header[:3]}"
        )
    j = 2 if len(header) > 3 and header[3] == "y2" else 1
    cov_names = header[2 + j :]
    by_unit: dict[str, list[Observation]] = {}
    order: list[str] = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise InvalidModelError(
                f"{source}:{lineno}: expected {len(header)} fields, got {len(row)}"
            )
        unit_id = row[0]
        try:
            time = int(row[1])
            ys = tuple(float(v) for v in row[2 : 2 + j])
            covs = {name: float(v) for name, v in zip(cov_names, row[2 + j :])}
        except ValueError as exc:
            raise InvalidModelError(f"{source}:{lineno}: {exc}") from None
        if unit_id not in by_unit:
            by_unit[unit_id] = []
            order.append(unit_id)
        by_unit[unit_id].append(Observation(time=time, y=ys, covariates=covs))
    units = tuple(
        Unit(unit_id=uid, observations=tuple(by_unit[uid])) for uid in order
    )
    return PanelDataset(units)


def read_dataset_csv(path) -> PanelDataset:
    with open(path, encoding="utf-8", newline="") as handle:
        return dataset_from_csv_text(handle.read(), source=str(path))


def truth_to_csv_text(unit_ids, labels: np.ndarray) -> str:
    labels = np.atleast_2d(np.asarray(labels, dtype=int))
    J = labels.shape[1]
    cols = ["true_k1"] if J == 1 else ["true_k1", "true_k2"]
    lines = ["unit," + ",".join(cols)]
    for uid, row in zip(unit_ids, labels):
        lines.append(uid + "," + ",".join(str(int(v) + 1) for v in row))
    return "\n".join(lines) + "\n"


def write_truth_csv(unit_ids, labels, path) -> None:
    atomic_write_text(path, truth_to_csv_text(unit_ids, labels))


def read_truth_csv(path) -> tuple[tuple[str, ...], np.ndarray]:
    """Read a label sidecar; returns unit ids and 0-based label columns."""
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if header[0] != "unit" or header[1] != "true_k1":
            raise InvalidModelError(f"{path}: header must start with unit,true_k1")
        rows = [row for row in reader if row]
    unit_ids = tuple(row[0] for row in rows)
    labels = np.array(
        [[int(v) - 1 for v in row[1:]] for row in rows], dtype=int
    )
    return unit_ids, labels


def posteriors_to_csv_text(fit: FitResult) -> str:
    """One row per unit: MAP components (1-based) then all posterior cells."""
    if fit.posteriors is None or fit.assignments is None:
        raise InvalidModelError("fit carries no posteriors to export")
    w = fit.posteriors.w
    n, K1, K2 = w.shape
    cell_names = [f"w_{a + 1}{b + 1}" for a in range(K1) for b in range(K2)]
    lines = ["unit,k1,k2," + ",".join(cell_names)]
    for i, uid in enumerate(fit.unit_ids):
        k1 = fit.assignments[i, 0] + 1
        k2 = (fit.assignments[i, 1] + 1) if fit.assignments.shape[1] > 1 else 1
        cells = ",".join(repr(float(v)) for v in w[i].ravel())
        lines.append(f"{uid},{k1},{k2},{cells}")
    return "\n".join(lines) + "\n"


def write_posteriors_csv(fit: FitResult, path) -> None:
    atomic_write_text(path, posteriors_to_csv_text(fit))


def write_model_spec(spec: ModelSpec, path) -> None:
    write_json(spec.to_dict(), path)


def read_model_spec(path) -> ModelSpec:
    doc = read_json(path)
    try:
        return ModelSpec.from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise InvalidModelError(f"{path}: malformed model document ({exc})") from None


def shipped_config_names() -> tuple[str, ...]:
    """File names of the model specifications shipped with the package."""
    root = resources.files("bimix") / "configs"
    return tuple(sorted(p.name for p in root.iterdir() if p.name.endswith(".json")))


def shipped_config_text(name: str) -> str:
    """Raw JSON text of one shipped model specification.

    The text can be written to disk verbatim and passed to the fit and
    select commands via --model.
    """
    entry = resources.files("bimix") / "configs" / name
    if not entry.is_file():
        raise InvalidModelError(
            f"unknown config {name!r}; shipped configs: "
            + ", ".join(shipped_config_names())
        )
    return entry.read_text(encoding="utf-8")


def read_shipped_config(name: str) -> ModelSpec:
    """Parse one shipped model specification by file name."""
    try:
        return ModelSpec.from_dict(json.loads(shipped_config_text(name)))
    except (KeyError, TypeError) as exc:
        raise InvalidModelError(f"{name}: malformed model document ({exc})") from None


def write_fit_json(fit: FitResult, path) -> None:
    write_json(fit.to_dict(), path)


def read_fit_json(path) -> FitResult:
    doc = read_json(path)
    try:
        return FitResult.from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise InvalidModelError(f"{path}: malformed fit document ({exc})") from None
