"""CSV formats shared by the command line tools.

Every number is written with 9 significant digits; missing values are empty
fields.  Files are written to a temporary name and renamed into place so an
interrupted run never leaves a truncated file behind.
"""

from __future__ import annotations

import csv
import math
import os
from pathlib import Path

import numpy as np

from .datasets import PointCloud

EPOCH_HEADER = ["epoch", "train_loss", "test_nelbo", "test_weighted", "test_rescaled"]
BIN_HEADER = ["epoch", "bin_lo", "bin_hi", "count", "mean_loss"]
METRICS_HEADER = ["space", "form", "dataset", "seed", "loss", "mean_dist", "covar_dist"]


class FormatError(ValueError):
    """A data file is missing, empty, or does not follow the expected schema."""


def fmt(value) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return f"{float(value):.9g}"


def write_rows(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")
    os.replace(tmp, path)


def append_rows(path, header, rows) -> None:
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="") as fh:
        if new:
            fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")


def read_table(path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise FormatError(f"{path} is empty")
    return rows[0], rows[1:]


def write_points(path, points) -> None:
    pts = points.points if isinstance(points, PointCloud) else np.asarray(points)
    write_rows(path, [f"x{i + 1}" for i in range(pts.shape[1])], pts.tolist())


def read_points(path) -> np.ndarray:
    header, rows = read_table(path)
    if not header or not all(h.strip().startswith("x") for h in header):
        raise FormatError(f"{path}: expected a point header like x1,x2, got {header}")
    if not rows:
        raise FormatError(f"{path} has no data rows")
    try:
        pts = np.array([[float(v) for v in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if pts.ndim != 2 or pts.shape[1] != len(header):
        raise FormatError(f"{path}: ragged rows")
    return pts


def write_epochs(path, epochs) -> None:
    write_rows(
        path,
        EPOCH_HEADER,
        [[e.epoch, e.train_loss, e.test_nelbo, e.test_weighted, e.test_rescaled] for e in epochs],
    )


def read_epochs(path) -> list[dict]:
    header, rows = read_table(path)
    if header != EPOCH_HEADER:
        raise FormatError(f"{path}: unexpected header {header}")
    return [{k: float(v) for k, v in zip(header, r)} for r in rows]


def write_bins(path, bins_per_epoch) -> None:
    rows = []
    for epoch, b in enumerate(bins_per_epoch, start=1):
        for lo, hi, count, mean in zip(b.lo, b.hi, b.count, b.mean):
            rows.append([epoch, lo, hi, int(count), mean])
    write_rows(path, BIN_HEADER, rows)
