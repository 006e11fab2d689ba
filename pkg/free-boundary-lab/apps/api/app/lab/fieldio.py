from __future__ import annotations

import csv
import io
import logging
from dataclasses import replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import InvalidInputError
from .grid import disk_grid
from .models import (
    BOUNDARY,
    INTERIOR,
    BlowupSequence,
    DensityReport,
    FreeBoundary,
    GridSpec,
    HistoryEntry,
    ScalarField,
)


logger = logging.getLogger(__name__)

MAGIC = "FBLAB-FIELD v1"

HISTORY_HEADER = ("iter", "eps", "energy", "m2", "step")
FREE_BOUNDARY_HEADER = ("x", "y", "nx", "ny", "alpha", "beta", "residual")
DENSITY_HEADER = ("r", "volume_fraction", "nondegeneracy", "clean_ball", "growth_sup", "growth_inf")
BLOWUP_HEADER = ("k", "rho", "sup_diff", "hausdorff")
MONITOR_HEADER = ("r", "value", "mode")
DEGENERACY_HEADER = ("r", "value")
ORACLE_HEADER = ("pattern", "energy", "feasible")
ORACLE_CHECK_HEADER = ("case", "dim", "family", "direct", "oracle", "gap", "status")
SADDLE_HEADER = ("r", "flatness")
SWEEP_HEADER = ("index", "family", "params", "energy", "m2", "lambda_star", "bernoulli_median", "status")
NONEXISTENCE_HEADER = ("h", "energy", "analytic", "zero_measure")
PROPERTY_HEADER = ("check", "status", "value", "threshold")


def fmt(value: Any) -> str:
    """17 significant digits for floats, 'nan' for NaN, empty for None."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "nan" if np.isnan(v) else format(v, ".17g")
    return str(value)


# -- field dumps -------------------------------------------------------------


def dumps_field(u: ScalarField) -> str:
    grid = u.grid
    head = [str(grid.dim), *(str(n) for n in grid.shape), fmt(grid.h), *(fmt(o) for o in grid.origin), grid.domain]
    lines = [MAGIC, " ".join(head)]
    vals = np.where(grid.active, u.values, np.nan)
    rows = vals.reshape(1, -1) if grid.dim == 1 else vals
    lines += [" ".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _grid_from_header(parts: Sequence[str]) -> GridSpec:
    try:
        dim = int(parts[0])
        if dim not in (1, 2):
            raise ValueError
        shape = tuple(int(p) for p in parts[1 : 1 + dim])
        h = float(parts[1 + dim])
        origin = tuple(float(p) for p in parts[2 + dim : 2 + 2 * dim])
        domain = parts[2 + 2 * dim]
    except (ValueError, IndexError) as e:
        raise InvalidInputError(f"bad field header: {' '.join(parts)!r}") from e
    if len(parts) != 3 + 2 * dim or h <= 0 or min(shape) < 3:
        raise InvalidInputError(f"bad field header: {' '.join(parts)!r}")

    if domain == "disk":
        if dim != 2 or shape[0] != shape[1]:
            raise InvalidInputError("disk dumps need a square 2D grid")
        radius = 0.5 * (shape[0] - 1) * h
        grid = disk_grid((origin[0] + radius, origin[1] + radius), radius, shape[0] - 1)
        return replace(grid, h=h, origin=origin)
    if domain not in ("interval", "rectangle") or (domain == "interval") != (dim == 1):
        raise InvalidInputError(f"unknown domain {domain!r} for dim {dim}")
    mask = np.full(shape, BOUNDARY, dtype=np.int8)
    mask[tuple(slice(1, -1) for _ in shape)] = INTERIOR
    return GridSpec(dim, shape, h, origin, domain, mask)


def loads_field(text: str) -> ScalarField:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != MAGIC:
        raise InvalidInputError(f"not a {MAGIC} dump")
    if len(lines) < 3:
        raise InvalidInputError("field dump is truncated")
    grid = _grid_from_header(lines[1].split())
    try:
        values = np.array([float(v) for ln in lines[2:] for v in ln.split()])
    except ValueError as e:
        raise InvalidInputError("non-numeric field value") from e
    if values.size != grid.size:
        raise InvalidInputError(f"expected {grid.size} values, got {values.size}")
    values = values.reshape(grid.shape)
    values[grid.exterior] = np.nan
    return ScalarField(grid, values)


def write_field(u: ScalarField, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(dumps_field(u))
    return path


def read_field(path: str | Path) -> ScalarField:
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"field file not found: {path}")
    return loads_field(path.read_text())


# -- CSV tables ------------------------------------------------------------


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def history_csv(history: Sequence[HistoryEntry]) -> str:
    return csv_text(HISTORY_HEADER, ((e.iteration, e.eps, e.energy, e.m2, e.step) for e in history))


def free_boundary_csv(fb: FreeBoundary) -> str:
    rows = []
    for k in range(len(fb)):
        p, n = fb.points[k], fb.normals[k]
        y, ny = (p[1], n[1]) if fb.dim == 2 else (None, None)
        rows.append((p[0], y, n[0], ny, fb.alpha[k], fb.beta[k], fb.residual[k]))
    return csv_text(FREE_BOUNDARY_HEADER, rows)


def density_csv(report: DensityReport) -> str:
    rows = [
        (r, report.volume_fraction[i], report.nondegeneracy[i], report.clean_ball[i], report.growth_sup, report.growth_inf)
        for i, r in enumerate(report.radii)
    ]
    return csv_text(DENSITY_HEADER, rows)


def blowup_csv(seq: BlowupSequence) -> str:
    rows = [(k, seq.radii[k], seq.sup_diff[k], seq.hausdorff[k]) for k in range(len(seq.sup_diff))]
    return csv_text(BLOWUP_HEADER, rows)


def monitor_csv(rows: Iterable[tuple[float, float, str]]) -> str:
    return csv_text(MONITOR_HEADER, rows)


def degeneracy_csv(rows: Iterable[tuple[float, float]]) -> str:
    return csv_text(DEGENERACY_HEADER, rows)


def oracle_csv(rows: Iterable[tuple[str, float, bool]]) -> str:
    return csv_text(ORACLE_HEADER, rows)


def read_csv(text: str) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))


def write_files(root: str | Path, files: dict[str, str]) -> Path:
    """Write a name -> text mapping below ``root``."""
    root = Path(root)
    for name, text in files.items():
        target = root / name
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text)
    logger.debug("wrote %d files to %s", len(files), root)
    return root
