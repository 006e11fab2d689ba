from __future__ import annotations

import functools
import itertools
import logging
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator

from .errors import DomainError, InvalidInputError
from .models import BOUNDARY, EXTERIOR, INTERIOR, GridSpec, QField, ScalarField


logger = logging.getLogger(__name__)

MIN_CELLS = 2


def _check_cells(cells: int) -> None:
    if cells < MIN_CELLS:
        raise InvalidInputError(f"need at least {MIN_CELLS} cells per axis, got {cells}")


def interval_grid(a: float, b: float, cells: int) -> GridSpec:
    _check_cells(cells)
    if not b > a:
        raise InvalidInputError("interval needs a < b")
    n = cells + 1
    mask = np.full((n,), INTERIOR, dtype=np.int8)
    mask[[0, -1]] = BOUNDARY
    return GridSpec(1, (n,), (b - a) / cells, (float(a),), "interval", mask)


def rectangle_grid(x0: float, x1: float, y0: float, y1: float, cells: int) -> GridSpec:
    """Rectangle with ``cells`` cells along x; the y extent must be a multiple of h."""
    _check_cells(cells)
    if not (x1 > x0 and y1 > y0):
        raise InvalidInputError("rectangle needs x0 < x1 and y0 < y1")
    h = (x1 - x0) / cells
    ny_cells = int(round((y1 - y0) / h))
    if ny_cells < MIN_CELLS or abs(ny_cells * h - (y1 - y0)) > 1e-9 * (y1 - y0):
        raise InvalidInputError("rectangle height is not a multiple of the spacing")
    shape = (cells + 1, ny_cells + 1)
    mask = np.full(shape, BOUNDARY, dtype=np.int8)
    mask[1:-1, 1:-1] = INTERIOR
    return GridSpec(2, shape, h, (float(x0), float(y0)), "rectangle", mask)


def square_grid(cells: int, lo: float = 0.0, hi: float = 1.0) -> GridSpec:
    return rectangle_grid(lo, hi, lo, hi, cells)


def disk_grid(center: Sequence[float], radius: float, cells: int) -> GridSpec:
    """Disk inscribed in a square of ``cells`` cells per axis.

    Nodes strictly inside the circle are interior; the remaining nodes of
    cells with an interior vertex carry the Dirichlet datum.
    """
    _check_cells(cells)
    if radius <= 0:
        raise InvalidInputError("disk radius must be positive")
    cx, cy = float(center[0]), float(center[1])
    n = cells + 1
    h = 2.0 * radius / cells
    origin = (cx - radius, cy - radius)
    xs = origin[0] + h * np.arange(n)
    ys = origin[1] + h * np.arange(n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    inside = np.hypot(X - cx, Y - cy) < radius * (1.0 - 1e-12)

    cell_has_inside = inside[:-1, :-1] | inside[1:, :-1] | inside[:-1, 1:] | inside[1:, 1:]
    touched = np.zeros_like(inside)
    for di, dj in itertools.product((0, 1), repeat=2):
        touched[di : n - 1 + di, dj : n - 1 + dj] |= cell_has_inside

    mask = np.full((n, n), EXTERIOR, dtype=np.int8)
    mask[touched] = BOUNDARY
    mask[inside] = INTERIOR
    return GridSpec(2, (n, n), h, origin, "disk", mask, center=(cx, cy), radius=float(radius))


def make_field(grid: GridSpec, source: Callable[[np.ndarray], np.ndarray] | np.ndarray | float) -> ScalarField:
    """Sample ``source`` (callable on coordinates of shape (..., dim)) on the grid."""
    if callable(source):
        values = np.asarray(source(grid.coordinates()), dtype=float)
    else:
        values = np.broadcast_to(np.asarray(source, dtype=float), grid.shape).copy()
    values = np.array(values, dtype=float, copy=True)
    values[grid.exterior] = np.nan
    return ScalarField(grid, values)


def zero_field(grid: GridSpec) -> ScalarField:
    return make_field(grid, 0.0)


class GridOperators:
    """Cell quadrature and the weighted graph Laplacian of one grid.

    The Dirichlet energy is ``u @ L @ u`` with
    ``L = sum_e w_e (e_i - e_j)(e_i - e_j)^T``, where each cell spreads
    ``A_c / h**2`` evenly over its edges along every axis. Only cells with
    positive area are kept.
    """

    def __init__(self, grid: GridSpec) -> None:
        self.grid = grid
        h, dim = grid.h, grid.dim
        n_cells = tuple(n - 1 for n in grid.shape)
        corner = np.indices(n_cells).reshape(dim, -1)
        offsets = list(itertools.product((0, 1), repeat=dim))
        verts = np.stack(
            [np.ravel_multi_index(tuple(corner[a] + off[a] for a in range(dim)), grid.shape) for off in offsets],
            axis=1,
        )
        if grid.domain == "disk":
            inside = grid.interior.ravel()
            fraction = inside[verts].mean(axis=1)
        else:
            fraction = np.ones(verts.shape[0])
        area = fraction * h**dim
        keep = area > 0
        self.cell_vertices = verts[keep]
        self.cell_area = area[keep]
        self.cell_fraction = fraction[keep]
        self.offsets = offsets
        self.laplacian = self._build_laplacian()

        flat_mask = grid.mask.ravel()
        self.interior_nodes = np.flatnonzero(flat_mask == INTERIOR)
        self.boundary_nodes = np.flatnonzero(flat_mask == BOUNDARY)
        self.active_nodes = np.flatnonzero(flat_mask != EXTERIOR)

    def _build_laplacian(self) -> sp.csr_matrix:
        grid = self.grid
        dim = grid.dim
        coef = self.cell_area / grid.h**2 / 2 ** (dim - 1)
        rows, cols, vals = [], [], []
        for a in range(dim):
            # pairs of vertices differing only along axis a
            for k, off in enumerate(self.offsets):
                if off[a] != 0:
                    continue
                partner = list(off)
                partner[a] = 1
                m = self.offsets.index(tuple(partner))
                i = self.cell_vertices[:, k]
                j = self.cell_vertices[:, m]
                rows += [i, j, i, j]
                cols += [i, j, j, i]
                vals += [coef, coef, -coef, -coef]
        n = grid.size
        L = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        ).tocsr()
        L.sum_duplicates()
        return L

    def cell_q(self, q: QField) -> np.ndarray:
        qn = q.on(self.grid).ravel()
        return qn[self.cell_vertices].mean(axis=1)

    def lambda_omega(self, q: QField) -> float:
        return float(np.sum(self.cell_area * self.cell_q(q)))

    def measure(self) -> float:
        return float(np.sum(self.cell_area))


@functools.lru_cache(maxsize=64)
def operators(grid: GridSpec) -> GridOperators:
    logger.debug("building operators for %s grid %s", grid.domain, grid.shape)
    return GridOperators(grid)


def _as_points(grid: GridSpec, x) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts.reshape(-1, grid.dim) if grid.dim == 1 else pts.reshape(1, grid.dim)
    if pts.shape[-1] != grid.dim:
        raise InvalidInputError(f"points must have {grid.dim} coordinates")
    return pts


def interpolate_masked(u: ScalarField, points) -> tuple[np.ndarray, np.ndarray]:
    """Multilinear values at (m, dim) points plus a per-point validity flag.

    A point is valid when it lies in the grid box and every node carrying a
    nonzero weight is on the domain; invalid points get NaN.
    """
    grid = u.grid
    pts = _as_points(grid, points)
    tol = 1e-9
    rel = (pts - np.asarray(grid.origin)) / grid.h
    upper = np.asarray(grid.shape, dtype=float) - 1.0
    valid = np.all((rel >= -tol) & (rel <= upper + tol), axis=1)
    rel = np.clip(rel, 0.0, upper)
    base = np.minimum(np.floor(rel).astype(int), np.asarray(grid.shape) - 2)
    frac = rel - base

    active = grid.active
    for off in itertools.product((0, 1), repeat=grid.dim):
        off_arr = np.asarray(off)
        weight = np.prod(np.where(off_arr == 1, frac, 1.0 - frac), axis=1)
        idx = tuple((base + off_arr).T)
        valid &= ~((weight > 1e-12) & ~active[idx])

    interp = RegularGridInterpolator(grid.axes(), u.filled(), method="linear", bounds_error=False, fill_value=None)
    values = interp(np.asarray(grid.origin) + rel * grid.h)
    return np.where(valid, values, np.nan), valid


def interpolate_many(u: ScalarField, points) -> np.ndarray:
    """Like interpolate_masked but raises DomainError on any invalid point."""
    values, valid = interpolate_masked(u, points)
    if not np.all(valid):
        raise DomainError("interpolation point outside the domain")
    return values


def interpolate(u: ScalarField, x) -> float:
    return float(interpolate_many(u, np.reshape(np.asarray(x, dtype=float), (1, u.grid.dim)))[0])


def ball_inside(grid: GridSpec, center, r: float, margin: float = 0.0) -> bool:
    """True when the closed ball (plus margin) lies in the closure of the domain."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    reach = r + margin
    if grid.domain == "disk":
        return bool(np.hypot(*(c - np.asarray(grid.center))) + reach <= grid.radius + 1e-12)
    lo = np.asarray(grid.origin)
    hi = np.asarray(grid.upper)
    return bool(np.all(c - reach >= lo - 1e-12) and np.all(c + reach <= hi + 1e-12))


def nodes_in_ball(grid: GridSpec, center, r: float) -> np.ndarray:
    c = np.atleast_1d(np.asarray(center, dtype=float))
    d = np.linalg.norm(grid.coordinates() - c, axis=-1)
    return (d <= r + 1e-12) & grid.active


def node_gradient(u: ScalarField) -> np.ndarray:
    """Central-difference gradient at nodes, shape (*shape, dim)."""
    g = np.gradient(u.filled(), u.grid.h)
    if u.grid.dim == 1:
        g = [g]
    return np.stack(g, axis=-1)


def domain_extent(grid: GridSpec) -> float:
    """Largest ball radius that fits in the domain."""
    if grid.domain == "disk":
        return float(grid.radius)
    return 0.5 * min(hi - lo for lo, hi in zip(grid.origin, grid.upper))
