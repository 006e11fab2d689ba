from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.spatial import cKDTree

from .energy import weighted_volume_m1
from .errors import DomainError, InvalidInputError
from .fbgeom import SLOPE_OFFSETS, extract_free_boundary
from .grid import ball_inside, disk_grid, interpolate_masked, interval_grid, operators
from .models import AnalyticField, BlowupSequence, FreeBoundary, GridSpec, PhiSpec, QField, ScalarField, SolverConfig
from .phi import lambda_bernoulli
from .solve import ac_solve


logger = logging.getLogger(__name__)

TARGET_CELLS = 128
MIN_RHO_CELLS = 8.0

WeissMode = Literal["paper", "standard"]
AcfMode = Literal["paper", "n-2"]


def target_grid(dim: int = 2, cells: int = TARGET_CELLS) -> GridSpec:
    """Common blow-up grid: B_1 sampled with cells + 1 nodes per axis on [-1, 1]^n."""
    if dim == 1:
        return interval_grid(-1.0, 1.0, cells)
    if dim == 2:
        return disk_grid((0.0, 0.0), 1.0, cells)
    raise InvalidInputError("blow-ups need dim 1 or 2")


def rescale(u: ScalarField, x0, rho: float, target: GridSpec | None = None) -> ScalarField:
    """u_rho(x) = u(x0 + rho x) / rho sampled on the target grid."""
    source = u.grid
    target = target_grid(source.dim) if target is None else target
    if target.dim != source.dim:
        raise InvalidInputError("target grid dimension does not match the field")
    if rho <= 0:
        raise InvalidInputError("rho must be positive")
    if rho < MIN_RHO_CELLS * source.h:
        logger.warning("rescaling at rho=%.3g below %g source cells", rho, MIN_RHO_CELLS)
    c = np.atleast_1d(np.asarray(x0, dtype=float))
    active = target.active
    pts = c + rho * target.coordinates()[active]
    vals, valid = interpolate_masked(u, pts)
    if not np.all(valid):
        raise DomainError(f"rescaled grid at rho={rho:.3g} leaves the source domain")
    out = np.full(target.shape, np.nan)
    out[active] = vals / rho
    return ScalarField(target, out)


def _unit_ball(grid: GridSpec) -> np.ndarray:
    return grid.active & (np.linalg.norm(grid.coordinates(), axis=-1) <= 1.0 + 1e-12)


def _gamma_in_ball(fb: FreeBoundary, radius: float = 1.0) -> np.ndarray:
    pts = fb.points if fb.dim == 1 else np.concatenate([fb.vertices, fb.points])
    if len(pts) == 0:
        return pts
    return pts[np.linalg.norm(pts, axis=1) <= radius]


def hausdorff_distance(a: np.ndarray, b: np.ndarray) -> float:
    if len(a) == 0 and len(b) == 0:
        return 0.0
    if len(a) == 0 or len(b) == 0:
        return math.nan
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    return float(max(d_ab.max(), d_ba.max()))


def blowup_sequence(
    u: ScalarField,
    x0,
    rho0: float,
    k_max: int,
    target: GridSpec | None = None,
    fb: FreeBoundary | None = None,
) -> BlowupSequence:
    """Rescalings at rho_k = rho0 2^-k, k = 0..k_max, with convergence metrics on B_1."""
    source = u.grid
    c = np.atleast_1d(np.asarray(x0, dtype=float))
    fb = extract_free_boundary(u) if fb is None else fb
    cloud = fb.points if fb.dim == 1 else np.concatenate([fb.vertices, fb.points])
    if len(cloud) == 0 or float(cKDTree(cloud).query(c)[0]) > source.h * (1 + 1e-9):
        raise DomainError("blow-up center is not on the free boundary")
    if k_max < 0:
        raise InvalidInputError("k_max must be >= 0")
    radii = [rho0 * 2.0**-k for k in range(k_max + 1)]
    if radii[-1] < MIN_RHO_CELLS * source.h * (1 - 1e-12):
        raise InvalidInputError(f"smallest radius {radii[-1]:.3g} is below {MIN_RHO_CELLS:g} source cells")

    target = target_grid(source.dim) if target is None else target
    fields = [rescale(u, c, rho, target) for rho in radii]
    ball = _unit_ball(target)
    sup_diff, hausdorff = [], []
    gammas = [_gamma_in_ball(extract_free_boundary(f)) for f in fields]
    for k in range(k_max):
        sup_diff.append(float(np.max(np.abs(fields[k].values[ball] - fields[k + 1].values[ball]))))
        hausdorff.append(hausdorff_distance(gammas[k], gammas[k + 1]))
    logger.info("blow-up at %s: sup diffs %s", tuple(c), ["%.3g" % s for s in sup_diff])
    return BlowupSequence(tuple(float(v) for v in c), radii, fields, sup_diff, hausdorff)


@dataclass(frozen=True, eq=False)
class AcLimitReport:
    lambda0: float
    lambda0_low: float
    lambda0_high: float
    kink: bool
    sup_gap: float
    slope_gap: float
    alpha: float | None
    beta: float | None
    limit: ScalarField


def ac_limit_compare(
    seq: BlowupSequence,
    phi: PhiSpec,
    q: QField,
    m2: float,
    config: SolverConfig | None = None,
    source_grid: GridSpec | None = None,
) -> AcLimitReport:
    """Compare the finest rescaling with the linear problem it should minimize.

    lambda0 = lambda2 Q(x0) Phi0'(m2); the limit problem is solved on the
    target grid with the trace of the finest rescaling as datum. The slopes
    are medians over the Gamma samples of the finest rescaling in B_1/2.
    """
    if q.mode == "constant":
        q0 = float(q.value)
    elif source_grid is None:
        raise InvalidInputError("per-node Q needs the source grid")
    else:
        q0 = q.at(source_grid, seq.center)
    lam_omega = phi.lambda_omega if phi.lambda_omega is not None else 0.0
    m1 = weighted_volume_m1(m2, phi.lambda1, phi.lambda2, lam_omega) if phi.lambda1 > 0 else 0.0
    lam = lambda_bernoulli(phi, m1, m2, q0)
    if lam.value < 0:
        raise InvalidInputError(f"lambda0={lam.value:.3g} is negative; no linear limit")

    finest = seq.fields[-1]
    target = finest.grid
    limit = ac_solve(target, finest, lam.value, QField(), config)
    ball = _unit_ball(target)
    sup_gap = float(np.max(np.abs(finest.values[ball] - limit.values[ball])))

    # keep samples at least one source cell apart
    step = target.h
    if source_grid is not None:
        step = max(step, source_grid.h / seq.radii[-1])
    fb = extract_free_boundary(finest, [step * k for k in SLOPE_OFFSETS])
    alpha = beta = None
    if not fb.empty:
        dist = np.linalg.norm(fb.points, axis=1)
        near = dist <= max(0.5, float(dist.min()))
        a, b = fb.alpha[near], fb.beta[near]
        ok = np.isfinite(a) & np.isfinite(b)
        if ok.any():
            alpha, beta = float(np.median(a[ok])), float(np.median(b[ok]))
    expected = math.sqrt(lam.value + (beta or 0.0) ** 2)
    if alpha is None or expected == 0:
        slope_gap = math.nan
    else:
        slope_gap = abs(alpha - expected) / expected
    logger.info("ac limit: lambda0=%.4g sup gap %.3g slope gap %.3g", lam.value, sup_gap, slope_gap)
    return AcLimitReport(lam.value, lam.low, lam.high, lam.kink, sup_gap, slope_gap, alpha, beta, limit)


# --- monotonicity monitors -------------------------------------------------------------


@functools.lru_cache(maxsize=8)
def _gauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    return leggauss(n)


def _polar_nodes(r0: float, r1: float, n_radial: int = 48, n_angular: int = 24) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on the annulus r0 < |y| < r1 in panels of pi/4, with area weights."""
    xr, wr = _gauss(n_radial)
    xa, wa = _gauss(n_angular)
    rad = 0.5 * (r1 - r0) * (xr + 1) + r0
    wrad = 0.5 * (r1 - r0) * wr
    panel = math.pi / 4
    theta = np.concatenate([panel * (k + 0.5 * (xa + 1)) for k in range(8)])
    wtheta = np.tile(0.5 * panel * wa, 8)
    R, T = np.meshgrid(rad, theta, indexing="ij")
    W = np.outer(wrad * rad, wtheta)
    pts = np.stack([R * np.cos(T), R * np.sin(T)], axis=-1).reshape(-1, 2)
    return pts, W.ravel()


def _circle_nodes(r: float, n_angular: int = 24) -> tuple[np.ndarray, np.ndarray]:
    xa, wa = _gauss(n_angular)
    panel = math.pi / 4
    theta = np.concatenate([panel * (k + 0.5 * (xa + 1)) for k in range(8)])
    weights = np.tile(0.5 * panel * wa, 8) * r
    return r * np.stack([np.cos(theta), np.sin(theta)], axis=1), weights


def _cell_samples(u: ScalarField, x, r: float, sub: int = 4):
    """Subsampled cells meeting B_r(x): points, area weights, cell gradients of u, u+ and u-."""
    grid = u.grid
    c = np.atleast_1d(np.asarray(x, dtype=float))
    if not ball_inside(grid, c, r):
        raise DomainError("monitor ball leaves the domain")
    ops = operators(grid)
    verts = ops.cell_vertices
    coords = grid.coordinates().reshape(-1, grid.dim)
    corner = coords[verts[:, 0]]
    near = np.linalg.norm(corner + 0.5 * grid.h - c, axis=1) <= r + grid.h * math.sqrt(grid.dim)
    verts, corner = verts[near], corner[near]
    vals = u.filled().ravel()[verts]

    s = (np.arange(sub) + 0.5) / sub
    local = np.stack(np.meshgrid(*([s] * grid.dim), indexing="ij"), axis=-1).reshape(-1, grid.dim)
    pts = corner[:, None, :] + grid.h * local[None, :, :]
    weight = grid.h**grid.dim / len(local)

    offsets = np.asarray(ops.offsets)
    basis = np.prod(np.where(offsets[None, :, :] == 1, local[:, None, :], 1 - local[:, None, :]), axis=2)
    sample_vals = vals @ basis.T

    def grad(v: np.ndarray) -> np.ndarray:
        g = []
        for a in range(grid.dim):
            hi = offsets[:, a] == 1
            g.append((v[:, hi].mean(axis=1) - v[:, ~hi].mean(axis=1)) / grid.h)
        return np.stack(g, axis=1)

    inside = np.linalg.norm(pts - c, axis=2) <= r
    return pts, inside * weight, grad(vals), grad(np.maximum(vals, 0)), grad(np.maximum(-vals, 0)), sample_vals


def weiss_energy(u: ScalarField | AnalyticField, x, r: float, lambda0: float, mode: WeissMode = "standard") -> float:
    """Weiss energy of u at (x, r).

    ``standard`` scales the bulk by r^-n and the boundary term by r^-(n+1);
    ``paper`` keeps r^-2 and r^-4 as in the two-dimensional formula.
    """
    if r <= 0:
        raise InvalidInputError("r must be positive")
    c = np.atleast_1d(np.asarray(x, dtype=float))
    dim = u.dim if isinstance(u, AnalyticField) else u.grid.dim
    if isinstance(u, AnalyticField):
        pts, w = _polar_nodes(0.0, r)
        g = np.asarray(u.gradient(c + pts))
        bulk = float(np.sum(w * (np.sum(g**2, axis=-1) + lambda0**2 * (np.asarray(u.value(c + pts)) > 0))))
        cp, cw = _circle_nodes(r)
        surface = float(np.sum(cw * np.asarray(u.value(c + cp)) ** 2))
    else:
        pts, w, g, _, _, sv = _cell_samples(u, c, r)
        bulk = float(np.sum(w * (np.sum(g**2, axis=1)[:, None] + lambda0**2 * (sv > 0))))
        if dim == 1:
            vals, _ = interpolate_masked(u, np.array([[c[0] - r], [c[0] + r]]))
            surface = float(np.sum(vals**2))
        else:
            m = max(256, int(8 * math.pi * r / u.grid.h))
            theta = 2 * math.pi * np.arange(m) / m
            vals, _ = interpolate_masked(u, c + r * np.stack([np.cos(theta), np.sin(theta)], axis=1))
            surface = float(np.sum(vals**2) * 2 * math.pi * r / m)
    if mode == "paper":
        return bulk / r**2 - surface / r**4
    return bulk / r**dim - surface / r ** (dim + 1)


def acf_functional(u: ScalarField | AnalyticField, x0, r: float, mode: AcfMode = "n-2") -> float:
    """Alt-Caffarelli-Friedman product (1/r^4) I(u+) I(u-) in the plane.

    ``n-2`` uses the weight |y - x0|^0; ``paper`` uses |y - x0|^-2 and drops a
    small patch around x0 where that weight is not integrable.
    """
    if r <= 0:
        raise InvalidInputError("r must be positive")
    c = np.atleast_1d(np.asarray(x0, dtype=float))
    power = 2.0 if mode == "paper" else 0.0
    if isinstance(u, AnalyticField):
        if u.dim != 2:
            raise InvalidInputError("the ACF monitor is two-dimensional")
        pts, w = _polar_nodes(0.01 * r if mode == "paper" else 0.0, r)
        vals = np.asarray(u.value(c + pts))
        g2 = np.sum(np.asarray(u.gradient(c + pts)) ** 2, axis=-1)
        dist = np.linalg.norm(pts, axis=1)
        weight = w / dist**power if power else w
        plus = float(np.sum(weight * g2 * (vals > 0)))
        minus = float(np.sum(weight * g2 * (vals < 0)))
    else:
        if u.grid.dim != 2:
            raise InvalidInputError("the ACF monitor is two-dimensional")
        pts, w, _, gp, gm, _ = _cell_samples(u, c, r)
        if power:
            dist = np.linalg.norm(pts - c, axis=2)
            patch = np.max(np.abs(pts - c), axis=2) < 1.5 * u.grid.h
            w = np.where(patch, 0.0, w / np.where(dist > 0, dist, 1.0) ** power)
        plus = float(np.sum(w * np.sum(gp**2, axis=1)[:, None]))
        minus = float(np.sum(w * np.sum(gm**2, axis=1)[:, None]))
    return plus * minus / r**4


def monitor_trace(
    u: ScalarField | AnalyticField,
    x0,
    radii: Sequence[float],
    lambda0: float,
    modes: Sequence[str] = ("standard", "paper"),
    kind: Literal["weiss", "acf"] = "weiss",
) -> list[tuple[float, float, str]]:
    """Rows (r, value, mode) for the CSV trace of one monitor."""
    rows = []
    for mode in modes:
        for r in radii:
            if kind == "weiss":
                value = weiss_energy(u, x0, r, lambda0, mode)  # type: ignore[arg-type]
            else:
                value = acf_functional(u, x0, r, mode)  # type: ignore[arg-type]
            rows.append((float(r), value, mode))
    return rows


def flatness_measure(fb: FreeBoundary, x0, r: float) -> float | None:
    """Largest distance of Gamma in B_r(x0) to its total-least-squares line, over r."""
    c = np.atleast_1d(np.asarray(x0, dtype=float))
    if fb.empty:
        return None
    pts = fb.points[np.linalg.norm(fb.points - c, axis=1) <= r]
    if len(pts) < 3:
        return None
    centered = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    normal = vt[-1]
    return float(np.max(np.abs(centered @ normal)) / r)
