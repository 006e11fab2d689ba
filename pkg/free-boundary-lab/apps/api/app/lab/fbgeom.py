from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage
from scipy.integrate import trapezoid
from scipy.spatial import cKDTree
from skimage import measure

from .energy import total_energy
from .errors import DomainError, InvalidInputError
from .grid import ball_inside, domain_extent, interpolate_masked, node_gradient, operators
from .models import DensityReport, FreeBoundary, GridSpec, PhiSpec, QField, ScalarField
from .phi import LambdaValue, lambda_bernoulli


logger = logging.getLogger(__name__)

SLOPE_OFFSETS = (3.0, 4.0, 5.0, 6.0, 7.0, 8.0)


# --- extraction ---------------------------------------------------------------


def _empty_boundary(dim: int) -> FreeBoundary:
    none = np.zeros(0)
    return FreeBoundary(dim, np.zeros((0, dim)), np.zeros((0, dim)), np.zeros((0, dim)), np.zeros((0, 2), dtype=int), none, none, none)


def _crossings_1d(u: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    grid = u.grid
    x = grid.axes()[0]
    s = u.values
    pts, nrm = [], []
    for i in range(grid.shape[0] - 1):
        a, b = s[i], s[i + 1]
        if a <= 0 < b:
            pts.append(x[i] + grid.h * (-a) / (b - a))
            nrm.append(-1.0)
        elif a > 0 >= b:
            pts.append(x[i] + grid.h * a / (a - b))
            nrm.append(1.0)
    return np.reshape(pts, (-1, 1)), np.reshape(nrm, (-1, 1))


def _contours_2d(u: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    grid = u.grid
    contours = measure.find_contours(u.filled(), level=0.0, mask=grid.active)
    vertices, segments = [], []
    offset = 0
    for c in contours:
        xy = np.asarray(grid.origin) + grid.h * c
        seg = np.stack([np.arange(len(xy) - 1), np.arange(1, len(xy))], axis=1) + offset
        vertices.append(xy)
        segments.append(seg)
        offset += len(xy)
    if not vertices:
        return np.zeros((0, 2)), np.zeros((0, 2), dtype=int)
    vertices = np.concatenate(vertices)
    segments = np.concatenate(segments)
    length = np.linalg.norm(vertices[segments[:, 1]] - vertices[segments[:, 0]], axis=1)
    return vertices, segments[length > 1e-12 * grid.h]


def _normals_2d(u: ScalarField, points: np.ndarray, tangents: np.ndarray) -> np.ndarray:
    grid = u.grid
    perp = np.stack([tangents[:, 1], -tangents[:, 0]], axis=1)
    perp /= np.linalg.norm(perp, axis=1, keepdims=True)
    plus, _ = interpolate_masked(u, points + grid.h * perp)
    minus, _ = interpolate_masked(u, points - grid.h * perp)
    # orient perp toward the positive phase
    flip = np.nan_to_num(minus, nan=-np.inf) > np.nan_to_num(plus, nan=-np.inf)
    inward = np.where(flip[:, None], -perp, perp)

    grad = node_gradient(u)
    ahead = points + grid.h * inward
    g = np.stack(
        [interpolate_masked(ScalarField(grid, np.where(grid.active, grad[..., a], np.nan)), ahead)[0] for a in range(2)],
        axis=1,
    )
    norm = np.linalg.norm(g, axis=1, keepdims=True)
    ok = np.isfinite(norm[:, 0]) & (norm[:, 0] > 1e-12)
    nu = np.where(ok[:, None], -g / np.where(ok[:, None], norm, 1.0), -inward)
    # the gradient must still point into the positive side
    bad = np.sum(nu * inward, axis=1) >= 0
    nu[bad] = -inward[bad]
    return nu


def _fit_slope(t: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Slope at t = 0 of a least-squares quadratic with intercept, one row per point.

    NaN samples are dropped; rows with fewer than three samples give NaN.
    """
    s = t / t.max()
    ok = np.isfinite(values)
    v = np.where(ok, values, 0.0)
    basis = np.stack([np.ones_like(s), s, s**2], axis=1)
    w = ok.astype(float)
    A = np.einsum("pk,ki,kj->pij", w, basis, basis)
    rhs = np.einsum("pk,ki,pk->pi", w, basis, v)
    enough = ok.sum(axis=1) >= 3
    out = np.full(len(values), np.nan)
    if enough.any():
        coef = np.linalg.solve(A[enough], rhs[enough][..., None])[..., 0]
        out[enough] = coef[:, 1] / t.max()
    return out


def _slopes(u: ScalarField, points: np.ndarray, normals: np.ndarray, offsets: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """One-sided slopes of u at Gamma points.

    alpha is the growth of u going against the normal, beta the growth of
    -u going along it. The intercept of the fit absorbs the sub-cell offset
    between a sampled Gamma point and the zero of the field's profile.
    """
    t = np.asarray(offsets, dtype=float)
    m = len(points)
    inside = (points[:, None, :] - t[None, :, None] * normals[:, None, :]).reshape(-1, u.grid.dim)
    outside = (points[:, None, :] + t[None, :, None] * normals[:, None, :]).reshape(-1, u.grid.dim)
    vin, _ = interpolate_masked(u, inside)
    vout, _ = interpolate_masked(u, outside)
    alpha = _fit_slope(t, vin.reshape(m, -1))
    beta = -_fit_slope(t, vout.reshape(m, -1))
    return alpha, beta


def extract_free_boundary(u: ScalarField, offsets: Sequence[float] | None = None) -> FreeBoundary:
    """Sample Gamma = boundary of {u > 0} with unit normals into {u <= 0}.

    Slopes are fitted at ``offsets`` (default 3 to 8 spacings) along the
    normal on either side.
    """
    grid = u.grid
    offsets = [grid.h * k for k in SLOPE_OFFSETS] if offsets is None else list(offsets)
    if grid.dim == 1:
        points, normals = _crossings_1d(u)
        if len(points) == 0:
            return _empty_boundary(1)
        vertices, segments = points.copy(), np.zeros((0, 2), dtype=int)
    else:
        vertices, segments = _contours_2d(u)
        if len(segments) == 0:
            return _empty_boundary(2)
        a, b = vertices[segments[:, 0]], vertices[segments[:, 1]]
        points = 0.5 * (a + b)
        normals = _normals_2d(u, points, b - a)

    alpha, beta = _slopes(u, points, normals, offsets)
    residual = np.full(len(points), np.nan)
    logger.debug("free boundary: %d samples", len(points))
    return FreeBoundary(grid.dim, points, normals, vertices, segments, alpha, beta, residual)


def one_sided_slopes(u: ScalarField, point, normal, offsets: Sequence[float] | None = None) -> tuple[float | None, float | None]:
    """alpha and beta at one Gamma point; None for a side with fewer than three samples in the domain."""
    grid = u.grid
    offsets = [grid.h * k for k in SLOPE_OFFSETS] if offsets is None else list(offsets)
    p = np.reshape(np.asarray(point, dtype=float), (1, grid.dim))
    n = np.reshape(np.asarray(normal, dtype=float), (1, grid.dim))
    if not np.isclose(np.linalg.norm(n), 1.0):
        raise InvalidInputError("normal must be a unit vector")
    alpha, beta = _slopes(u, p, n, offsets)
    a, b = float(alpha[0]), float(beta[0])
    return (a if np.isfinite(a) else None), (b if np.isfinite(b) else None)


# --- Bernoulli condition --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BernoulliReport:
    median: float
    p90: float
    lam: LambdaValue
    residuals: np.ndarray
    free_boundary: FreeBoundary
    samples: int


def _jump_residual(jump: np.ndarray, lam: LambdaValue, scale: float) -> np.ndarray:
    below = np.maximum(lam.low - jump, 0.0)
    above = np.maximum(jump - lam.high, 0.0)
    return (below + above) / scale


def _q_at_points(grid: GridSpec, q: QField, points: np.ndarray) -> np.ndarray:
    """Q interpolated at each point, falling back to the nearest active node off the domain."""
    if q.mode == "constant":
        return np.full(len(points), float(q.value))
    qf = ScalarField(grid, np.where(grid.active, q.values, np.nan))
    vals, valid = interpolate_masked(qf, points)
    if not np.all(valid):
        flat = np.flatnonzero(grid.active.ravel())
        coords = grid.coordinates().reshape(-1, grid.dim)[flat]
        _, near = cKDTree(coords).query(points[~valid])
        vals[~valid] = qf.values.ravel()[flat[near]]
    return vals


def bernoulli_residuals(u: ScalarField, fb: FreeBoundary, phi: PhiSpec, q: QField) -> BernoulliReport:
    """Relative miss of alpha^2 - beta^2 against Lambda at every sampled point.

    At a kink of Phi0 any jump inside the one-sided interval counts as exact.
    """
    breakdown = total_energy(u, q, phi)
    alpha, beta = fb.alpha, fb.beta
    residual = np.full(len(fb), np.nan)
    q_pts = _q_at_points(u.grid, q, fb.points) if len(fb) else np.ones(1)
    lam = lambda_bernoulli(phi, breakdown.m1, breakdown.m2, float(q_pts[0]))
    ok = np.isfinite(alpha) & np.isfinite(beta)
    if q.mode == "constant":
        scale = max(lam.value, 1.0)
        residual[ok] = _jump_residual(alpha[ok] ** 2 - beta[ok] ** 2, lam, scale)
    else:
        for k in np.flatnonzero(ok):
            lam_k = lambda_bernoulli(phi, breakdown.m1, breakdown.m2, float(q_pts[k]))
            residual[k] = _jump_residual(np.array([alpha[k] ** 2 - beta[k] ** 2]), lam_k, max(lam_k.value, 1.0))[0]

    finite = residual[np.isfinite(residual)]
    median = float(np.median(finite)) if finite.size else math.nan
    p90 = float(np.percentile(finite, 90)) if finite.size else math.nan
    logger.info("bernoulli: %d samples, median %.3g, p90 %.3g", finite.size, median, p90)
    return BernoulliReport(median, p90, lam, residual, replace(fb, residual=residual), int(finite.size))


# --- sampling helpers ------------------------------------------------------------


def dyadic_radii(grid: GridSpec, r_max: float | None = None, r_min: float | None = None) -> list[float]:
    """Radii 4h, 8h, ... up to r_max (half the domain extent by default)."""
    r_max = 0.5 * domain_extent(grid) if r_max is None else r_max
    r = 4.0 * grid.h if r_min is None else r_min
    radii = []
    while r <= r_max + 1e-12:
        radii.append(r)
        r *= 2.0
    return radii


def sample_centers(fb: FreeBoundary, max_centers: int = 256, seed: int = 0) -> np.ndarray:
    """Deterministic strided subset of the Gamma samples."""
    if fb.empty:
        return np.zeros((0, fb.dim))
    stride = max(1, math.ceil(len(fb) / max_centers))
    start = int(np.random.default_rng(seed).integers(stride))
    return fb.points[start::stride]


class _NodeIndex:
    """KD-tree over the active nodes of one field."""

    def __init__(self, u: ScalarField) -> None:
        grid = u.grid
        self.grid = grid
        self.flat = np.flatnonzero(grid.active.ravel())
        self.coords = grid.coordinates().reshape(-1, grid.dim)[self.flat]
        self.values = u.values.ravel()[self.flat]
        self.tree = cKDTree(self.coords)

    def ball(self, center, r: float) -> np.ndarray:
        idx = self.tree.query_ball_point(np.atleast_1d(center), r + 1e-12)
        return np.asarray(idx, dtype=int)


# --- regularity and density monitors -------------------------------------------------


@dataclass(frozen=True)
class SubharmonicityReport:
    defect: float
    center: tuple[float, ...] | None
    radius: float | None
    samples: int


def subharmonicity_defect(
    u: ScalarField, n_samples: int = 256, radii: Sequence[float] | None = None, seed: int = 0
) -> SubharmonicityReport:
    """max over sampled balls of u(x) - mean of u over the lattice nodes in B_r(x)."""
    grid = u.grid
    radii = [2.0 * grid.h, 4.0 * grid.h, 8.0 * grid.h] if radii is None else list(radii)
    rng = np.random.default_rng(seed)
    coords = grid.coordinates()
    vals = u.filled()
    worst = (-math.inf, None, None)
    count = 0
    for r in radii:
        k = int(math.floor(r / grid.h + 1e-9))
        ranges = [range(-k, k + 1)] * grid.dim
        offs = np.array(np.meshgrid(*ranges, indexing="ij")).reshape(grid.dim, -1).T
        offs = offs[np.linalg.norm(offs, axis=1) * grid.h <= r + 1e-12]
        eligible = [
            idx for idx in zip(*np.nonzero(grid.active))
            if ball_inside(grid, coords[idx], r)
        ]
        if not eligible:
            continue
        pick = rng.choice(len(eligible), size=min(n_samples, len(eligible)), replace=False)
        centers = np.asarray(eligible)[pick]
        nb = centers[:, None, :] + offs[None, :, :]
        means = vals[tuple(np.moveaxis(nb, -1, 0))].mean(axis=1)
        defect = vals[tuple(centers.T)] - means
        j = int(np.argmax(defect))
        count += len(centers)
        if defect[j] > worst[0]:
            worst = (float(defect[j]), tuple(float(c) for c in coords[tuple(centers[j])]), r)
    if count == 0:
        return SubharmonicityReport(math.nan, None, None, 0)
    return SubharmonicityReport(worst[0], worst[1], worst[2], count)


@dataclass(frozen=True)
class ScanReport:
    radii: list[float]
    minimum: list[float]
    samples: list[int]

    @property
    def overall(self) -> float:
        finite = [m for m in self.minimum if np.isfinite(m)]
        return min(finite) if finite else math.nan


def nondegeneracy_scan(
    u: ScalarField, fb: FreeBoundary, radii: Sequence[float] | None = None, max_centers: int = 256
) -> ScanReport:
    """min over centers on Gamma of (1/r^2) * mean of u^2 over {u > 0} in B_r."""
    grid = u.grid
    radii = dyadic_radii(grid) if radii is None else list(radii)
    index = _NodeIndex(u)
    centers = sample_centers(fb, max_centers)
    minimum, samples = [], []
    for r in radii:
        ratios = []
        for p in centers:
            if not ball_inside(grid, p, r):
                continue
            v = index.values[index.ball(p, r)]
            v = v[v > 0]
            if v.size:
                ratios.append(float(np.mean(v**2)) / r**2)
        minimum.append(min(ratios) if ratios else math.nan)
        samples.append(len(ratios))
    return ScanReport(list(radii), minimum, samples)


@dataclass(frozen=True)
class CleanBallReport:
    radii: list[float]
    c1: list[float]
    volume_fraction: list[float]
    samples: list[int]

    @property
    def overall(self) -> float:
        finite = [m for m in self.c1 if np.isfinite(m)]
        return min(finite) if finite else math.nan


def _positive_distance(u: ScalarField) -> np.ndarray:
    """Distance from each node of {u > 0} to the nearest node outside it."""
    positive = (u.filled() > 0) & u.grid.active
    padded = np.pad(positive, 1, constant_values=False)
    dist = ndimage.distance_transform_edt(padded)
    core = tuple(slice(1, -1) for _ in range(u.grid.dim))
    return dist[core] * u.grid.h


def clean_ball_scan(
    u: ScalarField, fb: FreeBoundary, radii: Sequence[float] | None = None, max_centers: int = 256
) -> CleanBallReport:
    """Largest ball inside {u > 0} within B_r(x0), relative to r, per radius."""
    grid = u.grid
    radii = dyadic_radii(grid) if radii is None else list(radii)
    index = _NodeIndex(u)
    dist = _positive_distance(u).ravel()[index.flat]
    centers = sample_centers(fb, max_centers)
    c1s, fractions, samples = [], [], []
    for r in radii:
        best, frac = [], []
        for p in centers:
            if not ball_inside(grid, p, r):
                continue
            idx = index.ball(p, r)
            if idx.size == 0:
                continue
            reach = r - np.linalg.norm(index.coords[idx] - p, axis=1)
            best.append(float(np.clip(np.max(np.minimum(dist[idx], reach)) / r, 0.0, 1.0)))
            frac.append(float(np.mean(index.values[idx] > 0)))
        c1s.append(min(best) if best else math.nan)
        fractions.append(min(frac) if frac else math.nan)
        samples.append(len(best))
    return CleanBallReport(list(radii), c1s, fractions, samples)


@dataclass(frozen=True)
class GrowthReport:
    c_sup: float
    c_inf: float
    samples: int


def _gamma_cloud(fb: FreeBoundary) -> np.ndarray:
    if fb.dim == 1:
        return fb.points
    return np.concatenate([fb.vertices, fb.points])


def growth_bounds(
    u: ScalarField, fb: FreeBoundary, min_distance: float | None = None, max_distance: float | None = None
) -> GrowthReport:
    """Extremes of u(y) / dist(y, Gamma) over positive nodes at least 2h from Gamma."""
    grid = u.grid
    if fb.empty:
        return GrowthReport(math.nan, math.nan, 0)
    min_distance = 2.0 * grid.h if min_distance is None else min_distance
    index = _NodeIndex(u)
    pos = index.values > 0
    d, _ = cKDTree(_gamma_cloud(fb)).query(index.coords[pos])
    v = index.values[pos]
    keep = d >= min_distance
    if max_distance is not None:
        keep &= d <= max_distance
    if not np.any(keep):
        return GrowthReport(math.nan, math.nan, 0)
    ratio = v[keep] / d[keep]
    return GrowthReport(float(ratio.max()), float(ratio.min()), int(keep.sum()))


@dataclass(frozen=True)
class MeasureReport:
    """Mass of Delta u+ on a ball, three ways."""

    bulk: float
    flux: float
    upper: float
    scale: float


def _gradient_field(u: ScalarField, values: np.ndarray) -> list[ScalarField]:
    grid = u.grid
    g = node_gradient(u.with_values(values))
    return [ScalarField(grid, np.where(grid.active, g[..., a], np.nan)) for a in range(grid.dim)]


def delta_uplus_measure(u: ScalarField, center, r: float) -> MeasureReport:
    """Delta u+ (B_r) by summing the discrete Laplacian and by the boundary flux.

    ``upper`` is (1/r) * integral of |grad u+| over B_2r and ``scale`` is
    r^(n-1), the order of the lower bound.
    """
    grid = u.grid
    c = np.atleast_1d(np.asarray(center, dtype=float))
    if not ball_inside(grid, c, 2.0 * r):
        raise DomainError("B_2r must lie inside the domain")
    up = np.maximum(u.filled(), 0.0)
    ops = operators(grid)
    lap = -(ops.laplacian @ up.ravel())
    index = _NodeIndex(u)
    bulk = float(np.sum(lap[index.flat[index.ball(c, r)]]))

    grads = _gradient_field(u, up)
    if grid.dim == 1:
        right = interpolate_masked(grads[0], c + r)[0][0]
        left = interpolate_masked(grads[0], c - r)[0][0]
        flux = float(right - left)
    else:
        m = max(64, int(8 * math.pi * r / grid.h))
        theta = 2 * math.pi * np.arange(m) / m
        normal = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        pts = c + r * normal
        gx = interpolate_masked(grads[0], pts)[0]
        gy = interpolate_masked(grads[1], pts)[0]
        flux = float(np.sum(gx * normal[:, 0] + gy * normal[:, 1]) * 2 * math.pi * r / m)

    gnorm = np.linalg.norm(np.stack([g.filled() for g in grads], axis=-1), axis=-1).ravel()
    upper = float(np.sum(gnorm[index.flat[index.ball(c, 2.0 * r)]]) * grid.h**grid.dim / r)
    return MeasureReport(bulk, flux, upper, r ** (grid.dim - 1))


def perimeter_estimate(fb: FreeBoundary, center, radius: float) -> float:
    """H^{n-1}(Gamma in B_r): segment lengths in 2D, point count in 1D."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    if fb.empty:
        return 0.0
    inside = np.linalg.norm(fb.points - c, axis=1) <= radius
    if fb.dim == 1:
        return float(np.sum(inside))
    a, b = fb.vertices[fb.segments[:, 0]], fb.vertices[fb.segments[:, 1]]
    return float(np.sum(np.linalg.norm(b - a, axis=1)[inside]))


@dataclass(frozen=True)
class PhaseSeparationReport:
    separated: bool
    flagged: int
    worst: tuple[float, ...] | None


def phase_separation_check(u: ScalarField, zero_tol: float = 0.0) -> PhaseSeparationReport:
    """Flag zero nodes touching {u < 0} with no positive node within two cells.

    Such nodes lie on the boundary of {u < 0} but away from Gamma.
    """
    grid = u.grid
    vals = u.filled()
    active = grid.active
    neg = (vals < -zero_tol) & active
    pos = (vals > zero_tol) & active
    zero = (np.abs(vals) <= zero_tol) & active
    cross = ndimage.generate_binary_structure(grid.dim, 1)
    near_neg = ndimage.binary_dilation(neg, structure=cross)
    near_pos = ndimage.maximum_filter(pos.astype(np.uint8), size=5, mode="constant") > 0
    flagged = zero & near_neg & ~near_pos
    if not np.any(flagged):
        return PhaseSeparationReport(True, 0, None)
    far = ndimage.distance_transform_edt(~pos) if np.any(pos) else np.ones(grid.shape)
    far = np.where(flagged, far, -1.0)
    idx = np.unravel_index(int(np.argmax(far)), grid.shape)
    worst = tuple(float(x) for x in grid.coordinates()[idx])
    logger.info("phase separation: %d flagged nodes, worst at %s", int(flagged.sum()), worst)
    return PhaseSeparationReport(False, int(flagged.sum()), worst)


def degeneracy_indicator(u: ScalarField, x0, radii: Sequence[float]) -> list[tuple[float, float]]:
    """(r, mean of u- over B_r(x0) divided by r) for each radius."""
    grid = u.grid
    c = np.atleast_1d(np.asarray(x0, dtype=float))
    index = _NodeIndex(u)
    out = []
    for r in radii:
        if not ball_inside(grid, c, r):
            raise DomainError(f"B_{r}({tuple(c)}) leaves the domain")
        v = index.values[index.ball(c, r)]
        out.append((float(r), float(np.mean(np.maximum(-v, 0.0))) / r))
    return out


def spherical_mean_growth(u: ScalarField, fb: FreeBoundary, radii: Sequence[float] | None = None, max_centers: int = 64) -> float:
    """max over Gamma centers and radii of |r^(1-n) * integral of u over the sphere| / r."""
    grid = u.grid
    radii = dyadic_radii(grid) if radii is None else list(radii)
    worst = 0.0
    for p in sample_centers(fb, max_centers):
        for r in radii:
            if not ball_inside(grid, p, r):
                continue
            if grid.dim == 1:
                vals, ok = interpolate_masked(u, np.array([[p[0] - r], [p[0] + r]]))
                integral = float(np.sum(vals))
            else:
                m = max(64, int(8 * math.pi * r / grid.h))
                theta = 2 * math.pi * np.arange(m) / m
                vals, ok = interpolate_masked(u, p + r * np.stack([np.cos(theta), np.sin(theta)], axis=1))
                integral = float(np.mean(vals)) * 2 * math.pi * r
            if np.all(ok):
                worst = max(worst, abs(integral * r ** (1 - grid.dim)) / r)
    return worst


def positive_phase_harmonicity(u: ScalarField) -> float:
    """Largest relative discrete Laplacian at interior nodes deep in {u > 0}."""
    grid = u.grid
    vals = u.filled()
    pos = (vals > 0) & grid.interior
    cross = ndimage.generate_binary_structure(grid.dim, 1)
    deep = ndimage.binary_erosion(pos, structure=cross) & grid.interior
    if not np.any(deep):
        return 0.0
    L = operators(grid).laplacian
    diag = L.diagonal()
    residual = np.abs(L @ vals.ravel()) / np.where(diag > 0, diag, 1.0)
    scale = max(u.max_abs(), 1e-300)
    return float(residual[deep.ravel()].max() / scale)


def boundary_mass(grid: GridSpec, datum: Callable[[np.ndarray], np.ndarray], n_points: int = 4096) -> tuple[float, float]:
    """(integral of datum+ over the domain boundary, sup of datum+)."""
    if grid.dim == 1:
        ends = np.array([[grid.origin[0]], [grid.upper[0]]])
        v = np.maximum(np.asarray(datum(ends), dtype=float).ravel(), 0.0)
        return float(v.sum()), float(v.max())
    if grid.domain == "disk":
        theta = 2 * math.pi * np.arange(n_points) / n_points
        pts = np.asarray(grid.center) + grid.radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        v = np.maximum(np.asarray(datum(pts), dtype=float).ravel(), 0.0)
        return float(v.mean() * 2 * math.pi * grid.radius), float(v.max())
    (x0, y0), (x1, y1) = grid.origin, grid.upper
    total, sup = 0.0, 0.0
    corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    for a, b in zip(corners, corners[1:] + corners[:1]):
        s = np.linspace(0.0, 1.0, n_points // 4 + 1)
        pts = np.asarray(a) + s[:, None] * (np.asarray(b) - np.asarray(a))
        v = np.maximum(np.asarray(datum(pts), dtype=float).ravel(), 0.0)
        total += float(trapezoid(v, s)) * math.dist(a, b)
        sup = max(sup, float(v.max()))
    return total, sup


def varpi_lower_bound(boundary_mass_value: float, datum_sup: float, energy_bound: float, trace_constant: float) -> float:
    """Lower bound for the measure of {u > 0} of any minimizer.

    (int ubar+)^2 / (C (C J[ubar] + 2 sup ubar+ int ubar+)); zero when the
    datum has no positive mass on the boundary.
    """
    if boundary_mass_value < 0 or datum_sup < 0 or energy_bound < 0 or trace_constant <= 0:
        raise InvalidInputError("varpi inputs must be non-negative and the trace constant positive")
    if boundary_mass_value == 0:
        return 0.0
    c = trace_constant
    return boundary_mass_value**2 / (c * (c * energy_bound + 2.0 * datum_sup * boundary_mass_value))


def trace_constant(grid: GridSpec) -> float:
    """C with int_bdry |v| <= C (int |grad v| + int |v|) on the grid's domain.

    Divergence theorem with the field (x - c)/rho, rho the inradius about the
    center c: C = max(dim, R)/rho with R the circumradius.
    """
    if grid.domain == "disk":
        return max(float(grid.dim), grid.radius) / grid.radius
    half = 0.5 * (np.asarray(grid.upper, dtype=float) - np.asarray(grid.origin, dtype=float))
    rho = float(half.min())
    return max(float(grid.dim), float(np.linalg.norm(half))) / rho


def density_report(u: ScalarField, fb: FreeBoundary, radii: Sequence[float] | None = None) -> DensityReport:
    radii = dyadic_radii(u.grid) if radii is None else list(radii)
    nd = nondegeneracy_scan(u, fb, radii)
    cb = clean_ball_scan(u, fb, radii)
    growth = growth_bounds(u, fb)
    return DensityReport(list(radii), cb.volume_fraction, nd.minimum, cb.c1, growth.c_sup, growth.c_inf)
