from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve, splu
from scipy.spatial import cKDTree

from .energy import EnergyModel, total_energy
from .errors import ConvergenceError, DomainError, InvalidInputError
from .grid import ball_inside, domain_extent, operators
from .models import (
    GridSpec,
    HistoryEntry,
    MinimizeResult,
    PhiSpec,
    Problem,
    QField,
    ScalarField,
    SolverConfig,
)
from .phi import bind, check_monotonicity, linear, metadata, phi0_value_and_derivative, sum_linear


logger = logging.getLogger(__name__)

DEFAULT_CONFIG = SolverConfig()


def make_problem(grid: GridSpec, boundary: ScalarField, q: QField, phi: PhiSpec) -> Problem:
    """Problem with Phi bound to the grid's weighted measure."""
    if boundary.grid is not grid:
        raise InvalidInputError("boundary datum lives on another grid")
    lam_omega = operators(grid).lambda_omega(q)
    return Problem(grid, boundary, q, bind(phi, lam_omega))


# -- harmonic solves ------------------------------------------------------


def _dirichlet_solve(L: sp.csr_matrix, x: np.ndarray, free: np.ndarray) -> np.ndarray:
    """Minimize x @ L @ x over the entries ``free`` with the others held fixed."""
    out = x.copy()
    if free.size == 0:
        return out
    out[free] = 0.0
    rhs = -(L[free] @ out)
    out[free] = spsolve(L[free][:, free].tocsc(), rhs)
    return out


def _colors(grid: GridSpec) -> np.ndarray:
    idx = np.indices(grid.shape).sum(axis=0)
    return (idx % 2).ravel()


def _sor(grid: GridSpec, L: sp.csr_matrix, x: np.ndarray, free: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, float, int]:
    diag = L.diagonal()
    W = (sp.diags(diag) - L).tocsr()
    colors = _colors(grid)
    red = free[colors[free] == 0]
    black = free[colors[free] == 1]
    parts = [(idx, W[idx], diag[idx]) for idx in (red, black)]
    W_free = W[free]
    omega = 2.0 / (1.0 + math.sin(math.pi / (max(grid.shape) - 1)))
    x = x.copy()
    residual = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        for part, W_part, d_part in parts:
            target = (W_part @ x) / d_part
            x[part] += omega * (target - x[part])
        if it % 10 == 0 or it == max_iter:
            residual = float(np.max(np.abs(x[free] - (W_free @ x) / diag[free]), initial=0.0))
            if residual <= tol:
                break
    return x, residual, it


def harmonic_residual(u: ScalarField, free: np.ndarray | None = None) -> float:
    """Max of |u - weighted neighbor mean| over free nodes (interior by default)."""
    ops = operators(u.grid)
    L = ops.laplacian
    x = u.filled().ravel()
    free = ops.interior_nodes if free is None else free
    if free.size == 0:
        return 0.0
    diag = L.diagonal()[free]
    return float(np.max(np.abs((L[free] @ x) / diag)))


def solve_harmonic(
    grid: GridSpec,
    boundary: ScalarField,
    frozen: np.ndarray | None = None,
    config: SolverConfig | None = None,
) -> ScalarField:
    """Discrete Laplace solution matching ``boundary`` on boundary and frozen nodes."""
    config = config or DEFAULT_CONFIG
    ops = operators(grid)
    x = boundary.filled().ravel().copy()
    free_mask = grid.interior.ravel().copy()
    if frozen is not None:
        free_mask &= ~np.asarray(frozen, dtype=bool).ravel()
    free = np.flatnonzero(free_mask)

    if config.harmonic_method == "direct":
        x = _dirichlet_solve(ops.laplacian, x, free)
    else:
        x[free] = 0.0
        x, residual, iters = _sor(grid, ops.laplacian, x, free, config.gradient_tolerance, config.max_inner_iterations)
        if residual > config.gradient_tolerance:
            logger.warning("SOR stopped after %d sweeps with residual %.3e", iters, residual)
        else:
            logger.debug("SOR converged in %d sweeps (residual %.3e)", iters, residual)
    return boundary.with_values(x.reshape(grid.shape))


def harmonic_replacement(
    u: ScalarField, center, radius: float, config: SolverConfig | None = None
) -> tuple[ScalarField, ScalarField]:
    """(v, w): v harmonic in the ball with the trace of u, w = min(u, v)."""
    grid = u.grid
    if radius <= 0:
        raise InvalidInputError("ball radius must be positive")
    if not ball_inside(grid, center, radius):
        raise DomainError("replacement ball crosses the domain boundary")
    c = np.atleast_1d(np.asarray(center, dtype=float))
    inside = np.linalg.norm(grid.coordinates() - c, axis=-1) < radius - 1e-12
    v = solve_harmonic(grid, u, frozen=~inside, config=config)
    w = u.with_values(np.minimum(u.filled(), v.filled()))
    return v, w


# -- direct minimization --------------------------------------------------


@dataclass
class _Run:
    x: np.ndarray
    history: list[HistoryEntry]
    descent_converged: bool
    polished: bool
    events: list[str]


@dataclass
class _Sharp:
    """A field with its pinned zero set (over free nodes) and sharp energy parts."""

    x: np.ndarray
    zero: np.ndarray
    dirichlet: float
    m2: float
    energy: float


def _tol(energy: float) -> float:
    return 1e-12 * (1.0 + abs(energy))


class _Minimizer:
    def __init__(self, problem: Problem, config: SolverConfig) -> None:
        self.problem = problem
        self.config = config
        self.model = EnergyModel(problem)
        self.grid = problem.grid
        self.free = self.model.ops.interior_nodes
        datum = problem.boundary.values[problem.grid.boundary]
        self.lo = min(0.0, float(datum.min()) if datum.size else 0.0)
        self.hi = max(0.0, float(datum.max()) if datum.size else 0.0)
        self.base = problem.boundary.filled().ravel()
        self._lu = None
        L = self.model.L
        self._step_scale = 1.0 if config.preconditioner == "sobolev" else 1.0 / (2.0 * L.diagonal().max())
        self._pos = np.full(self.grid.size, -1)
        self._pos[self.free] = np.arange(self.free.size)
        self._node_cells: sp.csr_matrix | None = None
        self._adjacency: sp.csr_matrix | None = None
        self._m2_top = self.model.phi.lambda2 * self.model.lambda_omega

    # direction: (2 L_FF)^-1 applied to the gradient with active entries removed
    def _direction(self, g: np.ndarray, moving: np.ndarray) -> np.ndarray:
        gm = np.where(moving, g, 0.0)
        if self.config.preconditioner == "none":
            return gm
        if self._lu is None:
            K = (2.0 * self.model.L[self.free][:, self.free]).tocsc()
            self._lu = splu(K)
        d = self._lu.solve(gm)
        return np.where(moving, d, 0.0)

    def descend(self, x: np.ndarray, eps: float, history: list[HistoryEntry], events: list[str]) -> tuple[np.ndarray, bool]:
        cfg = self.config
        model = self.model
        free = self.free
        E, m2, g = model.energy_and_gradient(x, eps)
        step = cfg.step_init * self._step_scale
        for it in range(cfg.max_outer_iterations):
            xf, gf = x[free], g[free]
            stuck = ((xf <= self.lo) & (gf > 0)) | ((xf >= self.hi) & (gf < 0))
            moving = ~stuck
            if not moving.any():
                return x, True
            d = self._direction(gf, moving)
            if np.max(np.abs(d)) * step <= cfg.gradient_tolerance:
                return x, True

            t = step
            while True:
                xf_new = np.clip(xf - t * d, self.lo, self.hi)
                x_new = x.copy()
                x_new[free] = xf_new
                E_new = model.energy(x_new, eps)
                if E_new <= E + cfg.armijo_constant * min(0.0, float(gf @ (xf_new - xf))):
                    break
                t *= 0.5
                if t < 1e-12 * self._step_scale:
                    msg = f"line search stalled at eps={eps:.3e} iteration {it}"
                    logger.warning(msg)
                    events.append(msg)
                    return x, False

            change = float(np.max(np.abs(xf_new - xf)))
            decrease = E - E_new
            x = x_new
            E, m2, g = model.energy_and_gradient(x, eps)
            history.append(HistoryEntry(len(history), eps, E, m2, t))
            logger.debug("eps=%.3e it=%d E=%.12g m2=%.6g step=%.3e", eps, it, E, m2, t)
            if change <= cfg.gradient_tolerance or decrease <= cfg.energy_tolerance * (1.0 + abs(E)):
                return x, True
            step = min(2.0 * t, cfg.step_init * self._step_scale)
        logger.info("eps=%.3e stage hit max_outer_iterations", eps)
        return x, False

    # -- sharp polish --

    def pinned(self, zero_free: np.ndarray) -> np.ndarray:
        """Dirichlet solve with the masked free nodes pinned to 0."""
        x = self.base.copy()
        x[self.free[zero_free]] = 0.0
        return _dirichlet_solve(self.model.L, x, self.free[~zero_free])

    def _phi0(self, m2: float) -> float:
        return phi0_value_and_derivative(self.model.phi, min(max(m2, 0.0), self._m2_top)).value

    def _sharp(self, x: np.ndarray, zero: np.ndarray) -> _Sharp:
        d = self.model.dirichlet(x)
        m2 = self.model.m2(x, 0.0)
        return _Sharp(x, zero, d, m2, d + self._phi0(m2))

    def _exhaustive(self) -> tuple[float, np.ndarray]:
        """Best field over every zero set of the free nodes."""
        n = self.free.size
        L = self.model.L
        dense = L[self.free][:, self.free].toarray()
        x0 = self.base.copy()
        x0[self.free] = 0.0
        rhs_full = -(L[self.free] @ x0)
        best: tuple[float, np.ndarray] = (math.inf, x0)
        for bits in itertools.product((False, True), repeat=n):
            zero = np.array(bits, dtype=bool)
            keep = ~zero
            x = x0.copy()
            if keep.any():
                x[self.free[keep]] = np.linalg.solve(dense[np.ix_(keep, keep)], rhs_full[keep])
            E = self.model.energy(x, 0.0)
            if E < best[0]:
                best = (E, x)
        return best

    def _incidence(self) -> sp.csr_matrix:
        """Node-by-cell incidence of the quadrature cells."""
        if self._node_cells is None:
            verts = self.model.ops.cell_vertices
            cols = np.repeat(np.arange(verts.shape[0]), verts.shape[1])
            data = np.ones(verts.size)
            self._node_cells = sp.csr_matrix((data, (verts.ravel(), cols)), shape=(self.grid.size, verts.shape[0]))
        return self._node_cells

    def _free_adjacency(self) -> sp.csr_matrix:
        if self._adjacency is None:
            A = self.model.L[self.free][:, self.free].tocsr()
            A.setdiag(0)
            A.eliminate_zeros()
            A.data[:] = 1.0
            self._adjacency = A
        return self._adjacency

    @property
    def _global_moves(self) -> bool:
        return self.free.size <= self.config.polish_global_max_nodes

    def _window(self, nodes: np.ndarray, zero: np.ndarray) -> np.ndarray:
        """Unpinned free nodes within ``polish_window`` cells of ``nodes``; all of them on small grids."""
        if self._global_moves:
            return self.free[~zero]
        shape = self.grid.shape
        idx = np.asarray(np.unravel_index(nodes, shape))
        w = self.config.polish_window
        lo = np.maximum(idx.min(axis=1) - w, 0)
        hi = np.minimum(idx.max(axis=1) + w, np.asarray(shape) - 1)
        box = np.ix_(*[np.arange(a, b + 1) for a, b in zip(lo, hi)])
        k = self._pos[np.ravel_multi_index(tuple(np.broadcast_arrays(*box)), shape).ravel()]
        k = k[k >= 0]
        return self.free[k[~zero[k]]]

    def _move(self, s: _Sharp, pin: np.ndarray, unpin: np.ndarray) -> _Sharp | None:
        """Pin and unpin free nodes, re-solve around them; the new state if J drops.

        Nodes outside the window keep their values, so the trial field is
        admissible and its energy is exact.
        """
        zero = s.zero.copy()
        zero[pin] = True
        zero[unpin] = False
        pinned_nodes = self.free[pin]
        W = self._window(self.free[np.concatenate([pin, unpin])], zero)
        y = s.x.copy()
        y[pinned_nodes] = 0.0
        L = self.model.L
        if W.size:
            y[W] = 0.0
            LW = L[W]
            y[W] = spsolve(LW[:, W].tocsc(), -(LW @ y))
        S = np.union1d(W, pinned_nodes)
        d = y[S] - s.x[S]
        LS = L[S]
        dirichlet = s.dirichlet + float(d @ (2.0 * (LS @ s.x) + LS[:, S] @ d))
        cells = np.unique(self._incidence()[S].indices)
        verts = self.model.ops.cell_vertices[cells]
        before = (s.x[verts] > 0).any(axis=1)
        after = (y[verts] > 0).any(axis=1)
        m2 = s.m2 + float(self.model.cell_weight[cells] @ (after.astype(float) - before))
        energy = dirichlet + self._phi0(m2)
        if energy >= s.energy - _tol(s.energy):
            return None
        return _Sharp(y, zero, dirichlet, m2, energy)

    def _patches(self, members: np.ndarray, radius: int) -> list[np.ndarray]:
        """Groups of free indices within Chebyshev ``radius`` of block-spaced centers."""
        if members.size == 0:
            return []
        if radius == 0:
            return [members[i : i + 1] for i in range(members.size)]
        idx = np.asarray(np.unravel_index(self.free[members], self.grid.shape)).T
        tree = cKDTree(idx)
        _, first = np.unique(idx // radius, axis=0, return_index=True)
        return [members[np.asarray(tree.query_ball_point(idx[i], radius, p=np.inf), dtype=int)] for i in np.sort(first)]

    def _moves(self, s: _Sharp) -> list[tuple[np.ndarray, np.ndarray]]:
        """Front-wide moves, then patch moves from large to small radius."""
        verts = self.model.ops.cell_vertices
        vals = s.x[verts]
        interface = (vals > 0).any(axis=1) & (vals <= 0).any(axis=1)
        nodes = np.unique(verts[interface])
        k = self._pos[nodes]
        keep = (k >= 0) & (s.x[nodes] > 0)
        shrink = k[keep]
        shrink = shrink[~s.zero[shrink]]
        touching = self._free_adjacency() @ (~s.zero).astype(float)
        grow = np.flatnonzero(s.zero & (touching > 0))

        empty = np.zeros(0, dtype=int)
        moves = [(shrink, empty), (empty, grow)]
        for radius in sorted(set(self.config.polish_patch_radii), reverse=True):
            moves += [(p, empty) for p in self._patches(shrink, radius)]
            moves += [(empty, p) for p in self._patches(grow, radius)]
        seen: set[tuple[bytes, bytes]] = set()
        out = []
        for pin, unpin in moves:
            key = (np.sort(pin).tobytes(), np.sort(unpin).tobytes())
            if (pin.size or unpin.size) and key not in seen:
                seen.add(key)
                out.append((pin, unpin))
        return out

    def _local_search(self, s: _Sharp) -> tuple[_Sharp, bool]:
        """Greedy pin/unpin moves near Gamma until a full sweep accepts none."""
        for sweep in range(self.config.polish_max_sweeps):
            accepted = 0
            for pin, unpin in self._moves(s):
                pin = pin[~s.zero[pin] & (s.x[self.free[pin]] > 0)]
                unpin = unpin[s.zero[unpin]]
                if pin.size == 0 and unpin.size == 0:
                    continue
                trial = self._move(s, pin, unpin)
                if trial is not None:
                    s = trial
                    accepted += 1
            if accepted == 0:
                logger.debug("local search settled after %d sweeps", sweep)
                return s, True
            if self._global_moves:
                s = self._sharp(s.x, s.zero)
            else:
                full = self._sharp(self.pinned(s.zero), s.zero)
                s = full if full.energy < s.energy else self._sharp(s.x, s.zero)
            logger.debug("polish sweep %d: %d moves accepted, J=%.12g", sweep, accepted, s.energy)
        logger.info("local search stopped after %d sweeps without settling", self.config.polish_max_sweeps)
        return s, False

    def polish(self, x: np.ndarray, eps: float, history: list[HistoryEntry]) -> tuple[np.ndarray, bool]:
        """Sharp polish of a descent field; True when a settled sharp field replaced it."""
        cfg = self.config
        E0 = self.model.energy(x, 0.0)
        xf = x[self.free]
        candidates: dict[bytes, _Sharp] = {}
        # tau = -1 pins nothing: plain harmonic solve
        for tau in (0.0, 0.25 * eps, 0.5 * eps, eps, -1.0):
            zero = np.abs(xf) <= tau
            key = zero.tobytes()
            if key not in candidates:
                candidates[key] = self._sharp(self.pinned(zero), zero)
        best = min(candidates.values(), key=lambda c: c.energy)

        if self.free.size <= cfg.polish_exhaustive_max_nodes:
            E_ex, x_ex = self._exhaustive()
            settled = True
            if E_ex <= best.energy + _tol(best.energy):
                best = self._sharp(x_ex, x_ex[self.free] == 0)
        else:
            best, settled = self._local_search(best)

        # ties go to the sharp field, which is exact on its zero set
        if best.energy > E0 + _tol(E0):
            return x, False
        if best.energy < E0 - _tol(E0):
            history.append(HistoryEntry(len(history), 0.0, best.energy, best.m2, 0.0))
            logger.info("sharp polish lowered the energy %.12g -> %.12g", E0, best.energy)
        return best.x, settled

    def run(self, x: np.ndarray) -> _Run:
        history: list[HistoryEntry] = []
        events: list[str] = []
        x = x.copy()
        x[self.free] = np.clip(x[self.free], self.lo, self.hi)
        converged = False
        schedule = self.config.schedule(self.grid.h)
        for eps in schedule:
            logger.info("descent stage eps=%.3e", eps)
            x, converged = self.descend(x, eps, history, events)
        polished = False
        if self.config.polish:
            x, polished = self.polish(x, schedule[-1], history)
        if self.model.kink_hits:
            events.append(f"phi0 kink hit {self.model.kink_hits} times; right derivative used")
        return _Run(x, history, converged, polished, events)


def minimize_direct(problem: Problem, config: SolverConfig | None = None, init: ScalarField | None = None) -> MinimizeResult:
    """Projected descent on the eps-smoothed energy, then a sharp polish.

    Non-monotone Phi0 triggers ``config.restarts`` extra random sign-perturbed
    starts; the lowest sharp energy wins and distinct near-ties are returned
    as alternatives.
    """
    config = config or DEFAULT_CONFIG
    grid = problem.grid
    solver = _Minimizer(problem, config)
    start = init if init is not None else solve_harmonic(grid, problem.boundary, config=config)
    x0 = start.filled().ravel()

    runs = [solver.run(x0)]
    report = check_monotonicity(problem.phi, solver.model.lambda_omega)
    if not report.monotone and config.restarts:
        logger.info("phi0 not monotone on %s; %d random restarts", report.violation, config.restarts)
        rng = np.random.default_rng(config.seed)
        for _ in range(config.restarts):
            x = x0.copy()
            xf = x[solver.free]
            flip = rng.random(xf.size) < 0.3
            xf[flip] *= rng.choice([0.0, -1.0], size=int(flip.sum()))
            x[solver.free] = xf
            runs.append(solver.run(x))

    energies = [solver.model.energy(r.x, 0.0) for r in runs]
    best_i = int(np.argmin(energies))
    best = runs[best_i]
    field = problem.boundary.with_values(best.x.reshape(grid.shape))

    alternatives: list[ScalarField] = []
    scale = 10.0 * grid.h * max(problem.boundary.max_abs(), 1e-300)
    for i, r in enumerate(runs):
        if i == best_i or energies[i] > energies[best_i] + 1e-6 * (1.0 + abs(energies[best_i])):
            continue
        if np.max(np.abs(r.x - best.x)) > scale and not any(
            np.max(np.abs(r.x - a.filled().ravel())) <= scale for a in alternatives
        ):
            alternatives.append(problem.boundary.with_values(r.x.reshape(grid.shape)))

    breakdown = total_energy(field, problem.q, problem.phi, 0.0)
    logger.info(
        "minimize_direct: J=%.12g M2=%.6g descent_converged=%s polished=%s",
        breakdown.total,
        breakdown.m2,
        best.descent_converged,
        best.polished,
    )
    return MinimizeResult(
        field,
        breakdown,
        best.history,
        best.descent_converged,
        alternatives=alternatives,
        events=best.events,
        descent_converged=best.descent_converged,
        polished=best.polished,
    )


# -- Alt-Caffarelli and the fixed point -----------------------------------


def _ac_problem(grid: GridSpec, boundary: ScalarField, lam: float, q: QField, lambda1: float, lambda2: float) -> Problem:
    if lam < 0:
        raise InvalidInputError("lambda must be >= 0")
    phi = sum_linear(lam, lambda1, lambda2) if lambda1 > 0 else linear(lam, lambda2)
    return make_problem(grid, boundary, q, phi)


def ac_result(
    grid: GridSpec,
    boundary: ScalarField,
    lam: float,
    q: QField,
    config: SolverConfig | None = None,
    lambda1: float = 0.0,
    lambda2: float = 1.0,
    init: ScalarField | None = None,
) -> MinimizeResult:
    return minimize_direct(_ac_problem(grid, boundary, lam, q, lambda1, lambda2), config, init)


def ac_solve(
    grid: GridSpec,
    boundary: ScalarField,
    lam: float,
    q: QField,
    config: SolverConfig | None = None,
    lambda1: float = 0.0,
    lambda2: float = 1.0,
) -> ScalarField:
    """Minimizer of Dirichlet + lam * M2; with lambda1 > 0 the two-phase
    variant with jump (lambda2 - lambda1) * lam * Q."""
    return ac_result(grid, boundary, lam, q, config, lambda1, lambda2).field


def _phi0_slope(model: EnergyModel, m2: float) -> float:
    d = phi0_value_and_derivative(model.phi, m2).derivative
    if not math.isfinite(d):
        d = phi0_value_and_derivative(model.phi, max(m2, model.m2_floor)).derivative
    return d


def minimize_fixed_point(problem: Problem, config: SolverConfig | None = None) -> MinimizeResult:
    """Damped iteration on lambda = Phi0'(M2(u_lambda)) over linear problems.

    The returned ``lambda_star`` is Phi0' at the volume of the returned
    field; the trace holds the damped iterates.
    """
    config = config or DEFAULT_CONFIG
    model = EnergyModel(problem)
    if not metadata(problem.phi).concave:
        logger.warning("fixed-point solver used with a non-concave phi0 (%s)", problem.phi.family)
    grid, lam2 = problem.grid, problem.phi.lambda2

    harmonic = solve_harmonic(grid, problem.boundary, config=config)
    lam = _phi0_slope(model, total_energy(harmonic, problem.q, problem.phi).m2)
    trace = [lam]
    omega = config.fixed_point_damping
    retried = False
    converged = False
    events: list[str] = []
    result: MinimizeResult | None = None
    init = None

    for k in range(config.max_fixed_point_iterations):
        if not (0.0 < lam < math.inf):
            raise ConvergenceError(f"lambda left (0, inf) at iteration {k}: {lam}", trace)
        result = ac_result(grid, problem.boundary, lam, problem.q, config, lambda2=lam2, init=init)
        init = result.field
        target = _phi0_slope(model, result.breakdown.m2)
        new = (1.0 - omega) * lam + omega * target
        trace.append(new)
        logger.info("fixed point k=%d lambda=%.10g target=%.10g", k, lam, target)
        tol = config.fixed_point_tolerance * max(lam, 1.0)
        if abs(new - lam) <= tol:
            converged = True
            break
        if len(trace) >= 3 and abs(new - trace[-3]) <= tol and not retried:
            omega *= 0.5
            retried = True
            msg = f"period-2 oscillation at iteration {k}; damping halved to {omega}"
            logger.warning(msg)
            events.append(msg)
        lam = new

    assert result is not None
    field = result.field
    breakdown = total_energy(field, problem.q, problem.phi, 0.0)
    lambda_star = _phi0_slope(model, breakdown.m2)
    return MinimizeResult(
        field,
        breakdown,
        result.history,
        converged,
        lambda_star_trace=trace,
        lambda_star=lambda_star,
        events=events + result.events,
    )


# -- minimality check -----------------------------------------------------


@dataclass(frozen=True)
class MinimalityReport:
    min_gap: float
    worst_perturbation: int
    energy: float
    gaps: list[float]


def _bump_centers(grid: GridSpec, rng: np.random.Generator, n: int) -> list[tuple[np.ndarray, float]]:
    h = grid.h
    R = domain_extent(grid)
    out = []
    for _ in range(n):
        rho_max = max(R / 4.0, 4.0 * h)
        rho = rng.uniform(4.0 * h, rho_max) if rho_max > 4.0 * h else 4.0 * h
        reach = rho + 3.0 * h
        if grid.domain == "disk":
            room = grid.radius - reach
            if room <= 0:
                raise InvalidInputError("grid too coarse for compact perturbations")
            ang = rng.uniform(0.0, 2.0 * math.pi)
            rad = room * math.sqrt(rng.uniform()) * (1.0 - 1e-9)
            c = np.asarray(grid.center) + rad * np.array([math.cos(ang), math.sin(ang)])
        else:
            lo = np.asarray(grid.origin) + reach
            hi = np.asarray(grid.upper) - reach
            if np.any(hi < lo):
                raise InvalidInputError("grid too coarse for compact perturbations")
            c = rng.uniform(lo, hi)
        out.append((c, rho))
    return out


def verify_minimality(
    u: ScalarField,
    problem: Problem,
    n_perturbations: int = 200,
    amplitude: float | None = None,
    seed: int = 0,
) -> MinimalityReport:
    """min over smooth compact bumps phi and t in {+-a, +-a/4} of J[u + t phi] - J[u]."""
    grid = problem.grid
    model = EnergyModel(problem)
    x = u.filled().ravel()
    E = model.energy(x, 0.0)
    a = amplitude if amplitude is not None else 0.1 * max(u.max_abs(), 1.0)
    rng = np.random.default_rng(seed)
    coords = grid.coordinates().reshape(-1, grid.dim)
    interior = grid.interior.ravel()
    gaps: list[float] = []
    for c, rho in _bump_centers(grid, rng, n_perturbations):
        s2 = np.sum((coords - c) ** 2, axis=1) / rho**2
        bump = np.where((s2 < 1.0) & interior, (1.0 - s2) ** 2, 0.0)
        gap = min(model.energy(x + t * bump, 0.0) for t in (a, -a, a / 4.0, -a / 4.0)) - E
        gaps.append(float(gap))
    worst = int(np.argmin(gaps)) if gaps else -1
    min_gap = float(gaps[worst]) if gaps else 0.0
    logger.info("minimality: %d bumps, min gap %.3e", len(gaps), min_gap)
    return MinimalityReport(min_gap, worst, float(E), gaps)
