from __future__ import annotations

import logging

import numpy as np

from .errors import InvalidInputError
from .grid import operators
from .models import EnergyBreakdown, GridSpec, PhiSpec, Problem, QField, ScalarField
from .phi import bind, phi0_value_and_derivative


logger = logging.getLogger(__name__)


def heaviside(t: np.ndarray, eps: float) -> np.ndarray:
    """Sharp indicator of t > 0 for eps = 0, clamp(t / eps, 0, 1) otherwise."""
    if eps < 0:
        raise InvalidInputError("eps must be >= 0")
    if eps == 0:
        return (t > 0).astype(float)
    return np.clip(t / eps, 0.0, 1.0)


def heaviside_slope(t: np.ndarray, eps: float) -> np.ndarray:
    # right derivative: nodes sitting at 0 feel the full ramp slope
    return np.where((t >= 0) & (t < eps), 1.0 / eps, 0.0)


def _checked(u: ScalarField) -> np.ndarray:
    vals = u.values[u.grid.active]
    if not np.all(np.isfinite(vals)):
        raise InvalidInputError("field has non-finite values")
    return u.filled().ravel()


def dirichlet_energy(u: ScalarField) -> float:
    """Cell quadrature of the Dirichlet integral; exact on affine fields."""
    x = _checked(u)
    return float(x @ (operators(u.grid).laplacian @ x))


def _cell_max(grid: GridSpec, x: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    ops = operators(grid)
    hv = heaviside(x[ops.cell_vertices], eps)
    return hv, hv.max(axis=1)


def weighted_volume_m2(u: ScalarField, q: QField, lambda2: float, eps: float = 0.0) -> float:
    """lambda2 * sum_c |c| Q_c H_eps(max of u over the vertices of c).

    A cell belongs to the positive phase as soon as one of its vertices does.
    """
    if eps < 0:
        raise InvalidInputError("eps must be >= 0")
    x = _checked(u)
    ops = operators(u.grid)
    _, cmax = _cell_max(u.grid, x, eps)
    return float(lambda2 * np.sum(ops.cell_area * ops.cell_q(q) * cmax))


def weighted_volume_m1(m2: float, lambda1: float, lambda2: float, lambda_omega: float, tol: float = 1e-9) -> float:
    top = lambda2 * lambda_omega
    slack = tol * max(1.0, top)
    if m2 < -slack or m2 > top + slack:
        raise InvalidInputError(f"m2={m2} outside [0, {top}]")
    return lambda1 * (lambda_omega - min(max(m2, 0.0), top) / lambda2)


def total_energy(u: ScalarField, q: QField, phi: PhiSpec, eps: float = 0.0) -> EnergyBreakdown:
    ops = operators(u.grid)
    lam_omega = ops.lambda_omega(q)
    phi = phi if phi.lambda_omega is not None else bind(phi, lam_omega)
    d = dirichlet_energy(u)
    m2 = weighted_volume_m2(u, q, phi.lambda2, eps)
    m1 = weighted_volume_m1(m2, phi.lambda1, phi.lambda2, lam_omega)
    vol = phi0_value_and_derivative(phi, m2).value
    return EnergyBreakdown(d, m2, m1, vol, d + vol, eps, lam_omega)


def problem_energy(problem: Problem, u: ScalarField, eps: float = 0.0) -> EnergyBreakdown:
    return total_energy(u, problem.q, problem.phi, eps)


class EnergyModel:
    """Flat-vector energy and gradient of one problem, used by the solvers."""

    def __init__(self, problem: Problem) -> None:
        self.problem = problem
        self.grid = problem.grid
        self.ops = operators(problem.grid)
        self.L = self.ops.laplacian
        self.lambda_omega = self.ops.lambda_omega(problem.q)
        self.phi = problem.phi if problem.phi.lambda_omega is not None else bind(problem.phi, self.lambda_omega)
        self.cell_weight = self.ops.cell_area * self.ops.cell_q(problem.q) * self.phi.lambda2
        # smallest positive M2 step, used to keep Phi0' finite at r = 0
        self.m2_floor = float(self.cell_weight.min()) if self.cell_weight.size else 0.0
        self.kink_hits = 0

    def dirichlet(self, x: np.ndarray) -> float:
        return float(x @ (self.L @ x))

    def m2(self, x: np.ndarray, eps: float) -> float:
        hv = heaviside(x[self.ops.cell_vertices], eps)
        return float(np.sum(self.cell_weight * hv.max(axis=1)))

    def energy(self, x: np.ndarray, eps: float) -> float:
        m2 = self.m2(x, eps)
        return self.dirichlet(x) + phi0_value_and_derivative(self.phi, m2).value

    def energy_and_gradient(self, x: np.ndarray, eps: float) -> tuple[float, float, np.ndarray]:
        Lx = self.L @ x
        verts = self.ops.cell_vertices
        t = x[verts]
        hv = heaviside(t, eps)
        cmax = hv.max(axis=1)
        m2 = float(np.sum(self.cell_weight * cmax))
        v = phi0_value_and_derivative(self.phi, m2)
        dphi = v.derivative
        if v.kink:
            self.kink_hits += 1
        if not np.isfinite(dphi):
            dphi = phi0_value_and_derivative(self.phi, max(m2, self.m2_floor)).derivative
        grad = 2.0 * Lx
        if eps > 0 and dphi != 0.0:
            tie = hv == cmax[:, None]
            contrib = tie * heaviside_slope(t, eps) * self.cell_weight[:, None]
            grad = grad + dphi * np.bincount(verts.ravel(), weights=contrib.ravel(), minlength=x.size)
        return float(x @ Lx) + v.value, m2, grad

    def breakdown(self, u: ScalarField) -> EnergyBreakdown:
        return total_energy(u, self.problem.q, self.phi, 0.0)
