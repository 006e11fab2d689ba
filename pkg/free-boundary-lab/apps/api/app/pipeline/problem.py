from __future__ import annotations

import logging
from typing import Callable

import numpy as np

from ..lab import phi as phis
from ..lab.energy import dirichlet_energy
from ..lab.errors import InvalidInputError
from ..lab.fbgeom import boundary_mass
from ..lab.fieldio import read_field
from ..lab.grid import disk_grid, interval_grid, make_field, rectangle_grid
from ..lab.models import GridSpec, PhiSpec, Problem, QField, ScalarField
from ..lab.solve import make_problem
from ..models import BoundarySection, DomainSection, PhiSection, QSection, ScenarioConfig


logger = logging.getLogger(__name__)

Datum = Callable[[np.ndarray], np.ndarray]


def build_grid(domain: DomainSection) -> GridSpec:
    s, n = domain.size, domain.resolution
    if domain.shape == "interval":
        return interval_grid(s[0], s[1], n)
    if domain.shape == "rectangle":
        return rectangle_grid(s[0], s[1], s[2], s[3], n)
    return disk_grid((s[0], s[1]), s[2], n)


def boundary_function(section: BoundarySection, dim: int) -> Datum:
    """Datum as a callable on coordinates of shape (..., dim)."""
    fam = section.family
    if fam == "saddle" and dim != 2:
        raise InvalidInputError("the saddle datum x1*x2 is two-dimensional")

    def x1(p: np.ndarray) -> np.ndarray:
        return np.asarray(p)[..., 0] - section.offset

    if fam == "linear":
        return lambda p: section.slope * np.asarray(p)[..., 0] + section.offset
    if fam == "saddle":
        return lambda p: np.asarray(p)[..., 0] * np.asarray(p)[..., 1]
    if fam == "one_plane":
        return lambda p: section.alpha * np.maximum(x1(p), 0.0)
    if fam == "two_plane":
        return lambda p: section.alpha * np.maximum(x1(p), 0.0) - section.beta * np.maximum(-x1(p), 0.0)
    if fam == "constant":
        return lambda p: np.full(np.asarray(p).shape[:-1], section.value)
    xs = np.asarray(section.knots[0::2])
    vs = np.asarray(section.knots[1::2])
    order = np.argsort(xs)
    return lambda p: np.interp(np.asarray(p)[..., 0], xs[order], vs[order])


def build_q(section: QSection, grid: GridSpec) -> QField:
    if section.mode == "constant":
        return QField("constant", section.value, lower=section.lower, upper=section.upper)
    field = read_field(section.path)
    if field.grid.shape != grid.shape:
        raise InvalidInputError(f"Q dump shape {field.grid.shape} does not match the grid {grid.shape}")
    values = np.where(grid.active, field.values, np.nan)
    return QField("per-node", values=values, lower=section.lower, upper=section.upper)


def build_phi(section: PhiSection, grid: GridSpec | None = None, datum: Datum | None = None) -> PhiSpec:
    """PhiSpec from a scenario section.

    The saddle family takes its constants from the datum when a disk grid is
    given, and from the unit-disk saddle otherwise.
    """
    fam = section.family
    l1, l2 = section.lambda1, section.lambda2
    if fam == "linear":
        return phis.linear(1.0 if section.lam is None else section.lam, l2)
    if fam == "sum_linear":
        return phis.sum_linear(section.coefficient or 1.0, l1, l2)
    if fam == "power":
        return phis.power(section.coefficient or 1.0, section.p or 0.5, l2)
    if fam == "sum_power":
        return phis.sum_power(section.coefficient or 1.0, section.p or 0.5, l1, l2)
    if fam == "sum_of_powers":
        return phis.sum_of_powers(section.alpha or 0.0, section.beta or 0.0, l1, l2)
    if fam == "nonexistence":
        return phis.nonexistence(l2)
    if fam == "saddle":
        constants = None
        if grid is not None and datum is not None and grid.domain == "disk":
            mass, _ = boundary_mass(grid, datum)
            constants = phis.saddle_constants(mass, dirichlet_energy(make_field(grid, datum)))
        return phis.saddle(constants, lambda2=l2)
    if len(section.knots) < 4 or len(section.knots) % 2:
        raise InvalidInputError("tabulated phi needs (r, value) pairs")
    return phis.tabulated(zip(section.knots[0::2], section.knots[1::2]), l2)


def boundary_field(grid: GridSpec, datum: Datum) -> ScalarField:
    """The datum sampled on every active node; interior values seed the solvers."""
    return make_field(grid, datum)


def build_problem(config: ScenarioConfig) -> Problem:
    grid = build_grid(config.domain)
    datum = boundary_function(config.boundary, grid.dim)
    q = build_q(config.q, grid)
    phi = build_phi(config.phi, grid, datum)
    problem = make_problem(grid, boundary_field(grid, datum), q, phi)
    logger.info(
        "problem: %s grid %s h=%.4g, phi=%s, lambda_omega=%.6g",
        grid.domain, grid.shape, grid.h, phi.family, problem.phi.lambda_omega,
    )
    return problem
