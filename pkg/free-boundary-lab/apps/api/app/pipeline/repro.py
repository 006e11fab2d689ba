from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from ..lab import phi as phis
from ..lab.blowup import flatness_measure
from ..lab.energy import dirichlet_energy, total_energy
from ..lab.errors import InvalidInputError
from ..lab.fbgeom import boundary_mass, extract_free_boundary
from ..lab.fieldio import (
    NONEXISTENCE_HEADER,
    ORACLE_CHECK_HEADER,
    SADDLE_HEADER,
    csv_text,
    dumps_field,
    oracle_csv,
)
from ..lab.grid import disk_grid, interval_grid, make_field, operators, rectangle_grid
from ..lab.models import PhiSpec, Problem, QField, SolverConfig
from ..lab.oracle import oracle_minimize_1d, oracle_minimize_2d_tiny
from ..lab.solve import minimize_direct, make_problem, verify_minimality
from ..models import Oracle1DRequest
from .problem import build_phi


logger = logging.getLogger(__name__)

ORACLE_TOLERANCE = 1e-6


# -- non-existence ----------------------------------------------------------


def nonexistence_analytic(h: float) -> float:
    """Energy of the competitor pinned to zero on [0, h]."""
    return 1.0 / (1.0 - h) + (3.0 + 2.0 * h) / 8.0


@dataclass(frozen=True)
class NonexistenceRow:
    h: float
    energy: float
    analytic: float
    zero_measure: float


def repro_nonexistence(resolutions: Sequence[int] = (8, 16, 32, 64), config: SolverConfig | None = None) -> List[NonexistenceRow]:
    """Minimize the 1D non-existence problem (u(0)=0, u(1)=1) at h = 1/N.

    The infimum 11/8 is not attained; the discrete minimizers keep a zero
    set of one cell that shrinks with h.
    """
    if any(n < 8 for n in resolutions):
        raise InvalidInputError("non-existence resolutions must be >= 8")
    rows = []
    for n in resolutions:
        grid = interval_grid(0.0, 1.0, int(n))
        problem = make_problem(grid, make_field(grid, lambda p: p[..., 0]), QField(), phis.nonexistence())
        result = minimize_direct(problem, config)
        zero = operators(grid).measure() - result.breakdown.m2
        rows.append(NonexistenceRow(grid.h, result.breakdown.total, nonexistence_analytic(grid.h), zero))
        logger.info("non-existence h=%.5g: J=%.10g analytic=%.10g", grid.h, rows[-1].energy, rows[-1].analytic)
    return rows


def nonexistence_csv(rows: Sequence[NonexistenceRow]) -> str:
    return csv_text(NONEXISTENCE_HEADER, ((r.h, r.energy, r.analytic, r.zero_measure) for r in rows))


# -- saddle -----------------------------------------------------------------


def saddle_datum(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p)
    return p[..., 0] * p[..., 1]


@dataclass(frozen=True)
class SaddleReport:
    energy: float
    expected: float
    dirichlet: float
    m2: float
    c1: float
    min_gap: float
    n_perturbations: int
    flatness: List[tuple[float, float | None]]
    knots: tuple[tuple[float, float], ...]

    @property
    def energy_error(self) -> float:
        return abs(self.energy - self.expected) / self.expected

    @property
    def minimal(self) -> bool:
        return self.min_gap >= -1e-6 * abs(self.energy)


def saddle_problem(resolution: int = 128) -> Problem:
    grid = disk_grid((0.0, 0.0), 1.0, resolution)
    u = make_field(grid, saddle_datum)
    mass, _ = boundary_mass(grid, saddle_datum)
    spec = phis.saddle(phis.saddle_constants(mass, dirichlet_energy(u)))
    return make_problem(grid, u, QField(), spec)


def repro_saddle(
    resolution: int = 128,
    n_perturbations: int = 200,
    radii: Sequence[float] = (0.1, 0.2, 0.4),
    seed: int = 0,
) -> SaddleReport:
    """Check that x1*x2 minimizes the saddle energy on the unit disk and that
    its free boundary keeps the corner of the cross at the origin."""
    problem = saddle_problem(resolution)
    u = problem.boundary
    b = total_energy(u, problem.q, problem.phi)
    mass, _ = boundary_mass(problem.grid, saddle_datum)
    minimality = verify_minimality(u, problem, n_perturbations, seed=seed)
    fb = extract_free_boundary(u)
    flat = [(float(r), flatness_measure(fb, (0.0, 0.0), r)) for r in radii]
    report = SaddleReport(
        b.total, math.pi / 2 + 1.0, b.dirichlet, b.m2, mass, minimality.min_gap, len(minimality.gaps), flat, problem.phi.knots
    )
    logger.info("saddle: J=%.8g (expected %.8g) c1=%.6g min gap %.3e", report.energy, report.expected, mass, minimality.min_gap)
    return report


def saddle_files(report: SaddleReport) -> Dict[str, str]:
    summary = {
        "energy": report.energy,
        "expected": report.expected,
        "energy_error": report.energy_error,
        "dirichlet": report.dirichlet,
        "m2": report.m2,
        "c1": report.c1,
        "min_gap": report.min_gap,
        "n_perturbations": report.n_perturbations,
        "minimal": report.minimal,
        "knots": [list(k) for k in report.knots],
    }
    return {
        "saddle.json": json.dumps(summary, indent=2),
        "flatness.csv": csv_text(SADDLE_HEADER, report.flatness),
    }


# -- oracle cross-check ----------------------------------------------------------


@dataclass(frozen=True)
class OracleCase:
    case: int
    dim: int
    family: str
    direct: float
    oracle: float

    @property
    def gap(self) -> float:
        return abs(self.direct - self.oracle)

    @property
    def ok(self) -> bool:
        return self.gap <= ORACLE_TOLERANCE


def _random_phi(rng: np.random.Generator) -> PhiSpec:
    if rng.random() < 0.5:
        return phis.linear(float(rng.uniform(0.5, 8.0)))
    return phis.power(float(rng.uniform(0.5, 4.0)), float(rng.uniform(0.3, 1.0)))


def oracle_check(n_cases: int = 20, seed: int = 0, config: SolverConfig | None = None) -> List[OracleCase]:
    """Direct minimizer against exhaustive enumeration on tiny problems.

    1D cases use 3..9 interior nodes with random linear data; the final case
    is a 3x3-interior square with bilinear data.
    """
    rng = np.random.default_rng(seed)
    cases: List[OracleCase] = []
    for k in range(n_cases):
        cells = int(rng.integers(4, 11))
        grid = interval_grid(0.0, 1.0, cells)
        a, b = float(rng.uniform(-1.0, 0.5)), float(rng.uniform(0.2, 1.5))
        problem = make_problem(grid, make_field(grid, lambda p, a=a, b=b: a + (b - a) * p[..., 0]), QField(), _random_phi(rng))
        direct = minimize_direct(problem, config).breakdown.total
        oracle = oracle_minimize_1d(problem, record=False).energy
        cases.append(OracleCase(k, 1, problem.phi.family, direct, oracle))

    grid = rectangle_grid(0.0, 1.0, 0.0, 1.0, 4)
    coef = rng.uniform(-1.0, 1.0, size=4)
    data = make_field(grid, lambda p: coef[0] + coef[1] * p[..., 0] + coef[2] * p[..., 1] + coef[3] * p[..., 0] * p[..., 1])
    problem = make_problem(grid, data, QField(), _random_phi(rng))
    direct = minimize_direct(problem, config).breakdown.total
    oracle = oracle_minimize_2d_tiny(problem, record=False).energy
    cases.append(OracleCase(n_cases, 2, problem.phi.family, direct, oracle))

    bad = [c.case for c in cases if not c.ok]
    if bad:
        logger.warning("oracle mismatch in cases %s", bad)
    return cases


def oracle_check_csv(cases: Sequence[OracleCase]) -> str:
    rows = ((c.case, c.dim, c.family, c.direct, c.oracle, c.gap, "pass" if c.ok else "fail") for c in cases)
    return csv_text(ORACLE_CHECK_HEADER, rows)


@dataclass(frozen=True)
class Oracle1DReport:
    energy: float
    pattern: str
    direct: float | None
    files: Dict[str, str] = field(default_factory=dict)


def oracle_1d(request: Oracle1DRequest, config: SolverConfig | None = None) -> Oracle1DReport:
    """Enumerate one 1D problem on [0, 1] with linear boundary data."""
    grid = interval_grid(0.0, 1.0, request.interior_nodes + 1)
    left, right = request.left, request.right
    data = make_field(grid, lambda p: left + (right - left) * p[..., 0])
    problem = make_problem(grid, data, QField(), build_phi(request.phi))
    result = oracle_minimize_1d(problem)
    direct = minimize_direct(problem, config).breakdown.total if request.compare_direct else None
    files = {"oracle.csv": oracle_csv(result.rows), "field.txt": dumps_field(result.field)}
    return Oracle1DReport(result.energy, result.pattern, direct, files)
