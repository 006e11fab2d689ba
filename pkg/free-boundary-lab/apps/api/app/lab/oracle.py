from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .energy import EnergyModel
from .errors import InvalidInputError
from .models import Problem, ScalarField
from .phi import nonexistence, phi0


logger = logging.getLogger(__name__)

MAX_NODES_1D = 12
MAX_NODES_2D = 9
SIGNS = "+0-"


@dataclass(frozen=True, eq=False)
class OracleResult:
    energy: float
    field: ScalarField
    pattern: str
    rows: list[tuple[str, float, bool]] = field(default_factory=list)


def _sign_string(values: np.ndarray) -> str:
    return "".join("+" if v > 0 else "-" if v < 0 else "0" for v in values)


class _PatternSolver:
    """Dirichlet minimizers with a set of free nodes pinned to zero, cached per set."""

    def __init__(self, problem: Problem) -> None:
        self.model = EnergyModel(problem)
        self.K = self.model.L.toarray()
        self.free = self.model.ops.interior_nodes
        self.base = problem.boundary.filled().ravel()
        self._cache: dict[bytes, np.ndarray] = {}

    def solve(self, zero: np.ndarray) -> np.ndarray:
        key = np.packbits(zero).tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        x = self.base.copy()
        x[self.free] = 0.0
        unknown = self.free[~zero]
        if unknown.size:
            rhs = -(self.K[unknown] @ x)
            x[unknown] = np.linalg.solve(self.K[np.ix_(unknown, unknown)], rhs)
        self._cache[key] = x
        return x

    def evaluate(self, pattern: Sequence[str]) -> tuple[np.ndarray | None, float]:
        """Solve one sign pattern; one projection pass repairs sign violations."""
        signs = np.array(pattern)
        zero = signs == "0"
        x = self.solve(zero)
        xf = x[self.free]
        bad = ((signs == "+") & (xf <= 0)) | ((signs == "-") & (xf >= 0))
        if bad.any():
            zero = zero | bad
            x = self.solve(zero)
            xf = x[self.free]
            bad = ((signs == "+") & ~zero & (xf <= 0)) | ((signs == "-") & ~zero & (xf >= 0))
            if bad.any():
                return None, float("inf")
        return x, self.model.energy(x, 0.0)


def _enumerate(problem: Problem, limit: int, record: bool) -> OracleResult:
    solver = _PatternSolver(problem)
    n = solver.free.size
    if n > limit:
        raise InvalidInputError(f"oracle limited to {limit} free nodes, got {n}")
    best_x, best_e = None, float("inf")
    rows: list[tuple[str, float, bool]] = []
    for pattern in itertools.product(SIGNS, repeat=n):
        x, energy = solver.evaluate(pattern)
        if record:
            rows.append(("".join(pattern), energy, x is not None))
        if x is not None and energy < best_e:
            best_x, best_e = x, energy
    if best_x is None:
        raise InvalidInputError("no feasible sign pattern")
    grid = problem.grid
    u = problem.boundary.with_values(best_x.reshape(grid.shape))
    pattern = _sign_string(best_x[solver.free])
    logger.info("oracle: %d patterns, %d zero sets solved, J=%.12g (%s)", 3**n, len(solver._cache), best_e, pattern)
    return OracleResult(best_e, u, pattern, rows)


def oracle_minimize_1d(problem: Problem, max_nodes: int = MAX_NODES_1D, record: bool = True) -> OracleResult:
    """Global discrete minimum over all {+, 0, -} patterns of the interior nodes."""
    if problem.grid.dim != 1:
        raise InvalidInputError("oracle_minimize_1d needs a 1D problem")
    return _enumerate(problem, min(max_nodes, MAX_NODES_1D), record)


def oracle_minimize_2d_tiny(problem: Problem, record: bool = True) -> OracleResult:
    grid = problem.grid
    if grid.dim != 2 or grid.domain != "rectangle":
        raise InvalidInputError("oracle_minimize_2d_tiny needs a 2D rectangle")
    if max(grid.shape) > 5:
        raise InvalidInputError("at most 5 nodes per side")
    return _enumerate(problem, MAX_NODES_2D, record)


def oracle_energy_curve_nonexistence(deltas: Sequence[float]) -> list[tuple[float, float]]:
    """Energies 1/(1 - d) + Phi0(1 - d) of the plateau competitors of the 1D
    non-existence example."""
    spec = nonexistence()
    out = []
    for d in deltas:
        if not 0 <= d < 0.5:
            raise InvalidInputError(f"delta={d} outside [0, 1/2)")
        out.append((float(d), 1.0 / (1.0 - d) + phi0(spec, 1.0 - d)))
    return out
