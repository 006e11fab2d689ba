from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import InvalidInputError


DomainShape = Literal["interval", "rectangle", "disk"]

EXTERIOR = 0
INTERIOR = 1
BOUNDARY = 2


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Uniform isotropic grid carrying the domain mask.

    Node (i, j) sits at origin + h * (i, j); arrays are indexed [i, j] so the
    first axis runs along x.
    """

    dim: int
    shape: tuple[int, ...]
    h: float
    origin: tuple[float, ...]
    domain: DomainShape
    mask: np.ndarray
    center: tuple[float, ...] | None = None
    radius: float | None = None

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def interior(self) -> np.ndarray:
        return self.mask == INTERIOR

    @property
    def boundary(self) -> np.ndarray:
        return self.mask == BOUNDARY

    @property
    def exterior(self) -> np.ndarray:
        return self.mask == EXTERIOR

    @property
    def active(self) -> np.ndarray:
        return self.mask != EXTERIOR

    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(o + self.h * np.arange(n) for o, n in zip(self.origin, self.shape))

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape (*shape, dim)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(o + self.h * (n - 1) for o, n in zip(self.origin, self.shape))


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != self.grid.shape:
            raise InvalidInputError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )
        active = self.values[self.grid.active]
        if not np.all(np.isfinite(active)):
            raise InvalidInputError("field has non-finite values on the domain")

    def filled(self) -> np.ndarray:
        """Values with exterior nodes set to 0."""
        return np.where(self.grid.active, self.values, 0.0)

    def with_values(self, values: np.ndarray) -> "ScalarField":
        out = np.array(values, dtype=float, copy=True)
        out[self.grid.exterior] = np.nan
        return ScalarField(self.grid, out)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values[self.grid.active])))


@dataclass(frozen=True, eq=False)
class QField:
    """Positive weight Q, either constant or given per node (NaN off the domain)."""

    mode: Literal["constant", "per-node"] = "constant"
    value: float = 1.0
    values: np.ndarray | None = None
    lower: float | None = None
    upper: float | None = None

    def _data(self) -> np.ndarray:
        if self.mode == "constant":
            return np.array([float(self.value)])
        if self.values is None:
            raise InvalidInputError("per-node Q needs values")
        data = np.asarray(self.values, dtype=float)
        return data[np.isfinite(data)]

    def __post_init__(self) -> None:
        data = self._data()
        if data.size == 0 or np.any(data <= 0):
            raise InvalidInputError("Q must be positive")
        q1, q2 = self.bounds
        if not (0 < q1 <= data.min() and data.max() <= q2 < np.inf):
            raise InvalidInputError(f"Q outside its bounds [{q1}, {q2}]")

    @property
    def bounds(self) -> tuple[float, float]:
        data = self._data()
        q1 = self.lower if self.lower is not None else float(data.min())
        q2 = self.upper if self.upper is not None else float(data.max())
        return q1, q2

    def on(self, grid: GridSpec) -> np.ndarray:
        if self.mode == "constant":
            return np.full(grid.shape, float(self.value))
        if self.values is None or self.values.shape != grid.shape:
            raise InvalidInputError("per-node Q does not match the grid")
        return np.where(grid.active, self.values, 0.0)

    def at(self, grid: GridSpec, point) -> float:
        if self.mode == "constant":
            return float(self.value)
        from .grid import interpolate

        return interpolate(ScalarField(grid, np.where(grid.active, self.values, np.nan)), point)


PhiFamily = Literal[
    "linear",
    "sum_linear",
    "power",
    "sum_power",
    "sum_of_powers",
    "nonexistence",
    "saddle",
    "tabulated",
]


@dataclass(frozen=True)
class PhiSpec:
    """Nonlinearity Phi(r1, r2) with its weights.

    ``lambda_omega`` is only needed by families that depend on r1; a Problem
    binds it from the grid.
    """

    family: PhiFamily
    params: tuple[tuple[str, float], ...] = ()
    lambda1: float = 0.0
    lambda2: float = 1.0
    knots: tuple[tuple[float, float], ...] = ()
    lambda_omega: float | None = None

    def __post_init__(self) -> None:
        if self.lambda1 < 0:
            raise InvalidInputError("lambda1 must be >= 0")
        if self.lambda2 <= 0:
            raise InvalidInputError("lambda2 must be > 0")

    def param(self, name: str, default: float | None = None) -> float:
        for key, value in self.params:
            if key == name:
                return value
        if default is None:
            raise InvalidInputError(f"phi family {self.family!r} needs parameter {name!r}")
        return default


@dataclass(frozen=True)
class EnergyBreakdown:
    dirichlet: float
    m2: float
    m1: float
    volume_term: float
    total: float
    eps: float = 0.0
    lambda_omega: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return {
            "dirichlet": self.dirichlet,
            "m2": self.m2,
            "m1": self.m1,
            "volume_term": self.volume_term,
            "total": self.total,
            "eps": self.eps,
            "lambda_omega": self.lambda_omega,
        }


class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    eps_schedule: Optional[list[float]] = None
    eps_multipliers: list[float] = Field(default_factory=lambda: [4.0, 2.0, 1.0])
    max_outer_iterations: int = Field(default=400, ge=1)
    max_inner_iterations: int = Field(default=20000, ge=1)
    step_init: float = Field(default=1.0, gt=0)
    armijo_constant: float = Field(default=1e-4, gt=0, lt=1)
    gradient_tolerance: float = Field(default=1e-9, gt=0)
    energy_tolerance: float = Field(default=1e-10, gt=0)
    fixed_point_damping: float = Field(default=0.5, gt=0, le=1)
    fixed_point_tolerance: float = Field(default=1e-6, gt=0)
    max_fixed_point_iterations: int = Field(default=60, ge=1)
    seed: int = 0
    restarts: int = Field(default=8, ge=0)
    preconditioner: Literal["sobolev", "none"] = "sobolev"
    harmonic_method: Literal["sor", "direct"] = "sor"
    polish: bool = True
    polish_exhaustive_max_nodes: int = Field(default=12, ge=0, le=16)
    polish_global_max_nodes: int = Field(default=1024, ge=0)
    polish_window: int = Field(default=4, ge=1)
    polish_patch_radii: list[int] = Field(default_factory=lambda: [0, 1, 2, 4, 8])
    polish_max_sweeps: int = Field(default=50, ge=1)

    @field_validator("eps_schedule")
    @classmethod
    def _decreasing(cls, v: Optional[list[float]]) -> Optional[list[float]]:
        if v is None:
            return v
        if not v or any(e <= 0 for e in v) or any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError("eps_schedule must be strictly decreasing and positive")
        return v

    @field_validator("eps_multipliers")
    @classmethod
    def _multipliers(cls, v: list[float]) -> list[float]:
        if not v or any(e <= 0 for e in v) or any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError("eps_multipliers must be strictly decreasing and positive")
        return v

    @field_validator("polish_patch_radii")
    @classmethod
    def _radii(cls, v: list[int]) -> list[int]:
        if any(r < 0 for r in v):
            raise ValueError("polish_patch_radii must be non-negative")
        return v

    def schedule(self, h: float) -> list[float]:
        if self.eps_schedule is not None:
            return list(self.eps_schedule)
        return [m * h for m in self.eps_multipliers]


@dataclass(frozen=True, eq=False)
class Problem:
    grid: GridSpec
    boundary: ScalarField
    q: QField
    phi: PhiSpec

    @property
    def lambda_omega(self) -> float:
        from .grid import operators

        return operators(self.grid).lambda_omega(self.q)


@dataclass(frozen=True)
class HistoryEntry:
    iteration: int
    eps: float
    energy: float
    m2: float
    step: float


@dataclass(frozen=True, eq=False)
class MinimizeResult:
    field: ScalarField
    breakdown: EnergyBreakdown
    history: list[HistoryEntry]
    converged: bool
    lambda_star_trace: list[float] = field(default_factory=list)
    lambda_star: float | None = None
    alternatives: list[ScalarField] = field(default_factory=list)
    events: list[str] = field(default_factory=list)
    # direct solver only: converged mirrors descent_converged there
    descent_converged: bool = False
    polished: bool = False


@dataclass(frozen=True, eq=False)
class FreeBoundary:
    """Samples of the free boundary.

    ``points`` are segment midpoints in 2D and zero crossings in 1D; each
    point k belongs to ``segments[k]`` (vertex indices) in 2D. Normals point
    into {u <= 0}.
    """

    dim: int
    points: np.ndarray
    normals: np.ndarray
    vertices: np.ndarray
    segments: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    residual: np.ndarray

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def empty(self) -> bool:
        return len(self) == 0


@dataclass(frozen=True)
class DensityReport:
    radii: list[float]
    volume_fraction: list[float]
    nondegeneracy: list[float]
    clean_ball: list[float]
    growth_sup: float
    growth_inf: float


@dataclass(frozen=True, eq=False)
class BlowupSequence:
    center: tuple[float, ...]
    radii: list[float]
    fields: list[ScalarField]
    sup_diff: list[float]
    hausdorff: list[float]


@dataclass(frozen=True, eq=False)
class AnalyticField:
    """Closed-form field on the plane, for quadrature-exact monitors."""

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    dim: int = 2
