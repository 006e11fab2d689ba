from __future__ import annotations

import configparser
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, ValidationError, model_validator

from .lab.errors import InvalidInputError
from .lab.models import PhiFamily, SolverConfig


def _split(value: Any) -> Any:
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    return value


FloatList = Annotated[List[float], BeforeValidator(_split)]
IntList = Annotated[List[int], BeforeValidator(_split)]
WeissModes = Annotated[List[Literal["paper", "standard"]], BeforeValidator(_split)]
AcfModes = Annotated[List[Literal["paper", "n-2"]], BeforeValidator(_split)]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainSection(_Section):
    shape: Literal["interval", "rectangle", "disk"] = "interval"
    # interval: a, b; rectangle: x0, x1, y0, y1; disk: cx, cy, radius
    size: FloatList = Field(default_factory=lambda: [0.0, 1.0])
    resolution: int = Field(default=64, ge=16)

    @model_validator(mode="after")
    def _size_matches(self) -> "DomainSection":
        need = {"interval": 2, "rectangle": 4, "disk": 3}[self.shape]
        if len(self.size) != need:
            raise ValueError(f"{self.shape} needs {need} size values, got {len(self.size)}")
        return self

    @property
    def dim(self) -> int:
        return 1 if self.shape == "interval" else 2


class BoundarySection(_Section):
    family: Literal["linear", "saddle", "one_plane", "two_plane", "constant", "tabulated"] = "linear"
    slope: float = 1.0
    offset: float = 0.0
    alpha: float = 1.0
    beta: float = 0.0
    value: float = 0.0
    # tabulated trace as x1, value pairs
    knots: FloatList = Field(default_factory=list)

    @model_validator(mode="after")
    def _knots_paired(self) -> "BoundarySection":
        if self.family == "tabulated" and (len(self.knots) < 4 or len(self.knots) % 2):
            raise ValueError("tabulated boundary needs at least two (x1, value) pairs")
        return self


class QSection(_Section):
    mode: Literal["constant", "file"] = "constant"
    value: float = Field(default=1.0, gt=0)
    path: Optional[str] = None
    lower: Optional[float] = Field(default=None, gt=0)
    upper: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _file_exists(self) -> "QSection":
        if self.mode == "file":
            if not self.path:
                raise ValueError("q mode 'file' needs a path")
            if not Path(self.path).exists():
                raise ValueError(f"q file not found: {self.path}")
        return self


class PhiSection(_Section):
    family: PhiFamily = "linear"
    lam: Optional[float] = None
    coefficient: Optional[float] = None
    p: Optional[float] = Field(default=None, gt=0, le=1)
    alpha: Optional[float] = None
    beta: Optional[float] = None
    lambda1: float = Field(default=0.0, ge=0)
    lambda2: float = Field(default=1.0, gt=0)
    # tabulated Phi0 as r, value pairs
    knots: FloatList = Field(default_factory=list)


class AnalysesSection(_Section):
    fixed_point: Literal["auto", "always", "never"] = "auto"
    free_boundary: bool = True
    bernoulli: bool = True
    density: bool = True
    subharmonicity: bool = True
    growth: bool = True
    phase_separation: bool = True
    delta_uplus: bool = True
    perimeter: bool = True
    spherical_growth: bool = True
    harmonicity: bool = True
    minimality: bool = False
    n_perturbations: int = Field(default=200, ge=1)
    blowup: bool = False
    blowup_center: Optional[FloatList] = None
    blowup_rho0: Optional[float] = Field(default=None, gt=0)
    blowup_levels: int = Field(default=3, ge=1)
    monitors: bool = False
    monitor_radii: FloatList = Field(default_factory=list)
    weiss_modes: WeissModes = Field(default_factory=lambda: ["standard", "paper"], min_length=1)
    acf_modes: AcfModes = Field(default_factory=lambda: ["n-2", "paper"], min_length=1)
    degeneracy: bool = False
    degeneracy_radii: FloatList = Field(default_factory=list)


class ThresholdsSection(_Section):
    subharmonicity_c: float = 10.0
    nondegeneracy_band: float = 2.0
    clean_ball: float = 0.05
    growth_inf: float = 0.05
    bernoulli_median: float = 0.10
    delta_uplus_c: float = 0.05
    harmonicity: float = 0.05
    perimeter_max: Optional[float] = None
    spherical_growth_max: Optional[float] = None


class SweepSection(_Section):
    family: Optional[PhiFamily] = None
    lam: Optional[FloatList] = None
    coefficient: Optional[FloatList] = None
    p: Optional[FloatList] = None
    alpha: Optional[FloatList] = None
    beta: Optional[FloatList] = None
    lambda1: Optional[FloatList] = None
    lambda2: Optional[FloatList] = None

    def grid(self) -> Dict[str, List[float]]:
        return {k: v for k, v in self.model_dump(exclude={"family"}).items() if v is not None}


class OutputSection(_Section):
    name: str = Field(default="scenario", min_length=1, max_length=120)
    dir: Optional[str] = None
    threads: int = Field(default=1, ge=1)


SECTIONS = ("domain", "boundary", "q", "phi", "solver", "analyses", "thresholds", "sweep", "output")


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    domain: DomainSection = Field(default_factory=DomainSection)
    boundary: BoundarySection = Field(default_factory=BoundarySection)
    q: QSection = Field(default_factory=QSection)
    phi: PhiSection = Field(default_factory=PhiSection)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    analyses: AnalysesSection = Field(default_factory=AnalysesSection)
    thresholds: ThresholdsSection = Field(default_factory=ThresholdsSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @property
    def seed(self) -> int:
        return self.solver.seed

    def with_overrides(
        self,
        seed: int | None = None,
        resolution: int | None = None,
        out: str | None = None,
        threads: int | None = None,
        weiss_modes: List[str] | None = None,
        acf_modes: List[str] | None = None,
    ) -> "ScenarioConfig":
        data = self.model_dump()
        if seed is not None:
            data["solver"]["seed"] = seed
        if resolution is not None:
            data["domain"]["resolution"] = resolution
        if out is not None:
            data["output"]["dir"] = out
        if threads is not None:
            data["output"]["threads"] = threads
        if weiss_modes:
            data["analyses"]["weiss_modes"] = weiss_modes
        if acf_modes:
            data["analyses"]["acf_modes"] = acf_modes
        return validate_scenario(data)

    @classmethod
    def from_ini(cls, text: str) -> "ScenarioConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as e:
            raise InvalidInputError(f"unreadable scenario: {e}") from e
        data: Dict[str, Dict[str, Any]] = {}
        for section in parser.sections():
            if section == "run":
                continue
            if section not in SECTIONS:
                raise InvalidInputError(f"unknown scenario section [{section}]")
            data[section] = dict(parser.items(section))
        if "solver" in data:
            for key in ("eps_schedule", "eps_multipliers", "polish_patch_radii"):
                if key in data["solver"]:
                    data["solver"][key] = _split(data["solver"][key])
        return validate_scenario(data)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScenarioConfig":
        path = Path(path)
        if not path.exists():
            raise InvalidInputError(f"scenario file not found: {path}")
        return cls.from_ini(path.read_text())

    def to_ini(self) -> str:
        lines: list[str] = []
        data = self.model_dump()
        for section in SECTIONS:
            lines.append(f"[{section}]")
            for key, value in data[section].items():
                if value is None:
                    continue
                if isinstance(value, list):
                    value = ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
                elif isinstance(value, float):
                    value = repr(value)
                lines.append(f"{key} = {value}")
            lines.append("")
        return "\n".join(lines)


def validate_scenario(data: Dict[str, Any]) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise InvalidInputError(f"invalid scenario: {e}") from e


class NonexistenceRequest(BaseModel):
    resolutions: IntList = Field(default_factory=lambda: [8, 16, 32, 64])


class SaddleRequest(BaseModel):
    resolution: int = Field(default=128, ge=16)
    n_perturbations: int = Field(default=200, ge=1, le=2000)
    radii: FloatList = Field(default_factory=lambda: [0.1, 0.2, 0.4])
    seed: int = 0


class SweepRequest(BaseModel):
    scenario: ScenarioConfig
    threads: int = Field(default=1, ge=1, le=16)


class Oracle1DRequest(BaseModel):
    interior_nodes: int = Field(default=7, ge=1, le=12)
    left: float = 0.0
    right: float = 1.0
    phi: PhiSection = Field(default_factory=lambda: PhiSection(family="linear", lam=4.0))
    compare_direct: bool = True
