from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, TypedDict

from ..lab.blowup import AcLimitReport
from ..lab.fbgeom import BernoulliReport
from ..lab.models import BlowupSequence, DensityReport, EnergyBreakdown, FreeBoundary, MinimizeResult, Problem
from ..models import ScenarioConfig


CheckStatus = Literal["pass", "fail", "n/a"]


@dataclass(frozen=True)
class PropertyCheck:
    name: str
    status: CheckStatus
    value: float | None
    threshold: str
    detail: str = ""


class PipelineState(TypedDict, total=False):
    run_id: str
    config: ScenarioConfig
    problem: Problem

    result: MinimizeResult
    fixed_point: Optional[MinimizeResult]
    fixed_point_error: str

    free_boundary: FreeBoundary
    bernoulli: BernoulliReport
    density: DensityReport
    diagnostics: Dict[str, Any]

    blowup: BlowupSequence
    blowup_error: str
    ac_limit: AcLimitReport
    monitors: Dict[str, list]
    monitors_error: str
    minimality: Dict[str, Any]

    checks: List[PropertyCheck]
    files: Dict[str, str]
    timeline: List[Dict[str, Any]]


@dataclass(frozen=True, eq=False)
class ReportBundle:
    run_id: str
    files: Dict[str, str]
    breakdown: EnergyBreakdown
    converged: bool
    passed: bool
    checks: List[PropertyCheck] = field(default_factory=list)
    run_dir: Path | None = None

    @property
    def exit_code(self) -> int:
        return 0 if self.converged and self.passed else 1
