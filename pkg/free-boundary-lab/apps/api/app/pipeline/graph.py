from __future__ import annotations

import logging
import uuid
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Tuple

from ..config import settings
from ..lab.fieldio import write_files
from ..models import ScenarioConfig
from .models import PipelineState, PropertyCheck, ReportBundle
from .nodes import converged, node_analyze, node_blowup, node_bundle, node_fixed_point, node_properties, node_solve
from .properties import suite_passed


logger = logging.getLogger(__name__)

Node = Callable[[PipelineState], PipelineState]

STAGES: List[Tuple[str, Node]] = [
    ("solve", node_solve),
    ("fixed_point", node_fixed_point),
    ("analyze", node_analyze),
    ("blowup", node_blowup),
    ("properties", node_properties),
    ("bundle", node_bundle),
]


def new_run_id(config: ScenarioConfig) -> str:
    return f"{config.output.name}-{uuid.uuid4().hex[:10]}"


def run_dir_for(config: ScenarioConfig, run_id: str) -> Path:
    if config.output.dir:
        return Path(config.output.dir)
    return Path(settings.runs_dir) / run_id


def make_bundle(state: PipelineState, write: bool = True) -> ReportBundle:
    config = state["config"]
    run_dir = None
    if write:
        run_dir = write_files(run_dir_for(config, state["run_id"]), state["files"])
    result = state["result"]
    bundle = ReportBundle(
        run_id=state["run_id"],
        files=state["files"],
        breakdown=result.breakdown,
        converged=converged(state),
        passed=suite_passed(state["checks"]),
        checks=state["checks"],
        run_dir=run_dir,
    )
    logger.info(
        "run %s: J=%.10g converged=%s checks %s -> %s",
        bundle.run_id, bundle.breakdown.total, bundle.converged,
        "passed" if bundle.passed else "failed", run_dir or "(not written)",
    )
    return bundle


def iter_scenario(config: ScenarioConfig, run_id: str | None = None, write: bool = True) -> Iterator[Dict[str, Any]]:
    """Run the stages in order, yielding node_start/node_end events and a final result."""
    state: PipelineState = {"run_id": run_id or new_run_id(config), "config": config, "timeline": []}
    for name, node in STAGES:
        yield {"type": "node_start", "node": name}
        state = node(state)
        yield {"type": "node_end", "node": name, "info": state["timeline"][-1]}
    yield {"type": "result", "bundle": make_bundle(state, write), "state": state}


def run_pipeline(
    config: ScenarioConfig, run_id: str | None = None, write: bool = True
) -> Tuple[PipelineState, ReportBundle]:
    final: Dict[str, Any] | None = None
    for event in iter_scenario(config, run_id, write):
        if event["type"] == "node_start":
            logger.info("stage %s", event["node"])
        elif event["type"] == "result":
            final = event
    assert final is not None
    return final["state"], final["bundle"]


def run_scenario(config: ScenarioConfig, run_id: str | None = None, write: bool = True) -> ReportBundle:
    return run_pipeline(config, run_id, write)[1]


def run_property_suite(config: ScenarioConfig) -> List[PropertyCheck]:
    """Solve the scenario without writing a bundle and return the property checks."""
    return run_scenario(config, write=False).checks
