from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Tuple

from ..lab.fieldio import SWEEP_HEADER, csv_text, fmt, write_files
from ..lab.phi import phi0_value_and_derivative
from ..models import ScenarioConfig, validate_scenario
from .graph import new_run_id, run_dir_for, run_pipeline


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepRow:
    index: int
    family: str
    params: str
    energy: float | None = None
    m2: float | None = None
    lambda_star: float | None = None
    bernoulli_median: float | None = None
    status: str = "ok"

    def as_tuple(self) -> Tuple[Any, ...]:
        return (self.index, self.family, self.params, self.energy, self.m2, self.lambda_star, self.bernoulli_median, self.status)


@dataclass(frozen=True)
class SweepResult:
    run_id: str
    rows: List[SweepRow]
    files: Dict[str, str]
    run_dir: Path | None = None


def parameter_tuples(config: ScenarioConfig) -> List[Dict[str, float]]:
    """Cartesian product of the [sweep] lists, in declaration order."""
    grid = config.sweep.grid()
    if not grid:
        return []
    keys = list(grid)
    return [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]


def _row_config(base: ScenarioConfig, params: Dict[str, float], row_dir: Path) -> ScenarioConfig:
    data = base.model_dump()
    if base.sweep.family is not None:
        data["phi"]["family"] = base.sweep.family
    data["phi"].update(params)
    data["output"]["dir"] = str(row_dir)
    data["output"]["threads"] = 1
    data["sweep"] = {}
    return validate_scenario(data)


def _run_row(index: int, base: ScenarioConfig, params: Dict[str, float], root: Path | None) -> SweepRow:
    family = base.sweep.family or base.phi.family
    label = ";".join(f"{k}={fmt(v)}" for k, v in params.items())
    try:
        row_dir = (root or Path(".")) / f"row_{index:03d}"
        config = _row_config(base, params, row_dir)
        state, bundle = run_pipeline(config, run_id=f"row_{index:03d}", write=root is not None)
    except Exception as e:
        logger.warning("sweep row %d (%s) failed: %s", index, label, e)
        return SweepRow(index, family, label, status=f"error: {e}")

    fp = state.get("fixed_point")
    if fp is not None and fp.lambda_star is not None:
        lambda_star = fp.lambda_star
    else:
        phi = state["problem"].phi
        lambda_star = phi0_value_and_derivative(phi, bundle.breakdown.m2).derivative
    bern = state.get("bernoulli")
    status = "ok" if bundle.exit_code == 0 else ("not converged" if not bundle.converged else "checks failed")
    return SweepRow(
        index, family, label, bundle.breakdown.total, bundle.breakdown.m2, lambda_star,
        bern.median if bern is not None else None, status,
    )


def sweep(base: ScenarioConfig, threads: int | None = None, write: bool = True) -> SweepResult:
    """One scenario run per parameter tuple; rows come back ordered by tuple index.

    Rows run on a thread pool when threads > 1 and write into their own
    ``row_NNN`` directories. A failing row is recorded and the sweep continues.
    """
    run_id = new_run_id(base)
    root = run_dir_for(base, run_id) if write else None
    tuples = parameter_tuples(base)
    workers = max(1, threads or base.output.threads)
    logger.info("sweep %s: %d rows on %d thread(s)", run_id, len(tuples), workers)

    if workers == 1:
        rows = [_run_row(i, base, p, root) for i, p in enumerate(tuples)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_row, i, base, p, root) for i, p in enumerate(tuples)]
            rows = [f.result() for f in futures]
    rows.sort(key=lambda r: r.index)

    files = {"sweep.csv": csv_text(SWEEP_HEADER, (r.as_tuple() for r in rows))}
    run_dir = write_files(root, files) if root is not None else None
    return SweepResult(run_id, rows, files, run_dir)
