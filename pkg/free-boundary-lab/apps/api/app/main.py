from __future__ import annotations

import logging
from dataclasses import asdict
from pathlib import Path
from typing import Any, AsyncIterator, Dict

from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response, StreamingResponse
from starlette.concurrency import iterate_in_threadpool

from .config import settings
from .lab.errors import LabError
from .log import configure_logging
from .models import NonexistenceRequest, Oracle1DRequest, SaddleRequest, ScenarioConfig, SweepRequest, validate_scenario
from .pipeline.graph import iter_scenario, new_run_id
from .pipeline.repro import oracle_1d, repro_nonexistence, repro_saddle
from .pipeline.sweep import sweep
from .utils.sse import jsonable, sse
from .utils.zipper import zip_run_dir


logger = logging.getLogger(__name__)

configure_logging(settings.log_level)

app = FastAPI(title="Free Boundary Lab API", version="0.1.0")

app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.cors_origins,
    allow_credentials=False,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.exception_handler(LabError)
async def lab_error(request: Request, exc: LabError):
    return JSONResponse(status_code=422, content={"detail": str(exc)})


@app.get("/health")
async def health():
    return {"ok": True, "service": "free-boundary-lab"}


def _check_resolution(resolution: int) -> None:
    if resolution > settings.max_api_resolution:
        raise HTTPException(
            status_code=422,
            detail=f"resolution {resolution} exceeds the service limit {settings.max_api_resolution}",
        )


def _api_config(config: ScenarioConfig) -> ScenarioConfig:
    """Runs started over HTTP always land in runs_dir so they can be listed."""
    _check_resolution(config.domain.resolution)
    data = config.model_dump()
    data["output"]["dir"] = None
    return validate_scenario(data)


def _run_path(run_id: str) -> Path:
    if not run_id or "/" in run_id or "\\" in run_id or ".." in run_id:
        raise HTTPException(status_code=404, detail="Not found")
    path = Path(settings.runs_dir) / run_id
    if not path.is_dir():
        raise HTTPException(status_code=404, detail="Not found")
    return path


@app.post("/scenarios")
async def run_scenario_stream(config: ScenarioConfig):
    config = _api_config(config)
    run_id = new_run_id(config)

    async def event_stream() -> AsyncIterator[str]:
        yield sse("status", {"message": "started", "run_id": run_id})
        try:
            async for ev in iterate_in_threadpool(iter_scenario(config, run_id)):
                if ev["type"] == "node_start":
                    yield sse("node", {"phase": "start", "node": ev["node"]})
                elif ev["type"] == "node_end":
                    yield sse("node", {"phase": "end", "node": ev["node"], "info": ev["info"]})
                elif ev["type"] == "result":
                    bundle = ev["bundle"]
                    yield sse(
                        "result",
                        {
                            "breakdown": bundle.breakdown.as_dict(),
                            "converged": bundle.converged,
                            "passed": bundle.passed,
                            "checks": [asdict(c) for c in bundle.checks],
                        },
                    )
                    yield sse("artifact", {"run_id": run_id, "files": sorted(bundle.files)})
            yield sse("status", {"message": "completed", "run_id": run_id})
        except Exception as e:
            logger.exception("run %s failed", run_id)
            yield sse("error", {"message": str(e)})
            yield sse("status", {"message": "failed", "run_id": run_id})

    return StreamingResponse(event_stream(), media_type="text/event-stream")


@app.get("/runs")
def list_runs():
    root = Path(settings.runs_dir)
    if not root.is_dir():
        return {"runs": []}
    runs = sorted(p.name for p in root.iterdir() if (p / "manifest.txt").exists() or (p / "sweep.csv").exists())
    return {"runs": runs}


@app.get("/runs/{run_id}/bundle")
def get_bundle(run_id: str):
    return Response(
        content=zip_run_dir(_run_path(run_id)),
        media_type="application/zip",
        headers={"Content-Disposition": f'attachment; filename="{run_id}.zip"'},
    )


@app.post("/repro/nonexistence")
def nonexistence(req: NonexistenceRequest):
    for n in req.resolutions:
        _check_resolution(n)
    rows = repro_nonexistence(req.resolutions)
    return jsonable({"rows": [asdict(r) for r in rows]})


@app.post("/repro/saddle")
def saddle(req: SaddleRequest):
    _check_resolution(req.resolution)
    report = repro_saddle(req.resolution, req.n_perturbations, req.radii, req.seed)
    out: Dict[str, Any] = asdict(report)
    out.update(energy_error=report.energy_error, minimal=report.minimal)
    return jsonable(out)


@app.post("/sweeps")
def run_sweep(req: SweepRequest):
    config = _api_config(req.scenario)
    result = sweep(config, threads=req.threads)
    return jsonable({"run_id": result.run_id, "rows": [asdict(r) for r in result.rows]})


@app.post("/oracle/1d")
def oracle(req: Oracle1DRequest):
    report = oracle_1d(req)
    return jsonable(
        {"energy": report.energy, "pattern": report.pattern, "direct": report.direct, "oracle_csv": report.files["oracle.csv"]}
    )
