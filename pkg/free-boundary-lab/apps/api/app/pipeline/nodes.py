from __future__ import annotations

import json
import logging
import platform
from importlib.metadata import PackageNotFoundError, version
from typing import Any, Dict

import numpy as np

from ..lab import fieldio
from ..lab.blowup import ac_limit_compare, blowup_sequence, flatness_measure, monitor_trace
from ..lab.errors import ConvergenceError, DomainError, InvalidInputError, LabError
from ..lab.energy import total_energy
from ..lab.fbgeom import boundary_mass, dyadic_radii, extract_free_boundary, trace_constant, varpi_lower_bound
from ..lab.grid import ball_inside, operators
from ..lab.phi import lambda_bernoulli, metadata, theta_iota
from ..lab.solve import minimize_direct, minimize_fixed_point, verify_minimality
from ..utils.sse import jsonable
from .models import PipelineState, PropertyCheck
from .problem import boundary_function, build_problem
from .properties import check_rows, collect_diagnostics, evaluate_properties, gamma_center


logger = logging.getLogger(__name__)

MIN_BLOWUP_CELLS = 8.0


def _mark(state: PipelineState, node: str, **info: Any) -> None:
    state.setdefault("timeline", []).append({"node": node, "event": "done", **info})


def node_solve(state: PipelineState) -> PipelineState:
    config = state["config"]
    problem = build_problem(config)
    state["problem"] = problem
    result = minimize_direct(problem, config.solver)
    state["result"] = result
    if not result.converged:
        logger.warning("direct solve did not converge")
    _mark(state, "solve", energy=result.breakdown.total, converged=result.converged)
    return state


def wants_fixed_point(state: PipelineState) -> bool:
    mode = state["config"].analyses.fixed_point
    phi = state["problem"].phi
    if mode == "never":
        return False
    if mode == "always":
        return True
    return metadata(phi).concave and phi.family != "linear"


def node_fixed_point(state: PipelineState) -> PipelineState:
    state["fixed_point"] = None
    if not wants_fixed_point(state):
        _mark(state, "fixed_point", skipped=True)
        return state
    try:
        fp = minimize_fixed_point(state["problem"], state["config"].solver)
    except ConvergenceError as e:
        logger.warning("fixed point failed: %s", e)
        state["fixed_point_error"] = str(e)
        _mark(state, "fixed_point", error=str(e))
        return state
    state["fixed_point"] = fp
    _mark(state, "fixed_point", energy=fp.breakdown.total, lambda_star=fp.lambda_star, converged=fp.converged)
    return state


def node_analyze(state: PipelineState) -> PipelineState:
    u = state["result"].field
    fb = extract_free_boundary(u)
    diagnostics = collect_diagnostics(u, state["problem"], fb, state["config"].analyses)
    state["diagnostics"] = diagnostics
    bern = diagnostics.get("bernoulli")
    state["free_boundary"] = bern.free_boundary if bern is not None else fb
    if bern is not None:
        state["bernoulli"] = bern
    if "density" in diagnostics:
        state["density"] = diagnostics["density"]
    if "degeneracy" in diagnostics:
        state["degeneracy"] = diagnostics["degeneracy"]
    _mark(state, "analyze", gamma_samples=len(fb))
    return state


def blowup_center(state: PipelineState) -> np.ndarray | None:
    return gamma_center(state["result"].field, state["free_boundary"], state["config"].analyses)


def _monitors(state: PipelineState, center: np.ndarray, lambda0: float) -> Dict[str, list]:
    u = state["result"].field
    grid = u.grid
    analyses = state["config"].analyses
    radii = list(analyses.monitor_radii) or dyadic_radii(grid)
    radii = [r for r in radii if ball_inside(grid, center, r)]
    out: Dict[str, list] = {"weiss": monitor_trace(u, center, radii, lambda0, tuple(analyses.weiss_modes), "weiss")}
    if grid.dim == 2:
        out["acf"] = monitor_trace(u, center, radii, lambda0, tuple(analyses.acf_modes), "acf")
    return out


def node_blowup(state: PipelineState) -> PipelineState:
    analyses = state["config"].analyses
    if not (analyses.blowup or analyses.monitors):
        _mark(state, "blowup", skipped=True)
        return state
    center = blowup_center(state)
    if center is None:
        state["blowup_error"] = "u is one-signed; no free boundary to blow up at"
        _mark(state, "blowup", error=state["blowup_error"])
        return state

    problem, result = state["problem"], state["result"]
    u = result.field
    grid = u.grid
    lambda0 = None
    if analyses.blowup:
        levels = analyses.blowup_levels
        rho0 = analyses.blowup_rho0 or MIN_BLOWUP_CELLS * grid.h * 2.0**levels
        try:
            seq = blowup_sequence(u, center, rho0, levels, fb=state["free_boundary"])
            state["blowup"] = seq
            ac = ac_limit_compare(seq, problem.phi, problem.q, result.breakdown.m2, state["config"].solver, grid)
            state["ac_limit"] = ac
            lambda0 = ac.lambda0
        except (DomainError, InvalidInputError) as e:
            logger.warning("blow-up skipped: %s", e)
            state["blowup_error"] = str(e)

    if analyses.monitors:
        if lambda0 is None:
            lam = lambda_bernoulli(problem.phi, result.breakdown.m1, result.breakdown.m2, problem.q.at(grid, center))
            lambda0 = max(lam.value, 0.0)
        try:
            state["monitors"] = _monitors(state, center, lambda0)
        except LabError as e:
            logger.warning("monitors skipped: %s", e)
            state["monitors_error"] = str(e)
    _mark(state, "blowup", center=[float(c) for c in center])
    return state


def _minimality_check(state: PipelineState) -> PropertyCheck | None:
    config = state["config"]
    if not config.analyses.minimality:
        return None
    result = state["result"]
    try:
        report = verify_minimality(result.field, state["problem"], config.analyses.n_perturbations, seed=config.seed)
    except InvalidInputError as e:
        logger.warning("minimality check skipped: %s", e)
        state["minimality"] = {"error": str(e)}
        return PropertyCheck("minimality", "n/a", None, ">= -1e-6 J", str(e))
    bound = -1e-6 * abs(report.energy)
    state["minimality"] = {
        "min_gap": report.min_gap,
        "worst_perturbation": report.worst_perturbation,
        "energy": report.energy,
        "n_perturbations": len(report.gaps),
        "passed": report.min_gap >= bound,
    }
    return PropertyCheck(
        "minimality", "pass" if report.min_gap >= bound else "fail", report.min_gap, ">= -1e-6 J", f"{len(report.gaps)} bumps"
    )


def node_properties(state: PipelineState) -> PipelineState:
    checks = evaluate_properties(state["result"].field, state["problem"], state["diagnostics"], state["config"].thresholds)
    extra = _minimality_check(state)
    if extra is not None:
        checks.append(extra)
    state["checks"] = checks
    _mark(state, "properties", failed=[c.name for c in checks if c.status == "fail"])
    return state


# -- bundle ----------------------------------------------------------------


def _versions() -> Dict[str, str]:
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "scikit-image", "pydantic"):
        try:
            out[pkg] = version(pkg)
        except PackageNotFoundError:
            out[pkg] = "unknown"
    return out


def nondegeneracy_constants(state: PipelineState) -> Dict[str, float]:
    """varpi from the boundary datum, then Theta and iota over the volume window it opens."""
    config, problem = state["config"], state["problem"]
    phi, grid = problem.phi, problem.grid
    q1, q2 = problem.q.bounds
    lam2 = phi.lambda2
    try:
        mass, sup = boundary_mass(grid, boundary_function(config.boundary, grid.dim))
        energy_bound = total_energy(problem.boundary, problem.q, phi).total
        varpi = varpi_lower_bound(mass, sup, energy_bound, trace_constant(grid))
    except LabError as e:
        logger.debug("varpi unavailable: %s", e)
        return {}
    lower = 0.5 * lam2 * q1 * varpi
    upper = lam2 * problem.lambda_omega
    iota_upper = 2.0 * lam2 * q2 * operators(grid).measure()
    if not 0 < lower < upper:
        return {"varpi": varpi}
    try:
        theta, iota = theta_iota(phi, lower, upper, iota_upper=max(iota_upper, upper))
    except LabError as e:
        logger.debug("theta/iota unavailable: %s", e)
        return {"varpi": varpi}
    return {"varpi": varpi, "theta": theta, "iota": iota}


def manifest_text(state: PipelineState) -> str:
    config = state["config"]
    run: Dict[str, Any] = {"run_id": state["run_id"], "seed": config.seed, "threads": config.output.threads}
    run.update({f"version_{k}": v for k, v in _versions().items()})
    phi = state["problem"].phi
    if phi.family == "saddle":
        run["saddle_knots"] = ", ".join(f"{fieldio.fmt(r)}:{fieldio.fmt(v)}" for r, v in phi.knots)
    run.update(nondegeneracy_constants(state))
    lines = [config.to_ini(), "[run]"]
    lines += [f"{k} = {fieldio.fmt(v)}" for k, v in run.items()]
    return "\n".join(lines) + "\n"


def breakdown_json(state: PipelineState) -> str:
    result = state["result"]
    data: Dict[str, Any] = {
        "direct": {
            **result.breakdown.as_dict(),
            "converged": result.converged,
            "descent_converged": result.descent_converged,
            "polished": result.polished,
            "events": result.events,
        },
        "alternatives": len(result.alternatives),
        "fixed_point": None,
    }
    fp = state.get("fixed_point")
    if fp is not None:
        data["fixed_point"] = {
            **fp.breakdown.as_dict(),
            "converged": fp.converged,
            "lambda_star": fp.lambda_star,
            "lambda_star_trace": fp.lambda_star_trace,
            "energy_gap": abs(fp.breakdown.total - result.breakdown.total) / max(abs(result.breakdown.total), 1e-300),
        }
    elif state.get("fixed_point_error"):
        data["fixed_point"] = {"error": state["fixed_point_error"]}
    ac = state.get("ac_limit")
    if ac is not None:
        data["ac_limit"] = {
            "lambda0": ac.lambda0,
            "lambda0_low": ac.lambda0_low,
            "lambda0_high": ac.lambda0_high,
            "kink": ac.kink,
            "sup_gap": ac.sup_gap,
            "slope_gap": ac.slope_gap,
            "alpha": ac.alpha,
            "beta": ac.beta,
        }
    seq = state.get("blowup")
    if seq is not None:
        fb = state["free_boundary"]
        data["flatness"] = [[r, flatness_measure(fb, seq.center, r)] for r in seq.radii]
    return json.dumps(jsonable(data), indent=2)


def converged(state: PipelineState) -> bool:
    ok = state["result"].converged
    if wants_fixed_point(state):
        fp = state.get("fixed_point")
        ok = ok and fp is not None and fp.converged
    return ok


def node_bundle(state: PipelineState) -> PipelineState:
    result = state["result"]
    files: Dict[str, str] = {
        "field.txt": fieldio.dumps_field(result.field),
        "breakdown.json": breakdown_json(state),
        "history.csv": fieldio.history_csv(result.history),
        "properties.csv": fieldio.csv_text(fieldio.PROPERTY_HEADER, check_rows(state["checks"])),
        "manifest.txt": manifest_text(state),
    }
    if state["config"].analyses.free_boundary:
        files["free_boundary.csv"] = fieldio.free_boundary_csv(state["free_boundary"])
    if "density" in state:
        files["density.csv"] = fieldio.density_csv(state["density"])
    if "degeneracy" in state:
        files["degeneracy.csv"] = fieldio.degeneracy_csv(state["degeneracy"][1])
    if "blowup" in state:
        files["blowup.csv"] = fieldio.blowup_csv(state["blowup"])
    monitors = state.get("monitors", {})
    if "weiss" in monitors:
        files["weiss.csv"] = fieldio.monitor_csv(monitors["weiss"])
    if "acf" in monitors:
        files["acf.csv"] = fieldio.monitor_csv(monitors["acf"])
    if "minimality" in state:
        files["minimality.json"] = json.dumps(jsonable(state["minimality"]), indent=2)
    for k, alt in enumerate(result.alternatives):
        files[f"alternatives/field_{k}.txt"] = fieldio.dumps_field(alt)
    state["files"] = files
    _mark(state, "bundle", files=sorted(files))
    return state
