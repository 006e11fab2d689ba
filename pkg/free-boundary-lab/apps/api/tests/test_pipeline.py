from __future__ import annotations

import json

import numpy as np
import pytest

from app.lab import fbgeom
from app.lab.errors import DomainError
from app.lab.fbgeom import varpi_lower_bound
from app.lab.fieldio import loads_field, read_csv
from app.lab.grid import make_field
from app.models import validate_scenario
from app.pipeline.graph import STAGES, iter_scenario, run_pipeline, run_property_suite, run_scenario
from app.pipeline.problem import build_problem
from app.pipeline.properties import evaluate_field, suite_passed


def ac_scenario(**analyses):
    return validate_scenario(
        {
            "domain": {"shape": "interval", "size": [0.0, 1.0], "resolution": 32},
            "boundary": {"family": "linear", "slope": 1.0},
            "phi": {"family": "linear", "lam": 4.0},
            "analyses": analyses,
            "output": {"name": "ac-1d"},
        }
    )


def statuses(checks):
    return {c.name: c.status for c in checks}


def test_stage_events_in_order():
    events = list(iter_scenario(ac_scenario(), write=False))
    starts = [e["node"] for e in events if e["type"] == "node_start"]
    assert starts == [name for name, _ in STAGES]
    assert events[-1]["type"] == "result"
    fixed = [e for e in events if e["type"] == "node_end" and e["node"] == "fixed_point"][0]
    assert fixed["info"]["skipped"] is True


def test_ac_scenario_bundle():
    bundle = run_scenario(ac_scenario(), write=False)
    assert bundle.run_dir is None
    assert bundle.breakdown.total == pytest.approx(4.0, abs=0.05)
    for name in ("field.txt", "breakdown.json", "history.csv", "properties.csv", "manifest.txt", "free_boundary.csv"):
        assert name in bundle.files
    assert statuses(bundle.checks)["bernoulli"] == "pass"
    field = loads_field(bundle.files["field.txt"])
    assert field.values[0] == 0.0 and field.values[-1] == 1.0
    gamma = read_csv(bundle.files["free_boundary.csv"])
    assert float(gamma[0]["x"]) == pytest.approx(0.5, abs=2 / 32)
    breakdown = json.loads(bundle.files["breakdown.json"])
    assert breakdown["direct"]["total"] == pytest.approx(bundle.breakdown.total)
    assert breakdown["fixed_point"] is None
    assert "[run]" in bundle.files["manifest.txt"]


def test_bundle_written_to_runs_dir(runs_dir):
    bundle = run_scenario(ac_scenario(), run_id="ac-test")
    assert bundle.run_dir == runs_dir / "ac-test"
    assert (bundle.run_dir / "field.txt").exists()
    assert (bundle.run_dir / "properties.csv").read_text() == bundle.files["properties.csv"]


def test_fixed_point_always_on_linear_phi():
    state, bundle = run_pipeline(ac_scenario(fixed_point="always"), write=False)
    fp = state["fixed_point"]
    assert fp is not None and fp.lambda_star == pytest.approx(4.0)
    breakdown = json.loads(bundle.files["breakdown.json"])
    assert breakdown["fixed_point"]["energy_gap"] < 0.01


def test_blowup_and_monitors_on_1d_kink():
    config = ac_scenario(blowup=True, blowup_levels=1, monitors=True)
    state, bundle = run_pipeline(config, write=False)
    assert "blowup_error" not in state
    assert state["blowup"].radii == pytest.approx([0.5, 0.25])
    assert state["ac_limit"].lambda0 == pytest.approx(4.0)
    assert "blowup.csv" in bundle.files
    assert "weiss.csv" in bundle.files
    assert "acf.csv" not in bundle.files


def test_blowup_that_does_not_fit_is_reported():
    state, bundle = run_pipeline(ac_scenario(blowup=True, blowup_levels=3), write=False)
    assert state["blowup_error"]
    assert "blowup.csv" not in bundle.files


def test_planted_quadratic_fails_linear_growth():
    config = validate_scenario(
        {
            "domain": {"shape": "interval", "size": [-1.0, 1.0], "resolution": 128},
            "phi": {"family": "linear", "lam": 1.0},
        }
    )
    problem = build_problem(config)
    u = make_field(problem.grid, lambda p: np.maximum(p[..., 0], 0.0) ** 2)
    checks, _ = evaluate_field(u, problem, config.analyses, config.thresholds)
    s = statuses(checks)
    assert s["growth"] == "fail"
    assert s["nondegeneracy"] == "fail"
    assert not suite_passed(checks)


def test_nonexistence_gates_monotone_checks():
    config = validate_scenario(
        {
            "domain": {"shape": "interval", "size": [0.0, 1.0], "resolution": 16},
            "phi": {"family": "nonexistence"},
        }
    )
    bundle = run_scenario(config, write=False)
    s = statuses(bundle.checks)
    assert s["monotonicity"] == "n/a"
    for name in ("bernoulli", "nondegeneracy", "clean_ball", "growth", "subharmonicity", "phase_separation"):
        assert s[name] == "n/a", name
    assert s.get("delta_uplus", "n/a") == "n/a"


def test_one_signed_solution_has_no_free_boundary():
    config = validate_scenario(
        {
            "domain": {"shape": "interval", "size": [0.0, 1.0], "resolution": 16},
            "boundary": {"family": "constant", "value": 1.0},
            "phi": {"family": "linear", "lam": 0.5},
        }
    )
    bundle = run_scenario(config, write=False)
    assert statuses(bundle.checks)["free_boundary"] == "n/a"


def test_property_suite_matches_the_bundle_checks():
    checks = run_property_suite(ac_scenario())
    assert statuses(checks)["bernoulli"] == "pass"
    assert {"growth", "nondegeneracy"} <= set(statuses(checks))
    assert statuses(checks) == statuses(run_scenario(ac_scenario(), write=False).checks)


def test_failing_diagnostic_fails_the_suite(monkeypatch):
    def broken(*args, **kwargs):
        raise DomainError("ball leaves the domain")

    monkeypatch.setattr(fbgeom, "growth_bounds", broken)
    config = ac_scenario()
    problem = build_problem(config)
    u = make_field(problem.grid, lambda p: 2.0 * np.maximum(p[..., 0] - 0.5, 0.0))
    checks, diagnostics = evaluate_field(u, problem, config.analyses, config.thresholds)
    assert diagnostics["errors"]["growth"] == "ball leaves the domain"
    s = statuses(checks)
    assert s["growth"] == "fail"
    assert s["bernoulli"] == "pass"
    assert not suite_passed(checks)
    assert not suite_passed([])


def test_manifest_varpi_comes_from_the_boundary_datum():
    # datum x on [0, 1]: boundary mass 1, sup 1, J[datum] = 1 + 4, trace constant 2
    bundle = run_scenario(ac_scenario(), write=False)
    run = bundle.files["manifest.txt"].split("[run]")[1]
    values = dict(line.split(" = ", 1) for line in run.strip().splitlines())
    assert float(values["varpi"]) == pytest.approx(varpi_lower_bound(1.0, 1.0, 5.0, 2.0))
    assert float(values["varpi"]) == pytest.approx(1.0 / 24.0)
    assert float(values["theta"]) == pytest.approx(4.0)


def test_degeneracy_option_writes_its_table():
    assert "degeneracy.csv" not in run_scenario(ac_scenario(), write=False).files
    state, bundle = run_pipeline(ac_scenario(degeneracy=True), write=False)
    x0, rows = state["degeneracy"]
    assert x0[0] == pytest.approx(0.5, abs=2 / 32)
    table = read_csv(bundle.files["degeneracy.csv"])
    assert len(table) == len(rows) > 0
    assert list(table[0]) == ["r", "value"]


def test_monitor_modes_follow_the_scenario():
    config = ac_scenario(blowup=True, blowup_levels=1, monitors=True, weiss_modes=["paper"])
    state, bundle = run_pipeline(config, write=False)
    assert {mode for _, _, mode in state["monitors"]["weiss"]} == {"paper"}
    assert {row["mode"] for row in read_csv(bundle.files["weiss.csv"])} == {"paper"}


def test_breakdown_reports_both_solver_flags():
    bundle = run_scenario(ac_scenario(), write=False)
    direct = json.loads(bundle.files["breakdown.json"])["direct"]
    assert direct["converged"] == direct["descent_converged"]
    assert direct["polished"] is True
