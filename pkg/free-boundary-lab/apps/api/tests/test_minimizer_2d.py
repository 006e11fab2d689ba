from __future__ import annotations

import functools

import numpy as np
import pytest

from app.lab import phi as phis
from app.lab.blowup import monitor_trace
from app.lab.fbgeom import bernoulli_residuals, extract_free_boundary
from app.lab.grid import ball_inside, disk_grid, make_field
from app.lab.models import QField
from app.lab.solve import make_problem, minimize_direct
from app.models import validate_scenario
from app.pipeline.graph import run_pipeline
from app.pipeline.properties import evaluate_field, gamma_center


pytestmark = pytest.mark.slow

# unit disk, datum x1 + 0.2: negative on the left arc, so both phases appear
OFFSET = 0.2


@functools.lru_cache(maxsize=None)
def linear_minimizer(cells: int):
    grid = disk_grid((0.0, 0.0), 1.0, cells)
    datum = make_field(grid, lambda p: p[..., 0] + OFFSET)
    problem = make_problem(grid, datum, QField(), phis.linear(4.0))
    return problem, minimize_direct(problem)


def statuses(checks):
    return {c.name: c.status for c in checks}


def test_bernoulli_residual_under_refinement():
    medians = []
    for cells in (64, 128, 256):
        problem, result = linear_minimizer(cells)
        fb = extract_free_boundary(result.field)
        report = bernoulli_residuals(result.field, fb, problem.phi, problem.q)
        assert report.samples > 0
        medians.append(report.median)
    assert medians[-1] <= 0.10
    for coarse, fine in zip(medians, medians[1:]):
        assert fine <= 2.0 * coarse


def test_invariant_suite_on_a_computed_minimizer():
    perimeters, constants = [], []
    for cells in (64, 128):
        problem, result = linear_minimizer(cells)
        checks, diagnostics = evaluate_field(result.field, problem)
        s = statuses(checks)
        for name in ("subharmonicity", "nondegeneracy", "clean_ball", "phase_separation", "delta_uplus", "perimeter"):
            assert s[name] == "pass", name
        assert not diagnostics["errors"]
        perimeters.append(diagnostics["perimeter"])
        constants.append(diagnostics["subharmonicity"].defect / problem.grid.h)
    assert perimeters[1] == pytest.approx(perimeters[0], rel=0.1)
    assert constants[1] <= 2.0 * constants[0] + 1e-9


def test_acf_nondecreasing_on_a_two_phase_minimizer():
    problem, result = linear_minimizer(128)
    u = result.field
    assert np.nanmin(u.values) < 0 < np.nanmax(u.values)
    x0 = gamma_center(u, extract_free_boundary(u))
    radii = [r for r in (0.1, 0.2, 0.3, 0.4) if ball_inside(u.grid, x0, r)]
    assert len(radii) >= 3
    values = [v for _, v, _ in monitor_trace(u, x0, radii, 4.0, modes=("n-2",), kind="acf")]
    slack = 5.0 * u.grid.h * max(values)
    for a, b in zip(values, values[1:]):
        assert b >= a - slack


def test_blowup_of_a_square_root_volume_minimizer():
    config = validate_scenario(
        {
            "domain": {"shape": "disk", "size": [0.0, 0.0, 1.0], "resolution": 128},
            "boundary": {"family": "linear", "slope": 1.0, "offset": OFFSET},
            "phi": {"family": "power", "coefficient": 2.0, "p": 0.5},
            "analyses": {"fixed_point": "never", "blowup": True, "blowup_levels": 2},
        }
    )
    state, _ = run_pipeline(config, write=False)
    assert "blowup_error" not in state
    seq = state["blowup"]
    assert seq.radii[-1] == pytest.approx(8.0 * state["problem"].grid.h)
    for a, b in zip(seq.sup_diff, seq.sup_diff[1:]):
        assert b <= a
    ac = state["ac_limit"]
    assert ac.slope_gap <= 0.10
