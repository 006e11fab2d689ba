from __future__ import annotations

import numpy as np
import pytest

from app.lab import phi as phis
from app.lab.energy import total_energy
from app.lab.errors import DomainError, InvalidInputError
from app.lab.fbgeom import extract_free_boundary
from app.lab.grid import disk_grid, interval_grid, make_field, rectangle_grid
from app.lab.models import QField, SolverConfig
from app.lab.solve import (
    ac_result,
    ac_solve,
    harmonic_replacement,
    harmonic_residual,
    make_problem,
    minimize_direct,
    minimize_fixed_point,
    solve_harmonic,
    verify_minimality,
)


def ramp(grid):
    return make_field(grid, lambda p: p[..., 0])


def test_harmonic_linear_datum_is_exact():
    grid = rectangle_grid(0.0, 1.0, 0.0, 0.5, 16)
    datum = ramp(grid)
    for method in ("direct", "sor"):
        u = solve_harmonic(grid, datum.with_values(np.where(grid.interior, 0.0, datum.values)), config=SolverConfig(harmonic_method=method))
        assert np.max(np.abs(u.values - datum.values)) < 1e-7
        assert harmonic_residual(u) < 1e-7


def test_harmonic_saddle_on_disk():
    grid = disk_grid((0.0, 0.0), 1.0, 64)
    datum = make_field(grid, lambda p: p[..., 0] * p[..., 1])
    u = solve_harmonic(grid, datum, config=SolverConfig(harmonic_method="direct"))
    active = grid.active
    assert np.max(np.abs(u.values[active] - datum.values[active])) < 0.05


def test_harmonic_replacement_fills_the_ball():
    grid = interval_grid(0.0, 1.0, 8)
    u = make_field(grid, lambda p: -np.abs(p[..., 0] - 0.5))
    v, w = harmonic_replacement(u, (0.5,), 0.25)
    x = grid.axes()[0]
    inside = np.abs(x - 0.5) < 0.25
    assert v.values[inside] == pytest.approx(-0.25)
    assert w.values[inside] == pytest.approx(-0.25)
    assert np.array_equal(w.values[~inside], u.values[~inside])


def test_harmonic_replacement_of_harmonic_field_is_identity():
    grid = interval_grid(0.0, 1.0, 16)
    u = ramp(grid)
    v, w = harmonic_replacement(u, (0.5,), 0.3)
    assert np.allclose(v.values, u.values, atol=1e-9)
    assert np.allclose(w.values, u.values, atol=1e-9)


def test_harmonic_replacement_rejects_bad_balls():
    u = ramp(interval_grid(0.0, 1.0, 16))
    with pytest.raises(DomainError):
        harmonic_replacement(u, (0.9,), 0.3)
    with pytest.raises(InvalidInputError):
        harmonic_replacement(u, (0.5,), 0.0)


def test_make_problem_rejects_foreign_boundary():
    a, b = interval_grid(0.0, 1.0, 8), interval_grid(0.0, 1.0, 16)
    with pytest.raises(InvalidInputError):
        make_problem(a, ramp(b), QField(), phis.linear(1.0))


def test_ac_zero_lambda_is_harmonic_extension():
    grid = interval_grid(0.0, 1.0, 16)
    boundary = make_field(grid, lambda p: 2.0 * p[..., 0] - 1.0)
    u = ac_solve(grid, boundary, 0.0, QField())
    assert np.allclose(u.values, boundary.values, atol=1e-6)


def test_ac_negative_lambda_rejected():
    grid = interval_grid(0.0, 1.0, 8)
    with pytest.raises(InvalidInputError):
        ac_solve(grid, ramp(grid), -1.0, QField())


def test_ac_one_dimensional_profile():
    # J(a) = 1/(1-a) + 4(1-a) is smallest at a = 1/2 with J = 4
    grid = interval_grid(0.0, 1.0, 32)
    result = ac_result(grid, ramp(grid), 4.0, QField())
    assert result.breakdown.total == pytest.approx(4.0, abs=0.05)
    fb = extract_free_boundary(result.field)
    assert len(fb) == 1
    assert fb.points[0, 0] == pytest.approx(0.5, abs=2 * grid.h)
    assert fb.alpha[0] == pytest.approx(2.0, rel=0.05)


@pytest.mark.slow
def test_ac_one_dimensional_profile_fine():
    grid = interval_grid(0.0, 1.0, 256)
    result = ac_result(grid, ramp(grid), 4.0, QField())
    assert result.breakdown.total == pytest.approx(4.0, abs=0.05)
    fb = extract_free_boundary(result.field)
    assert fb.points[0, 0] == pytest.approx(0.5, abs=2 * grid.h)


def test_nonexistence_minimizer_keeps_one_zero_cell():
    grid = interval_grid(0.0, 1.0, 8)
    problem = make_problem(grid, ramp(grid), QField(), phis.nonexistence())
    result = minimize_direct(problem)
    h = grid.h
    assert result.breakdown.total == pytest.approx(1.0 / (1.0 - h) + (3.0 + 2.0 * h) / 8.0, abs=1e-3)
    assert result.breakdown.m2 == pytest.approx(1.0 - h, abs=1e-9)
    assert result.field.values[1] == pytest.approx(0.0, abs=1e-9)
    assert result.history


def test_fixed_point_linear_phi_returns_lambda():
    grid = interval_grid(0.0, 1.0, 32)
    problem = make_problem(grid, ramp(grid), QField(), phis.linear(4.0))
    result = minimize_fixed_point(problem)
    assert result.converged
    assert result.lambda_star == pytest.approx(4.0)
    assert result.breakdown.total == pytest.approx(4.0, abs=0.05)


def test_fixed_point_square_root_volume():
    # Phi0(r) = 2 sqrt(r): lambda* = 1 and u = x is already optimal
    grid = interval_grid(0.0, 1.0, 32)
    problem = make_problem(grid, ramp(grid), QField(), phis.power(2.0, 0.5))
    result = minimize_fixed_point(problem)
    assert result.converged
    assert result.lambda_star == pytest.approx(1.0, rel=0.02)
    assert result.breakdown.total == pytest.approx(3.0, rel=0.02)
    assert result.lambda_star_trace[0] == pytest.approx(1.0, rel=0.02)


def test_minimality_on_ac_minimizer():
    grid = interval_grid(0.0, 1.0, 32)
    problem = make_problem(grid, ramp(grid), QField(), phis.linear(4.0))
    u = minimize_direct(problem).field
    report = verify_minimality(u, problem, n_perturbations=40, seed=3)
    assert len(report.gaps) == 40
    assert report.min_gap >= -1e-6 * abs(report.energy)


def test_minimality_needs_room_for_bumps():
    grid = interval_grid(0.0, 1.0, 4)
    problem = make_problem(grid, ramp(grid), QField(), phis.linear(1.0))
    with pytest.raises(InvalidInputError):
        verify_minimality(problem.boundary, problem, n_perturbations=1)


def test_descent_and_polish_flags_are_separate():
    grid = interval_grid(0.0, 1.0, 32)
    problem = make_problem(grid, ramp(grid), QField(), phis.linear(4.0))
    result = minimize_direct(problem, SolverConfig(max_outer_iterations=1))
    assert not result.descent_converged
    assert not result.converged
    assert result.polished
    assert result.breakdown.total == pytest.approx(4.0, abs=0.05)

    result = minimize_direct(problem)
    assert result.converged == result.descent_converged
    assert result.polished


def test_windowed_polish_matches_global_polish():
    # a window wider than the grid re-solves every unpinned node
    grid = interval_grid(0.0, 1.0, 32)
    problem = make_problem(grid, ramp(grid), QField(), phis.linear(4.0))
    full = minimize_direct(problem)
    windowed = minimize_direct(problem, SolverConfig(polish_global_max_nodes=0, polish_window=64))
    assert windowed.polished
    assert windowed.breakdown.total == pytest.approx(full.breakdown.total, abs=1e-9)
    fb = extract_free_boundary(windowed.field)
    assert fb.points[0, 0] == pytest.approx(0.5, abs=2 * grid.h)


@pytest.mark.slow
def test_polish_reaches_the_one_plane_energy_on_a_large_grid():
    # 2x+ on [-1, 1]^2 balances Lambda = 4 exactly; J = 8 + 8
    grid = rectangle_grid(-1.0, 1.0, -1.0, 1.0, 64)
    plane = make_field(grid, lambda p: 2.0 * np.maximum(p[..., 0], 0.0))
    problem = make_problem(grid, plane, QField(), phis.linear(4.0))
    exact = total_energy(plane, QField(), problem.phi).total
    assert exact == pytest.approx(16.0, rel=1e-9)
    result = minimize_direct(problem)
    assert result.polished
    assert result.breakdown.total <= exact * (1.0 + 1e-6)


@pytest.mark.slow
@pytest.mark.parametrize("c", [1.0, 2.0, 4.0])
def test_fixed_point_agrees_with_direct_for_square_root_volume(c):
    grid = interval_grid(0.0, 1.0, 128)
    problem = make_problem(grid, ramp(grid), QField(), phis.power(c, 0.5))
    direct = minimize_direct(problem)
    fp = minimize_fixed_point(problem)
    assert fp.breakdown.m2 == pytest.approx(direct.breakdown.m2, rel=0.02)
    gap = abs(fp.breakdown.total - direct.breakdown.total) / abs(direct.breakdown.total)
    assert gap <= 1e-3
    slope = phis.phi0_value_and_derivative(problem.phi, fp.breakdown.m2).derivative
    assert abs(fp.lambda_star - slope) <= 1e-3
