from __future__ import annotations

import math

import numpy as np
import pytest

from app.lab import phi as phis
from app.lab.errors import DomainError, InvalidInputError
from app.lab.fbgeom import (
    bernoulli_residuals,
    boundary_mass,
    clean_ball_scan,
    degeneracy_indicator,
    delta_uplus_measure,
    dyadic_radii,
    extract_free_boundary,
    growth_bounds,
    nondegeneracy_scan,
    one_sided_slopes,
    perimeter_estimate,
    phase_separation_check,
    positive_phase_harmonicity,
    subharmonicity_defect,
    trace_constant,
    varpi_lower_bound,
)
from app.lab.grid import disk_grid, interval_grid, make_field, square_grid
from app.lab.models import QField
from app.lab.solve import ac_result


def kink(grid, at=0.5):
    return make_field(grid, lambda p: np.maximum(p[..., 0] - at, 0.0))


def test_crossing_and_normal_in_1d():
    grid = interval_grid(0.0, 1.0, 40)
    fb = extract_free_boundary(make_field(grid, lambda p: p[..., 0] - 0.33))
    assert len(fb) == 1
    assert fb.points[0, 0] == pytest.approx(0.33)
    # normal points into {u <= 0}
    assert fb.normals[0, 0] == -1.0
    assert fb.alpha[0] == pytest.approx(1.0)
    assert fb.beta[0] == pytest.approx(1.0)


def test_no_free_boundary_for_positive_field():
    grid = interval_grid(0.0, 1.0, 8)
    fb = extract_free_boundary(make_field(grid, lambda p: 1.0 + p[..., 0]))
    assert fb.empty


def test_straight_line_in_2d():
    grid = square_grid(32)
    fb = extract_free_boundary(make_field(grid, lambda p: p[..., 0] - 0.51))
    assert not fb.empty
    assert np.allclose(fb.points[:, 0], 0.51, atol=1e-9)
    assert np.allclose(fb.normals, [-1.0, 0.0], atol=1e-6)
    finite = np.isfinite(fb.alpha)
    assert np.allclose(fb.alpha[finite], 1.0, atol=1e-6)
    assert perimeter_estimate(fb, (0.5, 0.5), 0.25) == pytest.approx(0.5, abs=2 * grid.h)


def test_one_sided_slopes_need_unit_normal():
    grid = interval_grid(0.0, 1.0, 16)
    u = kink(grid)
    alpha, beta = one_sided_slopes(u, (0.5,), (-1.0,))
    assert alpha == pytest.approx(1.0)
    assert beta == pytest.approx(0.0)
    with pytest.raises(InvalidInputError):
        one_sided_slopes(u, (0.5,), (-2.0,))


def test_bernoulli_residual_on_ac_minimizer():
    grid = interval_grid(0.0, 1.0, 32)
    result = ac_result(grid, make_field(grid, lambda p: p[..., 0]), 4.0, QField())
    fb = extract_free_boundary(result.field)
    report = bernoulli_residuals(result.field, fb, phis.linear(4.0), QField())
    assert report.lam.value == pytest.approx(4.0)
    assert report.samples == 1
    assert report.median < 0.1


def test_bernoulli_kink_accepts_any_jump_in_interval():
    # nonexistence phi has a kink at r = 1/2 with one-sided slopes 1 and -1/4
    grid = interval_grid(0.0, 1.0, 16)
    u = make_field(grid, lambda p: 0.5 * np.maximum(p[..., 0] - 0.5, 0.0))
    fb = extract_free_boundary(u)
    report = bernoulli_residuals(u, fb, phis.nonexistence(), QField())
    assert report.lam.kink
    assert report.lam.low <= 0.25 <= report.lam.high
    assert report.median == pytest.approx(0.0, abs=1e-9)


def test_dyadic_radii():
    grid = interval_grid(0.0, 1.0, 64)
    assert dyadic_radii(grid) == pytest.approx([1 / 16, 1 / 8, 1 / 4])


def test_nondegeneracy_and_growth_of_a_kink():
    grid = interval_grid(0.0, 1.0, 64)
    u = kink(grid)
    fb = extract_free_boundary(u)
    scan = nondegeneracy_scan(u, fb)
    assert all(m > 0.3 for m in scan.minimum)
    assert scan.minimum[-1] == pytest.approx(1 / 3, abs=0.05)
    growth = growth_bounds(u, fb)
    assert growth.c_sup == pytest.approx(1.0)
    assert growth.c_inf == pytest.approx(1.0)
    cb = clean_ball_scan(u, fb)
    assert all(0.3 < c <= 0.5 + 1e-9 for c in cb.c1)


def test_quadratic_growth_fails_linear_bounds():
    grid = interval_grid(0.0, 1.0, 64)
    u = make_field(grid, lambda p: np.maximum(p[..., 0] - 0.5, 0.0) ** 2)
    fb = extract_free_boundary(u)
    growth = growth_bounds(u, fb)
    assert growth.c_inf < 0.1
    scan = nondegeneracy_scan(u, fb)
    assert scan.minimum[0] < 0.1


def test_subharmonicity_of_positive_part():
    grid = interval_grid(-1.0, 1.0, 64)
    u = make_field(grid, lambda p: np.maximum(p[..., 0], 0.0))
    assert subharmonicity_defect(u).defect <= 1e-12
    hump = make_field(grid, lambda p: 1.0 - p[..., 0] ** 2)
    assert subharmonicity_defect(hump).defect > 0


def test_delta_uplus_measure_of_a_kink():
    grid = interval_grid(0.0, 1.0, 64)
    report = delta_uplus_measure(kink(grid), (0.5,), 0.125)
    assert report.bulk == pytest.approx(1.0)
    assert report.flux == pytest.approx(1.0)
    assert report.scale == pytest.approx(1.0)
    with pytest.raises(DomainError):
        delta_uplus_measure(kink(grid), (0.5,), 0.3)


def test_phase_separation():
    grid = interval_grid(0.0, 1.0, 16)
    apart = make_field(grid, lambda p: np.minimum(p[..., 0] - 0.25, 0.0))
    report = phase_separation_check(apart)
    assert not report.separated
    assert report.flagged >= 1
    touching = make_field(grid, lambda p: p[..., 0] - 0.5)
    assert phase_separation_check(touching).separated


def test_degeneracy_indicator():
    grid = interval_grid(-1.0, 1.0, 64)
    u = make_field(grid, lambda p: -np.abs(p[..., 0]))
    rows = degeneracy_indicator(u, (0.0,), [0.25, 0.5])
    for r, value in rows:
        assert value == pytest.approx(0.5, rel=0.1)
    with pytest.raises(DomainError):
        degeneracy_indicator(u, (0.9,), [0.5])


def test_positive_phase_harmonicity():
    grid = square_grid(16)
    assert positive_phase_harmonicity(make_field(grid, lambda p: 1.0 + p[..., 0])) < 1e-12
    assert positive_phase_harmonicity(make_field(grid, lambda p: 1.0 + p[..., 0] ** 2)) > 0


def test_boundary_mass_and_varpi():
    disk = disk_grid((0.0, 0.0), 1.0, 32)
    mass, sup = boundary_mass(disk, lambda p: p[..., 0] * p[..., 1])
    assert mass == pytest.approx(1.0, rel=1e-3)
    assert sup == pytest.approx(0.5, rel=1e-3)
    assert varpi_lower_bound(1.0, 1.0, 2.0, 1.0) == pytest.approx(0.25)
    assert varpi_lower_bound(0.0, 1.0, 2.0, 1.0) == 0.0
    with pytest.raises(InvalidInputError):
        varpi_lower_bound(1.0, 1.0, 2.0, 0.0)


def test_boundary_mass_on_square():
    grid = square_grid(8)
    mass, sup = boundary_mass(grid, lambda p: np.ones(p.shape[:-1]))
    assert mass == pytest.approx(4.0)
    assert sup == 1.0
    assert math.isclose(boundary_mass(interval_grid(0.0, 1.0, 8), lambda p: p[..., 0])[0], 1.0)


def test_trace_constants():
    assert trace_constant(interval_grid(0.0, 1.0, 8)) == pytest.approx(2.0)
    assert trace_constant(square_grid(8)) == pytest.approx(4.0)
    assert trace_constant(disk_grid((0.0, 0.0), 1.0, 16)) == pytest.approx(2.0)
    assert trace_constant(disk_grid((0.0, 0.0), 4.0, 16)) == pytest.approx(1.0)


def test_bernoulli_with_per_node_q_reaches_the_disk_edge():
    # Gamma = {x = 0} meets the circle, where Q cannot be interpolated
    grid = disk_grid((0.0, 0.0), 1.0, 32)
    u = make_field(grid, lambda p: 2.0 * np.maximum(p[..., 0], 0.0))
    q = QField(mode="per-node", values=np.ones(grid.shape))
    fb = extract_free_boundary(u)
    report = bernoulli_residuals(u, fb, phis.linear(4.0), q)
    assert report.samples > 0
    assert report.median < 0.1


def test_slopes_on_a_staircase_front():
    # a plane tilted off the lattice: the positive set is a staircase of cells
    grid = square_grid(64)
    normal = np.array([np.cos(0.3), np.sin(0.3)])
    u = make_field(grid, lambda p: 2.0 * np.maximum((p - 0.5) @ normal, 0.0))
    fb = extract_free_boundary(u)
    alpha = fb.alpha[np.isfinite(fb.alpha)]
    assert alpha.size > 0
    assert np.median(alpha) == pytest.approx(2.0, rel=0.1)
