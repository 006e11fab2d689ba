from __future__ import annotations

import json
import math

import pytest

from app.lab.errors import InvalidInputError
from app.lab.fieldio import read_csv
from app.models import Oracle1DRequest, PhiSection
from app.pipeline.repro import (
    nonexistence_analytic,
    nonexistence_csv,
    oracle_1d,
    oracle_check,
    oracle_check_csv,
    repro_nonexistence,
    repro_saddle,
    saddle_files,
)


def test_nonexistence_energies_follow_the_pinned_competitor():
    rows = repro_nonexistence((8, 16))
    for row in rows:
        assert row.energy == pytest.approx(row.analytic, abs=1e-3)
        assert row.zero_measure == pytest.approx(row.h, abs=1e-9)
    assert rows[1].energy < rows[0].energy
    # infimum 11/8 is approached, never reached
    assert all(row.energy > 11.0 / 8.0 for row in rows)
    table = read_csv(nonexistence_csv(rows))
    assert [float(r["h"]) for r in table] == [0.125, 0.0625]


def test_nonexistence_analytic_limit():
    assert nonexistence_analytic(0.125) == pytest.approx(8 / 7 + 3.25 / 8)
    assert nonexistence_analytic(1e-9) == pytest.approx(11.0 / 8.0)


def test_nonexistence_needs_eight_cells():
    with pytest.raises(InvalidInputError):
        repro_nonexistence((4,))


def test_oracle_check_cases_agree():
    cases = oracle_check(4, seed=1)
    assert [c.dim for c in cases] == [1, 1, 1, 1, 2]
    assert all(c.ok for c in cases)
    rows = read_csv(oracle_check_csv(cases))
    assert {r["status"] for r in rows} == {"pass"}


def test_oracle_1d_request():
    request = Oracle1DRequest(interior_nodes=5, phi=PhiSection(family="linear", lam=4.0))
    report = oracle_1d(request)
    assert len(report.pattern) == 5
    assert report.direct == pytest.approx(report.energy, abs=1e-6)
    assert len(read_csv(report.files["oracle.csv"])) == 3**5


@pytest.mark.slow
def test_saddle_is_minimal_and_keeps_its_corner():
    report = repro_saddle(resolution=128, n_perturbations=50, radii=(0.2, 0.4))
    assert report.energy_error <= 0.02
    assert report.c1 == pytest.approx(1.0, rel=1e-3)
    assert report.minimal
    assert all(f is not None and f >= 0.5 for _, f in report.flatness)
    files = saddle_files(report)
    summary = json.loads(files["saddle.json"])
    assert summary["expected"] == pytest.approx(math.pi / 2 + 1.0)
    assert len(read_csv(files["flatness.csv"])) == 2


@pytest.mark.slow
def test_oracle_check_full_set():
    cases = oracle_check(20, seed=0)
    assert sum(c.dim == 1 for c in cases) == 20
    assert all(c.ok for c in cases)
    assert max(c.gap for c in cases) <= 1e-6
