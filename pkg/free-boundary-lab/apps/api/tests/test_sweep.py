from __future__ import annotations

import pytest

from app.lab.fieldio import SWEEP_HEADER, read_csv
from app.models import validate_scenario
from app.pipeline.sweep import parameter_tuples, sweep


def base(sweep_section):
    return validate_scenario(
        {
            "domain": {"shape": "interval", "size": [0.0, 1.0], "resolution": 16},
            "phi": {"family": "linear", "lam": 1.0},
            "analyses": {"density": False, "subharmonicity": False},
            "sweep": sweep_section,
            "output": {"name": "sweep-test"},
        }
    )


def test_parameter_tuples_are_a_cartesian_product():
    config = base({"family": "power", "coefficient": [1.0, 2.0], "p": [0.5, 1.0]})
    assert parameter_tuples(config) == [
        {"coefficient": 1.0, "p": 0.5},
        {"coefficient": 1.0, "p": 1.0},
        {"coefficient": 2.0, "p": 0.5},
        {"coefficient": 2.0, "p": 1.0},
    ]


def test_empty_sweep_writes_header_only(runs_dir):
    result = sweep(base({}))
    assert result.rows == []
    assert result.files["sweep.csv"] == ",".join(SWEEP_HEADER) + "\n"
    assert (result.run_dir / "sweep.csv").exists()


def test_rows_ordered_across_threads():
    result = sweep(base({"lam": [0.5, 4.0, 2.0]}), threads=3, write=False)
    assert [r.index for r in result.rows] == [0, 1, 2]
    assert [r.params for r in result.rows] == ["lam=0.5", "lam=4", "lam=2"]
    assert all(r.energy is not None for r in result.rows)
    assert result.rows[1].lambda_star == 4.0
    table = read_csv(result.files["sweep.csv"])
    assert [row["index"] for row in table] == ["0", "1", "2"]


def test_failing_row_is_recorded():
    # tabulated phi without knots cannot be built
    result = sweep(base({"family": "tabulated", "lambda2": [1.0]}), write=False)
    assert len(result.rows) == 1
    assert result.rows[0].status.startswith("error")
    assert result.rows[0].energy is None


def test_lambda_star_is_phi0_slope_without_lambda2():
    # Phi0(r) = 4 r has slope 4 whatever lambda2 scales M2 by
    result = sweep(base({"lam": [4.0], "lambda2": [2.0]}), write=False)
    row = result.rows[0]
    assert row.energy is not None
    assert row.lambda_star == pytest.approx(4.0)
