from __future__ import annotations

import pytest

from app.lab.errors import InvalidInputError
from app.models import ScenarioConfig, validate_scenario


SCENARIO = """
[domain]
shape = interval
size = 0, 1
resolution = 32

[boundary]
family = linear
slope = 1

[phi]
family = power
coefficient = 2
p = 0.5

[solver]
eps_multipliers = 4, 2, 1
seed = 7

[analyses]
fixed_point = always
minimality = true

[sweep]
coefficient = 1, 2, 4

[output]
name = sqrt-volume
"""


def test_ini_scenario():
    config = ScenarioConfig.from_ini(SCENARIO)
    assert config.domain.resolution == 32
    assert config.domain.dim == 1
    assert config.phi.family == "power"
    assert config.phi.p == 0.5
    assert config.solver.eps_multipliers == [4.0, 2.0, 1.0]
    assert config.seed == 7
    assert config.analyses.fixed_point == "always"
    assert config.analyses.minimality is True
    assert config.sweep.grid() == {"coefficient": [1.0, 2.0, 4.0]}
    assert config.output.name == "sqrt-volume"


def test_ini_round_trip():
    config = ScenarioConfig.from_ini(SCENARIO)
    assert ScenarioConfig.from_ini(config.to_ini()) == config


def test_run_section_is_ignored():
    config = ScenarioConfig.from_ini("[run]\nrun_id = x\n\n[domain]\nresolution = 16\n")
    assert config.domain.resolution == 16


@pytest.mark.parametrize(
    "text",
    [
        "[mesh]\nresolution = 32\n",
        "[domain]\nresolution = 8\n",
        "[domain]\nshape = disk\nsize = 0, 0\n",
        "[domain]\ncolour = red\n",
        "[solver]\neps_multipliers = 1, 2\n",
        "[phi]\nfamily = power\np = 1.5\n",
        "[q]\nmode = file\npath = /nonexistent/q.txt\n",
        "[boundary]\nfamily = tabulated\nknots = 0, 1, 2\n",
        "not an ini file",
    ],
)
def test_invalid_scenarios_rejected(text):
    with pytest.raises(InvalidInputError):
        ScenarioConfig.from_ini(text)


def test_overrides():
    config = ScenarioConfig().with_overrides(seed=3, resolution=128, out="runs/x", threads=4)
    assert config.seed == 3
    assert config.domain.resolution == 128
    assert config.output.dir == "runs/x"
    assert config.output.threads == 4
    with pytest.raises(InvalidInputError):
        ScenarioConfig().with_overrides(resolution=4)


def test_missing_file(tmp_path):
    with pytest.raises(InvalidInputError):
        ScenarioConfig.from_file(tmp_path / "nope.ini")


def test_validate_scenario_wraps_errors():
    with pytest.raises(InvalidInputError):
        validate_scenario({"output": {"threads": 0}})


def test_monitor_modes_from_ini_and_overrides():
    config = ScenarioConfig.from_ini("[analyses]\nweiss_modes = paper\nacf_modes = n-2, paper\n")
    assert config.analyses.weiss_modes == ["paper"]
    assert config.analyses.acf_modes == ["n-2", "paper"]
    assert ScenarioConfig().analyses.weiss_modes == ["standard", "paper"]
    config = ScenarioConfig().with_overrides(weiss_modes=["standard"], acf_modes=["paper"])
    assert config.analyses.weiss_modes == ["standard"]
    assert config.analyses.acf_modes == ["paper"]
    with pytest.raises(InvalidInputError):
        ScenarioConfig.from_ini("[analyses]\nweiss_modes = quartic\n")


def test_polish_patch_radii_parsed():
    config = ScenarioConfig.from_ini("[solver]\npolish_patch_radii = 0, 3\npolish_window = 2\n")
    assert config.solver.polish_patch_radii == [0, 3]
    assert config.solver.polish_window == 2
    assert ScenarioConfig.from_ini(config.to_ini()) == config
    with pytest.raises(InvalidInputError):
        ScenarioConfig.from_ini("[solver]\npolish_patch_radii = -1\n")
