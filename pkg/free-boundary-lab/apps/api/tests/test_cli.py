from __future__ import annotations

from app.cli import EXIT_ERROR, EXIT_OK, main
from app.lab.fieldio import read_csv


AC_SCENARIO = """
[domain]
shape = interval
size = 0, 1
resolution = 32

[phi]
family = linear
lam = 4

[output]
name = cli-ac
"""


def test_repro_nonexistence(tmp_path, capsys):
    out = tmp_path / "nonexistence"
    assert main(["repro", "nonexistence1d", "--resolutions", "8,16", "--out", str(out)]) == EXIT_OK
    rows = read_csv((out / "nonexistence.csv").read_text())
    assert len(rows) == 2
    assert capsys.readouterr().out.startswith("h,energy,analytic,zero_measure")


def test_solve_then_analyze(tmp_path):
    config = tmp_path / "ac.ini"
    config.write_text(AC_SCENARIO)
    run = tmp_path / "run"
    assert main(["solve", "--config", str(config), "--out", str(run)]) in (0, 1)
    assert (run / "field.txt").exists()
    assert (run / "manifest.txt").exists()

    out = tmp_path / "analysis"
    code = main(["analyze", "--config", str(config), "--field", str(run / "field.txt"), "--out", str(out)])
    assert code in (0, 1)
    names = {row["check"] for row in read_csv((out / "properties.csv").read_text())}
    assert "bernoulli" in names


def test_analyze_rejects_mismatched_grid(tmp_path):
    config = tmp_path / "ac.ini"
    config.write_text(AC_SCENARIO)
    run = tmp_path / "run"
    main(["solve", "--config", str(config), "--out", str(run)])
    code = main(["analyze", "--config", str(config), "--resolution", "64", "--field", str(run / "field.txt")])
    assert code == EXIT_ERROR


def test_invalid_config_exits_with_error(tmp_path):
    config = tmp_path / "bad.ini"
    config.write_text("[domain]\nresolution = 4\n")
    assert main(["solve", "--config", str(config), "--out", str(tmp_path / "x")]) == EXIT_ERROR
    assert main(["solve", "--config", str(tmp_path / "missing.ini")]) == EXIT_ERROR


def test_oracle_check(tmp_path):
    out = tmp_path / "oracle"
    assert main(["oracle-check", "--cases", "3", "--out", str(out)]) == EXIT_OK
    rows = read_csv((out / "oracle_check.csv").read_text())
    assert len(rows) == 4


def test_monitor_mode_flags_reach_the_manifest(tmp_path):
    config = tmp_path / "ac.ini"
    config.write_text(AC_SCENARIO)
    run = tmp_path / "run"
    code = main(["solve", "--config", str(config), "--out", str(run), "--weiss-mode", "paper", "--acf-mode", "n-2"])
    assert code in (0, 1)
    manifest = (run / "manifest.txt").read_text()
    assert "weiss_modes = paper\n" in manifest
    assert "acf_modes = n-2\n" in manifest
