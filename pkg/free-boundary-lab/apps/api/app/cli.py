from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Sequence

from .config import settings
from .lab import fieldio
from .lab.errors import InvalidInputError, LabError
from .log import configure_logging
from .models import ScenarioConfig, validate_scenario
from .pipeline.graph import run_scenario
from .pipeline.problem import build_problem
from .pipeline.properties import check_rows, evaluate_field, suite_passed
from .pipeline.repro import (
    nonexistence_csv,
    oracle_check,
    oracle_check_csv,
    repro_nonexistence,
    repro_saddle,
    saddle_files,
)
from .pipeline.sweep import sweep


logger = logging.getLogger("app.cli")

EXIT_OK, EXIT_FAILED, EXIT_ERROR = 0, 1, 2


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="scenario file ([section] key = value)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--resolution", type=int, help="override domain resolution")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    p.add_argument("--weiss-mode", action="append", choices=["paper", "standard"], help="Weiss monitor mode (repeatable)")
    p.add_argument("--acf-mode", action="append", choices=["paper", "n-2"], help="ACF monitor mode (repeatable)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="fblab", description="Free-boundary energy minimization lab")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("solve", parents=[common], help="solve a scenario and write its bundle")
    an = sub.add_parser("analyze", parents=[common], help="property suite on a field dump")
    an.add_argument("--field", type=Path, required=True)
    sub.add_parser("blowup", parents=[common], help="solve, then blow up at a Gamma point")
    sub.add_parser("sweep", parents=[common], help="run the [sweep] parameter grid")

    rp = sub.add_parser("repro", parents=[common], help="reproduce the two explicit examples")
    rp.add_argument("example", choices=["nonexistence1d", "saddle2d"])
    rp.add_argument("--resolutions", default="8,16,32,64", help="cells per unit for nonexistence1d")
    rp.add_argument("--perturbations", type=int, default=200)
    rp.add_argument("--radii", default="0.1,0.2,0.4", help="flatness radii for saddle2d")

    oc = sub.add_parser("oracle-check", parents=[common], help="direct solver against exhaustive enumeration")
    oc.add_argument("--cases", type=int, default=20)

    sv = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8000)
    return parser


def _ints(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise InvalidInputError(f"not a list of integers: {text!r}") from e


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise InvalidInputError(f"not a list of numbers: {text!r}") from e


def load_config(args: argparse.Namespace) -> ScenarioConfig:
    config = ScenarioConfig.from_file(args.config) if args.config else ScenarioConfig()
    return config.with_overrides(
        seed=args.seed,
        resolution=args.resolution,
        out=str(args.out) if args.out else None,
        threads=args.threads,
        weiss_modes=getattr(args, "weiss_mode", None),
        acf_modes=getattr(args, "acf_mode", None),
    )


def _out_dir(args: argparse.Namespace, name: str) -> Path:
    return args.out if args.out else Path(settings.runs_dir) / name


def cmd_solve(args: argparse.Namespace, force_blowup: bool = False) -> int:
    config = load_config(args)
    if force_blowup:
        data = config.model_dump()
        data["analyses"].update(blowup=True, monitors=True)
        config = validate_scenario(data)
    bundle = run_scenario(config)
    for c in bundle.checks:
        print(f"{c.name:18s} {c.status:5s} {fieldio.fmt(c.value)}")
    print(f"J = {bundle.breakdown.total:.12g}  converged = {bundle.converged}  -> {bundle.run_dir}")
    return bundle.exit_code


def cmd_analyze(args: argparse.Namespace) -> int:
    config = load_config(args)
    u = fieldio.read_field(args.field)
    problem = build_problem(config)
    if u.grid.shape != problem.grid.shape:
        raise InvalidInputError(f"field shape {u.grid.shape} does not match the scenario grid {problem.grid.shape}")
    checks, diagnostics = evaluate_field(u, problem, config.analyses, config.thresholds)
    bern = diagnostics.get("bernoulli")
    files = {
        "properties.csv": fieldio.csv_text(fieldio.PROPERTY_HEADER, check_rows(checks)),
        "free_boundary.csv": fieldio.free_boundary_csv(bern.free_boundary if bern else diagnostics["free_boundary"]),
    }
    if "density" in diagnostics:
        files["density.csv"] = fieldio.density_csv(diagnostics["density"])
    out = fieldio.write_files(_out_dir(args, f"analyze-{args.field.stem}"), files)
    sys.stdout.write(files["properties.csv"])
    logger.info("analysis written to %s", out)
    return EXIT_OK if suite_passed(checks) else EXIT_FAILED


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args)
    result = sweep(config, threads=args.threads or settings.default_threads)
    sys.stdout.write(result.files["sweep.csv"])
    return EXIT_OK if all(r.status == "ok" for r in result.rows) else EXIT_FAILED


def cmd_repro(args: argparse.Namespace) -> int:
    if args.example == "nonexistence1d":
        rows = repro_nonexistence(_ints(args.resolutions))
        text = nonexistence_csv(rows)
        fieldio.write_files(_out_dir(args, "repro-nonexistence1d"), {"nonexistence.csv": text})
        sys.stdout.write(text)
        close = all(abs(r.energy - r.analytic) <= 1e-3 for r in rows)
        decreasing = all(b.energy < a.energy for a, b in zip(rows, rows[1:]))
        return EXIT_OK if close and decreasing else EXIT_FAILED

    report = repro_saddle(
        args.resolution or 128, args.perturbations, _floats(args.radii), seed=args.seed or 0
    )
    files = saddle_files(report)
    fieldio.write_files(_out_dir(args, "repro-saddle2d"), files)
    sys.stdout.write(files["saddle.json"] + "\n" + files["flatness.csv"])
    flat = all(f is not None and f >= 0.5 for _, f in report.flatness)
    return EXIT_OK if report.energy_error <= 0.02 and report.minimal and flat else EXIT_FAILED


def cmd_oracle_check(args: argparse.Namespace) -> int:
    cases = oracle_check(args.cases, seed=args.seed or 0)
    text = oracle_check_csv(cases)
    fieldio.write_files(_out_dir(args, "oracle-check"), {"oracle_check.csv": text})
    sys.stdout.write(text)
    return EXIT_OK if all(c.ok for c in cases) else EXIT_FAILED


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("app.main:app", host=args.host, port=args.port, log_config=None)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging("DEBUG" if args.verbose else settings.log_level)
    commands = {
        "solve": cmd_solve,
        "analyze": cmd_analyze,
        "blowup": lambda a: cmd_solve(a, force_blowup=True),
        "sweep": cmd_sweep,
        "repro": cmd_repro,
        "oracle-check": cmd_oracle_check,
        "serve": cmd_serve,
    }
    try:
        return commands[args.command](args)
    except LabError as e:
        logger.error("%s", e)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
