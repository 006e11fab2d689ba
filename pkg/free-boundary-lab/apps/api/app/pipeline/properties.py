from __future__ import annotations

import logging
import math
from typing import Any, Callable, Dict, List

import numpy as np

from ..lab import fbgeom
from ..lab.errors import LabError
from ..lab.grid import ball_inside, domain_extent
from ..lab.models import DensityReport, FreeBoundary, Problem, ScalarField
from ..lab.phi import check_monotonicity
from ..models import AnalysesSection, ThresholdsSection
from .models import PropertyCheck


logger = logging.getLogger(__name__)

# checks whose hypotheses need a monotone Phi0
MONOTONE_ONLY = ("subharmonicity", "nondegeneracy", "clean_ball", "growth", "bernoulli", "phase_separation", "delta_uplus")


def _finite(v: float | None) -> bool:
    return v is not None and math.isfinite(v)


def domain_center(u: ScalarField) -> np.ndarray:
    grid = u.grid
    if grid.center is not None:
        return np.asarray(grid.center)
    return 0.5 * (np.asarray(grid.origin) + np.asarray(grid.upper))


def gamma_center(u: ScalarField, fb: FreeBoundary, analyses: AnalysesSection | None = None) -> np.ndarray | None:
    """Configured blow-up center, else the Gamma sample nearest the domain center."""
    if analyses is not None and analyses.blowup_center is not None:
        return np.asarray(analyses.blowup_center, dtype=float)
    if fb.empty:
        return None
    d = np.linalg.norm(fb.points - domain_center(u), axis=1)
    return fb.points[int(np.argmin(d))]


def _measure_ball(u: ScalarField, fb: FreeBoundary) -> tuple[np.ndarray, float] | None:
    """A Gamma sample and the largest dyadic radius with B_2r inside the domain."""
    grid = u.grid
    for p in fbgeom.sample_centers(fb, 32):
        for r in reversed(fbgeom.dyadic_radii(grid)):
            if ball_inside(grid, p, 2 * r):
                return p, r
    return None


def _degeneracy(u: ScalarField, fb: FreeBoundary, analyses: AnalysesSection) -> tuple[np.ndarray, list[tuple[float, float]]]:
    x0 = gamma_center(u, fb, analyses)
    radii = list(analyses.degeneracy_radii) or fbgeom.dyadic_radii(u.grid)
    radii = [r for r in radii if ball_inside(u.grid, x0, r)]
    return x0, fbgeom.degeneracy_indicator(u, x0, radii)


def collect_diagnostics(
    u: ScalarField, problem: Problem, fb: FreeBoundary, analyses: AnalysesSection | None = None
) -> Dict[str, Any]:
    """Run the enabled fbgeom diagnostics once; checks and bundles read from the result.

    A diagnostic that raises a LabError is recorded under ``errors`` and the
    others still run.
    """
    analyses = analyses or AnalysesSection()
    grid = u.grid
    out: Dict[str, Any] = {"free_boundary": fb, "errors": {}}
    out["monotonicity"] = check_monotonicity(problem.phi, problem.phi.lambda_omega or problem.lambda_omega)

    def run(name: str, fn: Callable[[], Any]) -> None:
        try:
            value = fn()
        except LabError as e:
            logger.warning("diagnostic %s failed: %s", name, e)
            out["errors"][name] = str(e)
            return
        if value is not None:
            out[name] = value

    if analyses.subharmonicity:
        run("subharmonicity", lambda: fbgeom.subharmonicity_defect(u))
    if fb.empty:
        return out
    if analyses.bernoulli:
        run("bernoulli", lambda: fbgeom.bernoulli_residuals(u, fb, problem.phi, problem.q))
    if analyses.density:
        run("nondegeneracy", lambda: fbgeom.nondegeneracy_scan(u, fb))
        run("clean_ball", lambda: fbgeom.clean_ball_scan(u, fb))
    if analyses.growth:
        run("growth", lambda: fbgeom.growth_bounds(u, fb))
    if all(k in out for k in ("nondegeneracy", "clean_ball", "growth")):
        nd, cb, g = out["nondegeneracy"], out["clean_ball"], out["growth"]
        out["density"] = DensityReport(nd.radii, cb.volume_fraction, nd.minimum, cb.c1, g.c_sup, g.c_inf)
    if analyses.phase_separation:
        run("phase_separation", lambda: fbgeom.phase_separation_check(u))
    if analyses.delta_uplus:

        def delta_uplus() -> Any:
            ball = _measure_ball(u, fb)
            return None if ball is None else (ball, fbgeom.delta_uplus_measure(u, ball[0], ball[1]))

        run("delta_uplus", delta_uplus)
    if analyses.perimeter:
        run("perimeter", lambda: fbgeom.perimeter_estimate(fb, domain_center(u), domain_extent(grid)))
    if analyses.spherical_growth:
        run("spherical_growth", lambda: fbgeom.spherical_mean_growth(u, fb))
    if analyses.harmonicity:
        run("harmonicity", lambda: fbgeom.positive_phase_harmonicity(u))
    if analyses.degeneracy:
        run("degeneracy", lambda: _degeneracy(u, fb, analyses))
    return out


def _nondegeneracy_check(report: fbgeom.ScanReport, band: float) -> tuple[bool, float | None, str, str]:
    vals = [m for m in report.minimum if _finite(m)]
    threshold = f"> 0, consecutive radii within x{band:g}"
    if not vals:
        return False, None, threshold, "no Gamma sample with a ball in the domain"
    worst = max((max(a, b) / min(a, b) if min(a, b) > 0 else math.inf) for a, b in zip(vals, vals[1:])) if len(vals) > 1 else 1.0
    ok = min(vals) > 0 and worst <= band
    return ok, min(vals), threshold, f"worst consecutive ratio {worst:.3g}"


def evaluate_properties(
    u: ScalarField,
    problem: Problem,
    diagnostics: Dict[str, Any],
    thresholds: ThresholdsSection | None = None,
) -> List[PropertyCheck]:
    """Pass/fail matrix over the collected diagnostics.

    Checks whose hypothesis needs a monotone Phi0 are reported n/a otherwise.
    A diagnostic that raised is reported as a failed check.
    """
    t = thresholds or ThresholdsSection()
    h = u.grid.h
    monotone = diagnostics["monotonicity"].monotone
    fb: FreeBoundary = diagnostics["free_boundary"]
    checks: List[PropertyCheck] = []
    viol = diagnostics["monotonicity"].violation
    checks.append(
        PropertyCheck("monotonicity", "pass" if monotone else "n/a", None, "Phi0' >= 0", "" if monotone else f"violated on {viol}")
    )

    def add(name: str, ok: bool, value: float | None, threshold: str, detail: str = "") -> None:
        if name in MONOTONE_ONLY and not monotone:
            checks.append(PropertyCheck(name, "n/a", value, threshold, "Phi0 is not monotone"))
        else:
            checks.append(PropertyCheck(name, "pass" if ok else "fail", value, threshold, detail))

    for name, message in diagnostics.get("errors", {}).items():
        add(name, False, None, "diagnostic completes", f"error: {message}")

    if "subharmonicity" in diagnostics:
        d = diagnostics["subharmonicity"].defect
        add("subharmonicity", _finite(d) and d <= t.subharmonicity_c * h, d, f"<= {t.subharmonicity_c:g} h")
    if fb.empty:
        checks.append(PropertyCheck("free_boundary", "n/a", 0.0, "non-empty", "u is one-signed"))
        return checks

    if "nondegeneracy" in diagnostics:
        add("nondegeneracy", *_nondegeneracy_check(diagnostics["nondegeneracy"], t.nondegeneracy_band))
    if "clean_ball" in diagnostics:
        c1 = diagnostics["clean_ball"].overall
        add("clean_ball", _finite(c1) and c1 >= t.clean_ball, c1, f">= {t.clean_ball:g}")
    if "growth" in diagnostics:
        g = diagnostics["growth"]
        ok = _finite(g.c_sup) and _finite(g.c_inf) and g.c_inf >= t.growth_inf
        add("growth", ok, g.c_inf, f"c_inf >= {t.growth_inf:g}", f"C_sup {g.c_sup:.4g}")
    if "bernoulli" in diagnostics:
        med = diagnostics["bernoulli"].median
        add("bernoulli", _finite(med) and med <= t.bernoulli_median, med, f"median <= {t.bernoulli_median:g}")
    if "phase_separation" in diagnostics:
        ps = diagnostics["phase_separation"]
        add("phase_separation", ps.separated, float(ps.flagged), "no flagged nodes", f"worst {ps.worst}" if ps.worst else "")
    if "delta_uplus" in diagnostics:
        (_, r), m = diagnostics["delta_uplus"]
        low = t.delta_uplus_c * m.scale
        ok = m.bulk >= low and m.bulk <= m.upper
        add("delta_uplus", ok, m.bulk, f"[{low:.3g}, {m.upper:.3g}]", f"r={r:.3g} flux {m.flux:.4g}")
    if "perimeter" in diagnostics:
        per = diagnostics["perimeter"]
        ok = _finite(per) and (t.perimeter_max is None or per <= t.perimeter_max)
        add("perimeter", ok, per, "finite" if t.perimeter_max is None else f"<= {t.perimeter_max:g}")
    if "spherical_growth" in diagnostics:
        sg = diagnostics["spherical_growth"]
        ok = _finite(sg) and (t.spherical_growth_max is None or sg <= t.spherical_growth_max)
        add("spherical_growth", ok, sg, "finite" if t.spherical_growth_max is None else f"<= {t.spherical_growth_max:g}")
    if "harmonicity" in diagnostics:
        hv = diagnostics["harmonicity"]
        add("harmonicity", hv <= t.harmonicity, hv, f"<= {t.harmonicity:g}")

    failed = [c.name for c in checks if c.status == "fail"]
    if failed:
        logger.warning("property checks failed: %s", ", ".join(failed))
    return checks


def suite_passed(checks: List[PropertyCheck]) -> bool:
    """No failed check; an empty matrix never passes."""
    return bool(checks) and all(c.status != "fail" for c in checks)


def check_rows(checks: List[PropertyCheck]) -> list[tuple[Any, ...]]:
    return [(c.name, c.status, c.value, c.threshold) for c in checks]


def evaluate_field(
    u: ScalarField,
    problem: Problem,
    analyses: AnalysesSection | None = None,
    thresholds: ThresholdsSection | None = None,
) -> tuple[List[PropertyCheck], Dict[str, Any]]:
    """Diagnostics and checks for any admissible field, computed or planted."""
    fb = fbgeom.extract_free_boundary(u)
    diagnostics = collect_diagnostics(u, problem, fb, analyses)
    return evaluate_properties(u, problem, diagnostics, thresholds), diagnostics
