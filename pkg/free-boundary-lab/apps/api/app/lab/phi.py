from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import InvalidInputError
from .models import PhiSpec


logger = logging.getLogger(__name__)

# families where Phi depends on r2 only
_R2_ONLY = {"linear", "power", "nonexistence", "saddle", "tabulated"}


class Phi0Value(NamedTuple):
    value: float
    derivative: float
    kink: bool = False
    left: float | None = None
    right: float | None = None


class MonotonicityReport(NamedTuple):
    monotone: bool
    violation: tuple[float, float] | None


class LambdaValue(NamedTuple):
    value: float
    low: float
    high: float
    kink: bool = False


@dataclass(frozen=True)
class PhiMetadata:
    regularity: str
    kinks: tuple[float, ...]
    concave: bool


# -- constructors ---------------------------------------------------------


def linear(lam: float, lambda2: float = 1.0) -> PhiSpec:
    return PhiSpec("linear", (("lam", float(lam)),), 0.0, lambda2)


def sum_linear(coefficient: float = 1.0, lambda1: float = 0.0, lambda2: float = 1.0) -> PhiSpec:
    return PhiSpec("sum_linear", (("coefficient", float(coefficient)),), lambda1, lambda2)


def power(coefficient: float, p: float, lambda2: float = 1.0) -> PhiSpec:
    if not 0 < p <= 1:
        raise InvalidInputError("power exponent must lie in (0, 1]")
    return PhiSpec("power", (("coefficient", float(coefficient)), ("p", float(p))), 0.0, lambda2)


def sum_power(coefficient: float, p: float, lambda1: float = 0.0, lambda2: float = 1.0) -> PhiSpec:
    if not 0 < p <= 1:
        raise InvalidInputError("power exponent must lie in (0, 1]")
    return PhiSpec("sum_power", (("coefficient", float(coefficient)), ("p", float(p))), lambda1, lambda2)


def sum_of_powers(alpha: float, beta: float, lambda1: float = 0.0, lambda2: float = 1.0) -> PhiSpec:
    """r1**(1+alpha)/(1+alpha) + r2**(1-beta)/(1-beta)."""
    if alpha < 0 or not 0 <= beta < 1:
        raise InvalidInputError("sum_of_powers needs alpha >= 0 and 0 <= beta < 1")
    return PhiSpec("sum_of_powers", (("alpha", float(alpha)), ("beta", float(beta))), lambda1, lambda2)


def nonexistence(lambda2: float = 1.0) -> PhiSpec:
    """r on [0, 1/2], (5 - 2r)/8 on (1/2, 1), 1 on [1, inf)."""
    return PhiSpec("nonexistence", (), 0.0, lambda2)


def tabulated(knots, lambda2: float = 1.0) -> PhiSpec:
    pts = tuple(sorted((float(r), float(v)) for r, v in knots))
    if len(pts) < 2 or any(b[0] <= a[0] for a, b in zip(pts, pts[1:])):
        raise InvalidInputError("tabulated phi needs at least two distinct abscissae")
    if pts[0][0] < 0:
        raise InvalidInputError("tabulated phi abscissae must be >= 0")
    return PhiSpec("tabulated", (), 0.0, lambda2, knots=pts)


@dataclass(frozen=True)
class SaddleConstants:
    c1: float
    dirichlet: float
    c2: float
    c3: float
    c_star: float


def saddle_constants(boundary_mass: float = 1.0, dirichlet: float = math.pi / 2) -> SaddleConstants:
    """Constants of the x1*x2 saddle on the unit disk.

    ``boundary_mass`` is the integral of the positive part of the datum over
    the circle and ``dirichlet`` its Dirichlet energy.
    """
    c1 = float(boundary_mass)
    c2 = (c1 / 2.0) / (dirichlet + 1.0)
    c3 = 2.0 + 1.0 / (4.0 * c2)
    c_star = min(math.pi / 4.0, c1 / (2.0 * c3))
    return SaddleConstants(c1, float(dirichlet), c2, c3, c_star)


SADDLE_FLAT_MARGIN = 0.05


def saddle(constants: SaddleConstants | None = None, lambda1: float = 1.0, lambda2: float = 1.0) -> PhiSpec:
    """C1 spline with phi(0)=0, phi(pi/4)=2 and minimum 1 on [c*, inf).

    The minimum is attained on [pi/2 - SADDLE_FLAT_MARGIN, inf), which keeps
    phi(pi/2) = 1 while absorbing the O(h) quadrature error of M2.
    """
    c = constants or saddle_constants()
    knots = (
        (0.0, 0.0),
        (c.c_star, 1.5),
        (math.pi / 4.0, 2.0),
        (math.pi / 2.0 - SADDLE_FLAT_MARGIN, 1.0),
        (math.pi, 1.0),
    )
    return PhiSpec("saddle", (("c_star", c.c_star),), lambda1, lambda2, knots=knots)


def bind(phi: PhiSpec, lambda_omega: float) -> PhiSpec:
    return replace(phi, lambda_omega=float(lambda_omega))


# -- evaluation -----------------------------------------------------------


@functools.lru_cache(maxsize=16)
def _pchip(knots: tuple[tuple[float, float], ...]) -> tuple[PchipInterpolator, PchipInterpolator]:
    r = np.array([k[0] for k in knots])
    v = np.array([k[1] for k in knots])
    spline = PchipInterpolator(r, v, extrapolate=False)
    return spline, spline.derivative()


def _m1_of(phi: PhiSpec, r: float) -> float:
    if phi.lambda1 == 0.0:
        return 0.0
    if phi.lambda_omega is None:
        raise InvalidInputError(f"phi family {phi.family!r} needs lambda_omega; bind it to a problem")
    return phi.lambda1 * (phi.lambda_omega - r / phi.lambda2)


def phi_partials(phi: PhiSpec, r1: float, r2: float) -> tuple[float, float, float]:
    """Phi(r1, r2) and its partial derivatives away from kinks."""
    fam = phi.family
    if fam in _R2_ONLY:
        v = phi0_value_and_derivative(replace(phi, lambda1=0.0), r2)
        return v.value, 0.0, v.derivative
    if fam == "sum_linear":
        c = phi.param("coefficient", 1.0)
        return c * (r1 + r2), c, c
    if fam == "sum_power":
        c, p = phi.param("coefficient"), phi.param("p")
        s = r1 + r2
        d = c * p * s ** (p - 1.0) if s > 0 else math.inf
        return c * s**p, d, d
    if fam == "sum_of_powers":
        a, b = phi.param("alpha"), phi.param("beta")
        d2 = r2 ** (-b) if r2 > 0 else (1.0 if b == 0 else math.inf)
        return r1 ** (1 + a) / (1 + a) + r2 ** (1 - b) / (1 - b), r1**a, d2
    raise InvalidInputError(f"unknown phi family {fam!r}")


def phi0_value_and_derivative(phi: PhiSpec, r: float) -> Phi0Value:
    """Phi0(r) and Phi0'(r); at a kink ``derivative`` is the right derivative."""
    r = float(r)
    if r < 0 or not math.isfinite(r):
        raise InvalidInputError(f"phi0 needs r >= 0, got {r}")
    fam = phi.family

    if fam == "linear":
        lam = phi.param("lam")
        return Phi0Value(lam * r, lam)

    if fam == "power":
        c, p = phi.param("coefficient"), phi.param("p")
        d = c * p * r ** (p - 1.0) if r > 0 else (c if p == 1.0 else math.inf)
        return Phi0Value(c * r**p, d)

    if fam == "nonexistence":
        if r < 0.5:
            return Phi0Value(r, 1.0)
        if r == 0.5:
            return Phi0Value(0.5, -0.25, True, 1.0, -0.25)
        if r < 1.0:
            return Phi0Value((5.0 - 2.0 * r) / 8.0, -0.25)
        if r == 1.0:
            return Phi0Value(1.0, 0.0, True, -0.25, 0.0)
        return Phi0Value(1.0, 0.0)

    if fam == "saddle":
        spline, deriv = _pchip(phi.knots)
        last = phi.knots[-1][0]
        if r >= last:
            return Phi0Value(phi.knots[-1][1], 0.0)
        return Phi0Value(float(spline(r)), float(deriv(r)))

    if fam == "tabulated":
        rs = np.array([k[0] for k in phi.knots])
        vs = np.array([k[1] for k in phi.knots])
        if r < rs[0] - 1e-12 or r > rs[-1] + 1e-12:
            raise InvalidInputError(f"tabulated phi undefined at r={r}")
        value = float(np.interp(r, rs, vs))
        slopes = np.diff(vs) / np.diff(rs)
        hit = np.flatnonzero(np.isclose(rs, r, rtol=0.0, atol=1e-12))
        if hit.size:
            k = int(hit[0])
            left = float(slopes[k - 1]) if k > 0 else None
            right = float(slopes[k]) if k < slopes.size else None
            if left is not None and right is not None:
                return Phi0Value(value, right, left != right, left, right)
            return Phi0Value(value, right if right is not None else left)
        k = int(np.searchsorted(rs, r) - 1)
        return Phi0Value(value, float(slopes[min(max(k, 0), slopes.size - 1)]))

    # two-variable families: Phi0(r) = Phi(m1(r), r)
    m1 = _m1_of(phi, r)
    value, d1, d2 = phi_partials(phi, m1, r)
    return Phi0Value(value, d2 - (phi.lambda1 / phi.lambda2) * d1)


def phi0(phi: PhiSpec, r: float) -> float:
    return phi0_value_and_derivative(phi, r).value


def metadata(phi: PhiSpec) -> PhiMetadata:
    fam = phi.family
    if fam == "nonexistence":
        return PhiMetadata("discontinuous", (0.5, 1.0), False)
    if fam == "saddle":
        return PhiMetadata("C1", (), False)
    if fam == "tabulated":
        rs = np.array([k[0] for k in phi.knots])
        vs = np.array([k[1] for k in phi.knots])
        slopes = np.diff(vs) / np.diff(rs)
        kinks = tuple(float(rs[k + 1]) for k in range(slopes.size - 1) if slopes[k] != slopes[k + 1])
        concave = bool(np.all(np.diff(slopes) <= 1e-12))
        return PhiMetadata("C0" if kinks else "C1", kinks, concave)
    if fam == "sum_of_powers":
        return PhiMetadata("C1", (), phi.lambda1 == 0.0)
    return PhiMetadata("C1", (), True)


def check_monotonicity(phi: PhiSpec, lambda_omega: float, samples: int = 512) -> MonotonicityReport:
    """Sample Phi0' on (0, lambda2 * lambda_omega), one-sided at kinks."""
    if samples < 2:
        raise InvalidInputError("need at least two samples")
    phi = phi if phi.lambda_omega is not None else bind(phi, lambda_omega)
    top = phi.lambda2 * lambda_omega
    rs = list(top * (np.arange(samples) + 0.5) / samples)
    rs += [k for k in metadata(phi).kinks if 0 < k < top]
    bad: list[float] = []
    for r in sorted(rs):
        v = phi0_value_and_derivative(phi, r)
        slopes = [s for s in (v.left, v.right) if s is not None] if v.kink else [v.derivative]
        if any(s < 0 for s in slopes):
            bad.append(r)
    if not bad:
        return MonotonicityReport(True, None)
    return MonotonicityReport(False, (min(bad), max(bad)))


def lambda_bernoulli(phi: PhiSpec, m1: float, m2: float, q_at_p: float) -> LambdaValue:
    """Gradient jump Lambda(p) = [lambda2 d2 Phi - lambda1 d1 Phi] q(p)."""
    if phi.family in _R2_ONLY:
        v = phi0_value_and_derivative(replace(phi, lambda1=0.0), m2)
        if v.kink:
            lo, hi = sorted((phi.lambda2 * v.left * q_at_p, phi.lambda2 * v.right * q_at_p))
            return LambdaValue(phi.lambda2 * v.right * q_at_p, lo, hi, True)
        lam = phi.lambda2 * v.derivative * q_at_p
        return LambdaValue(lam, lam, lam)
    _, d1, d2 = phi_partials(phi, m1, m2)
    lam = (phi.lambda2 * d2 - phi.lambda1 * d1) * q_at_p
    return LambdaValue(lam, lam, lam)


def theta_iota(
    phi: PhiSpec, lower: float, upper: float, samples: int = 256, iota_upper: float | None = None
) -> tuple[float, float]:
    """Sampled infima of Phi0' over [lower, upper] and [lower, iota_upper]."""
    if not 0 <= lower < upper:
        raise InvalidInputError("theta_iota needs 0 <= lower < upper")

    def inf_over(a: float, b: float) -> float:
        rs = np.linspace(a, b, max(samples, 2))
        rs = rs[rs > 0] if a == 0 else rs
        vals = []
        for r in rs:
            v = phi0_value_and_derivative(phi, r)
            vals += [s for s in (v.left, v.right) if s is not None] if v.kink else [v.derivative]
        return float(min(vals))

    theta = inf_over(lower, upper)
    iota = theta if iota_upper is None else inf_over(lower, iota_upper)
    return theta, iota
