"""Bulk and boundary reaction terms and their admissibility checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import quad

from .errors import ConfigurationError, NumericalError
from .wentzell import BulkBoundaryField

BALANCE = "balance-condition"
DISSIPATIVE = "dissipative"
SIGN_ONLY = "sign-only"

_LARGE = np.logspace(1, 6, 201)
_LARGE_S = np.concatenate([-_LARGE[::-1], _LARGE])
_EPS_FRACTIONS = np.logspace(-4, np.log10(0.99), 32)


@dataclass(frozen=True, eq=False)
class ScalarFunction:
    """A reaction term s -> f(s) with its derivative.

    Polynomials keep their coefficients so constants can be computed
    exactly; other families fall back on sampling or quadrature.
    """

    family: str
    params: dict
    fn: Callable = field(repr=False)
    dfn: Callable = field(repr=False)
    poly: Polynomial | None = field(default=None, repr=False)
    base: "ScalarFunction | None" = field(default=None, repr=False)
    slope: float = 0.0

    def __call__(self, s):
        return self.fn(np.asarray(s, dtype=float))

    def derivative(self, s):
        return self.dfn(np.asarray(s, dtype=float))

    def plus_linear(self, c: float) -> "ScalarFunction":
        c = float(c)
        if self.poly is not None:
            return polynomial((self.poly + Polynomial([0.0, c])).coef)
        return ScalarFunction(
            "shifted",
            {"base": self.family, "slope": c},
            lambda s: self.fn(s) + c * s,
            lambda s: self.dfn(s) + c,
            base=self,
            slope=c,
        )


def polynomial(coeffs) -> ScalarFunction:
    """``sum_i coeffs[i] s**i`` (ascending order)."""
    coeffs = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if coeffs.size == 0:
        coeffs = np.zeros(1)
    p = Polynomial(coeffs)
    dp = p.deriv()
    return ScalarFunction("polynomial", {"coeffs": coeffs.tolist()}, p, dp, p)


def zero() -> ScalarFunction:
    return polynomial([0.0])


def arctan(amplitude: float = 1.0) -> ScalarFunction:
    a = float(amplitude)
    return ScalarFunction(
        "arctan", {"amplitude": a}, lambda s: a * np.arctan(s), lambda s: a / (1.0 + s * s)
    )


def scalar_function(desc: dict) -> ScalarFunction:
    family = desc.get("family", "polynomial")
    if family == "polynomial":
        return polynomial(desc.get("coeffs", [0.0]))
    if family == "zero":
        return zero()
    if family == "arctan":
        return arctan(desc.get("amplitude", 1.0))
    raise ConfigurationError(f"unknown nonlinearity family {family!r}")


@dataclass(frozen=True, eq=False)
class NonlinearitySpec:
    f: ScalarFunction
    g: ScalarFunction

    @classmethod
    def from_g_tilde(cls, f: ScalarFunction, g_tilde_fn: ScalarFunction, nu: float, beta: float):
        return cls(f, g_tilde_fn.plus_linear(nu * beta))

    @property
    def is_linear(self) -> bool:
        return all(h.poly is not None and h.poly.degree() <= 1 for h in (self.f, self.g))


def g_tilde(spec: NonlinearitySpec, nu: float, beta: float) -> ScalarFunction:
    return spec.g.plus_linear(-nu * beta)


def limit_shifted(spec: NonlinearitySpec, alpha: float, beta: float, omega: float, nu: float):
    """Reactions of the memoryless limit system."""
    return spec.f.plus_linear((1.0 - omega) * alpha), spec.g.plus_linear((1.0 - nu) * beta)


def evaluate_F(U: BulkBoundaryField, spec: NonlinearitySpec, nu: float, beta: float) -> BulkBoundaryField:
    gt = g_tilde(spec, nu, beta)
    with np.errstate(over="ignore", invalid="ignore"):
        fu = spec.f(U.u)
        gv = gt(U.v)
    for name, vals in (("bulk", fu), ("boundary", gv)):
        bad = np.nonzero(~np.isfinite(vals))[0]
        if bad.size:
            raise NumericalError(f"non-finite {name} reaction at node {int(bad[0])}")
    return BulkBoundaryField(fu, gv, U.space_tag)


@dataclass(frozen=True)
class Constants:
    """Sign constant ``M``, growth constant ``ell`` and growth exponent ``r``."""

    M: float
    ell: float
    r: float


def _poly_constants(p: Polynomial) -> Constants:
    coeffs = np.trim_zeros(p.coef, "b")
    deg = max(coeffs.size - 1, 0)
    ell = float(np.sum(np.abs(coeffs)))
    r = float(max(2, deg + 1))
    dp = p.deriv()
    if deg <= 1:
        return Constants(max(0.0, -float(dp(0.0))), ell, r)
    lead = dp.coef[-1]
    if (deg - 1) % 2 == 1 or lead < 0:
        return Constants(math.inf, ell, r)
    crit = dp.deriv().roots()
    crit = crit[np.abs(crit.imag) < 1e-12].real
    low = float(np.min(dp(crit))) if crit.size else float(dp(0.0))
    return Constants(max(0.0, -low), ell, r)


def constants(h: ScalarFunction) -> Constants:
    if h.poly is not None:
        return _poly_constants(h.poly)
    if h.family == "arctan":
        a = h.params["amplitude"]
        return Constants(max(0.0, -a), abs(a) * math.pi / 2, 2.0)
    if h.family == "shifted":
        b = constants(h.base)
        return Constants(max(0.0, b.M - h.slope), b.ell + abs(h.slope), max(b.r, 2.0))
    s = np.concatenate([_LARGE_S, np.linspace(-10, 10, 2001)])
    d = h.derivative(s)
    ratio = np.abs(h(s)) / (1.0 + np.abs(s))
    return Constants(max(0.0, -float(np.min(d))), float(np.max(ratio)), 2.0)


@dataclass(frozen=True)
class SignGrowthReport:
    M_f: float
    M_g: float
    ell1: float
    ell2: float
    r1: float
    r2: float
    passed: bool

    def as_dict(self) -> dict:
        return {
            "M_f": self.M_f,
            "M_g": self.M_g,
            "ell1": self.ell1,
            "ell2": self.ell2,
            "r1": self.r1,
            "r2": self.r2,
            "pass": self.passed,
        }


def validate_sign_growth(spec: NonlinearitySpec) -> SignGrowthReport:
    cf = constants(spec.f)
    cg = constants(spec.g)
    ok = math.isfinite(cf.M) and math.isfinite(cg.M) and cf.r >= 2 and cg.r >= 2
    return SignGrowthReport(cf.M, cg.M, cf.ell, cg.ell, cf.r, cg.r, bool(ok))


@dataclass(frozen=True)
class BalanceReport:
    passed: bool
    classification: str
    witness_eps: float | None
    liminf_estimate: float | None
    reason: str = ""
    closed_form: bool | None = None

    def as_dict(self) -> dict:
        return {
            "pass": self.passed,
            "classification": self.classification,
            "witness_eps": self.witness_eps,
            "liminf_estimate": self.liminf_estimate,
            "reason": self.reason,
            "closed_form": self.closed_form,
        }


def _leading(h: ScalarFunction, r: float):
    """Sampled ``h(s) s / |s|^r`` on the large-|s| grid."""
    with np.errstate(over="ignore", invalid="ignore"):
        return h(_LARGE_S) * _LARGE_S / np.abs(_LARGE_S) ** r


def _power_law(h: ScalarFunction):
    """(c, r) with h(s) s ~ c |s|^r for odd-leading polynomials, else None."""
    if h.poly is None:
        return None
    coeffs = np.trim_zeros(h.poly.coef, "b")
    deg = coeffs.size - 1
    if deg < 1 or deg % 2 == 0:
        return None
    return float(coeffs[-1]), float(deg + 1)


def balance_closed_form(c_f, r1, c_g, r2, C, volume, surface, omega) -> bool | None:
    """Casework for pure power-law leading behaviour; None when no case applies."""
    if c_f > 0 and c_g > 0:
        return True
    if c_f <= 0:
        return None
    ratio = surface / volume
    if c_g < 0 and r1 > max(r2, 2 * (r2 - 1)):
        return True
    if r2 > 2 and r1 == 2 * (r2 - 1) and r1 > r2:
        return c_f > (C * ratio * c_g * r2) ** 2 / (4.0 * omega)
    if r1 == 2 and r2 == 2:
        return (c_f + ratio * c_g) > (C * ratio * c_g) ** 2 / omega
    return None


def check_balance(spec: NonlinearitySpec, nu: float, beta: float, geom, omega: float, C_omega: float | None = None) -> BalanceReport:
    gt = g_tilde(spec, nu, beta)
    cf = constants(spec.f)
    cg = constants(spec.g)
    r1, r2 = cf.r, cg.r
    C = geom.poincare_constant if C_omega is None else C_omega
    vol, surf = geom.volume, geom.surface

    lf = _leading(spec.f, r1)
    lg = _leading(gt, r2)
    if np.min(lf) > 1e-12 and np.min(lg) > 1e-12:
        return BalanceReport(True, DISSIPATIVE, None, None, "both reactions dissipative")

    pf, pg = _power_law(spec.f), _power_law(gt)
    closed = None
    if pf and pg:
        closed = balance_closed_form(pf[0], pf[1], pg[0], pg[1], C, vol, surf, omega)

    if r1 < max(r2, 2 * (r2 - 1)):
        return BalanceReport(
            False, SIGN_ONLY, None, None,
            f"balance condition: exponent r1={r1:g} < max(r2, 2(r2-1)) with r2={r2:g}", closed,
        )

    s = _LARGE_S
    with np.errstate(over="ignore", invalid="ignore"):
        base = spec.f(s) * s + (surf / vol) * gt(s) * s
        pen = (C * surf / vol) ** 2 / 4.0 * (gt.derivative(s) * s + gt(s)) ** 2
        scale = np.abs(s) ** r1
    floor = 1e-12 * max(1.0, float(np.max(np.abs(spec.f(s) * s) / scale)))
    best_q, best_eps = -math.inf, None
    for eps in _EPS_FRACTIONS * omega:
        q = float(np.min((base - pen / eps) / scale))
        if q > best_q:
            best_q, best_eps = q, float(eps)
    if best_q >= floor:
        return BalanceReport(True, BALANCE, best_eps, best_q, "", closed)
    return BalanceReport(
        False, SIGN_ONLY, best_eps, best_q,
        f"balance condition: liminf estimate {best_q:.3e} is not positive for any eps in (0, omega)", closed,
    )


def primitives(spec: NonlinearitySpec):
    """``h(s) = int_0^s r'(t) t dt`` for the bulk and boundary reactions."""

    def primitive(h: ScalarFunction):
        if h.poly is not None:
            integrand = h.poly.deriv() * Polynomial([0.0, 1.0])
            return integrand.integ(lbnd=0.0)

        def hp(s):
            vals = [quad(lambda t: h.derivative(t) * t, 0.0, x, epsabs=1e-10)[0] for x in np.atleast_1d(s)]
            return np.asarray(vals) if np.ndim(s) else vals[0]

        return hp

    return primitive(spec.f), primitive(spec.g)
