"""Fading-memory kernels and the discretized past-history variable.

The history is sampled on a uniform age grid whose spacing equals the time
step, so transport along characteristics is an exact index shift.  Samples
may be nodal fields or modal coefficient vectors: every routine here only
needs an object exposing ``A0``, ``C_mat`` and ``nu`` to measure them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid

from .errors import ConfigurationError, InadmissibleKernelError, ShapeError

OMEGA_SIDE = "omega"
GAMMA_SIDE = "gamma"

# decay rates below this are indistinguishable from algebraic decay on the
# sampling grid, so no exponential-fading certificate is issued
FADING_FLOOR = 1e-4
DEFAULT_S_MAX = 40.0
TAIL_FACTOR = 20.0


@dataclass(frozen=True, eq=False)
class MemoryKernel:
    family: str
    params: dict
    mu: Callable[[np.ndarray], np.ndarray]
    dmu: Callable[[np.ndarray], np.ndarray]
    mass: float
    side: str = OMEGA_SIDE
    ddmu: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    def __call__(self, s):
        return self.mu(np.asarray(s, dtype=float))

    def derivative(self, s):
        return self.dmu(np.asarray(s, dtype=float))

    @property
    def decay(self) -> float | None:
        return check_admissible(self).delta

    def same_as(self, other: "MemoryKernel") -> bool:
        if self.family != other.family or self.params.keys() != other.params.keys():
            return False
        return all(np.array_equal(np.asarray(self.params[k]), np.asarray(other.params[k])) for k in self.params)


def exponential(amplitude: float, rate: float, side: str = OMEGA_SIDE) -> MemoryKernel:
    a, r = float(amplitude), float(rate)
    if r <= 0:
        raise ConfigurationError("exponential kernel rate must be positive")
    return MemoryKernel(
        "exponential",
        {"amplitude": a, "rate": r},
        lambda s: a * np.exp(-r * s),
        lambda s: -r * a * np.exp(-r * s),
        a / r,
        side,
        lambda s: r * r * a * np.exp(-r * s),
    )


def biexponential(a1: float, r1: float, a2: float, r2: float, side: str = OMEGA_SIDE) -> MemoryKernel:
    a1, r1, a2, r2 = map(float, (a1, r1, a2, r2))
    if r1 <= 0 or r2 <= 0:
        raise ConfigurationError("bi-exponential rates must be positive")
    return MemoryKernel(
        "biexponential",
        {"a1": a1, "r1": r1, "a2": a2, "r2": r2},
        lambda s: a1 * np.exp(-r1 * s) + a2 * np.exp(-r2 * s),
        lambda s: -r1 * a1 * np.exp(-r1 * s) - r2 * a2 * np.exp(-r2 * s),
        a1 / r1 + a2 / r2,
        side,
        lambda s: r1 * r1 * a1 * np.exp(-r1 * s) + r2 * r2 * a2 * np.exp(-r2 * s),
    )


def powerlaw(amplitude: float, exponent: float, side: str = OMEGA_SIDE) -> MemoryKernel:
    a, p = float(amplitude), float(exponent)
    return MemoryKernel(
        "powerlaw",
        {"amplitude": a, "exponent": p},
        lambda s: a * (1.0 + s) ** (-p),
        lambda s: -p * a * (1.0 + s) ** (-p - 1.0),
        a / (p - 1.0) if p > 1 else math.inf,
        side,
        lambda s: p * (p + 1.0) * a * (1.0 + s) ** (-p - 2.0),
    )


def modulated(amplitude: float, rate: float, depth: float, freq: float, side: str = OMEGA_SIDE) -> MemoryKernel:
    """``a exp(-r s) (1 + d sin(w s))``; inadmissible when ``d w > r``."""
    a, r, d, w = map(float, (amplitude, rate, depth, freq))

    def mu(s):
        return a * np.exp(-r * s) * (1.0 + d * np.sin(w * s))

    def dmu(s):
        return a * np.exp(-r * s) * (-r * (1.0 + d * np.sin(w * s)) + d * w * np.cos(w * s))

    return MemoryKernel(
        "modulated",
        {"amplitude": a, "rate": r, "depth": d, "freq": w},
        mu,
        dmu,
        a * (1.0 / r + d * w / (r * r + w * w)),
        side,
    )


def tabulated(s, mu, dmu=None, side: str = OMEGA_SIDE) -> MemoryKernel:
    """Kernel from samples; zero beyond the last node.  Missing derivatives
    come from central differences with one-sided ends."""
    s = np.asarray(s, dtype=float)
    mu_v = np.asarray(mu, dtype=float)
    if s.ndim != 1 or s.shape != mu_v.shape or s.size < 2 or np.any(np.diff(s) <= 0):
        raise ConfigurationError("tabulated kernel needs matching increasing samples")
    dmu_v = np.gradient(mu_v, s, edge_order=1) if dmu is None else np.asarray(dmu, dtype=float)
    return MemoryKernel(
        "tabulated",
        {"s": s, "mu": mu_v, "dmu": dmu_v},
        lambda x: np.interp(x, s, mu_v, right=0.0),
        lambda x: np.interp(x, s, dmu_v, right=0.0),
        float(trapezoid(mu_v, s)),
        side,
    )


def from_m_kernel(m: MemoryKernel, coeff: float, side: str = OMEGA_SIDE) -> MemoryKernel:
    """Memory kernel ``mu = -coeff^{-1} (1 - coeff) m'`` from a relaxation
    function ``m`` given in any of the parametric families."""
    if not 0 < coeff < 1:
        raise ConfigurationError("coefficient must lie in (0,1)")
    c = (1.0 - coeff) / coeff
    grid = _sample_grid(m)
    if np.any(m.derivative(grid) > 0):
        raise InadmissibleKernelError("m is not nonincreasing on the sample grid")
    p = m.params
    if m.family == "exponential":
        return exponential(c * p["amplitude"] * p["rate"], p["rate"], side)
    if m.family == "biexponential":
        return biexponential(c * p["a1"] * p["r1"], p["r1"], c * p["a2"] * p["r2"], p["r2"], side)
    if m.family == "powerlaw":
        return powerlaw(c * p["amplitude"] * p["exponent"], p["exponent"] + 1.0, side)
    if m.family == "tabulated":
        return tabulated(p["s"], -c * p["dmu"], side=side)
    raise ConfigurationError(f"cannot derive a memory kernel from family {m.family!r}")


@dataclass(frozen=True)
class AdmissibilityReport:
    miu1: bool
    miu2: bool
    miu3: bool
    fading: bool
    delta: float | None
    mu0: float

    @property
    def admissible(self) -> bool:
        return self.miu1 and self.miu2 and self.miu3

    def as_dict(self) -> dict:
        return {
            "miu1": self.miu1,
            "miu2": self.miu2,
            "miu3": self.miu3,
            "fading": self.fading,
            "delta": self.delta,
            "mu0": self.mu0,
        }


def _sample_grid(kernel: MemoryKernel) -> np.ndarray:
    if kernel.family == "tabulated":
        return kernel.params["s"]
    return np.concatenate([[0.0], np.logspace(-6, 6, 4001)])


def check_admissible(kernel: MemoryKernel, grid=None) -> AdmissibilityReport:
    s = _sample_grid(kernel) if grid is None else np.asarray(grid, dtype=float)
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        mu = kernel.mu(s)
        dmu = kernel.dmu(s)
    scale = max(1.0, float(np.max(np.abs(mu[np.isfinite(mu)]), initial=0.0)))
    tol = 1e-14 * scale
    finite = bool(np.all(np.isfinite(mu)) and np.all(np.isfinite(dmu)))
    miu1 = finite and math.isfinite(kernel.mass)
    miu2 = bool(np.all(mu >= -tol))
    miu3 = bool(np.all(dmu <= tol))
    delta = None
    fading = False
    live = mu > 1e-250
    if miu2 and miu3 and np.any(live):
        ratio = float(np.min(-dmu[live] / mu[live]))
        if ratio >= FADING_FLOOR:
            fading = True
            delta = 0.99 * ratio
    return AdmissibilityReport(miu1, miu2, miu3, fading, delta, float(kernel.mass))


def default_s_max(*kernels: MemoryKernel) -> float:
    """History cutoff: ``20/delta`` for the slowest certified decay, else 40."""
    rates = [check_admissible(k).delta for k in kernels]
    if any(r is None for r in rates) or not rates:
        return DEFAULT_S_MAX
    return TAIL_FACTOR / min(rates)


@dataclass(frozen=True, eq=False)
class AgeGrid:
    ds: float
    n_intervals: int

    @property
    def nodes(self) -> np.ndarray:
        return self.ds * np.arange(self.n_intervals + 1)

    @property
    def s_max(self) -> float:
        return self.ds * self.n_intervals

    @property
    def weights(self) -> np.ndarray:
        w = np.full(self.n_intervals + 1, self.ds)
        w[0] = w[-1] = 0.5 * self.ds
        return w


def make_age_grid(ds: float, s_max: float) -> AgeGrid:
    if ds <= 0 or s_max <= 0:
        raise ConfigurationError("age grid spacing and cutoff must be positive")
    return AgeGrid(float(ds), max(1, int(math.ceil(s_max / ds - 1e-9))))


@dataclass(frozen=True, eq=False)
class MemoryState:
    """History samples ``samples[k] = Phi(s_k)``; row 0 is always zero."""

    grid: AgeGrid
    samples: np.ndarray
    kernel_omega: MemoryKernel
    kernel_gamma: MemoryKernel

    def __post_init__(self):
        if self.samples.shape[0] != self.grid.n_intervals + 1:
            raise ShapeError("history samples do not match the age grid")

    def weighted(self) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature weights times the bulk and boundary kernels."""
        return kernel_weights(self.grid, self.kernel_omega, self.kernel_gamma)[:2]

    def weighted_derivative(self) -> tuple[np.ndarray, np.ndarray]:
        return kernel_weights(self.grid, self.kernel_omega, self.kernel_gamma)[2:]

    def field(self, k: int, geom):
        from .wentzell import BulkBoundaryField

        return BulkBoundaryField.from_nodal(geom, self.samples[k])


@lru_cache(maxsize=64)
def kernel_weights(grid: AgeGrid, kernel_omega: MemoryKernel, kernel_gamma: MemoryKernel):
    s = grid.nodes
    w = grid.weights
    out = (
        w * kernel_omega(s),
        w * kernel_gamma(s),
        w * kernel_omega.derivative(s),
        w * kernel_gamma.derivative(s),
    )
    for arr in out:
        arr.flags.writeable = False
    return out


def history_from_profile(grid: AgeGrid, profile: Callable, field_values, kernel_omega, kernel_gamma) -> MemoryState:
    """``Phi0(s) = profile(s) * field`` sampled on the grid, forced to 0 at s=0."""
    field_values = np.asarray(field_values, dtype=float)
    p = np.asarray(profile(grid.nodes), dtype=float)
    samples = p.reshape(-1, *([1] * field_values.ndim)) * field_values
    samples[0] = 0.0
    return MemoryState(grid, samples, kernel_omega, kernel_gamma)


def zero_history(grid: AgeGrid, shape, kernel_omega, kernel_gamma) -> MemoryState:
    return MemoryState(grid, np.zeros((grid.n_intervals + 1, *np.atleast_1d(shape))), kernel_omega, kernel_gamma)


def shift_history(samples: np.ndarray, increment) -> None:
    """In-place characteristic shift: ``Phi(s_k) <- Phi(s_{k-1}) + increment``;
    the oldest sample falls off the grid."""
    samples[1:] = samples[:-1] + increment
    samples[0] = 0.0


def advance_history(state: MemoryState, u_now, dt: float, u_prev=None) -> MemoryState:
    """History after one step of length ``dt = ds``.

    The input over the step is taken as ``u_now`` (exact for piecewise
    constant input); passing ``u_prev`` uses the trapezoidal average instead,
    which is second order for smooth input.
    """
    if abs(dt - state.grid.ds) > 1e-12 * max(1.0, state.grid.ds):
        raise ConfigurationError(f"time step {dt} does not match the age spacing {state.grid.ds}")
    u_now = np.asarray(u_now, dtype=float)
    if u_now.shape != state.samples.shape[1:]:
        raise ShapeError("input does not match the history sample shape")
    inc = dt * u_now if u_prev is None else 0.5 * dt * (u_now + np.asarray(u_prev, dtype=float))
    samples = np.empty_like(state.samples)
    np.add(state.samples[:-1], inc, out=samples[1:])
    samples[0] = 0.0
    return replace(state, samples=samples)


def _metric(op):
    return op.A0, op.nu * op.C_mat


def memory_load(state: MemoryState, op) -> np.ndarray:
    """Load ``sum_k w_k [mu_O(s_k) A0 eta_k + nu mu_G(s_k) C xi_k]``."""
    A0, nuC = _metric(op)
    if state.samples.shape[1] != A0.shape[0]:
        raise ShapeError("history samples do not match the operator dimension")
    wo, wg = state.weighted()
    return A0 @ (wo @ state.samples) + nuC @ (wg @ state.samples)


def _quad_forms(state: MemoryState, op) -> tuple[np.ndarray, np.ndarray]:
    A0, nuC = _metric(op)
    X = state.samples
    if isinstance(A0, np.ndarray):
        return (X @ A0 * X).sum(axis=1), (X @ nuC * X).sum(axis=1)
    return (X * (A0 @ X.T).T).sum(axis=1), (X * (nuC @ X.T).T).sum(axis=1)


def m1_norm_and_dissipation(state: MemoryState, op) -> tuple[float, float]:
    """``(||Phi||^2_{M1}, <T Phi, Phi>_{M1})`` sharing one pass over the samples."""
    A0, nuC = _metric(op)
    X = state.samples
    if not isinstance(A0, np.ndarray):
        bulk, bnd = _quad_forms(state, op)
        wo, wg = state.weighted()
        dwo, dwg = state.weighted_derivative()
        return float(wo @ bulk + wg @ bnd), 0.5 * float(dwo @ bulk + dwg @ bnd)
    # small dense metric: weighted Gram matrices of the samples
    wo, wg, dwo, dwg = kernel_weights(state.grid, state.kernel_omega, state.kernel_gamma)
    gram = lambda w: (X.T * w) @ X
    m1 = float(np.sum(A0 * gram(wo)) + np.sum(nuC * gram(wg)))
    diss = 0.5 * float(np.sum(A0 * gram(dwo)) + np.sum(nuC * gram(dwg)))
    return m1, diss


def m1_norm_sq(state: MemoryState, op) -> float:
    bulk, bnd = _quad_forms(state, op)
    wo, wg = state.weighted()
    return float(wo @ bulk + wg @ bnd)


def t_dissipation(state: MemoryState, op) -> float:
    """``<T Phi, Phi>_{M1}`` as ``1/2 int mu'(s) ||Phi(s)||^2 ds``; nonpositive
    for nonincreasing kernels."""
    bulk, bnd = _quad_forms(state, op)
    dwo, dwg = state.weighted_derivative()
    return 0.5 * float(dwo @ bulk + dwg @ bnd)
