"""Norms, energy monitors, continuous dependence and convergence studies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import memory as mem
from .errors import ConfigurationError, ValidationError
from .galerkin import InitialData, Model, SimConfig, Trajectory, iterate, run, run_limit_system
from .nonlinear import validate_sign_growth
from .wentzell import BulkBoundaryField, WentzellOperator

VIOLATION_TOL = 0.01
DISSIPATION_TOL = 1e-10


def field_norms(x, op: WentzellOperator) -> dict:
    """Squared X2, V1 and A-form norms of a trace-consistent nodal field."""
    x = np.asarray(x, dtype=float)
    return {
        "X2": float(x @ (op.M @ x)),
        "V1": float(x @ (op.A_dyn @ x)),
        "A": float(x @ (op.A @ x)),
    }


def energy(state, model: Model) -> dict:
    """One row of the energy report for a Galerkin state."""
    a = state.a
    m1, diss = mem.m1_norm_and_dissipation(state.history, model.modal_op)
    x = state.U
    return {
        "t": state.t,
        "X2": float(a @ a),
        "V1": float(a @ (model.V1_modal @ a)),
        "M1": m1,
        "dissipation": diss,
        "Lr1": float(model.lumped @ np.abs(x) ** model.r1),
    }


def _cumtrapz(y, t):
    out = np.zeros_like(y)
    if y.size > 1:
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


@dataclass(frozen=True)
class AprioriVerdict:
    verdict: bool | None
    margin: float
    C: float
    lhs: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    reason: str = ""


def monitor_apriori(traj: Trajectory, envelope: str = "exponential") -> AprioriVerdict:
    """Integrated energy inequality along a densely sampled trajectory.

    Left side: ``E(t) + 2 int (||U||_V1^2 + ||u||_r1^r1) - 2 int <T Phi, Phi>``.
    Right side: ``E(0) + C t`` (``envelope="linear"``) or
    ``(1 + E(0)) exp(C t) - 1``, with ``C`` the supremum of
    ``2 (||u||_r1^r1 - <F(U), U>)`` observed along the run.
    """
    if envelope not in ("linear", "exponential"):
        raise ConfigurationError(f"unknown envelope {envelope!r}")
    t = traj.times
    ch = traj.channels
    E = traj.energy
    if traj.stride != 1 or t.size < 2:
        return AprioriVerdict(None, math.nan, math.nan, E, E, "inconclusive: trajectory is not sampled every step")
    v1sq = ch["V1_norm"] ** 2
    lhs = E + 2.0 * _cumtrapz(v1sq + ch["Lr1"], t) - 2.0 * _cumtrapz(ch["dissipation"], t)
    C = 2.0 * max(0.0, float(np.max(ch["Lr1"] - ch["FU"])))
    if envelope == "linear":
        rhs = E[0] + C * t
    else:
        rhs = (1.0 + E[0]) * np.exp(C * t) - 1.0
    allowed = rhs * (1.0 + VIOLATION_TOL) + 1e-14
    margin = float(np.min((allowed - lhs) / np.maximum(np.abs(rhs), 1e-300)))
    scale = max(1.0, float(np.max(ch["energy_M1"])))
    worst_diss = float(np.max(ch["dissipation"]))
    if worst_diss > DISSIPATION_TOL * scale:
        return AprioriVerdict(False, margin, C, lhs, rhs, f"positive memory dissipation {worst_diss:.3e}")
    if np.any(lhs > allowed):
        k = int(np.argmax(lhs - allowed))
        return AprioriVerdict(False, margin, C, lhs, rhs, f"energy bound violated at t={t[k]:.6g}")
    return AprioriVerdict(True, margin, C, lhs, rhs)


def energy_nonincreasing(traj: Trajectory) -> bool:
    E = traj.energy
    return bool(np.all(np.diff(E) <= 0.0))


@dataclass(frozen=True)
class DependenceReport:
    verdict: bool
    C: float
    fitted_rate: float
    times: np.ndarray = field(repr=False)
    differences: np.ndarray = field(repr=False)


def perturbed(config: SimConfig, model: Model, delta0: float) -> SimConfig:
    """Same configuration with ``delta0 * Psi_1`` added to the initial data."""
    psi = model.Psi[:, 0]
    g = config.geometry
    u0 = config.initial.u0
    pert = BulkBoundaryField(u0.u + delta0 * psi, u0.v + delta0 * psi[g.boundary_nodes], u0.space_tag)
    return replace(config, initial=InitialData(pert, config.initial.phi0))


def continuous_dependence(config: SimConfig, delta0: float, other: SimConfig | None = None) -> DependenceReport:
    """Compare two runs started ``delta0`` apart along the first mode against
    the envelope ``D(0) exp(C t)``, ``C = 2 max(M_f, M_g + nu beta)``."""
    sg = validate_sign_growth(config.nonlinearity)
    if not sg.passed:
        raise ValidationError(["nonlinearity: sign condition has no finite constant"])
    model = Model(config)
    other = other or perturbed(config, model, delta0)
    C = 2.0 * max(sg.M_f, sg.M_g + config.nu * config.beta)
    times, diffs = [], []
    for s1, s2 in zip(iterate(config, model), iterate(other, model)):
        da = s1.a - s2.a
        dphi = mem.MemoryState(s1.history.grid, s1.history.samples - s2.history.samples,
                               s1.history.kernel_omega, s1.history.kernel_gamma)
        dm = mem.m1_norm_and_dissipation(dphi, model.modal_op)[0]
        times.append(s1.t)
        diffs.append(math.sqrt(float(da @ da)) + math.sqrt(max(dm, 0.0)))
    t = np.array(times)
    d = np.array(diffs)
    bound = d[0] * np.exp(C * t)
    ok = bool(np.all(d <= bound * (1.0 + 1e-9) + 1e-300))
    live = d > 0
    rate = float(np.polyfit(t[live], np.log(d[live]), 1)[0]) if np.count_nonzero(live) > 1 else 0.0
    return DependenceReport(ok, C, rate, t, d)


@dataclass(frozen=True)
class ConvergenceReport:
    axis: str
    levels: list
    parameters: np.ndarray
    errors: np.ndarray
    orders: np.ndarray
    slope: float
    flagged: bool

    def rows(self):
        """CSV rows; ``level`` is the refined parameter (dt, n_modes or h)."""
        yield ["level", "error", "order"]
        for i in range(self.errors.size):
            yield [self.parameters[i], self.errors[i], self.orders[i]]


def _orders(param, err):
    orders = np.full(err.size, np.nan)
    for i in range(1, err.size):
        if err[i] > 0 and err[i - 1] > 0 and param[i] != param[i - 1]:
            orders[i] = math.log(err[i - 1] / err[i]) / math.log(param[i - 1] / param[i])
    return orders


def convergence_study(build: Callable[[object], SimConfig], axis: str, levels: Sequence,
                      reference: Callable[[SimConfig], np.ndarray] | None = None) -> ConvergenceReport:
    """Errors of the final state across refinement levels.

    ``build(level)`` returns the configuration of a level.  Errors are taken
    against ``reference(config)`` (final modal coefficients) when given,
    otherwise against the last (finest) level.  For ``axis="mesh"`` the
    compared quantity is the final X2 energy, parametrized by mesh size.
    """
    if axis not in ("dt", "modes", "mesh"):
        raise ConfigurationError(f"unknown study axis {axis!r}")
    if len(levels) < 3:
        raise ConfigurationError("a convergence study needs at least three levels")
    configs = [build(lvl) for lvl in levels]
    finals = []
    for cfg in configs:
        cfg = replace(cfg, stride=max(cfg.n_steps, 1))
        model = Model(cfg)
        tr = run(cfg, force=True, model=model)
        if axis == "mesh":
            finals.append(np.array([tr.channels["energy_X2"][-1]]))
        elif axis == "modes":
            finals.append((model.Psi @ tr.coeffs[-1], model.op))
        else:
            finals.append(tr.coeffs[-1])

    if axis == "dt":
        params = np.array([c.dt for c in configs])
    elif axis == "modes":
        params = np.array([c.n_modes for c in configs], dtype=float)
    else:
        params = np.array([c.geometry.mesh_size for c in configs])

    if reference is not None and axis == "dt":
        refs = [reference(c) for c in configs]
        errors = np.array([np.linalg.norm(f - r) for f, r in zip(finals, refs)])
        used = slice(None)
    elif axis == "modes":
        x_ref, op = finals[-1]
        errors = np.array([math.sqrt(max(field_norms(x - x_ref, op)["X2"], 0.0)) for x, _ in finals[:-1]])
        used = slice(0, -1)
    else:
        ref = finals[-1]
        errors = np.array([float(np.linalg.norm(f - ref)) for f in finals[:-1]])
        used = slice(0, -1)
    p = params[used]
    orders = _orders(p, errors)
    live = errors > 0
    slope = float(np.polyfit(np.log(p[live]), np.log(errors[live]), 1)[0]) if np.count_nonzero(live) > 1 else math.nan
    flagged = bool(np.any(np.diff(errors) > 0))
    return ConvergenceReport(axis, list(levels)[: errors.size], p, errors, orders, slope, flagged)


@dataclass(frozen=True)
class StrongReport:
    times: np.ndarray
    V1_norm: np.ndarray
    dtU: np.ndarray
    M2_proxy: np.ndarray
    bounded: bool
    decaying: bool
    cancellation: bool


def strong_diagnostics(config: SimConfig, model: Model | None = None) -> StrongReport:
    """Higher-regularity channels along a dense run (monitored, not proven).

    ``dtU`` uses central differences of the modal trajectory; the history
    channel is the M1 norm of the operator applied to the history samples.
    """
    model = model or Model(config)
    lam = model.basis.eigenvalues
    times, v1, coeffs, m2 = [], [], [], []
    for st in iterate(config, model):
        a = st.a
        times.append(st.t)
        coeffs.append(a.copy())
        v1.append(math.sqrt(max(float(a @ (model.V1_modal @ a)), 0.0)))
        applied = mem.MemoryState(st.history.grid, st.history.samples * lam,
                                  st.history.kernel_omega, st.history.kernel_gamma)
        m2.append(math.sqrt(max(mem.m1_norm_and_dissipation(applied, model.modal_op)[0], 0.0)))
    t = np.array(times)
    A = np.array(coeffs)
    dt = np.full(t.size, np.nan)
    if t.size >= 3:
        d = np.gradient(A, t, axis=0)
        dt = np.linalg.norm(d, axis=1)
    elif t.size == 2:
        dt[:] = np.linalg.norm(A[1] - A[0]) / (t[1] - t[0])
    v1 = np.array(v1)
    m2 = np.array(m2)
    chans = [v1, dt[np.isfinite(dt)], m2]
    bounded = all(np.all(np.isfinite(c)) and (c.size == 0 or np.max(c) < 1e12) for c in chans)
    decaying = bool(v1[-1] <= v1[0] and (dt.size < 2 or dt[-1] <= dt[0]))
    cancel = config.kernel_omega.same_as(config.kernel_gamma)
    return StrongReport(t, v1, dt, m2, bounded, decaying, cancel)


@dataclass(frozen=True)
class LimitReport:
    epsilons: np.ndarray
    distances: np.ndarray
    strictly_decreasing: bool

    def rows(self):
        yield ["epsilon", "final_distance"]
        for e, d in zip(self.epsilons, self.distances):
            yield [e, d]


def concentrating_kernels(eps: float, omega: float, nu: float):
    """Kernels generated by ``m(s) = exp(-s/eps)/eps`` on both sides."""
    m = mem.exponential(1.0 / eps, 1.0 / eps)
    return mem.from_m_kernel(m, omega, mem.OMEGA_SIDE), mem.from_m_kernel(m, nu, mem.GAMMA_SIDE)


def delta0_limit(config: SimConfig, epsilons: Sequence[float] = (0.5, 0.25, 0.125)) -> LimitReport:
    """Final-time X2 distance between memory runs with concentrating kernels
    and the memoryless limit system, for each ``eps``."""
    eps = np.asarray(sorted(epsilons, reverse=True), dtype=float)
    if eps.size < 2 or np.any(eps <= 0):
        raise ConfigurationError("epsilons must be positive with at least two values")
    base = replace(config, stride=max(config.n_steps, 1), s_max=None,
                   initial=InitialData(config.initial.u0, None))
    lim = run_limit_system(base)
    dists = []
    for e in eps:
        ko, kg = concentrating_kernels(float(e), config.omega, config.nu)
        cfg = replace(base, kernel_omega=ko, kernel_gamma=kg)
        tr = run(cfg, force=True)
        dists.append(float(np.linalg.norm(tr.coeffs[-1] - lim.coeffs[-1])))
    d = np.array(dists)
    return LimitReport(eps, d, bool(np.all(np.diff(d) < 0)))
