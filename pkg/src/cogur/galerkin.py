"""Modal Galerkin discretization of the memory problem and its time stepping.

The solution is expanded in the lowest Wentzell eigenvectors; the history is
stored as modal coefficient vectors on the age grid.  Time stepping is IMEX:
the linear operator acting on U is implicit (a small dense solve in modal
space), reactions and the memory load are explicit, and the history is then
shifted along characteristics with the new-time solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator

import numpy as np
import scipy.linalg as sla

from . import memory as mem
from .errors import ConfigurationError, NumericalError, ShapeError, ValidationError
from .geometry import Geometry
from .memory import AgeGrid, MemoryKernel, MemoryState
from .nonlinear import (
    NonlinearitySpec,
    check_balance,
    evaluate_F,
    g_tilde,
    limit_shifted,
    validate_sign_growth,
)
from .wentzell import BulkBoundaryField, EigenBasis, WentzellOperator, assemble, eigenbasis

SCHEMES = ("imex-euler", "imex-bdf2")
BLOWUP = 1e12


@dataclass(frozen=True, eq=False)
class InitialData:
    """U0 as an X2 pair and Phi0 as a map from age nodes to nodal samples."""

    u0: BulkBoundaryField
    phi0: Callable[[np.ndarray], np.ndarray] | None = None


@dataclass(frozen=True, eq=False)
class SimConfig:
    geometry: Geometry
    alpha: float
    beta: float
    omega: float
    nu: float
    kernel_omega: MemoryKernel
    kernel_gamma: MemoryKernel
    nonlinearity: NonlinearitySpec
    n_modes: int
    dt: float
    t_end: float
    initial: InitialData
    scheme: str = "imex-euler"
    s_max: float | None = None
    stride: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if self.dt <= 0 or self.t_end < 0:
            raise ConfigurationError("dt must be positive and t_end nonnegative")
        n = self.t_end / self.dt
        if abs(n - round(n)) > 1e-12 * max(1.0, n):
            raise ConfigurationError("dt must divide t_end")
        if self.stride < 1:
            raise ConfigurationError("stride must be a positive integer")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def resolved_s_max(self) -> float:
        if self.s_max is not None:
            return float(self.s_max)
        return mem.default_s_max(self.kernel_omega, self.kernel_gamma)


@dataclass(frozen=True, eq=False)
class ModalOperator:
    """Wentzell blocks projected on the basis; duck-types the operator
    interface used by the memory routines."""

    A0: np.ndarray
    C_mat: np.ndarray
    nu: float


class Model:
    """Everything a run needs that depends on the configuration only."""

    def __init__(self, config: SimConfig):
        self.config = config
        c = config
        self.op: WentzellOperator = assemble(c.geometry, c.alpha, c.beta, c.omega, c.nu)
        self.basis: EigenBasis = eigenbasis(self.op, c.n_modes)
        Psi = self.basis.vectors
        g = c.geometry
        self.Psi = Psi
        self.Psi_gamma = Psi[g.boundary_nodes]
        self.bulk_proj = (g.mass @ Psi).T
        self.bnd_proj = (g.boundary_mass @ self.Psi_gamma).T
        self.mass_bulk_modal = Psi.T @ (g.mass @ Psi)
        self.L0 = np.diag(self.basis.eigenvalues) - c.alpha * c.omega * self.mass_bulk_modal
        self.modal_op = ModalOperator(Psi.T @ (self.op.A0 @ Psi), Psi.T @ (self.op.C_mat @ Psi), c.nu)
        self.V1_modal = Psi.T @ (self.op.A_dyn @ Psi)
        self.grid: AgeGrid = mem.make_age_grid(c.dt, c.resolved_s_max)
        self.g_tilde = g_tilde(c.nonlinearity, c.nu, c.beta)
        self.lumped = np.asarray(g.mass.sum(axis=1)).ravel()
        self.r1 = validate_sign_growth(c.nonlinearity).r1
        n = c.n_modes
        self._euler = sla.lu_factor(np.eye(n) + c.dt * self.L0)
        self._bdf2 = sla.lu_factor(3.0 * np.eye(n) + 2.0 * c.dt * self.L0)

    def reaction(self, a) -> np.ndarray:
        """Modal projection of F(U_n) against the basis in X2."""
        x = self.Psi @ a
        g = self.config.geometry
        U = BulkBoundaryField(x, x[g.boundary_nodes], "V1")
        F = evaluate_F(U, self.config.nonlinearity, self.config.nu, self.config.beta)
        return self.bulk_proj @ F.u + self.bnd_proj @ F.v

    def reaction_pairing(self, a) -> float:
        """``<F(U), U>_{X2}``."""
        x = self.Psi @ a
        g = self.config.geometry
        v = x[g.boundary_nodes]
        fu = self.config.nonlinearity.f(x)
        gv = self.g_tilde(v)
        return float(x @ (g.mass @ fu) + v @ (g.boundary_mass @ gv))


@dataclass(frozen=True, eq=False)
class GalerkinState:
    t: float
    a: np.ndarray
    history: MemoryState
    U: np.ndarray
    step_index: int = 0
    a_prev: np.ndarray | None = field(default=None, repr=False)
    explicit_prev: np.ndarray | None = field(default=None, repr=False)


def project_initial(U0: BulkBoundaryField, phi0, basis: EigenBasis, op: WentzellOperator, grid: AgeGrid,
                    kernel_omega: MemoryKernel, kernel_gamma: MemoryKernel) -> GalerkinState:
    """X2-orthogonal projection of the data onto the span of the basis."""
    Psi = basis.vectors
    a = Psi.T @ op.x2_load(U0)
    n = basis.n_modes
    if phi0 is None:
        samples = np.zeros((grid.n_intervals + 1, n))
    else:
        nodal = np.asarray(phi0(grid.nodes), dtype=float)
        if nodal.shape != (grid.n_intervals + 1, op.geom.n_nodes):
            raise ShapeError("initial history does not match the geometry")
        samples = (op.M @ nodal.T).T @ Psi
        samples[0] = 0.0
    hist = MemoryState(grid, samples, kernel_omega, kernel_gamma)
    return GalerkinState(0.0, a, hist, Psi @ a)


def initial_state(model: Model, config: SimConfig | None = None) -> GalerkinState:
    """Projected initial state; ``config`` may carry different initial data
    than the one the model was built from."""
    c = config or model.config
    return project_initial(c.initial.u0, c.initial.phi0, model.basis, model.op, model.grid,
                           c.kernel_omega, c.kernel_gamma)


def explicit_terms(state: GalerkinState, model: Model) -> np.ndarray:
    return mem.memory_load(state.history, model.modal_op) + model.reaction(state.a)


def rhs(state: GalerkinState, model: Model) -> np.ndarray:
    """Modal time derivative ``-L0 a - memory load - F`` of the coefficients."""
    return -model.L0 @ state.a - explicit_terms(state, model)


def step(state: GalerkinState, model: Model) -> GalerkinState:
    c = model.config
    dt = c.dt
    N = explicit_terms(state, model)
    if c.scheme == "imex-euler" or state.a_prev is None:
        a_new = sla.lu_solve(model._euler, state.a - dt * N)
    else:
        b = 4.0 * state.a - state.a_prev - 2.0 * dt * (2.0 * N - state.explicit_prev)
        a_new = sla.lu_solve(model._bdf2, b)
    U = model.Psi @ a_new
    peak = float(np.max(np.abs(U))) if U.size else 0.0
    if not math.isfinite(peak) or peak > BLOWUP:
        raise NumericalError(
            f"instability at t={state.t + dt:.6g}: nodal values exceed {BLOWUP:g}; reduce dt"
        )
    if c.scheme == "imex-euler":
        hist = mem.advance_history(state.history, a_new, dt)
    else:
        hist = mem.advance_history(state.history, a_new, dt, u_prev=state.a)
    k = state.step_index + 1
    return GalerkinState(k * dt, a_new, hist, U, k, state.a, N)


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    coeffs: np.ndarray
    channels: dict
    stride: int = 1
    config: SimConfig | None = field(default=None, repr=False)

    CSV_CHANNELS = ("energy_X2", "energy_M1", "dissipation", "V1_norm")

    @property
    def energy(self) -> np.ndarray:
        return self.channels["energy_X2"] + self.channels["energy_M1"]

    def rows(self, with_modes: bool = False):
        header = ["t", *self.CSV_CHANNELS]
        if with_modes:
            header += [f"a_{i + 1}" for i in range(self.coeffs.shape[1])]
        yield header
        for k, t in enumerate(self.times):
            row = [t, *(self.channels[name][k] for name in self.CSV_CHANNELS)]
            if with_modes:
                row += list(self.coeffs[k])
            yield row


def diagnostics(state: GalerkinState, model: Model) -> dict:
    """Energy channels of one state (squared norms except ``V1_norm``)."""
    a = state.a
    x = state.U
    m1, diss = mem.m1_norm_and_dissipation(state.history, model.modal_op)
    return {
        "energy_X2": float(a @ a),
        "energy_M1": m1,
        "dissipation": diss,
        "V1_norm": math.sqrt(max(float(a @ (model.V1_modal @ a)), 0.0)),
        "Lr1": float(model.lumped @ np.abs(x) ** model.r1),
        "FU": model.reaction_pairing(a),
    }


def validate(config: SimConfig) -> dict:
    """Run every model validator; returns the reports and the list of failures."""
    reports = {}
    failures = []
    for side, k in (("kernel_omega", config.kernel_omega), ("kernel_gamma", config.kernel_gamma)):
        rep = mem.check_admissible(k)
        reports[side] = rep.as_dict()
        for key in ("miu1", "miu2", "miu3"):
            if not getattr(rep, key):
                failures.append(f"{side}: kernel condition {key} fails")
    sg = validate_sign_growth(config.nonlinearity)
    reports["sign_growth"] = sg.as_dict()
    if not sg.passed:
        failures.append("nonlinearity: sign condition has no finite constant")
    else:
        bal = check_balance(config.nonlinearity, config.nu, config.beta, config.geometry, config.omega)
        reports["balance"] = bal.as_dict()
        superlinear = sg.r1 > 2 or sg.r2 > 2
        if not bal.passed and superlinear:
            failures.append(f"nonlinearity: {bal.reason}")
    return {"reports": reports, "failures": failures}


def iterate(config: SimConfig, model: Model | None = None) -> Iterator[GalerkinState]:
    """Yield the initial state and every subsequent step."""
    model = model or Model(config)
    state = initial_state(model, config)
    yield state
    for _ in range(config.n_steps):
        state = step(state, model)
        yield state


def run(config: SimConfig, force: bool = False, model: Model | None = None) -> Trajectory:
    if not force:
        v = validate(config)
        if v["failures"]:
            raise ValidationError(v["failures"])
    model = model or Model(config)
    times, coeffs = [], []
    chans: dict[str, list] = {}
    for state in iterate(config, model):
        k = state.step_index
        if k % config.stride and k != config.n_steps:
            continue
        times.append(state.t)
        coeffs.append(state.a.copy())
        for name, val in diagnostics(state, model).items():
            chans.setdefault(name, []).append(val)
    return Trajectory(
        np.array(times),
        np.array(coeffs),
        {k: np.array(v) for k, v in chans.items()},
        config.stride,
        config,
    )


def run_limit_system(config: SimConfig, model: Model | None = None) -> Trajectory:
    """Memoryless limit system (unit diffusion weights, shifted reactions)
    on the same basis and with the same scheme and step."""
    model = model or Model(config)
    c = config
    g = c.geometry
    Psi = model.Psi
    L = Psi.T @ ((g.stiffness + g.embedding @ g.boundary_stiffness @ g.embedding.T) @ Psi)
    fbar, gbar = limit_shifted(c.nonlinearity, c.alpha, c.beta, c.omega, c.nu)

    def reaction(a):
        x = Psi @ a
        return model.bulk_proj @ fbar(x) + model.bnd_proj @ gbar(x[g.boundary_nodes])

    n = c.n_modes
    euler = sla.lu_factor(np.eye(n) + c.dt * L)
    bdf2 = sla.lu_factor(3.0 * np.eye(n) + 2.0 * c.dt * L)
    a = Psi.T @ model.op.x2_load(c.initial.u0)
    a_prev = N_prev = None
    times, coeffs = [0.0], [a.copy()]
    for k in range(1, c.n_steps + 1):
        N = reaction(a)
        if c.scheme == "imex-euler" or a_prev is None:
            a_new = sla.lu_solve(euler, a - c.dt * N)
        else:
            a_new = sla.lu_solve(bdf2, 4.0 * a - a_prev - 2.0 * c.dt * (2.0 * N - N_prev))
        a_prev, N_prev, a = a, N, a_new
        if not np.all(np.isfinite(a)) or np.max(np.abs(Psi @ a)) > BLOWUP:
            raise NumericalError(f"instability in the limit system at step {k}")
        if k % c.stride == 0 or k == c.n_steps:
            times.append(k * c.dt)
            coeffs.append(a.copy())
    coeffs = np.array(coeffs)
    e = np.einsum("ki,ki->k", coeffs, coeffs)
    zeros = np.zeros_like(e)
    return Trajectory(
        np.array(times), coeffs,
        {"energy_X2": e, "energy_M1": zeros, "dissipation": zeros,
         "V1_norm": np.sqrt(np.einsum("ki,ij,kj->k", coeffs, L, coeffs).clip(min=0))},
        c.stride, c,
    )


def with_changes(config: SimConfig, **changes) -> SimConfig:
    return replace(config, **changes)
