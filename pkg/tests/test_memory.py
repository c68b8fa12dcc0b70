import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cogur import memory as mem
from cogur.errors import ConfigurationError, InadmissibleKernelError, ShapeError
from cogur.geometry import build_interval
from cogur.wentzell import assemble, eigenbasis

S = np.linspace(0.0, 10.0, 101)


def test_kernel_from_exponential_relaxation():
    mu = mem.from_m_kernel(mem.exponential(1.0, 1.0), 0.5)
    assert np.allclose(mu(S), np.exp(-S))


def test_kernel_from_powerlaw_relaxation():
    mu = mem.from_m_kernel(mem.powerlaw(1.0, 2.0), 0.5)
    assert np.allclose(mu(S), 2.0 * (1.0 + S) ** -3)


def test_kernel_from_relaxation_quarter():
    mu = mem.from_m_kernel(mem.exponential(1.0, 2.0), 0.25)
    assert np.allclose(mu(S), 6.0 * np.exp(-2.0 * S))


def test_relaxation_must_be_nonincreasing():
    with pytest.raises(InadmissibleKernelError):
        mem.from_m_kernel(mem.modulated(1.0, 1.0, 0.9, 3.0), 0.5)


def test_admissibility_examples():
    r = mem.check_admissible(mem.exponential(1.0, 1.0))
    assert r.admissible and r.fading and r.delta == pytest.approx(0.99)
    r = mem.check_admissible(mem.powerlaw(2.0, 3.0))
    assert r.admissible and not r.fading and r.delta is None
    r = mem.check_admissible(mem.modulated(1.0, 1.0, 0.9, 3.0))
    assert not r.miu3
    assert mem.exponential(1.0, 1.0, "omega").derivative(0.0) == -1.0


def test_tabulated_kernel_mass_and_derivative():
    s = np.linspace(0, 30, 3001)
    k = mem.tabulated(s, np.exp(-s))
    assert k.mass == pytest.approx(1.0, rel=1e-4)
    assert np.allclose(k.derivative(s[1:-1]), -np.exp(-s[1:-1]), atol=1e-4)
    assert mem.check_admissible(k).admissible
    with pytest.raises(ConfigurationError):
        mem.tabulated([0, 1, 1], [1, 0.5, 0.2])


def test_same_as():
    assert mem.exponential(1, 2).same_as(mem.exponential(1, 2, mem.GAMMA_SIDE))
    assert not mem.exponential(1, 2).same_as(mem.exponential(1, 3))
    assert not mem.exponential(1, 2).same_as(mem.powerlaw(1, 2))


def test_default_history_cutoff():
    assert mem.default_s_max(mem.exponential(1, 2)) == pytest.approx(20 / (0.99 * 2))
    assert mem.default_s_max(mem.powerlaw(1, 3)) == mem.DEFAULT_S_MAX


def _scalar_state(ds, s_max, profile=lambda s: 0 * s):
    k = mem.exponential(1.0, 1.0)
    return mem.history_from_profile(mem.make_age_grid(ds, s_max), profile, np.ones(1), k, k)


def test_constant_input_saturates():
    state = _scalar_state(1 / 8, 3.0)
    for _ in range(8):
        state = mem.advance_history(state, np.ones(1), 1 / 8)
    assert np.allclose(state.samples[:, 0], np.minimum(state.grid.nodes, 1.0), atol=1e-14)


def test_pure_transport_branch():
    state = _scalar_state(0.1, 3.0, lambda s: s)
    for _ in range(10):
        state = mem.advance_history(state, np.zeros(1), 0.1)
    s = state.grid.nodes
    assert np.allclose(state.samples[:, 0], np.where(s > 1.0, s - 1.0, 0.0), atol=1e-13)


def test_linear_input_first_order():
    errs = []
    for dt in (0.02, 0.01, 0.005):
        state = _scalar_state(dt, 2.0)
        n = int(round(1 / dt))
        for j in range(1, n + 1):
            state = mem.advance_history(state, np.array([j * dt]), dt)
        s = state.grid.nodes
        mask = s <= 1.0
        errs.append(np.max(np.abs(state.samples[mask, 0] - (s[mask] - s[mask] ** 2 / 2))))
    assert 0.9 < math.log2(errs[0] / errs[1]) < 1.1


def test_trapezoid_input_second_order():
    errs = []
    for dt in (0.02, 0.01, 0.005):
        state = _scalar_state(dt, 2.0)
        n = int(round(1 / dt))
        for j in range(1, n + 1):
            state = mem.advance_history(state, np.array([j * dt]), dt, u_prev=np.array([(j - 1) * dt]))
        s = state.grid.nodes
        mask = s <= 1.0
        errs.append(np.max(np.abs(state.samples[mask, 0] - (s[mask] - s[mask] ** 2 / 2))) + 1e-300)
    assert errs[-1] < 1e-12 or math.log2(errs[0] / errs[1]) > 1.8


def test_grid_mismatch_and_shape_errors():
    state = _scalar_state(0.1, 1.0)
    with pytest.raises(ConfigurationError):
        mem.advance_history(state, np.ones(1), 0.2)
    with pytest.raises(ShapeError):
        mem.advance_history(state, np.ones(2), 0.1)
    assert state.samples[0, 0] == 0.0


@pytest.fixture(scope="module")
def op_basis():
    g = build_interval(1.0, 32)
    op = assemble(g, 1.0, 1.0, 0.5, 0.5)
    return g, op, eigenbasis(op, 3)


def test_memory_load_zero(op_basis):
    g, op, _ = op_basis
    k = mem.exponential(1.0, 1.0)
    state = mem.zero_history(mem.make_age_grid(0.1, 5.0), g.n_nodes, k, k)
    assert np.all(mem.memory_load(state, op) == 0)
    assert mem.t_dissipation(state, op) == 0


def test_memory_load_first_eigenvector(op_basis):
    g, op, basis = op_basis
    k = mem.exponential(1.0, 1.0)
    psi = basis.vectors[:, 0]
    state = mem.history_from_profile(mem.make_age_grid(1e-3, 40.0), lambda s: np.exp(-s), psi, k, k)
    # the profile is forced to 0 at s=0 (history boundary condition): correct
    # the quadrature by the missing half-weight contribution
    load = mem.memory_load(state, op) + 0.5e-3 * (op.A @ psi)
    expected = 0.5 * basis.eigenvalues[0] * (op.M @ psi)
    assert np.allclose(load, expected, atol=1e-6 * np.abs(expected).max())


def test_memory_load_constant_profile(op_basis):
    g, op, basis = op_basis
    ko, kg = mem.exponential(2.0, 1.0), mem.exponential(1.0, 3.0, mem.GAMMA_SIDE)
    x = basis.vectors[:, 1]
    grid = mem.make_age_grid(1e-3, 30.0)
    state = mem.history_from_profile(grid, lambda s: np.ones_like(s), x, ko, kg)
    load = mem.memory_load(state, op)
    # missing s=0 sample carries half a weight of mu(0)
    expected = (ko.mass - 0.5e-3 * ko(0.0)) * (op.A0 @ x) + op.nu * (kg.mass - 0.5e-3 * kg(0.0)) * (op.C_mat @ x)
    assert np.allclose(load, expected, atol=1e-6)


def test_dissipation_closed_form():
    g = build_interval(1.0, 8)
    op = assemble(g, 1.0, 1.0, 0.5, 0.5)
    # unit-norm field in the bulk metric only: zero boundary values
    x = np.zeros(g.n_nodes)
    x[1:-1] = np.random.default_rng(1).normal(size=g.n_nodes - 2)
    x /= math.sqrt(x @ (op.A0 @ x))
    k = mem.exponential(1.0, 1.0)
    state = mem.history_from_profile(mem.make_age_grid(1e-3, 40.0), lambda s: np.minimum(s, 1.0), x, k, k)
    assert mem.t_dissipation(state, op) == pytest.approx(-0.5 * (2 - 4 / math.e), abs=1e-6)


@given(seed=st.integers(0, 2**32 - 1), rate=st.floats(0.1, 5.0), amp=st.floats(0.1, 5.0))
@settings(max_examples=30, deadline=None)
def test_dissipation_nonpositive_and_consistent(seed, rate, amp):
    g = build_interval(1.0, 6)
    op = assemble(g, 1.0, 1.0, 0.5, 0.5)
    rng = np.random.default_rng(seed)
    ko, kg = mem.exponential(amp, rate), mem.powerlaw(amp, 1.0 + rate)
    grid = mem.make_age_grid(0.05, 10.0)
    samples = rng.normal(size=(grid.n_intervals + 1, g.n_nodes))
    samples[0] = 0
    state = mem.MemoryState(grid, samples, ko, kg)
    m1, diss = mem.m1_norm_and_dissipation(state, op)
    assert diss <= 1e-10 * m1
    assert m1 == pytest.approx(mem.m1_norm_sq(state, op), rel=1e-12)
    assert diss == pytest.approx(mem.t_dissipation(state, op), rel=1e-12)


def test_modal_and_nodal_norms_agree(op_basis):
    g, op, basis = op_basis
    from cogur.galerkin import ModalOperator

    P = basis.vectors
    modal = ModalOperator(P.T @ (op.A0 @ P), P.T @ (op.C_mat @ P), op.nu)
    k = mem.exponential(1.0, 1.0)
    grid = mem.make_age_grid(0.1, 5.0)
    coeffs = np.random.default_rng(2).normal(size=(grid.n_intervals + 1, 3))
    coeffs[0] = 0
    nodal = mem.MemoryState(grid, coeffs @ P.T, k, k)
    modal_state = mem.MemoryState(grid, coeffs, k, k)
    a = mem.m1_norm_and_dissipation(nodal, op)
    b = mem.m1_norm_and_dissipation(modal_state, modal)
    assert np.allclose(a, b, rtol=1e-12)
