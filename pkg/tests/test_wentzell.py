import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cogur.errors import ConfigurationError, ShapeError, UnsupportedParameterError
from cogur.geometry import build_disk, build_interval
from cogur.wentzell import BulkBoundaryField, assemble, eigenbasis, solve_bvp
from oracles import wentzell_interval_eigs_discrete


def test_constant_eigenvector_example():
    g = build_interval(1.0, 16)
    op = assemble(g, 2.0, 1.0, 0.25, 0.5)
    one = np.ones(g.n_nodes)
    assert np.allclose(op.A @ one, 0.5 * (op.M @ one), atol=1e-13)


@pytest.mark.parametrize("geom", [build_interval(1.0, 20), build_disk(1.0, 2)])
def test_symmetry_and_definiteness(geom):
    op = assemble(geom, 1.0, 1.0, 0.5, 0.5)
    for mat in (op.A, op.M, op.A0, op.C_mat):
        assert abs(mat - mat.T).max() < 1e-12
    assert np.linalg.eigvalsh(op.M.toarray()).min() > 0
    assert np.linalg.eigvalsh(op.A.toarray()).min() > 0


def test_splitting_reassembles_operator():
    g = build_disk(1.0, 2)
    op = assemble(g, 1.3, 0.7, 0.4, 0.6)
    assert abs(op.A - (op.A0 + op.nu * op.C_mat)).max() < 1e-13
    assert abs(op.A_dyn - (op.A - op.alpha * op.omega * g.mass)).max() < 1e-13


@pytest.mark.parametrize("nu", [0.0, -0.1])
def test_nonpositive_nu_unsupported(nu):
    with pytest.raises(UnsupportedParameterError):
        assemble(build_interval(1.0, 4), 1.0, 1.0, 0.5, nu)


@pytest.mark.parametrize("kw", [dict(nu=1.0), dict(omega=0.0), dict(alpha=0.0), dict(beta=-1.0)])
def test_parameter_ranges(kw):
    p = dict(alpha=1.0, beta=1.0, omega=0.5, nu=0.5) | kw
    with pytest.raises(ConfigurationError):
        assemble(build_interval(1.0, 4), **p)


def test_eigenbasis_matches_discrete_oracle_to_roundoff():
    g = build_interval(1.0, 128)
    basis = eigenbasis(assemble(g, 1.0, 1.0, 0.5, 0.5), 5)
    ref = wentzell_interval_eigs_discrete(1.0, 128, 1.0, 1.0, 0.5, 0.5, 5)
    assert np.max(np.abs(basis.eigenvalues - ref) / ref) < 1e-10


@pytest.mark.parametrize("geom,tol", [(build_interval(1.0, 40), 1e-10), (build_disk(1.0, 2), 1e-8)])
def test_basis_invariants(geom, tol):
    op = assemble(geom, 1.0, 1.0, 0.5, 0.5)
    b = eigenbasis(op, 8)
    P = b.vectors
    assert np.max(np.abs(P.T @ (op.M @ P) - np.eye(8))) < tol
    assert np.max(np.abs(P.T @ (op.A @ P) - np.diag(b.eigenvalues))) < tol * b.eigenvalues.max()
    assert np.all(np.diff(b.eigenvalues) >= 0)
    assert np.all(b.residuals <= 1e-9 * np.linalg.norm(op.A @ P, axis=0))


def test_degenerate_modes_have_deterministic_order():
    g = build_disk(1.0, 2)
    op = assemble(g, 1.0, 1.0, 0.5, 0.5)
    b1, b2 = eigenbasis(op, 6), eigenbasis(op, 6)
    assert np.array_equal(b1.vectors, b2.vectors)
    # the disk spectrum has (near) double eigenvalues; each column leads with a positive entry
    first = np.argmax(np.abs(b1.vectors) > 1e-8 * np.abs(b1.vectors).max(axis=0), axis=0)
    assert np.all(b1.vectors[first, np.arange(6)] > 0)


def test_eigenvalues_self_converge_at_second_order():
    lams = [eigenbasis(assemble(build_disk(1.0, k), 1.0, 1.0, 0.5, 0.5), 3).eigenvalues for k in (2, 3, 4, 5)]
    diffs = [np.max(np.abs(lams[i + 1] - lams[i])) for i in range(3)]
    order = np.log2(diffs[1] / diffs[2])
    assert 1.7 < order < 2.3


def test_eigenbasis_mode_count_checked():
    op = assemble(build_interval(1.0, 4), 1.0, 1.0, 0.5, 0.5)
    with pytest.raises(ShapeError):
        eigenbasis(op, 6)


def test_field_trace_consistency():
    g = build_interval(1.0, 4)
    f = BulkBoundaryField.from_nodal(g, np.arange(5.0))
    assert f.space_tag == "V1" and f.is_trace_consistent(g)
    assert not BulkBoundaryField(np.arange(5.0), np.array([1.0, 2.0])).is_trace_consistent(g)


def test_x2_projection_residual_orthogonal():
    g = build_interval(1.0, 16)
    op = assemble(g, 1.0, 1.0, 0.5, 0.5)
    rng = np.random.default_rng(0)
    pair = BulkBoundaryField(rng.normal(size=g.n_nodes), rng.normal(size=2))
    x = op.x2_project(pair)
    # residual (u - x, v - trace x) is X2-orthogonal to every nodal test function
    resid = op.x2_load(pair) - op.M @ x
    assert np.max(np.abs(resid)) < 1e-12


@given(c=st.floats(-5, 5), beta=st.floats(0.1, 10))
@settings(max_examples=25, deadline=None)
def test_bvp_constants(c, beta):
    g = build_disk(1.0, 1)
    sol = solve_bvp(g, np.zeros(g.n_nodes), np.full(g.n_boundary, beta * c), beta)
    assert np.allclose(sol.field.u, c, atol=1e-10 * (1 + abs(c)))


def test_bvp_interval_quadratic_closed_form():
    beta = 2.0
    g = build_interval(1.0, 10)
    # -u'' = 1, -u'(0) + beta u(0) = 0, u'(1) + beta u(1) = 0
    A = np.array([[-1.0, beta], [1.0 + beta, beta]])
    a, b = np.linalg.solve(A, [0.0, 1.0 + beta / 2])
    x = g.nodes[:, 0]
    exact = -x**2 / 2 + a * x + b
    sol = solve_bvp(g, np.ones(g.n_nodes), np.zeros(2), beta)
    assert np.max(np.abs(sol.field.u - exact)) < 1e-10
    assert sol.regularity_ratio > 0


def test_bvp_rejects_bad_input():
    g = build_interval(1.0, 4)
    with pytest.raises(ConfigurationError):
        solve_bvp(g, np.zeros(5), np.zeros(2), 0.0)
    with pytest.raises(ShapeError):
        solve_bvp(g, np.zeros(4), np.zeros(2), 1.0)


def test_bvp_regularity_ratio_bounded_under_refinement():
    ratios = []
    for k in (2, 3, 4):
        g = build_disk(1.0, k)
        x = g.nodes[:, 0]
        ratios.append(solve_bvp(g, np.zeros(g.n_nodes), 3.0 * x[g.boundary_nodes], 1.0).regularity_ratio)
    assert max(ratios) / min(ratios) < 1.5
