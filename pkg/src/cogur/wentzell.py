"""Wentzell Laplacian on the trace-consistent P1 space, its eigenbasis and
the static bulk/surface boundary value problem."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, NumericalError, ShapeError, UnsupportedParameterError
from .geometry import Geometry, trace

X2 = "X2"
V1 = "V1"


@dataclass(frozen=True, eq=False)
class BulkBoundaryField:
    """A pair (u, v) of bulk and boundary nodal values.

    With ``space_tag == "V1"`` the boundary part is the trace of the bulk
    part; ``"X2"`` pairs are unconstrained.
    """

    u: np.ndarray
    v: np.ndarray
    space_tag: str = X2

    def __post_init__(self):
        if self.space_tag not in (X2, V1):
            raise ConfigurationError(f"unknown space tag {self.space_tag!r}")

    @classmethod
    def from_nodal(cls, geom: Geometry, x) -> "BulkBoundaryField":
        x = np.asarray(x, dtype=float)
        return cls(x, trace(geom, x).copy(), V1)

    def is_trace_consistent(self, geom: Geometry) -> bool:
        return bool(np.array_equal(trace(geom, self.u), self.v))


@dataclass(frozen=True, eq=False)
class WentzellOperator:
    geom: Geometry
    alpha: float
    beta: float
    omega: float
    nu: float
    M: sp.csr_matrix
    A: sp.csr_matrix
    A0: sp.csr_matrix
    C_mat: sp.csr_matrix

    @property
    def bulk_mass(self) -> sp.csr_matrix:
        return self.geom.mass

    @property
    def boundary_mass(self) -> sp.csr_matrix:
        """M_Gamma embedded on the bulk nodes."""
        E = self.geom.embedding
        return (E @ self.geom.boundary_mass @ E.T).tocsr()

    @property
    def A_dyn(self) -> sp.csr_matrix:
        """Operator acting on U in the weak form: omega K + nu C (no alpha term)."""
        return (self.omega * self.geom.stiffness + self.nu * self.C_mat).tocsr()

    def x2_project(self, field: BulkBoundaryField) -> np.ndarray:
        """X2-orthogonal projection of a pair onto the trace-consistent space."""
        rhs = self.x2_load(field)
        return spla.spsolve(self.M.tocsc(), rhs)

    def x2_load(self, field: BulkBoundaryField) -> np.ndarray:
        """Riesz vector of ``<field, .>_{X2}`` on nodal test functions."""
        g = self.geom
        u = np.asarray(field.u, dtype=float)
        v = np.asarray(field.v, dtype=float)
        if u.shape[0] != g.n_nodes or v.shape[0] != g.n_boundary:
            raise ShapeError("field does not match the geometry")
        return g.mass @ u + g.embedding @ (g.boundary_mass @ v)


def assemble(geom: Geometry, alpha: float, beta: float, omega: float, nu: float) -> WentzellOperator:
    if nu <= 0:
        raise UnsupportedParameterError("nu must be strictly positive (nu = 0 is not supported)")
    if not 0 < nu < 1:
        raise ConfigurationError("nu must lie in (0,1)")
    if not 0 < omega < 1:
        raise ConfigurationError("omega must lie in (0,1)")
    if alpha <= 0 or beta <= 0:
        raise ConfigurationError("alpha and beta must be positive")
    E = geom.embedding
    C_mat = (E @ (geom.boundary_stiffness + beta * geom.boundary_mass) @ E.T).tocsr()
    M = (geom.mass + E @ geom.boundary_mass @ E.T).tocsr()
    A0 = (omega * geom.stiffness + alpha * omega * geom.mass).tocsr()
    A = (A0 + nu * C_mat).tocsr()
    return WentzellOperator(geom, float(alpha), float(beta), float(omega), float(nu), M, A, A0, C_mat)


@dataclass(frozen=True, eq=False)
class EigenBasis:
    eigenvalues: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.shape[0]

    def nodal(self, coeffs) -> np.ndarray:
        return self.vectors @ np.asarray(coeffs)


def _order_modes(vals, vecs, rtol=1e-9, atol=1e-12):
    # first significant entry of each vector is made positive
    first = np.argmax(np.abs(vecs) > 1e-8 * np.max(np.abs(vecs), axis=0), axis=0)
    signs = np.sign(vecs[first, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    vecs = vecs * signs
    # group near-equal eigenvalues and sort each group by leading index
    order = np.argsort(vals, kind="stable")
    out = []
    i = 0
    while i < order.size:
        j = i + 1
        while j < order.size and vals[order[j]] - vals[order[i]] <= rtol * abs(vals[order[i]]) + atol:
            j += 1
        group = order[i:j]
        out.extend(group[np.argsort(first[group], kind="stable")])
        i = j
    out = np.array(out)
    return vals[out], vecs[:, out]


def eigenbasis(op: WentzellOperator, n_modes: int) -> EigenBasis:
    """Lowest ``n_modes`` M-orthonormal eigenpairs of A by a dense solve."""
    n = op.geom.n_nodes
    if n_modes < 1 or n_modes > n:
        raise ShapeError(f"n_modes must lie in [1, {n}], got {n_modes}")
    A = op.A.toarray()
    M = op.M.toarray()
    # a few extra modes so a tie at the cut is ordered consistently
    m = min(n, n_modes + 2)
    try:
        vals, vecs = sla.eigh(A, M, subset_by_index=[0, m - 1])
    except (sla.LinAlgError, ValueError) as exc:
        raise NumericalError(f"generalized eigensolve failed: {exc}") from exc
    vals, vecs = _order_modes(vals, vecs)
    vals, vecs = vals[:n_modes], vecs[:, :n_modes]
    AV = A @ vecs
    res = np.linalg.norm(AV - (M @ vecs) * vals, axis=0)
    scale = np.linalg.norm(AV, axis=0)
    bad = np.nonzero(res > 1e-9 * np.maximum(scale, 1e-300))[0]
    if bad.size:
        raise NumericalError(f"eigenpair {int(bad[0]) + 1} did not converge (residual {res[bad[0]]:.3e})")
    return EigenBasis(vals, vecs, res)


@dataclass(frozen=True, eq=False)
class BvpSolution:
    field: BulkBoundaryField
    regularity_ratio: float


def solve_bvp(geom: Geometry, p1, p2, beta: float) -> BvpSolution:
    """Solve -lap u = p1 in the bulk, -lap_G u + d_n u + beta u = p2 on the
    boundary (weak form with unit weights).

    The returned ratio divides a discrete graph norm of the operator, used as
    an H2 proxy, by ``||p1|| + ||p2||``.
    """
    if beta <= 0:
        raise ConfigurationError("beta must be positive for a nonsingular BVP")
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if p1.shape != (geom.n_nodes,) or p2.shape != (geom.n_boundary,):
        raise ShapeError("BVP data does not match the geometry")
    E = geom.embedding
    Mg = geom.boundary_mass
    L = (geom.stiffness + E @ (geom.boundary_stiffness + beta * Mg) @ E.T).tocsc()
    rhs = geom.mass @ p1 + E @ (Mg @ p2)
    u = spla.spsolve(L, rhs)
    if not np.all(np.isfinite(u)):
        raise NumericalError("BVP solve produced non-finite values")

    M = (geom.mass + E @ Mg @ E.T).tocsc()
    strong = spla.spsolve(M, L @ u)
    mnorm = lambda x: float(np.sqrt(x @ (M @ x)))
    proxy = mnorm(strong) + mnorm(u)
    data = float(np.sqrt(p1 @ (geom.mass @ p1)) + np.sqrt(p2 @ (Mg @ p2)))
    ratio = proxy / data if data > 0 else float("nan")
    return BvpSolution(BulkBoundaryField.from_nodal(geom, u), ratio)
