"""P1 bulk/boundary discretizations of the interval and the disk.

Every geometry carries the four matrices the rest of the package works with:
bulk mass and stiffness on the nodes of the mesh, and boundary mass and
Laplace-Beltrami stiffness on the boundary nodes (local boundary numbering).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ConfigurationError, NumericalError, ResourceError, ShapeError

MAX_DISK_REFINE = 8


@dataclass(frozen=True, eq=False)
class Geometry:
    backend: str
    nodes: np.ndarray
    cells: np.ndarray
    boundary_nodes: np.ndarray
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    boundary_mass: sp.csr_matrix
    boundary_stiffness: sp.csr_matrix
    boundary_edges: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_boundary(self) -> int:
        return self.boundary_nodes.shape[0]

    @cached_property
    def volume(self) -> float:
        return float(self.mass.sum())

    @cached_property
    def surface(self) -> float:
        return float(self.boundary_mass.sum())

    @cached_property
    def embedding(self) -> sp.csr_matrix:
        """Sparse ``n_nodes x n_boundary`` injection of boundary values."""
        nb = self.n_boundary
        return sp.csr_matrix(
            (np.ones(nb), (self.boundary_nodes, np.arange(nb))),
            shape=(self.n_nodes, nb),
        )

    @cached_property
    def mesh_size(self) -> float:
        pts = self.nodes[self.cells]
        if self.backend == "interval":
            return float(np.max(np.abs(pts[:, 1, 0] - pts[:, 0, 0])))
        edges = np.concatenate(
            [pts[:, 1] - pts[:, 0], pts[:, 2] - pts[:, 1], pts[:, 0] - pts[:, 2]]
        )
        return float(np.max(np.linalg.norm(edges, axis=1)))

    @cached_property
    def poincare_constant(self) -> float:
        return poincare_constant(self)

    def export_csv(self, directory) -> tuple[Path, Path]:
        """Write ``nodes.csv`` and ``cells.csv`` for inspection."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        on_boundary = np.zeros(self.n_nodes, dtype=int)
        on_boundary[self.boundary_nodes] = 1
        node_path = directory / "nodes.csv"
        with node_path.open("w", newline="") as fh:
            w = csv.writer(fh)
            coords = ["x", "y"][: self.nodes.shape[1]]
            w.writerow(["node", *coords, "boundary"])
            for i, xy in enumerate(self.nodes):
                w.writerow([i, *(f"{c:.17g}" for c in xy), on_boundary[i]])
        cell_path = directory / "cells.csv"
        with cell_path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cell", *(f"v{j}" for j in range(self.cells.shape[1]))])
            for i, c in enumerate(self.cells):
                w.writerow([i, *c])
        return node_path, cell_path


def build_interval(length: float, n_cells: int) -> Geometry:
    """Uniform P1 mesh of ``[0, length]``; the boundary is the two endpoints
    carrying unit point masses, so the boundary stiffness vanishes."""
    if not length > 0:
        raise ConfigurationError(f"interval length must be positive, got {length}")
    if int(n_cells) != n_cells or n_cells < 1:
        raise ConfigurationError(f"n_cells must be a positive integer, got {n_cells}")
    n_cells = int(n_cells)
    x = np.linspace(0.0, float(length), n_cells + 1)
    cells = np.column_stack([np.arange(n_cells), np.arange(1, n_cells + 1)])
    h = np.diff(x)

    rows = np.repeat(cells, 2, axis=1).ravel()
    cols = np.tile(cells, (1, 2)).ravel()
    m_loc = (h[:, None] / 6.0) * np.array([2.0, 1.0, 1.0, 2.0])
    k_loc = (1.0 / h[:, None]) * np.array([1.0, -1.0, -1.0, 1.0])
    n = n_cells + 1
    mass = sp.csr_matrix((m_loc.ravel(), (rows, cols)), shape=(n, n))
    stiff = sp.csr_matrix((k_loc.ravel(), (rows, cols)), shape=(n, n))

    return Geometry(
        backend="interval",
        nodes=x[:, None],
        cells=cells,
        boundary_nodes=np.array([0, n_cells]),
        mass=mass,
        stiffness=stiff,
        boundary_mass=sp.identity(2, format="csr"),
        boundary_stiffness=sp.csr_matrix((2, 2)),
        params={"length": float(length), "n_cells": n_cells},
    )


def _disk_mesh(radius: float, n_refine: int):
    angles = np.arange(6) * np.pi / 3.0
    nodes = [np.zeros(2)] + [radius * np.array([np.cos(a), np.sin(a)]) for a in angles]
    nodes = np.array(nodes)
    cells = np.array([[0, 1 + i, 1 + (i + 1) % 6] for i in range(6)])
    bedges = np.array([[1 + i, 1 + (i + 1) % 6] for i in range(6)])

    for _ in range(n_refine):
        edges = np.sort(
            np.concatenate([cells[:, [0, 1]], cells[:, [1, 2]], cells[:, [2, 0]]]), axis=1
        )
        uniq, inv = np.unique(edges, axis=0, return_inverse=True)
        inv = inv.ravel()
        mids = 0.5 * (nodes[uniq[:, 0]] + nodes[uniq[:, 1]])
        mid_id = nodes.shape[0] + np.arange(uniq.shape[0])

        key = {tuple(e): k for k, e in enumerate(uniq)}
        new_bedges = []
        for a, b in bedges:
            k = key[(min(a, b), max(a, b))]
            p = mids[k]
            mids[k] = radius * p / np.linalg.norm(p)
            new_bedges += [[a, mid_id[k]], [mid_id[k], b]]

        nc = cells.shape[0]
        m01 = mid_id[inv[:nc]]
        m12 = mid_id[inv[nc : 2 * nc]]
        m20 = mid_id[inv[2 * nc :]]
        v0, v1, v2 = cells.T
        cells = np.concatenate(
            [
                np.column_stack([v0, m01, m20]),
                np.column_stack([m01, v1, m12]),
                np.column_stack([m20, m12, v2]),
                np.column_stack([m01, m12, m20]),
            ]
        )
        nodes = np.vstack([nodes, mids])
        bedges = np.array(new_bedges)
    return nodes, cells, bedges


def build_disk(radius: float, n_refine: int) -> Geometry:
    """P1 triangulation of the disk from a refined inscribed hexagon.

    Boundary midpoints are projected onto the circle at every level; the
    boundary is discretized by the resulting P1 edge elements.
    """
    if not radius > 0:
        raise ConfigurationError(f"disk radius must be positive, got {radius}")
    if int(n_refine) != n_refine or n_refine < 0:
        raise ConfigurationError(f"n_refine must be a nonnegative integer, got {n_refine}")
    if n_refine > MAX_DISK_REFINE:
        raise ResourceError(f"n_refine={n_refine} exceeds the limit {MAX_DISK_REFINE}")
    nodes, cells, bedges = _disk_mesh(float(radius), int(n_refine))
    n = nodes.shape[0]

    p = nodes[cells]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    flip = det < 0
    if np.any(flip):
        cells[flip] = cells[flip][:, [0, 2, 1]]
        det = np.abs(det)
    area = 0.5 * det
    p = nodes[cells]
    # gradients of barycentric coordinates: rotate opposite edges
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    grads = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2.0 * area[:, None, None])
    k_loc = area[:, None, None] * np.einsum("cik,cjk->cij", grads, grads)
    m_ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    m_loc = area[:, None, None] * m_ref

    rows = np.repeat(cells, 3, axis=1).ravel()
    cols = np.tile(cells, (1, 3)).ravel()
    mass = sp.csr_matrix((m_loc.ravel(), (rows, cols)), shape=(n, n))
    stiff = sp.csr_matrix((k_loc.ravel(), (rows, cols)), shape=(n, n))

    # boundary nodes in angular order
    bnodes = np.unique(bedges)
    theta = np.arctan2(nodes[bnodes, 1], nodes[bnodes, 0]) % (2 * np.pi)
    bnodes = bnodes[np.argsort(theta, kind="stable")]
    local = np.full(n, -1)
    local[bnodes] = np.arange(bnodes.size)
    ledges = local[bedges]
    length = np.linalg.norm(nodes[bedges[:, 1]] - nodes[bedges[:, 0]], axis=1)
    nb = bnodes.size
    brows = np.repeat(ledges, 2, axis=1).ravel()
    bcols = np.tile(ledges, (1, 2)).ravel()
    bm = (length[:, None] / 6.0) * np.array([2.0, 1.0, 1.0, 2.0])
    bk = (1.0 / length[:, None]) * np.array([1.0, -1.0, -1.0, 1.0])
    bmass = sp.csr_matrix((bm.ravel(), (brows, bcols)), shape=(nb, nb))
    bstiff = sp.csr_matrix((bk.ravel(), (brows, bcols)), shape=(nb, nb))

    return Geometry(
        backend="disk",
        nodes=nodes,
        cells=cells,
        boundary_nodes=bnodes,
        mass=mass,
        stiffness=stiff,
        boundary_mass=bmass,
        boundary_stiffness=bstiff,
        boundary_edges=ledges,
        params={"radius": float(radius), "n_refine": int(n_refine)},
    )


def build(backend: str, size: float, refine: int) -> Geometry:
    if backend == "interval":
        return build_interval(size, refine)
    if backend == "disk":
        return build_disk(size, refine)
    raise ConfigurationError(f"unknown geometry backend {backend!r}")


def trace(geom: Geometry, u_bulk) -> np.ndarray:
    """Boundary values of a bulk nodal field (P1 trace is restriction)."""
    u_bulk = np.asarray(u_bulk)
    if u_bulk.shape[0] != geom.n_nodes:
        raise ShapeError(f"expected {geom.n_nodes} bulk values, got {u_bulk.shape[0]}")
    return u_bulk[geom.boundary_nodes]


def poincare_constant(geom: Geometry) -> float:
    """Best constant C with ||u - <u>_Gamma||_{L2} <= C ||grad u||_{L2}.

    Dense generalized eigensolve on the complement of the constants.
    """
    n = geom.n_nodes
    K = geom.stiffness.toarray()
    M = geom.mass.toarray()
    # boundary average functional <u>_Gamma = w . u
    w = np.zeros(n)
    w[geom.boundary_nodes] = np.asarray(geom.boundary_mass.sum(axis=0)).ravel() / geom.surface
    P = np.eye(n) - np.outer(np.ones(n), w)
    B = P.T @ M @ P
    Q = sla.null_space(np.ones((1, n)))
    Kq = Q.T @ K @ Q
    Bq = Q.T @ B @ Q
    try:
        vals = sla.eigh(Bq, Kq, eigvals_only=True, subset_by_index=[n - 2, n - 2])
    except (sla.LinAlgError, ValueError) as exc:
        raise NumericalError(f"Poincare eigensolve failed: {exc}") from exc
    return float(np.sqrt(vals[-1]))
