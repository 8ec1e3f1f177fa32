"""Lagrange P1/P2 reference elements, triangle quadrature and Taylor-Hood dof maps.

Reference triangle: vertices (0,0), (1,0), (0,1), barycentric coordinates
``l0 = 1 - x - y``, ``l1 = x``, ``l2 = y``.  P2 nodes are the three vertices
followed by the midpoints of the edges opposite vertex 0, 1 and 2.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import sqrt

import numpy as np
from scipy.special import roots_jacobi

from .errors import ConfigError
from .mesh import TriMesh

# d(l0, l1, l2)/d(x, y) on the reference triangle
_BARY_GRAD = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])

# P2 edge node k joins these two vertices
_P2_EDGE_VERTS = ((1, 2), (2, 0), (0, 1))


def _bary(points: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = points[:, 0], points[:, 1]
    return np.stack([1.0 - x - y, x, y], axis=1)


@dataclass(frozen=True)
class RefElement:
    order: int
    nodes: np.ndarray  # (node_count, 2) reference coordinates

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def eval(self, points) -> np.ndarray:
        """Basis values, shape (npts, node_count)."""
        lam = _bary(points)
        if self.order == 1:
            return lam
        vert = lam * (2.0 * lam - 1.0)
        edge = np.stack([4.0 * lam[:, a] * lam[:, b] for a, b in _P2_EDGE_VERTS], axis=1)
        return np.hstack([vert, edge])

    def grad(self, points) -> np.ndarray:
        """Reference gradients, shape (npts, node_count, 2)."""
        lam = _bary(points)
        npts = len(lam)
        if self.order == 1:
            return np.broadcast_to(_BARY_GRAD, (npts, 3, 2)).copy()
        out = np.empty((npts, 6, 2))
        for i in range(3):
            out[:, i, :] = (4.0 * lam[:, i] - 1.0)[:, None] * _BARY_GRAD[i]
        for k, (a, b) in enumerate(_P2_EDGE_VERTS):
            out[:, 3 + k, :] = 4.0 * (lam[:, a, None] * _BARY_GRAD[b] + lam[:, b, None] * _BARY_GRAD[a])
        return out

    def hessian(self) -> np.ndarray:
        """Constant reference Hessians, shape (node_count, 2, 2)."""
        if self.order == 1:
            return np.zeros((3, 2, 2))
        g = _BARY_GRAD
        out = np.empty((6, 2, 2))
        for i in range(3):
            out[i] = 4.0 * np.outer(g[i], g[i])
        for k, (a, b) in enumerate(_P2_EDGE_VERTS):
            out[3 + k] = 4.0 * (np.outer(g[a], g[b]) + np.outer(g[b], g[a]))
        return out


def make_ref_element(order: int) -> RefElement:
    if order == 1:
        nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    elif order == 2:
        nodes = np.array(
            [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [0.0, 0.5], [0.5, 0.0]]
        )
    else:
        raise ConfigError(f"Lagrange order {order} is not supported (use 1 or 2)")
    return RefElement(order=order, nodes=nodes)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, 2) reference coordinates
    weights: np.ndarray  # (nq,), sum = 1/2
    exactness_degree: int


MAX_QUADRATURE_DEGREE = 12


def _symmetric_rule(groups, degree: int) -> QuadratureRule:
    pts, wts = [], []
    for bary, w in groups:
        a, b, c = bary
        perms = {(a, b, c), (b, c, a), (c, a, b), (a, c, b), (c, b, a), (b, a, c)}
        for l0, l1, l2 in sorted(perms):
            pts.append((l1, l2))
            wts.append(w)
    return QuadratureRule(np.array(pts), 0.5 * np.array(wts), degree)


def _collapsed_gauss(degree: int) -> QuadratureRule:
    # Duffy collapse y = (1 - x) r: Gauss-Jacobi(1, 0) in x absorbs the
    # (1 - x) Jacobian, Gauss-Legendre in r.
    m = (degree + 2) // 2
    s, ws = roots_jacobi(m, 1.0, 0.0)
    r, wr = np.polynomial.legendre.leggauss(m)
    x = np.repeat(0.5 * (s + 1.0), m)
    y = (1.0 - x) * np.tile(0.5 * (r + 1.0), m)
    w = np.outer(ws, wr).ravel() / 8.0
    return QuadratureRule(np.column_stack([x, y]), w, 2 * m - 1)


@lru_cache(maxsize=None)
def make_quadrature(min_degree: int) -> QuadratureRule:
    """Positive-weight rule on the reference triangle exact to ``min_degree``."""
    if not 1 <= min_degree <= MAX_QUADRATURE_DEGREE:
        raise ConfigError(
            f"no quadrature rule of degree {min_degree} (supported: 1..{MAX_QUADRATURE_DEGREE})"
        )
    if min_degree == 1:
        return QuadratureRule(np.array([[1.0 / 3.0, 1.0 / 3.0]]), np.array([0.5]), 1)
    if min_degree == 2:
        return _symmetric_rule([((2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0), 1.0 / 3.0)], 2)
    if min_degree in (4, 5):
        # Radon's 7-point rule
        r = sqrt(15.0)
        a1, a2 = (6.0 - r) / 21.0, (6.0 + r) / 21.0
        return _symmetric_rule(
            [
                ((1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0), 9.0 / 40.0),
                ((1.0 - 2.0 * a1, a1, a1), (155.0 - r) / 1200.0),
                ((1.0 - 2.0 * a2, a2, a2), (155.0 + r) / 1200.0),
            ],
            5,
        )
    return _collapsed_gauss(min_degree)


def make_edge_quadrature(min_degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points on [0, 1] and weights summing to 1."""
    m = max(1, (min_degree + 2) // 2)
    s, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (s + 1.0), 0.5 * w


@dataclass(frozen=True, eq=False)
class DofLayout:
    """Block layout [u_x | u_y | xi | eta] for the P_{r+1}/P_r/P_r triple.

    P2 scalar dofs: vertices first, then one per edge (index ``nv + edge``).
    P1 scalar dofs coincide with vertex indices.
    """

    r: int
    n_p2: int
    n_p1: int
    p2_cells: np.ndarray  # (nt, 6) global P2 scalar dof per local node
    p1_cells: np.ndarray  # (nt, 3)
    p2_coords: np.ndarray  # (n_p2, 2) node coordinates

    @property
    def n_u(self) -> int:
        return 2 * self.n_p2

    @property
    def xi_offset(self) -> int:
        return self.n_u

    @property
    def eta_offset(self) -> int:
        return self.n_u + self.n_p1

    @property
    def total(self) -> int:
        return self.n_u + 2 * self.n_p1

    @property
    def u_slice(self) -> slice:
        return slice(0, self.n_u)

    @property
    def xi_slice(self) -> slice:
        return slice(self.xi_offset, self.eta_offset)

    @property
    def eta_slice(self) -> slice:
        return slice(self.eta_offset, self.total)

    @property
    def u_dofs(self) -> np.ndarray:
        return np.arange(self.n_u).reshape(2, self.n_p2)

    @property
    def xi_dofs(self) -> np.ndarray:
        return np.arange(self.xi_offset, self.eta_offset)

    @property
    def eta_dofs(self) -> np.ndarray:
        return np.arange(self.eta_offset, self.total)

    def u_cells(self) -> np.ndarray:
        """(nt, 12) u-block dofs, local order (component, node)."""
        return np.hstack([self.p2_cells, self.p2_cells + self.n_p2])


def build_dof_layout(mesh: TriMesh, r: int = 1) -> DofLayout:
    if r != 1:
        raise ConfigError("only the P2/P1 Taylor-Hood pair (r = 1) is implemented")
    nv = mesh.n_vertices
    p2_cells = np.hstack([mesh.triangles, nv + mesh.triangle_edges])
    mids = mesh.vertices[mesh.edges].mean(axis=1)
    return DofLayout(
        r=r,
        n_p2=nv + mesh.n_edges,
        n_p1=nv,
        p2_cells=p2_cells,
        p1_cells=mesh.triangles.copy(),
        p2_coords=np.vstack([mesh.vertices, mids]),
    )
