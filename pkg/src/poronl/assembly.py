"""Global matrices, load vectors and Dirichlet conditions for the P2/P1/P1 system.

All element loops are vectorised over triangles; per-element contributions
are scattered through :class:`~poronl.sparse.CooAccumulator`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable

import numpy as np
import scipy.sparse as sps

from .errors import ConfigError
from .fe_basis import DofLayout, QuadratureRule, make_edge_quadrature, make_ref_element
from .mesh import BoundaryTag, TriMesh
from .mms import PhysicalParams
from .sparse import CooAccumulator, CsrMatrix, coo_to_csr


class ElementData:
    """Geometry and basis data at the quadrature points of every triangle."""

    def __init__(self, mesh: TriMesh, layout: DofLayout, quad: QuadratureRule):
        self.mesh = mesh
        self.layout = layout
        self.quad = quad
        p2, p1 = make_ref_element(2), make_ref_element(1)
        jac, det, inv_t = mesh.jacobians()
        self.det = det
        self.area = 0.5 * det
        self.inv_t = inv_t
        origin = mesh.vertices[mesh.triangles[:, 0]]
        # physical quadrature points (nt, nq, 2)
        self.points = origin[:, None, :] + np.einsum("tab,qb->tqa", jac, quad.points)
        self.W = det[:, None] * quad.weights[None, :]
        self.phi2 = p2.eval(quad.points)  # (nq, 6)
        self.phi1 = p1.eval(quad.points)  # (nq, 3)
        self.grad2 = np.einsum("tab,qib->tqia", inv_t, p2.grad(quad.points))  # (nt, nq, 6, 2)
        self.grad1 = np.einsum("tab,ib->tia", inv_t, p1.grad([[0.0, 0.0]])[0])  # (nt, 3, 2)
        self.hess2 = np.einsum("tab,ibc,tdc->tiad", inv_t, p2.hessian(), inv_t)  # (nt, 6, 2, 2)

    @property
    def x(self) -> np.ndarray:
        return self.points[..., 0]

    def _op(self, rows: np.ndarray, cols: np.ndarray, vals: np.ndarray, shape) -> sps.csr_matrix:
        return sps.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape)

    @cached_property
    def p1_eval_op(self) -> sps.csr_matrix:
        """P1 coefficients -> values at the points, flattened (nt, nq)."""
        nt, nq = self.W.shape
        rows = np.broadcast_to(np.arange(nt * nq).reshape(nt, nq, 1), (nt, nq, 3))
        cols = np.broadcast_to(self.layout.p1_cells[:, None, :], (nt, nq, 3))
        vals = np.broadcast_to(self.phi1[None], (nt, nq, 3))
        return self._op(rows, cols, vals, (nt * nq, self.layout.n_p1))

    @cached_property
    def p1_grad_op(self) -> sps.csr_matrix:
        """P1 coefficients -> gradients, flattened (2, nt)."""
        nt = len(self.W)
        rows = np.arange(2)[:, None, None] * nt + np.arange(nt)[None, :, None]
        rows = np.broadcast_to(rows, (2, nt, 3))
        cols = np.broadcast_to(self.layout.p1_cells[None], (2, nt, 3))
        vals = np.moveaxis(self.grad1, 2, 0)
        return self._op(rows, cols, vals, (2 * nt, self.layout.n_p1))

    @cached_property
    def u_eval_op(self) -> sps.csr_matrix:
        """u coefficients -> values, flattened (2, nt, nq)."""
        nt, nq = self.W.shape
        cells = self.layout.u_cells().reshape(nt, 2, 6)
        base = np.arange(nt * nq).reshape(nt, nq)
        rows = np.stack([np.broadcast_to(base[:, :, None] + c * nt * nq, (nt, nq, 6)) for c in range(2)])
        cols = np.stack([np.broadcast_to(cells[:, None, c, :], (nt, nq, 6)) for c in range(2)])
        vals = np.broadcast_to(self.phi2[None, None], (2, nt, nq, 6))
        return self._op(rows, cols, vals, (2 * nt * nq, self.layout.n_u))

    @cached_property
    def u_grad_op(self) -> sps.csr_matrix:
        """u coefficients -> gradients [i, j] = d u_i/d x_j, flattened (2, 2, nt, nq)."""
        nt, nq = self.W.shape
        cells = self.layout.u_cells().reshape(nt, 2, 6)
        base = np.arange(nt * nq).reshape(nt, nq)
        rows, cols, vals = [], [], []
        for c in range(2):
            for j in range(2):
                rows.append(np.broadcast_to(base[:, :, None] + (2 * c + j) * nt * nq, (nt, nq, 6)))
                cols.append(np.broadcast_to(cells[:, None, c, :], (nt, nq, 6)))
                vals.append(self.grad2[..., j])
        return self._op(np.stack(rows), np.stack(cols), np.stack(vals), (4 * nt * nq, self.layout.n_u))

    @cached_property
    def p1_load_op(self) -> sps.csr_matrix:
        """Values at the points -> (g, psi_i)."""
        return (self.p1_eval_op.T @ sps.diags(self.W.ravel())).tocsr()

    @cached_property
    def u_load_op(self) -> sps.csr_matrix:
        """Vector values at the points -> (f, phi_(c,i))."""
        w = np.tile(self.W.ravel(), 2)
        return (self.u_eval_op.T @ sps.diags(w)).tocsr()

    @property
    def y(self) -> np.ndarray:
        return self.points[..., 1]


@dataclass(frozen=True, eq=False)
class FormMatrices:
    """Assembled bilinear forms (CSR).

    ``A_eps`` carries the factor mu and ``K_stiff``/``K_mixed_u`` the factor
    K/mu_f.  ``M`` is the P1 mass matrix shared by xi and eta.
    """

    A_eps: CsrMatrix  # (n_u, n_u)   mu (eps(phi_j), eps(phi_i))
    B_div: CsrMatrix  # (n_u, n_p1)  (psi_j, div phi_i)
    B_divT: CsrMatrix  # (n_p1, n_u) (div phi_j, psi_i)
    M: CsrMatrix  # (n_p1, n_p1)
    K_stiff: CsrMatrix  # (n_p1, n_p1)
    K_mixed_u: CsrMatrix  # (n_p1, n_u)  (K/mu_f)(grad div phi_j, grad psi_i), elementwise
    M_u: CsrMatrix  # (n_u, n_u) vector P2 mass, for norms

    @property
    def M_xi(self) -> CsrMatrix:
        return self.M

    @property
    def M_eta(self) -> CsrMatrix:
        return self.M

    @property
    def M_xi_eta(self) -> CsrMatrix:
        return self.M


def assemble_forms(mesh: TriMesh, layout: DofLayout, params: PhysicalParams,
                   quad: QuadratureRule, elem: ElementData | None = None) -> FormMatrices:
    ed = elem or ElementData(mesh, layout, quad)
    nt = mesh.n_triangles
    W, g2, phi1, g1 = ed.W, ed.grad2, ed.phi1, ed.grad1
    u_cells, p1_cells = layout.u_cells(), layout.p1_cells
    n_u, n_p = layout.n_u, layout.n_p1

    S = np.einsum("tq,tqia,tqja->tij", W, g2, g2)
    cross = np.einsum("tq,tqid,tqjc->tcidj", W, g2, g2)
    loc = 0.5 * cross
    for c in range(2):
        loc[:, c, :, c, :] += 0.5 * S
    acc = CooAccumulator((n_u, n_u))
    acc.add_local(u_cells, u_cells, params.mu * loc.reshape(nt, 12, 12))
    A_eps = coo_to_csr(acc)

    acc = CooAccumulator((n_u, n_p))
    acc.add_local(u_cells, p1_cells, np.einsum("tq,tqic,qj->tcij", W, g2, phi1).reshape(nt, 12, 3))
    B_div = coo_to_csr(acc)

    B_divT = B_div.T.tocsr()
    B_divT.sort_indices()

    acc = CooAccumulator((n_p, n_p))
    acc.add_local(p1_cells, p1_cells, np.einsum("tq,qi,qj->tij", W, phi1, phi1))
    M = coo_to_csr(acc)

    Kt = params.K_tensor / params.mu_f
    acc = CooAccumulator((n_p, n_p))
    acc.add_local(p1_cells, p1_cells, np.einsum("t,tia,ab,tjb->tij", ed.area, g1, Kt, g1))
    K_stiff = coo_to_csr(acc)

    # grad(d phi_j / d x_c) = hess_j[c, :]
    acc = CooAccumulator((n_p, n_u))
    km = np.einsum("t,tia,ab,tjcb->ticj", ed.area, g1, Kt, ed.hess2).reshape(nt, 3, 12)
    acc.add_local(p1_cells, u_cells, km)
    K_mixed_u = coo_to_csr(acc)

    m2 = np.einsum("tq,qi,qj->tij", W, ed.phi2, ed.phi2)
    loc_u = np.zeros((nt, 2, 6, 2, 6))
    loc_u[:, 0, :, 0, :] = m2
    loc_u[:, 1, :, 1, :] = m2
    acc = CooAccumulator((n_u, n_u))
    acc.add_local(u_cells, u_cells, loc_u.reshape(nt, 12, 12))
    M_u = coo_to_csr(acc)

    return FormMatrices(A_eps, B_div, B_divT, M, K_stiff, K_mixed_u, M_u)


def _scatter(n: int, dofs: np.ndarray, values: np.ndarray) -> np.ndarray:
    return np.bincount(dofs.ravel(), weights=values.ravel(), minlength=n)


def p1_load(ed: ElementData, values: np.ndarray) -> np.ndarray:
    """(g, psi_i) for g sampled at the quadrature points, shape (nt, nq)."""
    return ed.p1_load_op @ np.broadcast_to(values, ed.W.shape).ravel()


def u_load(ed: ElementData, values: np.ndarray) -> np.ndarray:
    """(f, phi_(c,i)) for a vector field sampled as (2, nt, nq)."""
    return ed.u_load_op @ np.broadcast_to(values, (2,) + ed.W.shape).ravel()


def traction_load(mesh: TriMesh, layout: DofLayout, f1: Callable, t: float,
                  parts: Iterable[BoundaryTag], degree: int = 7) -> np.ndarray:
    """Surface term <f1, v> over the boundary edges tagged with ``parts``."""
    out = np.zeros(layout.n_u)
    edges, tags = mesh.boundary_edge_array(frozenset(BoundaryTag(p) for p in parts))
    if len(edges) == 0:
        return out
    s, w = make_edge_quadrature(degree)
    va, vb = mesh.edges[edges, 0], mesh.edges[edges, 1]
    xa, xb = mesh.vertices[va], mesh.vertices[vb]
    length = np.linalg.norm(xb - xa, axis=1)
    pts = xa[:, None, :] + s[None, :, None] * (xb - xa)[:, None, :]  # (ne, ns, 2)
    shape = np.stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)], axis=1)  # (ns, 3)
    dofs = np.column_stack([va, vb, mesh.n_vertices + edges])  # P2 scalar dofs
    for tag in np.unique(tags):
        sel = tags == tag
        normal = BoundaryTag(int(tag)).outward_normal
        vals = f1(pts[sel, :, 0], pts[sel, :, 1], t, normal)  # (2, ne_sel, ns)
        loc = np.einsum("n,s,cns,sk->nck", length[sel], w, vals, shape)
        for c in range(2):
            out += _scatter(layout.n_u, dofs[sel] + c * layout.n_p2, loc[:, c, :])
    return out


def assemble_load(mesh: TriMesh, layout: DofLayout, quad: QuadratureRule, f: Callable | None,
                  phi: Callable | None, f1: Callable | None, t: float, *,
                  params: PhysicalParams | None = None,
                  traction_parts: Iterable[BoundaryTag] = (BoundaryTag.GAMMA1, BoundaryTag.GAMMA3),
                  phi1: Callable | None = None, flux_parts: Iterable[BoundaryTag] = (),
                  elem: ElementData | None = None, edge_degree: int = 7) -> np.ndarray:
    """Block load vector [u | xi | eta] at time ``t``.

    The u-block holds (f, v) + <f1, v> over ``traction_parts``; the eta-block
    holds (phi, psi) (+ <phi1, psi> over ``flux_parts`` and the gravity term
    (K rho_f g, grad psi)/mu_f when ``params`` carries a nonzero rho_f g).
    """
    ed = elem or ElementData(mesh, layout, quad)
    out = np.zeros(layout.total)
    if f is not None:
        out[layout.u_slice] += u_load(ed, np.asarray(f(ed.x, ed.y, t)))
    if f1 is not None:
        out[layout.u_slice] += traction_load(mesh, layout, f1, t, traction_parts, edge_degree)
    if phi is not None:
        out[layout.eta_slice] += p1_load(ed, np.broadcast_to(phi(ed.x, ed.y, t), ed.W.shape))
    if phi1 is not None:
        out[layout.eta_slice] += flux_load(mesh, layout, phi1, t, flux_parts, edge_degree)
    if params is not None and np.any(np.asarray(params.rho_f_g) != 0.0):
        kg = params.K_tensor @ np.asarray(params.rho_f_g) / params.mu_f
        loc = np.einsum("t,tia,a->ti", ed.area, ed.grad1, kg)
        out[layout.eta_slice] += _scatter(layout.n_p1, layout.p1_cells, loc)
    return out


def flux_load(mesh: TriMesh, layout: DofLayout, phi1: Callable, t: float,
              parts: Iterable[BoundaryTag], degree: int = 7) -> np.ndarray:
    """Surface term <phi1, psi> for P1 test functions."""
    out = np.zeros(layout.n_p1)
    edges, tags = mesh.boundary_edge_array(frozenset(BoundaryTag(p) for p in parts))
    if len(edges) == 0:
        return out
    s, w = make_edge_quadrature(degree)
    va, vb = mesh.edges[edges, 0], mesh.edges[edges, 1]
    xa, xb = mesh.vertices[va], mesh.vertices[vb]
    length = np.linalg.norm(xb - xa, axis=1)
    pts = xa[:, None, :] + s[None, :, None] * (xb - xa)[:, None, :]
    shape = np.stack([1 - s, s], axis=1)
    for tag in np.unique(tags):
        sel = tags == tag
        vals = np.broadcast_to(
            phi1(pts[sel, :, 0], pts[sel, :, 1], t, BoundaryTag(int(tag)).outward_normal),
            pts[sel, :, 0].shape,
        )
        loc = np.einsum("n,s,ns,sk->nk", length[sel], w, vals, shape)
        out += _scatter(layout.n_p1, np.column_stack([va, vb])[sel], loc)
    return out


def compute_boundary_dofs(mesh: TriMesh, layout: DofLayout, parts) -> dict[str, np.ndarray]:
    """Dofs whose support node lies on the selected boundary parts.

    Keys: ``p2`` (scalar P2 node indices), ``p1`` (vertex indices) and the
    global block indices ``u`` (both components), ``xi`` and ``eta``.
    """
    parts = frozenset(BoundaryTag(p) for p in parts)
    verts = mesh.boundary_vertices(parts) if parts else np.zeros(0, dtype=np.int64)
    edges, _ = mesh.boundary_edge_array(parts) if parts else (np.zeros(0, dtype=np.int64), None)
    p2 = np.union1d(verts, mesh.n_vertices + edges).astype(np.int64)
    p1 = verts.astype(np.int64)
    return {
        "p2": p2,
        "p1": p1,
        "u": np.concatenate([p2, p2 + layout.n_p2]),
        "xi": p1 + layout.xi_offset,
        "eta": p1 + layout.eta_offset,
    }


@dataclass
class BoundaryData:
    """Dirichlet constraints (global dof -> value) plus surface loads."""

    dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    traction_load: np.ndarray | None = None
    flux_load: np.ndarray | None = None

    @classmethod
    def from_pieces(cls, *pieces: tuple[np.ndarray, np.ndarray], **kw) -> "BoundaryData":
        dofs = np.concatenate([np.asarray(d, dtype=np.int64) for d, _ in pieces]) if pieces else np.zeros(0, np.int64)
        vals = np.concatenate([np.asarray(v, dtype=float) for _, v in pieces]) if pieces else np.zeros(0)
        order = np.argsort(dofs, kind="stable")
        dofs, vals = dofs[order], vals[order]
        dup = np.flatnonzero(np.diff(dofs) == 0)
        if len(dup):
            clash = dup[vals[dup] != vals[dup + 1]]
            if len(clash):
                k = clash[0]
                raise ConfigError(
                    f"dof {dofs[k]} constrained to both {vals[k]!r} and {vals[k + 1]!r}"
                )
            keep = np.ones(len(dofs), dtype=bool)
            keep[dup + 1] = False
            dofs, vals = dofs[keep], vals[keep]
        return cls(dofs=dofs, values=vals, **kw)


def _masks(n: int, dofs: np.ndarray) -> tuple[sps.dia_matrix, sps.dia_matrix]:
    fixed = np.zeros(n)
    fixed[dofs] = 1.0
    return sps.diags(1.0 - fixed), sps.diags(fixed)


def apply_dirichlet(system, rhs: np.ndarray, bc: BoundaryData) -> tuple[CsrMatrix, np.ndarray]:
    """Symmetric elimination: identity rows/columns for constrained dofs.

    Known values are moved to the right-hand side of the free rows.
    """
    n = system.shape[0]
    if len(bc.dofs) and (bc.dofs.min() < 0 or bc.dofs.max() >= n):
        raise IndexError("Dirichlet dof outside the system")
    free, fixed = _masks(n, bc.dofs)
    g = np.zeros(n)
    g[bc.dofs] = bc.values
    mat = (free @ sps.csr_matrix(system) @ free + fixed).tocsr()
    mat.eliminate_zeros()
    mat.sort_indices()
    new_rhs = free @ (np.asarray(rhs, dtype=float) - system @ g) + g
    return mat, new_rhs


class DirichletLift:
    """Reusable form of :func:`apply_dirichlet` for a fixed matrix and dof set."""

    def __init__(self, system, dofs: np.ndarray):
        self.system = sps.csr_matrix(system)
        self.dofs = np.asarray(dofs, dtype=np.int64)
        self.n = self.system.shape[0]
        self.matrix, _ = apply_dirichlet(self.system, np.zeros(self.n), BoundaryData(self.dofs, np.zeros(len(self.dofs))))
        self._free = np.ones(self.n, dtype=bool)
        self._free[self.dofs] = False

    def rhs(self, rhs: np.ndarray, values: np.ndarray) -> np.ndarray:
        g = np.zeros(self.n)
        g[self.dofs] = values
        out = np.asarray(rhs, dtype=float) - self.system @ g
        out[~self._free] = values
        return out
