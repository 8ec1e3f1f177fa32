"""Structured triangulations of axis-aligned rectangles.

Each grid cell is split along its "/" diagonal, from the lower-left to the
upper-right corner, so both triangles are counterclockwise.  Boundary edges
carry one of four side tags; corner vertices carry the tags of both incident
sides.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, MeshError


class BoundaryTag(enum.IntEnum):
    """Sides of the rectangle (a, b) x (c, d)."""

    GAMMA1 = 1  # x = a
    GAMMA2 = 2  # x = b
    GAMMA3 = 3  # y = d
    GAMMA4 = 4  # y = c

    @property
    def outward_normal(self) -> np.ndarray:
        return _NORMALS[self]


_NORMALS = {
    BoundaryTag.GAMMA1: np.array([-1.0, 0.0]),
    BoundaryTag.GAMMA2: np.array([1.0, 0.0]),
    BoundaryTag.GAMMA3: np.array([0.0, 1.0]),
    BoundaryTag.GAMMA4: np.array([0.0, -1.0]),
}

ALL_SIDES = frozenset(BoundaryTag)


@dataclass(frozen=True)
class AffineMapData:
    """Affine map x = x0 + J @ xhat from the reference triangle."""

    origin: np.ndarray
    jacobian: np.ndarray
    det: float
    inv_t: np.ndarray


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3), counterclockwise
    edges: np.ndarray  # (ne, 2), sorted vertex pairs
    triangle_edges: np.ndarray  # (nt, 3); local edge k is opposite local vertex k
    boundary_edges: dict[int, BoundaryTag]
    h: float
    bounds: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)
    vertex_tags: dict[int, frozenset[BoundaryTag]] = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def areas(self) -> np.ndarray:
        """Signed triangle areas (positive for a valid mesh)."""
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def jacobians(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorised affine data: (J (nt,2,2), det (nt,), J^-T (nt,2,2))."""
        p = self.vertices[self.triangles]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        if np.any(det <= 0.0):
            bad = int(np.argmin(det))
            raise MeshError(f"triangle {bad} is degenerate or inverted (det={det[bad]:g})")
        inv_t = np.empty_like(jac)
        inv_t[:, 0, 0] = jac[:, 1, 1] / det
        inv_t[:, 0, 1] = -jac[:, 1, 0] / det
        inv_t[:, 1, 0] = -jac[:, 0, 1] / det
        inv_t[:, 1, 1] = jac[:, 0, 0] / det
        return jac, det, inv_t

    def boundary_edge_array(self, parts=ALL_SIDES) -> tuple[np.ndarray, np.ndarray]:
        """Edge indices and tags of boundary edges lying on ``parts``."""
        items = sorted((e, t) for e, t in self.boundary_edges.items() if t in parts)
        if not items:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        idx, tags = zip(*items)
        return np.asarray(idx, dtype=np.int64), np.asarray(tags, dtype=np.int64)

    def boundary_vertices(self, parts=ALL_SIDES) -> np.ndarray:
        parts = frozenset(parts)
        return np.array(
            sorted(v for v, tags in self.vertex_tags.items() if tags & parts), dtype=np.int64
        )

    def dump(self, path: str | Path) -> None:
        """Write the plain-text debug format (``v``, ``t`` and ``b`` records)."""
        lines = [f"# vertices {self.n_vertices}"]
        lines += [f"v {x:.17g} {y:.17g}" for x, y in self.vertices]
        lines.append(f"# triangles {self.n_triangles}")
        lines += [f"t {i} {j} {k}" for i, j, k in self.triangles]
        lines.append(f"# boundary {len(self.boundary_edges)}")
        for e, tag in sorted(self.boundary_edges.items()):
            i, j = self.edges[e]
            lines.append(f"b {i} {j} {tag.name}")
        Path(path).write_text("\n".join(lines) + "\n")


def affine_map(mesh: TriMesh, t: int) -> AffineMapData:
    """Affine map of the reference triangle {(0,0),(1,0),(0,1)} onto triangle ``t``."""
    if not 0 <= t < mesh.n_triangles:
        raise IndexError(f"triangle index {t} out of range")
    p = mesh.vertices[mesh.triangles[t]]
    jac = np.column_stack([p[1] - p[0], p[2] - p[0]])
    det = float(np.linalg.det(jac))
    if det <= 0.0:
        raise MeshError(f"triangle {t} is degenerate or inverted (det={det:g})")
    return AffineMapData(origin=p[0].copy(), jacobian=jac, det=det, inv_t=np.linalg.inv(jac).T)


def build_rectangle_mesh(n: int, a: float = 0.0, b: float = 1.0, c: float = 0.0,
                         d: float = 1.0) -> TriMesh:
    """Uniform n x n "/"-split triangulation of (a, b) x (c, d)."""
    if n < 1:
        raise ConfigError("n must be a positive integer")
    if not (b > a and d > c):
        raise ConfigError("empty rectangle")
    xs = np.linspace(a, b, n + 1)
    ys = np.linspace(c, d, n + 1)
    X, Y = np.meshgrid(xs, ys)  # row j is y = ys[j]
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    local = np.stack(
        [triangles[:, [1, 2]], triangles[:, [2, 0]], triangles[:, [0, 1]]], axis=1
    ).reshape(-1, 2)
    local.sort(axis=1)
    edges, inverse, counts = np.unique(local, axis=0, return_inverse=True, return_counts=True)
    triangle_edges = inverse.reshape(-1, 3)

    tol = 1e-12 * max(b - a, d - c)
    boundary_edges: dict[int, BoundaryTag] = {}
    vertex_tags: dict[int, set[BoundaryTag]] = {}
    for e in np.flatnonzero(counts == 1):
        mid = vertices[edges[e]].mean(axis=0)
        if abs(mid[0] - a) < tol:
            tag = BoundaryTag.GAMMA1
        elif abs(mid[0] - b) < tol:
            tag = BoundaryTag.GAMMA2
        elif abs(mid[1] - d) < tol:
            tag = BoundaryTag.GAMMA3
        elif abs(mid[1] - c) < tol:
            tag = BoundaryTag.GAMMA4
        else:  # pragma: no cover - cannot happen on a structured rectangle
            raise MeshError(f"boundary edge {e} is not on the rectangle sides")
        boundary_edges[int(e)] = tag
        for v in edges[e]:
            vertex_tags.setdefault(int(v), set()).add(tag)

    hx = (b - a) / n
    hy = (d - c) / n
    return TriMesh(
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        triangle_edges=triangle_edges,
        boundary_edges=boundary_edges,
        h=float(np.hypot(hx, hy)),
        bounds=(a, b, c, d),
        vertex_tags={v: frozenset(t) for v, t in vertex_tags.items()},
    )


def build_unit_square_mesh(n: int) -> TriMesh:
    """Uniform mesh of (0,1)^2 with h = sqrt(2)/n."""
    return build_rectangle_mesh(n)
