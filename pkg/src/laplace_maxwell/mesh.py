"""Conforming triangular meshes of the unit square.

Triangles are stored counterclockwise with the *newest vertex* first, so
the refinement edge of ``(p0, p1, p2)`` is always ``(p1, p2)``. The
structured family puts the right-angle vertex first, which makes every
hypotenuse the refinement edge and keeps bisection compatible across
neighbours.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .problem import INNER_HI, INNER_LO

MAX_LEVEL = 12

OMEGA1, OMEGA2, CUT = "Omega1", "Omega2", "Cut"
REGION_CODES = {OMEGA1: 1, OMEGA2: 2, CUT: 3}


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangulation; derived data is computed on first access."""

    nodes: np.ndarray
    triangles: np.ndarray
    level: int = 0
    history: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "nodes", _readonly(np.asarray(self.nodes, dtype=float)))
        object.__setattr__(self, "triangles", _readonly(np.asarray(self.triangles, dtype=np.int64)))
        if len(self.triangles) == 0:
            raise ValueError("mesh has no triangles")

    @property
    def nel(self) -> int:
        return len(self.triangles)

    @property
    def nno(self) -> int:
        return len(self.nodes)

    @cached_property
    def vertices(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape (nel, 3, 2)."""
        return self.nodes[self.triangles]

    @cached_property
    def signed_area(self) -> np.ndarray:
        v = self.vertices
        d1 = v[:, 1] - v[:, 0]
        d2 = v[:, 2] - v[:, 0]
        return _readonly(0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]))

    @property
    def area(self) -> np.ndarray:
        return self.signed_area

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        """Lengths of the edges opposite each local vertex, shape (nel, 3)."""
        v = self.vertices
        return _readonly(np.stack([np.linalg.norm(v[:, (i + 2) % 3] - v[:, (i + 1) % 3], axis=1)
                                   for i in range(3)], axis=1))

    @cached_property
    def h(self) -> np.ndarray:
        return _readonly(self.edge_lengths.max(axis=1))

    @cached_property
    def centroids(self) -> np.ndarray:
        return _readonly(self.vertices.mean(axis=1))

    @cached_property
    def regions(self) -> np.ndarray:
        """Region tag per triangle from its overlap with the inner square."""
        tags = []
        for tri, a in zip(self.vertices, self.signed_area):
            inner = _clipped_area(tri)
            if inner >= a * (1 - 1e-12):
                tags.append(OMEGA1)
            elif inner <= a * 1e-12:
                tags.append(OMEGA2)
            else:
                tags.append(CUT)
        return np.array(tags)

    @cached_property
    def _edge_table(self):
        local = np.array([[1, 2], [2, 0], [0, 1]])
        e = np.sort(self.triangles[:, local], axis=2).reshape(-1, 2)
        edges, inverse, counts = np.unique(e, axis=0, return_inverse=True, return_counts=True)
        return edges, inverse.reshape(-1, 3), counts

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted node pairs."""
        return self._edge_table[0]

    @property
    def tri_edges(self) -> np.ndarray:
        """Global edge id of the edge opposite each local vertex, shape (nel, 3)."""
        return self._edge_table[1]

    @cached_property
    def edge_triangles(self) -> np.ndarray:
        """Incident triangles per edge, shape (nedges, 2); -1 marks a boundary side."""
        edges, te, _ = self._edge_table
        out = -np.ones((len(edges), 2), dtype=np.int64)
        for k in range(3):
            for t, e in enumerate(te[:, k]):
                slot = 0 if out[e, 0] < 0 else 1
                out[e, slot] = t
        return _readonly(out)

    @cached_property
    def interior_edge_map(self) -> dict:
        """Interior edge (sorted node pair) -> its two incident triangles."""
        et = self.edge_triangles
        return {tuple(e): (int(a), int(b)) for e, (a, b) in zip(self.edges, et) if b >= 0}

    @cached_property
    def _boundary(self):
        et = self.edge_triangles
        idx = np.flatnonzero(et[:, 1] < 0)
        pairs = []
        tris = []
        for e in idx:
            t = et[e, 0]
            tri = self.triangles[t]
            # orient counterclockwise as seen from the owning triangle
            a, b = self.edges[e]
            ia = int(np.flatnonzero(tri == a)[0])
            ib = int(np.flatnonzero(tri == b)[0])
            pairs.append((a, b) if (ib - ia) % 3 == 1 else (b, a))
            tris.append(t)
        pairs = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        mid = self.nodes[pairs].mean(axis=1)
        seg = np.where(np.abs(mid[:, 1] - 1.0) < 1e-12, "Gamma1",
                       np.where(np.abs(mid[:, 1]) < 1e-12, "Gamma2", "Gamma3"))
        return _readonly(pairs), seg, _readonly(np.array(tris, dtype=np.int64))

    @property
    def boundary_edges(self) -> np.ndarray:
        """Boundary edges, oriented counterclockwise around the domain."""
        return self._boundary[0]

    @property
    def boundary_segments(self) -> np.ndarray:
        return self._boundary[1]

    @property
    def boundary_triangles(self) -> np.ndarray:
        return self._boundary[2]

    @cached_property
    def boundary_lengths(self) -> np.ndarray:
        p = self.nodes[self.boundary_edges]
        return _readonly(np.linalg.norm(p[:, 1] - p[:, 0], axis=1))

    def boundary_nodes(self, segments=None) -> np.ndarray:
        """Nodes lying on the given boundary segments (all of them by default)."""
        mask = np.ones(len(self.boundary_edges), dtype=bool)
        if segments is not None:
            mask = np.isin(self.boundary_segments, list(segments))
        return np.unique(self.boundary_edges[mask])

    def min_angles(self) -> np.ndarray:
        """Smallest interior angle per triangle, in degrees."""
        v = self.vertices
        out = np.full(self.nel, np.inf)
        for i in range(3):
            a = v[:, (i + 1) % 3] - v[:, i]
            b = v[:, (i + 2) % 3] - v[:, i]
            cosang = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            out = np.minimum(out, np.degrees(np.arccos(np.clip(cosang, -1, 1))))
        return out

    def check(self):
        """Raise if the mesh is not a valid conforming cover of the unit square."""
        if np.any(self.nodes < -1e-14) or np.any(self.nodes > 1 + 1e-14):
            raise ValueError("node outside the unit square")
        if np.any(self.signed_area <= 0):
            raise ValueError("non-positive triangle area")
        counts = self._edge_table[2]
        if np.any(counts > 2):
            raise ValueError("edge shared by more than two triangles")
        if abs(self.signed_area.sum() - 1.0) > 1e-12:
            raise ValueError("triangle areas do not sum to 1")
        if abs(self.boundary_lengths.sum() - 4.0) > 1e-12:
            raise ValueError("boundary edges do not cover the boundary; hanging node?")
        mid = self.nodes[self.boundary_edges].mean(axis=1)
        on_bnd = (np.abs(mid) < 1e-12) | (np.abs(mid - 1) < 1e-12)
        if not np.all(on_bnd.any(axis=1)):
            raise ValueError("interior edge with a single incident triangle (non-conforming)")
        return self


def _clipped_area(tri):
    """Area of a triangle clipped to the inner square (Sutherland-Hodgman)."""
    poly = [tuple(p) for p in tri]
    for axis, bound, keep_less in ((0, INNER_LO, False), (0, INNER_HI, True),
                                   (1, INNER_LO, False), (1, INNER_HI, True)):
        if not poly:
            return 0.0
        inside = (lambda p: p[axis] <= bound) if keep_less else (lambda p: p[axis] >= bound)
        out = []
        for i, cur in enumerate(poly):
            prev = poly[i - 1]
            if inside(cur):
                if not inside(prev):
                    out.append(_cross_point(prev, cur, axis, bound))
                out.append(cur)
            elif inside(prev):
                out.append(_cross_point(prev, cur, axis, bound))
        poly = out
    if len(poly) < 3:
        return 0.0
    p = np.array(poly)
    return 0.5 * abs(np.dot(p[:, 0], np.roll(p[:, 1], -1)) - np.dot(p[:, 1], np.roll(p[:, 0], -1)))


def _cross_point(p, q, axis, bound):
    t = (bound - p[axis]) / (q[axis] - p[axis])
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def build_structured(level: int) -> Mesh:
    """Two right triangles per cell of a ``2^l x 2^l`` grid, diagonal (i,j)-(i+1,j+1)."""
    if int(level) != level or not 1 <= level <= MAX_LEVEL:
        raise ValueError(f"level must be an integer in [1, {MAX_LEVEL}], got {level}")
    n = 2**level
    t = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(t, t)
    nodes = np.column_stack([xx.ravel(), yy.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    ll = j * (n + 1) + i
    lr, ul, ur = ll + 1, ll + n + 1, ll + n + 2
    lower = np.column_stack([lr, ur, ll])
    upper = np.column_stack([ul, ll, ur])
    tris = np.empty((2 * n * n, 3), dtype=np.int64)
    tris[0::2] = lower
    tris[1::2] = upper
    return Mesh(nodes, tris, level=level)


class _Midpoints:
    """Edge -> midpoint node id, appending new nodes as needed."""

    def __init__(self, nodes):
        self.nodes = [tuple(p) for p in nodes]
        self.ids = {}

    def __call__(self, a, b):
        key = (a, b) if a < b else (b, a)
        k = self.ids.get(key)
        if k is None:
            pa, pb = self.nodes[a], self.nodes[b]
            k = len(self.nodes)
            self.nodes.append((0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])))
            self.ids[key] = k
        return k


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: each triangle into four similar children."""
    mid = _Midpoints(mesh.nodes)
    out = []
    for p0, p1, p2 in mesh.triangles.tolist():
        m12, m20, m01 = mid(p1, p2), mid(p2, p0), mid(p0, p1)
        out += [(p0, m01, m20), (m01, p1, m12), (m20, m12, p2), (m12, m20, m01)]
    return Mesh(np.array(mid.nodes), np.array(out), level=mesh.level + 1,
                history=mesh.history + ("uniform",))


def refine_marked(mesh: Mesh, marks) -> Mesh:
    """Newest-vertex bisection of the marked triangles plus conformity closure."""
    marks = {int(k) for k in marks}
    if not marks:
        return mesh
    if min(marks) < 0 or max(marks) >= mesh.nel:
        raise ValueError("marked triangle id out of range")
    tris = mesh.triangles.tolist()

    def key(a, b):
        return (a, b) if a < b else (b, a)

    def ref_edge(t):
        return key(t[1], t[2])

    edge_tris = {}
    for k, (p0, p1, p2) in enumerate(tris):
        for a, b in ((p1, p2), (p2, p0), (p0, p1)):
            edge_tris.setdefault(key(a, b), []).append(k)

    # closure: a triangle with any marked edge must also bisect its refinement edge
    marked_edges = set()
    stack = [ref_edge(tris[k]) for k in sorted(marks)]
    while stack:
        e = stack.pop()
        if e in marked_edges:
            continue
        marked_edges.add(e)
        for k in edge_tris[e]:
            r = ref_edge(tris[k])
            if r not in marked_edges:
                stack.append(r)

    mid = _Midpoints(mesh.nodes)
    out = []

    def bisect(t):
        p0, p1, p2 = t
        if key(p1, p2) not in marked_edges:
            out.append(t)
            return
        m = mid(p1, p2)
        for child in ((m, p0, p1), (m, p2, p0)):
            # a child's refinement edge is an edge of the parent
            if key(child[1], child[2]) in marked_edges:
                c0, c1, c2 = child
                mm = mid(c1, c2)
                out.extend([(mm, c0, c1), (mm, c2, c0)])
            else:
                out.append(child)

    for t in tris:
        bisect(t)
    return Mesh(np.array(mid.nodes), np.array(out), level=mesh.level,
                history=mesh.history + ("bisect",))


def mesh_size(mesh: Mesh):
    """Return ``(h_global, h_K)`` with ``h_K`` the longest edge of each triangle."""
    hk = mesh.h
    return float(hk.max()), hk
