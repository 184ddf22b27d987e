"""Vector-valued P1 elements: quadrature, dof numbering, evaluation.

Dofs are interleaved by node, ``dof(node, c) = 2 * node + c``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mesh import Mesh


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points with weights summing to the reference measure."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def npoints(self) -> int:
        return len(self.weights)


def _triangle_rule_deg4() -> QuadratureRule:
    r = np.sqrt
    a1 = (8 - r(10) + r(38 - 44 * r(2 / 5))) / 18
    a2 = (8 - r(10) - r(38 - 44 * r(2 / 5))) / 18
    w1 = (620 + r(213125 - 53320 * r(10))) / 3720
    w2 = (620 - r(213125 - 53320 * r(10))) / 3720
    pts = []
    for a in (a1, a2):
        b = 1 - 2 * a
        pts += [(b, a, a), (a, b, a), (a, a, b)]
    # reference triangle area is 1/2
    w = 0.5 * np.array([w1] * 3 + [w2] * 3)
    return QuadratureRule(np.array(pts), w)


def _edge_rule_deg5() -> QuadratureRule:
    g = np.sqrt(3 / 5)
    t = 0.5 * (1 + np.array([-g, 0.0, g]))
    return QuadratureRule(np.column_stack([1 - t, t]), np.array([5, 8, 5]) / 18)


TRIANGLE_RULE = _triangle_rule_deg4()
EDGE_RULE = _edge_rule_deg5()


def p1_gradients(mesh: Mesh) -> np.ndarray:
    """Gradients of the barycentric functions, shape (nel, 3, 2)."""
    v = mesh.vertices
    two_area = 2.0 * mesh.signed_area
    g = np.empty((mesh.nel, 3, 2))
    for i in range(3):
        a = v[:, (i + 1) % 3]
        b = v[:, (i + 2) % 3]
        g[:, i, 0] = (a[:, 1] - b[:, 1]) / two_area
        g[:, i, 1] = (b[:, 0] - a[:, 0]) / two_area
    return g


def quadrature_points(mesh: Mesh, rule: QuadratureRule = TRIANGLE_RULE):
    """Physical points (nel, nq, 2) and weights (nel, nq) including the Jacobian."""
    pts = np.einsum("qa,kad->kqd", rule.points, mesh.vertices)
    w = rule.weights[None, :] * (2.0 * mesh.signed_area)[:, None]
    return pts, w


def edge_quadrature(nodes: np.ndarray, edges: np.ndarray, rule: QuadratureRule = EDGE_RULE):
    p = nodes[edges]
    pts = np.einsum("qa,kad->kqd", rule.points, p)
    length = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
    return pts, rule.weights[None, :] * length[:, None]


@dataclass(frozen=True)
class DofMap:
    nno: int
    constrained: np.ndarray = np.zeros(0, dtype=np.int64)

    @property
    def total_dofs(self) -> int:
        return 2 * self.nno

    def dof(self, node, component):
        return 2 * np.asarray(node) + component

    @cached_property
    def free(self) -> np.ndarray:
        mask = np.ones(self.total_dofs, dtype=bool)
        mask[self.constrained] = False
        return np.flatnonzero(mask)

    def element_dofs(self, triangles: np.ndarray) -> np.ndarray:
        """Local dof order (a, c) -> 2a + c, shape (ncells, 2 * nverts)."""
        return (2 * triangles[:, :, None] + np.arange(2)).reshape(len(triangles), -1)

    @classmethod
    def for_mesh(cls, mesh: Mesh, dirichlet_segments=()):
        constrained = np.zeros(0, dtype=np.int64)
        if dirichlet_segments:
            nodes = mesh.boundary_nodes(dirichlet_segments)
            constrained = np.sort(np.concatenate([2 * nodes, 2 * nodes + 1]))
        return cls(mesh.nno, constrained)


class FeFunction:
    """A P1 vector field given by its nodal values."""

    def __init__(self, mesh: Mesh, dof_values):
        dof_values = np.asarray(dof_values, dtype=float)
        if dof_values.shape != (2 * mesh.nno,):
            raise ValueError(f"expected {2 * mesh.nno} dof values, got shape {dof_values.shape}")
        self.mesh = mesh
        self.dof_values = dof_values

    @property
    def nodal(self) -> np.ndarray:
        return self.dof_values.reshape(-1, 2)

    @cached_property
    def _grads(self) -> np.ndarray:
        # [k, i, j] = d u_i / d x_j on element k
        g = p1_gradients(self.mesh)
        u = self.nodal[self.mesh.triangles]
        return np.einsum("kai,kaj->kij", u, g)

    def _check(self, k):
        k = np.asarray(k)
        if np.any(k < 0) or np.any(k >= self.mesh.nel):
            raise IndexError("triangle id out of range")
        return k

    def eval(self, k, bary):
        """Value at barycentric point(s) of triangle(s) ``k``."""
        k = self._check(k)
        bary = np.asarray(bary, dtype=float)
        u = self.nodal[self.mesh.triangles[k]]
        return np.einsum("...a,...ai->...i", bary, u)

    def grad_eval(self, k, bary=None):
        return self._grads[self._check(k)]

    def div_eval(self, k, bary=None):
        g = self.grad_eval(k)
        return np.trace(g, axis1=-2, axis2=-1)

    def element_gradients(self) -> np.ndarray:
        return self._grads

    def element_divergence(self) -> np.ndarray:
        return np.trace(self._grads, axis1=1, axis2=2)

    def at_quadrature(self, rule: QuadratureRule = TRIANGLE_RULE) -> np.ndarray:
        """Values at all quadrature points, shape (nel, nq, 2)."""
        u = self.nodal[self.mesh.triangles]
        return np.einsum("qa,kai->kqi", rule.points, u)

    def magnitude(self) -> np.ndarray:
        return np.linalg.norm(self.nodal, axis=1)

    def __mul__(self, a):
        return FeFunction(self.mesh, a * self.dof_values)

    __rmul__ = __mul__


def interpolate(f, mesh: Mesh) -> FeFunction:
    """Nodal interpolant of a vector field ``f(x, y) -> (..., 2)``."""
    vals = np.asarray(f(mesh.nodes[:, 0], mesh.nodes[:, 1]), dtype=float)
    if vals.shape != (mesh.nno, 2):
        vals = np.broadcast_to(vals, (mesh.nno, 2))
    if not np.all(np.isfinite(vals)):
        raise ValueError("interpolated field is not finite at some node")
    return FeFunction(mesh, vals.ravel().copy())
