"""Assembly of the stabilized P1 system and its iterative solution."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fe_space import (EDGE_RULE, TRIANGLE_RULE, DofMap, FeFunction, edge_quadrature, interpolate,
                       p1_gradients, quadrature_points)
from .mesh import Mesh
from .problem import ProblemSpec

log = logging.getLogger(__name__)


class AssemblyVariant(enum.Enum):
    """Divergence coupling used in the bilinear form.

    ``SYMMETRIC`` uses ``((eps - 1) div u, div v)``; ``PAPER_LITERAL`` uses
    ``(div(eps u), div v) - (div u, div v)``, which adds the non-symmetric
    ``(grad eps . u, div v)``.
    """

    SYMMETRIC = "sym"
    PAPER_LITERAL = "literal"


class SolverError(RuntimeError):
    def __init__(self, message, iterations=0, residual=np.nan):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class NotPositiveDefinite(SolverError):
    pass


@dataclass
class SparseSystem:
    """Reduced system over the free dofs, plus what is needed to expand back."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    mesh: Mesh
    dofmap: DofMap
    fixed_values: np.ndarray
    variant: AssemblyVariant

    @property
    def free(self):
        return self.dofmap.free

    @property
    def eliminated(self):
        return self.dofmap.constrained

    @property
    def size(self):
        return self.matrix.shape[0]

    def expand(self, x_free) -> FeFunction:
        u = np.zeros(self.dofmap.total_dofs)
        u[self.dofmap.constrained] = self.fixed_values
        u[self.free] = x_free
        return FeFunction(self.mesh, u)

    def restrict(self, u) -> np.ndarray:
        if isinstance(u, FeFunction):
            u = u.dof_values
        return np.asarray(u)[self.free]


def source_values(spec: ProblemSpec, mesh: Mesh, pts) -> np.ndarray:
    """Volume data at element quadrature points ``pts`` of shape (nel, nq, 2).

    A general source is sampled directly; a source built from an initial
    field uses ``s eps f0h`` with ``f0h`` the nodal interpolant.
    """
    if spec.f0 is None:
        return np.asarray(spec.source(pts[..., 0], pts[..., 1]), dtype=float)
    eps = spec.eps(pts[..., 0], pts[..., 1])
    return spec.s * eps[..., None] * interpolate(spec.f0, mesh).at_quadrature(TRIANGLE_RULE)


def boundary_values(spec: ProblemSpec, mesh: Mesh, segment, edges, pts) -> np.ndarray:
    """Robin data on ``edges`` of one segment at edge quadrature points ``pts``."""
    if spec.f0 is None:
        return spec.boundary_value(segment, pts[..., 0], pts[..., 1])
    nodal = interpolate(spec.f0, mesh).nodal[edges]
    return np.einsum("qa,kai->kqi", EDGE_RULE.points, nodal)


def _element_blocks(mesh: Mesh, spec: ProblemSpec, variant: AssemblyVariant):
    g = p1_gradients(mesh)
    pts, w = quadrature_points(mesh, TRIANGLE_RULE)
    lam = TRIANGLE_RULE.points
    eps = spec.eps(pts[..., 0], pts[..., 1])

    mass = spec.s**2 * np.einsum("kq,kq,qa,qb->kab", w, eps, lam, lam)
    stiff = mesh.signed_area[:, None, None] * np.einsum("kad,kbd->kab", g, g)
    scalar = mass + stiff
    eye = np.eye(2)
    # local index 2a + c: rows test (a, c), cols trial (b, d)
    blocks = np.einsum("kab,cd->kacbd", scalar, eye)
    eps_minus_one = np.einsum("kq,kq->k", w, eps - 1.0)
    blocks += eps_minus_one[:, None, None, None, None] * np.einsum("kac,kbd->kacbd", g, g)
    if variant is AssemblyVariant.PAPER_LITERAL:
        deps = spec.eps.grad(pts[..., 0], pts[..., 1])
        coupling = np.einsum("kq,kqd,qb->kbd", w, deps, lam)
        blocks += np.einsum("kac,kbd->kacbd", g, coupling)
    blocks = blocks.reshape(mesh.nel, 6, 6)

    f = source_values(spec, mesh, pts)
    loads = np.einsum("kq,kqc,qa->kac", w, f, lam).reshape(mesh.nel, 6)
    return blocks, loads


def _robin_blocks(mesh: Mesh, spec: ProblemSpec):
    robin = np.isin(mesh.boundary_segments, spec.robin_segments)
    edges = mesh.boundary_edges[robin]
    if len(edges) == 0:
        return edges, np.zeros((0, 4, 4)), np.zeros((0, 4))
    pts, w = edge_quadrature(mesh.nodes, edges, EDGE_RULE)
    lam = EDGE_RULE.points
    mass = spec.s * np.einsum("kq,qa,qb->kab", w, lam, lam)
    blocks = np.einsum("kab,cd->kacbd", mass, np.eye(2)).reshape(-1, 4, 4)
    segs = mesh.boundary_segments[robin]
    gvals = np.zeros(pts.shape)
    for seg in spec.robin_segments:
        sel = segs == seg
        if np.any(sel):
            gvals[sel] = boundary_values(spec, mesh, seg, edges[sel], pts[sel])
    loads = np.einsum("kq,kqc,qa->kac", w, gvals, lam).reshape(-1, 4)
    return edges, blocks, loads


def assemble(mesh: Mesh, spec: ProblemSpec,
             variant: AssemblyVariant = AssemblyVariant.SYMMETRIC) -> SparseSystem:
    """Assemble matrix and load, then eliminate Dirichlet dofs symmetrically."""
    variant = AssemblyVariant(variant)
    dofmap = DofMap.for_mesh(mesh, spec.dirichlet_segments)
    n = dofmap.total_dofs

    blocks, loads = _element_blocks(mesh, spec, variant)
    edofs = dofmap.element_dofs(mesh.triangles)
    edges, bblocks, bloads = _robin_blocks(mesh, spec)
    bdofs = dofmap.element_dofs(edges) if len(edges) else np.zeros((0, 4), dtype=np.int64)

    if not (np.all(np.isfinite(blocks)) and np.all(np.isfinite(loads))
            and np.all(np.isfinite(bblocks)) and np.all(np.isfinite(bloads))):
        raise FloatingPointError("non-finite entry produced during assembly")

    rows = np.concatenate([np.repeat(edofs, 6, axis=1).ravel(), np.repeat(bdofs, 4, axis=1).ravel()])
    cols = np.concatenate([np.tile(edofs, (1, 6)).ravel(), np.tile(bdofs, (1, 4)).ravel()])
    vals = np.concatenate([blocks.ravel(), bblocks.ravel()])
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    b = np.bincount(edofs.ravel(), loads.ravel(), minlength=n)
    if len(bdofs):
        b += np.bincount(bdofs.ravel(), bloads.ravel(), minlength=n)

    free, fixed = dofmap.free, dofmap.constrained
    fixed_values = np.zeros(len(fixed))
    Aff = A[free][:, free].tocsr()
    rhs = b[free]
    if len(fixed):
        rhs = rhs - A[free][:, fixed] @ fixed_values
    return SparseSystem(Aff, rhs, mesh, dofmap, fixed_values, variant)


def quadratic_form(system: SparseSystem, u) -> float:
    u = np.asarray(u, dtype=float)
    if u.shape != (system.size,):
        raise ValueError(f"vector of length {system.size} expected, got shape {u.shape}")
    return float(u @ (system.matrix @ u))


def solve_cg(system: SparseSystem, rel_tol: float = 1e-12, max_iter: int = 5000):
    """Jacobi-preconditioned conjugate gradients.

    Returns ``(FeFunction, iterations, relative_residual)``. Raises
    ``NotPositiveDefinite`` on non-positive curvature and ``SolverError``
    when ``max_iter`` is exhausted.
    """
    A, b = system.matrix, system.rhs
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return system.expand(x), 0, 0.0
    dinv = 1.0 / A.diagonal()
    r = b.copy()
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        Ap = A @ p
        curv = p @ Ap
        if curv <= 0.0:
            raise NotPositiveDefinite(f"non-positive curvature {curv:.3e} at iteration {it}",
                                      it, np.linalg.norm(r) / bnorm)
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        if res <= rel_tol:
            # recompute the true residual to guard against drift
            res = np.linalg.norm(b - A @ x) / bnorm
            if res <= rel_tol:
                log.debug("cg converged in %d iterations, residual %.3e", it, res)
                return system.expand(x), it, float(res)
            r = b - A @ x
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = np.linalg.norm(b - A @ x) / bnorm
    raise SolverError(f"cg did not converge in {max_iter} iterations (residual {res:.3e})",
                      max_iter, res)


def solve_nonsymmetric(system: SparseSystem, rel_tol: float = 1e-12, max_iter: int = 5000):
    """GMRES with Jacobi preconditioning for the non-symmetric variant."""
    A, b = system.matrix, system.rhs
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return system.expand(np.zeros_like(b)), 0, 0.0
    M = sp.diags(1.0 / A.diagonal())
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.gmres(A, b, rtol=rel_tol, atol=0.0, restart=200, maxiter=max_iter, M=M,
                         callback=cb, callback_type="pr_norm")
    res = np.linalg.norm(b - A @ x) / bnorm
    if info != 0 or res > 10 * rel_tol:
        raise SolverError(f"gmres did not converge (info={info}, residual {res:.3e})", count[0], res)
    return system.expand(x), count[0], float(res)


def solve(system: SparseSystem, rel_tol: float = 1e-12, max_iter: int = 5000):
    if system.variant is AssemblyVariant.SYMMETRIC:
        return solve_cg(system, rel_tol, max_iter)
    return solve_nonsymmetric(system, rel_tol, max_iter)
