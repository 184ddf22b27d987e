"""Residual a posteriori indicators, bulk marking and the adaptive loop."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .assembly import (AssemblyVariant, SolverError, assemble, boundary_values, solve,
                       source_values)
from .fe_space import EDGE_RULE, FeFunction, edge_quadrature, interpolate, quadrature_points
from .mesh import OMEGA1, Mesh, build_structured, refine_marked
from .norms import boundary_l2_squared, difference, triple_norm, weighted_l2_squared
from .problem import ProblemSpec, segment_normal

log = logging.getLogger(__name__)


@dataclass
class EstimatorConfig:
    alpha: float = 1.0
    beta: float = 1.0
    include_edge_jumps: bool = False
    theta: float = 0.5
    tol: float = math.inf
    max_iter: int = 10
    max_dofs: int = 200_000
    initial_level: int = 2
    variant: AssemblyVariant = AssemblyVariant.PAPER_LITERAL

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if not self.tol >= 0:
            raise ValueError("tol must be non-negative")
        self.variant = AssemblyVariant(self.variant)


@dataclass
class IndicatorField:
    interior: np.ndarray
    boundary: np.ndarray
    boundary_triangles: np.ndarray
    data_term: float = 0.0

    @property
    def eta_interior(self) -> float:
        return math.sqrt(float(np.sum(self.interior**2)))

    @property
    def eta_boundary(self) -> float:
        return math.sqrt(float(np.sum(self.boundary**2)))

    @property
    def global_estimate(self) -> float:
        return global_estimate(self)

    def per_element(self) -> np.ndarray:
        """Squared indicators with boundary edges attributed to their triangle."""
        out = self.interior**2
        if len(self.boundary):
            out = out + np.bincount(self.boundary_triangles, self.boundary**2, minlength=len(out))
        return out


def _residual_at_quadrature(uh: FeFunction, spec: ProblemSpec):
    mesh = uh.mesh
    pts, w = quadrature_points(mesh)
    x, y = pts[..., 0], pts[..., 1]
    eps = spec.eps(x, y)
    deps = spec.eps.grad(x, y)
    heps = spec.eps.hessian(x, y)
    u = uh.at_quadrature()
    g = uh.element_gradients()[:, None]  # [k, 1, i, j]
    div = uh.element_divergence()[:, None, None]
    # grad div((eps - 1) u) for elementwise linear u
    gdiv = (np.einsum("kqij,kqi->kqj", heps, u)
            + np.einsum("kqi,kqij->kqj", deps, np.broadcast_to(g, u.shape + (2,)))
            + deps * div)
    r = source_values(spec, mesh, pts) - spec.s**2 * eps[..., None] * u + gdiv
    return r, w


def interior_residual(uh: FeFunction, spec: ProblemSpec, cfg: Optional[EstimatorConfig] = None):
    """Per-element ``h_K || R(uh) ||_K``, optionally with interior edge jumps."""
    cfg = cfg or EstimatorConfig()
    mesh = uh.mesh
    r, w = _residual_at_quadrature(uh, spec)
    eta2 = mesh.h**2 * np.einsum("kq,kqi,kqi->k", w, r, r)
    if cfg.include_edge_jumps:
        eta2 = eta2 + _jump_terms(uh, spec)
    return np.sqrt(eta2)


def _jump_terms(uh: FeFunction, spec: ProblemSpec):
    """``1/2 h_K || [d_nu uh + nu (eps - 1) div uh] ||^2_e`` summed per element."""
    mesh = uh.mesh
    et = mesh.edge_triangles
    inner = np.flatnonzero(et[:, 1] >= 0)
    edges = mesh.edges[inner]
    k1, k2 = et[inner, 0], et[inner, 1]
    p = mesh.nodes[edges]
    t = p[:, 1] - p[:, 0]
    nu = np.column_stack([t[:, 1], -t[:, 0]]) / np.linalg.norm(t, axis=1)[:, None]
    pts, w = edge_quadrature(mesh.nodes, edges)
    eps = spec.eps(pts[..., 0], pts[..., 1])
    grads = uh.element_gradients()
    div = uh.element_divergence()
    dgrad = grads[k1] - grads[k2]
    ddiv = div[k1] - div[k2]
    jump = (np.einsum("eij,ej->ei", dgrad, nu)[:, None, :]
            + nu[:, None, :] * ((eps - 1.0) * ddiv[:, None])[..., None])
    je = np.einsum("eq,eqi,eqi->e", w, jump, jump)
    out = np.zeros(mesh.nel)
    np.add.at(out, k1, 0.5 * mesh.h[k1] * je)
    np.add.at(out, k2, 0.5 * mesh.h[k2] * je)
    return out


def boundary_residual(uh: FeFunction, spec: ProblemSpec, cfg: Optional[EstimatorConfig] = None):
    """Per-edge ``|| d_nu uh + s uh - g ||_{1/s, e}`` over the absorbing segments.

    The ``h^-alpha`` inside the boundary residual cancels against the
    ``h^alpha`` weight of the estimate, so ``alpha`` does not enter.
    Returns ``(eta_e, owning_triangles)``.
    """
    mesh = uh.mesh
    sel = np.isin(mesh.boundary_segments, spec.robin_segments)
    if not np.any(sel):
        return np.zeros(0), np.zeros(0, dtype=np.int64)
    edges = mesh.boundary_edges[sel]
    segs = mesh.boundary_segments[sel]
    tris = mesh.boundary_triangles[sel]
    pts, w = edge_quadrature(mesh.nodes, edges)
    nodal = uh.nodal[edges]
    u = np.einsum("qa,kai->kqi", EDGE_RULE.points, nodal)
    grads = uh.element_gradients()[tris]
    r = np.empty_like(u)
    for seg in spec.robin_segments:
        s_ = segs == seg
        if not np.any(s_):
            continue
        nu = segment_normal(seg, pts[s_, :, 0], pts[s_, :, 1])
        dnu = np.einsum("kij,kqj->kqi", grads[s_], nu)
        g = boundary_values(spec, mesh, seg, edges[s_], pts[s_])
        r[s_] = dnu + spec.s * u[s_] - g
    eta2 = np.einsum("kq,kqi,kqi->k", w / spec.s, r, r)
    return np.sqrt(eta2), tris


def data_term(spec: ProblemSpec, mesh: Mesh) -> float:
    """Data approximation ``|| f0 - f0h ||`` in the three weighted norms.

    Only present when the source is given through an initial field ``f0``
    and the scheme uses its interpolant; a general source enters the load
    by quadrature and contributes no data error.
    """
    if spec.f0 is None:
        return 0.0
    d = difference(spec.f0, interpolate(spec.f0, mesh))
    total = math.sqrt(weighted_l2_squared(d, mesh, spec.eps))
    if spec.robin_segments:
        s = spec.s
        total += math.sqrt(boundary_l2_squared(d, mesh, spec.robin_segments, 1.0 / s))
        total += math.sqrt(boundary_l2_squared(
            d, mesh, spec.robin_segments, lambda x, y: (spec.eps(x, y) - 1.0) ** 2 / s))
    return total


def indicators(uh: FeFunction, spec: ProblemSpec, cfg: Optional[EstimatorConfig] = None) -> IndicatorField:
    cfg = cfg or EstimatorConfig()
    eta_k = interior_residual(uh, spec, cfg)
    eta_e, tris = boundary_residual(uh, spec, cfg)
    return IndicatorField(eta_k, eta_e, tris, data_term(spec, uh.mesh))


def global_estimate(ind: IndicatorField, cfg: Optional[EstimatorConfig] = None) -> float:
    """``||h R|| + ||h^a R_G||_{1/s} + data``, with the unknown constant set to 1."""
    return ind.eta_interior + ind.eta_boundary + ind.data_term


def global_interior_residual(uh: FeFunction, spec: ProblemSpec) -> float:
    """``|| h R(uh) ||`` as a single quadrature sum over all points."""
    r, w = _residual_at_quadrature(uh, spec)
    hq = np.repeat(uh.mesh.h, w.shape[1])
    dens = (hq**2) * w.ravel() * np.sum(r.reshape(-1, 2) ** 2, axis=1)
    return math.sqrt(math.fsum(dens))


def effectivity(estimate: float, true_error: float) -> float:
    if not true_error > 0:
        raise ZeroDivisionError("effectivity needs a positive true error")
    if estimate == 0.0:
        log.warning("estimate vanished while the error is %.3e: estimator failure", true_error)
    return estimate / true_error


def mark(ind, theta: float) -> set:
    """Doerfler marking: the shortest prefix of elements sorted by indicator
    (ties by ascending id) carrying ``theta`` of the total squared mass."""
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    eta2 = ind.per_element() if isinstance(ind, IndicatorField) else np.asarray(ind, dtype=float) ** 2
    if theta == 1:
        return set(np.flatnonzero(eta2 > 0).tolist())
    order = np.argsort(-eta2, kind="stable")
    cum = np.cumsum(eta2[order])
    total = cum[-1]
    if total == 0:
        return set()
    k = int(np.searchsorted(cum, theta * total * (1 - 1e-12), side="left")) + 1
    return set(order[:k].tolist())


@dataclass
class AdaptStep:
    iteration: int
    nel: int
    ndof: int
    eta_interior: float
    eta_boundary: float
    data_term: float
    estimate: float
    cg_iterations: int
    true_error: Optional[float] = None
    effectivity: Optional[float] = None
    n_omega1: int = 0
    n_omega2: int = 0


@dataclass
class AdaptHistory:
    steps: List[AdaptStep] = field(default_factory=list)
    meshes: List[Mesh] = field(default_factory=list)
    solutions: List[FeFunction] = field(default_factory=list)
    stop_reason: str = ""
    error: Optional[str] = None

    @property
    def refinements(self) -> int:
        return max(len(self.steps) - 1, 0)

    def __len__(self):
        return len(self.steps)


def solve_and_estimate(mesh: Mesh, spec: ProblemSpec, cfg: EstimatorConfig):
    """One pass of steps II-III: solve, then compute residual indicators."""
    system = assemble(mesh, spec, cfg.variant)
    uh, iters, _ = solve(system)
    return uh, iters, indicators(uh, spec, cfg)


def adaptive_loop(spec: ProblemSpec, cfg: EstimatorConfig, mesh: Optional[Mesh] = None) -> AdaptHistory:
    """Solve, estimate, stop if the estimate is below ``tol``, else mark and bisect."""
    mesh = mesh if mesh is not None else build_structured(cfg.initial_level)
    hist = AdaptHistory()
    it = 0
    while True:
        try:
            uh, iters, ind = solve_and_estimate(mesh, spec, cfg)
        except SolverError as exc:
            hist.stop_reason = "solver failure"
            hist.error = str(exc)
            log.error("adaptive loop aborted at iteration %d: %s", it, exc)
            return hist
        est = global_estimate(ind, cfg)
        step = AdaptStep(it, mesh.nel, 2 * mesh.nno, ind.eta_interior, ind.eta_boundary,
                         ind.data_term, est, iters,
                         n_omega1=int(np.sum(mesh.regions == OMEGA1)),
                         n_omega2=int(np.sum(mesh.regions != OMEGA1)))
        if spec.exact is not None:
            step.true_error = triple_norm(difference(spec.exact, uh), mesh, spec)
            step.effectivity = est / step.true_error if step.true_error > 0 else None
        hist.steps.append(step)
        hist.meshes.append(mesh)
        hist.solutions.append(uh)
        log.info("iter %d: nel=%d est=%.4e", it, mesh.nel, est)
        if est <= cfg.tol:
            hist.stop_reason = "tolerance reached"
            return hist
        if it >= cfg.max_iter:
            hist.stop_reason = "max iterations"
            return hist
        new = refine_marked(mesh, mark(ind, cfg.theta))
        if 2 * new.nno > cfg.max_dofs:
            hist.stop_reason = "dof budget"
            return hist
        mesh = new
        it += 1
