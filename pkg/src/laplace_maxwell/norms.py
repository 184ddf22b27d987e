"""Weighted norms, the energy (triple) norm, relative errors and rates.

Fields entering a norm are either a :class:`FeFunction`, an analytic field
with ``__call__`` and ``grad`` (such as :class:`ManufacturedSolution`), or
the difference ``exact - uh`` built with :func:`difference`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fe_space import EDGE_RULE, TRIANGLE_RULE, FeFunction, edge_quadrature, quadrature_points
from .mesh import Mesh
from .problem import ProblemSpec


class _Difference:
    def __init__(self, exact, uh):
        self.exact = exact
        self.uh = uh


def difference(exact, uh) -> _Difference:
    """The field ``exact - uh``; either side may be ``None``."""
    return _Difference(exact, uh)


def _split(u):
    if isinstance(u, _Difference):
        return u.exact, u.uh
    if isinstance(u, FeFunction):
        return None, u
    return u, None


def _volume_values(u, mesh: Mesh, pts, rule=TRIANGLE_RULE):
    exact, uh = _split(u)
    val = np.zeros(pts.shape)
    if exact is not None:
        val += exact(pts[..., 0], pts[..., 1])
    if uh is not None:
        sign = -1.0 if exact is not None else 1.0
        val += sign * uh.at_quadrature(rule)
    return val


def _volume_grads(u, mesh: Mesh, pts):
    exact, uh = _split(u)
    g = np.zeros(pts.shape + (2,))
    if exact is not None:
        g += exact.grad(pts[..., 0], pts[..., 1])
    if uh is not None:
        sign = -1.0 if exact is not None else 1.0
        g += sign * uh.element_gradients()[:, None]
    return g


def _edge_values(u, mesh: Mesh, edges, pts):
    exact, uh = _split(u)
    val = np.zeros(pts.shape)
    if exact is not None:
        val += exact(pts[..., 0], pts[..., 1])
    if uh is not None:
        sign = -1.0 if exact is not None else 1.0
        nodal = uh.nodal[edges]
        val += sign * np.einsum("qa,kai->kqi", EDGE_RULE.points, nodal)
    return val


@dataclass(frozen=True)
class WeightedNormSpec:
    """Volume weight ``weight(x, y)`` and/or boundary weight on some segments."""

    weight: object = None
    boundary_weight: object = None
    segments: tuple = ()


def _weight_at(weight, pts):
    if weight is None:
        return np.ones(pts.shape[:-1])
    if callable(weight):
        w = np.asarray(weight(pts[..., 0], pts[..., 1]), dtype=float)
    else:
        w = np.full(pts.shape[:-1], float(weight))
    if np.any(w < 0):
        raise ValueError("negative weight encountered")
    return np.broadcast_to(w, pts.shape[:-1])


def weighted_l2_squared(u, mesh: Mesh, weight=None, elements=None, per_element=False):
    pts, w = quadrature_points(mesh)
    vals = _volume_values(u, mesh, pts)
    dens = w * _weight_at(weight, pts) * np.einsum("kqi,kqi->kq", vals, vals)
    out = dens.sum(axis=1)
    if elements is not None:
        out = np.where(elements, out, 0.0)
    return out if per_element else float(out.sum())


def weighted_l2(u, mesh: Mesh, spec: Optional[WeightedNormSpec] = None) -> float:
    """``sqrt(int |u|^2 w) + boundary part`` combined in quadrature sum."""
    spec = spec or WeightedNormSpec()
    total = 0.0
    if spec.weight is not None or not spec.segments:
        total += weighted_l2_squared(u, mesh, spec.weight)
    if spec.segments:
        total += boundary_l2_squared(u, mesh, spec.segments, spec.boundary_weight)
    return math.sqrt(total)


def boundary_l2_squared(u, mesh: Mesh, segments, weight=None, per_edge=False):
    sel = np.isin(mesh.boundary_segments, list(segments))
    edges = mesh.boundary_edges[sel]
    if len(edges) == 0:
        return np.zeros(0) if per_edge else 0.0
    pts, w = edge_quadrature(mesh.nodes, edges)
    vals = _edge_values(u, mesh, edges, pts)
    dens = w * _weight_at(weight, pts) * np.einsum("kqi,kqi->kq", vals, vals)
    out = dens.sum(axis=1)
    return out if per_edge else float(out.sum())


def gradient_l2_squared(u, mesh: Mesh, per_element=False):
    pts, w = quadrature_points(mesh)
    g = _volume_grads(u, mesh, pts)
    out = np.einsum("kq,kqij,kqij->k", w, g, g)
    return out if per_element else float(out.sum())


def divergence_l2_squared(u, mesh: Mesh, weight=None, per_element=False):
    pts, w = quadrature_points(mesh)
    g = _volume_grads(u, mesh, pts)
    div = g[..., 0, 0] + g[..., 1, 1]
    out = np.einsum("kq,kq->k", w * _weight_at(weight, pts), div * div)
    return out if per_element else float(out.sum())


def triple_norm_terms(u, mesh: Mesh, spec: ProblemSpec) -> dict:
    """Squared contributions of the energy norm, keyed by term."""
    s, eps = spec.s, spec.eps
    terms = {
        "mass": weighted_l2_squared(u, mesh, lambda x, y: s**2 * eps(x, y)),
        "grad": gradient_l2_squared(u, mesh),
        "div": divergence_l2_squared(u, mesh, lambda x, y: eps(x, y) - 1.0),
        "boundary": 0.0,
    }
    if spec.robin_segments:
        terms["boundary"] = boundary_l2_squared(u, mesh, spec.robin_segments, s)
    return terms


def triple_norm(u, mesh: Mesh, spec: ProblemSpec) -> float:
    """``sqrt(|u|^2_{s^2 eps} + |grad u|^2 + |div u|^2_{eps-1} + |u|^2_{s, Robin})``."""
    return math.sqrt(sum(triple_norm_terms(u, mesh, spec).values()))


def relative_errors(exact, uh: FeFunction):
    """Relative L2 and H1-seminorm errors of ``uh`` against ``exact``."""
    mesh = uh.mesh
    ref1 = weighted_l2_squared(exact, mesh)
    ref2 = gradient_l2_squared(exact, mesh)
    if ref1 == 0.0 or ref2 == 0.0:
        raise ZeroDivisionError("exact solution has zero norm")
    d = difference(exact, uh)
    e1 = math.sqrt(weighted_l2_squared(d, mesh) / ref1)
    e2 = math.sqrt(gradient_l2_squared(d, mesh) / ref2)
    return e1, e2


def rate(err_h: float, err_2h: float) -> float:
    """Observed order from errors on meshes of size ``h`` and ``2h``."""
    if not (err_h > 0 and err_2h > 0):
        raise ValueError("rates need positive errors")
    return math.log(err_h / err_2h) / math.log(0.5)


def apriori_weight(eps_value, h, s):
    """Pointwise ``max(h s^2 eps, sqrt(h)(eps - 1), sqrt(h) s)``."""
    eps_value = np.asarray(eps_value, dtype=float)
    sh = np.sqrt(h)
    return np.maximum.reduce([h * s**2 * eps_value, sh * (eps_value - 1.0),
                              np.broadcast_to(sh * s, np.shape(eps_value))])


def eps_divergence_l2(uh: FeFunction, spec: ProblemSpec, region="Omega1") -> float:
    """``|| div(eps uh) ||`` over the triangles tagged ``region``.

    Uses the analytic permittivity gradient and the elementwise constant
    divergence of ``uh``.
    """
    mesh = uh.mesh
    pts, w = quadrature_points(mesh)
    eps = spec.eps(pts[..., 0], pts[..., 1])
    deps = spec.eps.grad(pts[..., 0], pts[..., 1])
    vals = uh.at_quadrature()
    div = uh.element_divergence()[:, None]
    d = np.einsum("kqi,kqi->kq", deps, vals) + eps * div
    sel = mesh.regions == region
    return math.sqrt(float(np.sum((w * d * d)[sel])))


@dataclass
class ErrorRecord:
    level: int
    nel: int
    nno: int
    e1: float
    e2: float
    q1: Optional[float] = None
    q2: Optional[float] = None
    triple_norm_error: Optional[float] = None
