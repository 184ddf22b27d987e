"""Problem data for the Laplace-domain Maxwell system on the unit square.

The permittivity is

    eps(x, y) = 1 + sin^m(pi(2x - 0.5)) * sin^m(pi(2y - 0.5))   on [0.25, 0.75]^2
    eps(x, y) = 1                                                elsewhere

and the manufactured field is ``E = curl(psi) / eps`` with
``psi = sin^2(pi x) sin^2(pi y) / s^3``, so that ``div(eps E) = 0`` holds
identically. All functions accept numpy arrays and broadcast.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

INNER_LO = 0.25
INNER_HI = 0.75

SEGMENTS = ("Gamma1", "Gamma2", "Gamma3")
BC_MODES = ("dirichlet0", "neumann0", "robin_absorbing")

# outward unit normals of the segments; Gamma3 is resolved per point
_NORMALS = {"Gamma1": (0.0, 1.0), "Gamma2": (0.0, -1.0)}


def _factor(t, m):
    """Value and first two derivatives of sin^m(pi(2t - 0.5)), masked to [0.25, 0.75]."""
    t = np.asarray(t, dtype=float)
    inside = (t >= INNER_LO) & (t <= INNER_HI)
    th = np.pi * (2.0 * t - 0.5)
    g = np.sin(th)
    c = np.cos(th)
    k = 2.0 * np.pi
    p0 = g**m
    p1 = m * g ** (m - 1) * c * k
    p2 = k * k * (m * (m - 1) * g ** (m - 2) * c * c - m * g**m)
    return (np.where(inside, p0, 0.0), np.where(inside, p1, 0.0),
            np.where(inside, p2, 0.0))


@dataclass(frozen=True)
class PermittivityField:
    """Smooth inclusion ``eps`` in [1, d1] on the inner square, 1 outside."""

    m: int = 2
    d1: float = 2.0

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise ValueError(f"exponent m must be an integer >= 2, got {self.m}")

    def __call__(self, x, y):
        px, _, _ = _factor(x, self.m)
        py, _, _ = _factor(y, self.m)
        return 1.0 + px * py

    def grad(self, x, y):
        px, dpx, _ = _factor(x, self.m)
        py, dpy, _ = _factor(y, self.m)
        return np.stack([dpx * py, px * dpy], axis=-1)

    def hessian(self, x, y):
        px, dpx, ddpx = _factor(x, self.m)
        py, dpy, ddpy = _factor(y, self.m)
        hxy = dpx * dpy
        return np.stack([np.stack([ddpx * py, hxy], axis=-1),
                         np.stack([hxy, px * ddpy], axis=-1)], axis=-2)


def eps_eval(x, y, m=2):
    return PermittivityField(m)(x, y)


def eps_grad(x, y, m=2):
    return PermittivityField(m).grad(x, y)


@dataclass(frozen=True)
class ManufacturedSolution:
    """Closed-form field with analytic derivatives up to second order.

    ``grad`` returns ``[..., i, j] = d E_i / d x_j`` and ``hessian`` returns
    ``[..., i, j, k] = d^2 E_i / d x_j d x_k``.
    """

    s: float = 1.0
    m: int = 2

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"pseudo-frequency s must be positive, got {self.s}")

    @property
    def eps(self) -> PermittivityField:
        return PermittivityField(self.m)

    def _stream(self, x, y):
        """Derivatives of psi up to third order as a dict keyed by (nx, ny)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        pi = np.pi
        sx, sy = np.sin(2 * pi * x), np.sin(2 * pi * y)
        cx, cy = np.cos(2 * pi * x), np.cos(2 * pi * y)
        a = [np.sin(pi * x) ** 2, pi * sx, 2 * pi**2 * cx, -4 * pi**3 * sx]
        b = [np.sin(pi * y) ** 2, pi * sy, 2 * pi**2 * cy, -4 * pi**3 * sy]
        scale = 1.0 / self.s**3
        return {(i, j): scale * a[i] * b[j] for i in range(4) for j in range(4) if i + j <= 3}

    def _curl_jet(self, x, y):
        """Value, gradient, hessian of Q = eps * E = (psi_y, -psi_x)."""
        d = self._stream(x, y)
        q = np.stack([d[0, 1], -d[1, 0]], axis=-1)
        dq = np.stack([np.stack([d[1, 1], d[0, 2]], axis=-1),
                       np.stack([-d[2, 0], -d[1, 1]], axis=-1)], axis=-2)
        hq1 = np.stack([np.stack([d[2, 1], d[1, 2]], axis=-1),
                        np.stack([d[1, 2], d[0, 3]], axis=-1)], axis=-2)
        hq2 = -np.stack([np.stack([d[3, 0], d[2, 1]], axis=-1),
                         np.stack([d[2, 1], d[1, 2]], axis=-1)], axis=-2)
        return q, dq, np.stack([hq1, hq2], axis=-3)

    def jet(self, x, y):
        """Return (E, grad E, hessian E) from the product rule on Q / eps."""
        ef = self.eps
        e = ef(x, y)
        de = ef.grad(x, y)
        he = ef.hessian(x, y)
        r = 1.0 / e
        dr = -de / e[..., None] ** 2
        hr = -he / e[..., None, None] ** 2 + 2.0 * de[..., :, None] * de[..., None, :] / e[..., None, None] ** 3
        q, dq, hq = self._curl_jet(x, y)
        val = q * r[..., None]
        grad = dq * r[..., None, None] + q[..., :, None] * dr[..., None, :]
        hess = (hq * r[..., None, None, None]
                + dq[..., :, :, None] * dr[..., None, None, :]
                + dq[..., :, None, :] * dr[..., None, :, None]
                + q[..., :, None, None] * hr[..., None, :, :])
        return val, grad, hess

    def __call__(self, x, y):
        return self.jet(x, y)[0]

    def grad(self, x, y):
        return self.jet(x, y)[1]

    def source(self, x, y):
        """F = s^2 eps E - lap E - grad div((eps - 1) E)."""
        ef = self.eps
        e = ef(x, y)
        de = ef.grad(x, y)
        he = ef.hessian(x, y)
        val, grad, hess = self.jet(x, y)
        lap = hess[..., 0, 0] + hess[..., 1, 1]
        div = grad[..., 0, 0] + grad[..., 1, 1]
        # d_k sum_i d_i((eps-1) E_i)
        gdiv = (np.einsum("...ik,...i->...k", he, val)
                + np.einsum("...i,...ik->...k", de, grad)
                + de * div[..., None]
                + (e - 1.0)[..., None] * np.einsum("...iik->...k", hess))
        return self.s**2 * e[..., None] * val - lap - gdiv

    def normal_derivative(self, x, y, normal):
        n = np.asarray(normal, dtype=float)
        return np.einsum("...ij,...j->...i", self.grad(x, y), np.broadcast_to(n, np.shape(x) + (2,)))


def exact_solution(x, y, s=1.0, m=2):
    return ManufacturedSolution(s, m)(x, y)


def manufactured_source(x, y, s=1.0, m=2):
    return ManufacturedSolution(s, m).source(x, y)


def segment_normal(segment, x, y):
    """Outward unit normal at points of a boundary segment."""
    x = np.asarray(x, dtype=float)
    if segment in _NORMALS:
        return np.broadcast_to(np.array(_NORMALS[segment]), x.shape + (2,)).copy()
    if segment == "Gamma3":
        nx = np.where(x < 0.5, -1.0, 1.0)
        return np.stack([nx, np.zeros_like(nx)], axis=-1)
    raise ValueError(f"unknown segment {segment!r}")


def on_segment(segment, x, y, tol=1e-12):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = (x >= -tol) & (x <= 1 + tol) & (y >= -tol) & (y <= 1 + tol)
    if segment == "Gamma1":
        return inside & (np.abs(y - 1.0) <= tol)
    if segment == "Gamma2":
        return inside & (np.abs(y) <= tol)
    if segment == "Gamma3":
        return inside & ((np.abs(x) <= tol) | (np.abs(x - 1.0) <= tol))
    raise ValueError(f"unknown segment {segment!r}")


def boundary_data(segment, x, y, s=1.0, m=2, bc_mode="robin_absorbing"):
    """Manufactured Robin data ``g = d_nu E + s E``; zero for the homogeneous modes."""
    if bc_mode not in BC_MODES:
        raise ValueError(f"unknown boundary mode {bc_mode!r}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.all(on_segment(segment, x, y)):
        raise ValueError(f"point(s) not on segment {segment}")
    if bc_mode != "robin_absorbing":
        return np.zeros(x.shape + (2,))
    sol = ManufacturedSolution(s, m)
    return sol.normal_derivative(x, y, segment_normal(segment, x, y)) + s * sol(x, y)


VectorField = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _zero_field(x, y):
    return np.zeros(np.shape(x) + (2,))


@dataclass
class ProblemSpec:
    """Everything needed to assemble and evaluate one problem instance.

    ``bc`` maps each segment to a boundary mode. ``boundary`` maps Robin
    segments to their data ``g``; missing entries mean ``g = 0``. ``f0`` is
    the initial field when the source has the form ``s eps f0``.
    """

    eps: PermittivityField = field(default_factory=PermittivityField)
    s: float = 1.0
    bc: Dict[str, str] = field(default_factory=lambda: {
        "Gamma1": "robin_absorbing", "Gamma2": "robin_absorbing", "Gamma3": "neumann0"})
    source: VectorField = _zero_field
    boundary: Dict[str, VectorField] = field(default_factory=dict)
    exact: Optional[ManufacturedSolution] = None
    f0: Optional[VectorField] = None

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"pseudo-frequency s must be positive, got {self.s}")
        for seg in SEGMENTS:
            self.bc.setdefault(seg, "neumann0")
        for seg, mode in self.bc.items():
            if seg not in SEGMENTS:
                raise ValueError(f"unknown segment {seg!r}")
            if mode not in BC_MODES:
                raise ValueError(f"unknown boundary mode {mode!r} on {seg}")
        if any(self.bc[g] == "robin_absorbing" for g in ("Gamma3",)):
            raise ValueError("absorbing condition is only defined on Gamma1 and Gamma2")

    @property
    def robin_segments(self):
        return tuple(g for g in SEGMENTS if self.bc[g] == "robin_absorbing")

    @property
    def dirichlet_segments(self):
        return tuple(g for g in SEGMENTS if self.bc[g] == "dirichlet0")

    def boundary_value(self, segment, x, y):
        fn = self.boundary.get(segment)
        if fn is None:
            return np.zeros(np.shape(x) + (2,))
        return fn(x, y)

    @classmethod
    def manufactured(cls, m=2, s=1.0, bc_mode="dirichlet0"):
        """The manufactured benchmark under one of three boundary setups.

        ``dirichlet0`` clamps all of the boundary; ``robin`` puts the absorbing
        condition with manufactured data on top and bottom and ``neumann0`` on
        the sides; ``neumann0`` is homogeneous Neumann everywhere.
        """
        sol = ManufacturedSolution(s, m)
        if bc_mode == "dirichlet0":
            bc = {g: "dirichlet0" for g in SEGMENTS}
        elif bc_mode in ("robin", "robin_absorbing"):
            bc = {"Gamma1": "robin_absorbing", "Gamma2": "robin_absorbing", "Gamma3": "neumann0"}
        elif bc_mode == "neumann0":
            bc = {g: "neumann0" for g in SEGMENTS}
        else:
            raise ValueError(f"unknown boundary setup {bc_mode!r}")
        boundary = {}
        for g, mode in bc.items():
            if mode == "robin_absorbing":
                boundary[g] = _robin_data(sol, g)
        return cls(eps=sol.eps, s=s, bc=bc, source=sol.source, boundary=boundary, exact=sol)

    @classmethod
    def from_initial_field(cls, f0, m=2, s=1.0, bc=None):
        """Source ``s eps f0`` with Robin data ``f0``, as in the physical model."""
        eps = PermittivityField(m)

        def source(x, y):
            return s * eps(x, y)[..., None] * f0(x, y)

        if bc is None:
            bc = {"Gamma1": "robin_absorbing", "Gamma2": "robin_absorbing", "Gamma3": "neumann0"}
        spec = cls(eps=eps, s=s, bc=dict(bc), source=source, f0=f0)
        spec.boundary = {g: f0 for g in spec.robin_segments}
        return spec


def _robin_data(sol, segment):
    def g(x, y):
        return sol.normal_derivative(x, y, segment_normal(segment, x, y)) + sol.s * sol(x, y)
    return g
