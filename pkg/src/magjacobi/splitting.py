"""Canonical splitting of the vertical space and the scalar ingredients built on it.

Vertical vectors are represented by their horizontal counterparts ``v^h``
(m-vectors in chart components).  A point ``lam`` carries the chart point
``x``, the reduced momentum covector ``p`` (so that ``p^h = g^{-1} p``) and
the charge ``u0``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .geometry import ChartedBase, LocalGeometry, local_geometry

REGULARITY_TOL = 1e-9
LEVEL_TOL = 1e-12
SEED_SKIP_TOL = 1e-6


class NotRegularError(ValueError):
    """The point lies on the degenerate locus ``J_q p = 0``."""


@dataclass(frozen=True)
class CotangentPoint:
    x: np.ndarray
    p: np.ndarray
    u0: float

    @staticmethod
    def on_level(base: ChartedBase, x, p, u0) -> "CotangentPoint":
        """Rescale ``p`` so that ``g^{ij} p_i p_j = 1`` and build the point."""
        x = np.asarray(x, float)
        p = np.asarray(p, float)
        ginv = np.linalg.inv(base.metric(x))
        return CotangentPoint(x, p / np.sqrt(p @ ginv @ p), float(u0))

    def check_level(self, base: ChartedBase, tol: float = LEVEL_TOL) -> None:
        ginv = np.linalg.inv(base.metric(self.x))
        val = self.p @ ginv @ self.p
        if abs(val - 1.0) > tol:
            raise ValueError(f"point is not on the level h = 1/2 (|p|^2 = {val!r})")


@dataclass(frozen=True)
class CanonicalSplitting:
    ph: np.ndarray
    Jph: np.ndarray
    jnorm: float
    b_dir: np.ndarray
    c_basis: np.ndarray  # shape (m - 2, m), rows are the basis vectors


class PointData:
    """Pointwise tensors and frequently used vectors at ``lam``.

    The bilinear helpers follow the conventions of :mod:`magjacobi.geometry`:
    ``nJ(X, Y) = (nabla_Y J) X`` and ``n2J(X, Y, Z) = (nabla_Z nabla J)(X, Y)``.
    """

    def __init__(self, base: ChartedBase, lam: CotangentPoint, geo: LocalGeometry | None = None):
        self.base = base
        self.lam = lam
        self.u0 = float(lam.u0)
        self.geo = geo if geo is not None else local_geometry(base, lam.x)
        g = self.geo
        self.ph = g.ginv @ lam.p
        self.Jp = g.J @ self.ph
        self.jnorm = float(np.sqrt(self.dot(self.Jp, self.Jp)))
        self.uniform = bool(base.uniform)

    def dot(self, X, Y):
        return X @ self.geo.g @ Y

    def J(self, X):
        return self.geo.J @ X

    def nJ(self, X, Y):
        return np.einsum("ijk,j,k->i", self.geo.nablaJ, X, Y)

    def n2J(self, X, Y, Z):
        return np.einsum("ijkl,j,k,l->i", self.geo.nabla2J, X, Y, Z)

    def R(self, X, Y, Z):
        return np.einsum("ijkl,j,k,l->i", self.geo.riem, Z, X, Y)

    def require_regular(self):
        if not self.jnorm > REGULARITY_TOL:
            raise NotRegularError("not D-regular: J_q p = 0")

    # frequently used vectors
    @cached_property
    def J2p(self):
        return self.J(self.Jp)

    @cached_property
    def J3p(self):
        return self.J(self.J2p)

    @cached_property
    def npp(self):
        return self.nJ(self.ph, self.ph)

    @cached_property
    def n2ppp(self):
        return self.n2J(self.ph, self.ph, self.ph)


def split_at(base: ChartedBase, lam: CotangentPoint, data: PointData | None = None) -> CanonicalSplitting:
    """Orthonormal frame ``{p^h, Jp^h/|Jp^h|, c_1, ..., c_{m-2}}`` at a regular point.

    The c-vectors come from Gram-Schmidt (in g) over the chart axes in index
    order, skipping seeds that are nearly dependent on the vectors so far.
    """
    lam.check_level(base)
    d = data if data is not None else PointData(base, lam)
    d.require_regular()
    b_dir = d.Jp / d.jnorm
    frame = [d.ph, b_dir]
    m = base.dim
    for k in range(m):
        if len(frame) == m:
            break
        e = np.zeros(m)
        e[k] = 1.0
        seed_norm = np.sqrt(d.dot(e, e))
        w = e.copy()
        for _ in range(2):  # re-orthogonalize once for stability
            for f in frame:
                w = w - d.dot(f, w) * f
        nw = np.sqrt(d.dot(w, w))
        if nw < SEED_SKIP_TOL * seed_norm:
            continue
        frame.append(w / nw)
    c = np.array(frame[2:]).reshape(m - 2, m)
    return CanonicalSplitting(d.ph.copy(), d.Jp.copy(), d.jnorm, b_dir, c)


def _data(base, lam, data):
    if data is None:
        data = PointData(base, lam)
    data.require_regular()
    return data


def A_form(base, lam, v, data: PointData | None = None) -> float:
    """The linear functional ``A(lam, v)`` on vertical vectors."""
    d = _data(base, lam, data)
    n = d.jnorm
    return float(2.0 / n * d.dot(v, d.npp) - d.u0 / n * d.dot(v, d.J2p))


def A1_form(base, lam, v, data: PointData | None = None) -> float:
    """Flow derivative ``A^(1)(lam, v)`` of ``A`` (closed form, v in V_c)."""
    d = _data(base, lam, data)
    n, u0, p, Jp = d.jnorm, d.u0, d.ph, d.Jp
    vec = (2.0 * d.n2ppp - 3.0 * u0 * d.nJ(Jp, p) - 2.0 * u0 * d.nJ(p, Jp)
           + 0.5 * u0 * u0 * d.J3p)
    return float(d.dot(v, vec) / n - A_form(base, lam, v, d) * A_form(base, lam, Jp / n, d))


def invJnorm_derivs(base, lam, data: PointData | None = None) -> tuple[float, float]:
    """First and second derivatives of ``1/|Jp^h|`` along the extremal flow."""
    d = _data(base, lam, data)
    if d.uniform:
        return 0.0, 0.0
    n, u0, p, Jp = d.jnorm, d.u0, d.ph, d.Jp
    a = d.npp
    s = d.dot(Jp, a)
    d1 = -s / n**3
    d2 = (3.0 * s * s / n**5 - d.dot(a, a) / n**3 - d.dot(Jp, d.n2ppp) / n**3
          + u0 / n**3 * (d.dot(d.J2p, a) + d.dot(Jp, d.nJ(Jp, p)) + d.dot(Jp, d.nJ(p, Jp))))
    return float(d1), float(d2)


def V1_vector(base, lam, data: PointData | None = None) -> np.ndarray:
    """Horizontal part of the vertical vector V_1."""
    d = _data(base, lam, data)
    n, u0 = d.jnorm, d.u0
    return (-2.0 / n * d.npp + u0 / n * d.J2p + u0 * n * d.ph
            + 2.0 / n**3 * d.dot(d.npp, d.Jp) * d.Jp)


def beta_form(base, lam, v, data: PointData | None = None) -> float:
    """``beta(v) = -A^(1)(v)/|Jp^h| - (d/dt 1/|Jp^h|) A(v)``."""
    d = _data(base, lam, data)
    d1, _ = invJnorm_derivs(base, lam, d)
    return float(-A1_form(base, lam, v, d) / d.jnorm - d1 * A_form(base, lam, v, d))
