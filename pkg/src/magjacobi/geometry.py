"""Riemannian base with a magnetic 2-form, given in one coordinate chart.

All tensors are plain numpy arrays in chart components.  Index conventions:

* ``dg[i, j, k] = d_k g_ij`` and ``d2g[i, j, k, l] = d_k d_l g_ij`` (same for Omega).
* ``christoffel(...)[k, i, j] = Gamma^k_ij``.
* ``riemann(...)[i, j, k, l] = R^i_jkl`` with ``R(X, Y)Z = R^i_jkl Z^j X^k Y^l`` and
  ``R(X, Y) = nabla_Y nabla_X - nabla_X nabla_Y + nabla_[X,Y]``, so that
  ``g(R(X, Y)X, Y)`` is the sectional curvature numerator (positive on spheres).
* ``J = -g^{-1} Omega`` so that ``g(JX, Y) = Omega(X, Y)``.
* ``nabla_J(...)[i, j, k]`` holds ``(nabla_{e_k} J)^i_j``; as a bilinear map
  ``nablaJ(X, Y) = (nabla_Y J) X``.
* ``nabla2_J(...)[i, j, k, l]`` holds ``(nabla_{e_l} nabla J)^i_jk``, i.e.
  ``nabla2J(X, Y, Z) = (nabla_Z nabla J)(X, Y)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

ArrayFn = Callable[[np.ndarray], np.ndarray]

DEFAULT_ETA = 1e-5
# second derivatives use a coarser base step with two Richardson levels;
# central second differences at eta=1e-5 would be dominated by roundoff
SECOND_DERIV_STEP = 1e-2


class GeometryError(ValueError):
    """Raised for degenerate metrics or invalid finite-difference steps."""


class Jet(NamedTuple):
    g: np.ndarray
    dg: np.ndarray
    d2g: np.ndarray
    om: np.ndarray
    dom: np.ndarray
    d2om: np.ndarray


@dataclass(frozen=True)
class ChartedBase:
    """Metric ``g`` and closed magnetic form ``Omega`` on a chart of R^m.

    ``metric``, ``magnetic_form`` and ``potential`` are callables of the chart
    point.  When ``derivative_mode == "analytic"`` the callables ``metric_jet``
    and ``form_jet`` must return ``(value, first, second)`` derivative arrays;
    otherwise the derivatives are taken by central differences with step
    ``eta``.
    """

    dim: int
    metric: ArrayFn
    magnetic_form: ArrayFn
    potential: ArrayFn
    derivative_mode: str = "finite-difference"
    eta: float = DEFAULT_ETA
    metric_jet: Optional[Callable] = None
    form_jet: Optional[Callable] = None
    potential_jac: Optional[ArrayFn] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    uniform: bool = False  # True when nabla J = 0 is known analytically

    def __post_init__(self):
        if self.dim < 2:
            raise GeometryError("base dimension must be at least 2")
        if self.derivative_mode not in ("analytic", "finite-difference"):
            raise GeometryError(f"unknown derivative mode {self.derivative_mode!r}")
        if self.derivative_mode == "analytic" and (self.metric_jet is None or self.form_jet is None):
            raise GeometryError("analytic mode needs metric_jet and form_jet")
        if self.derivative_mode == "finite-difference" and not (1e-12 < self.eta < 1e-1):
            raise GeometryError(f"finite-difference step {self.eta} out of range")

    def with_mode(self, mode: str, eta: float | None = None) -> "ChartedBase":
        """Copy of this base using another derivative mode."""
        kw = dict(self.__dict__)
        kw["derivative_mode"] = mode
        if eta is not None:
            kw["eta"] = eta
        return ChartedBase(**kw)

    def jet(self, x) -> Jet:
        x = np.asarray(x, dtype=float)
        if self.derivative_mode == "analytic":
            g, dg, d2g = self.metric_jet(x)
            om, dom, d2om = self.form_jet(x)
        else:
            g, dg, d2g = _fd_jet(self.metric, x, self.eta)
            om, dom, d2om = _fd_jet(self.magnetic_form, x, self.eta)
        return Jet(np.asarray(g, float), np.asarray(dg, float), np.asarray(d2g, float),
                   np.asarray(om, float), np.asarray(dom, float), np.asarray(d2om, float))

    def dpotential(self, x) -> np.ndarray:
        """``[i, k] = d_k theta_i``."""
        x = np.asarray(x, dtype=float)
        if self.potential_jac is not None and self.derivative_mode == "analytic":
            return np.asarray(self.potential_jac(x), float)
        return _fd_first(self.potential, x, self.eta)


# ---------------------------------------------------------------------------
# finite differences


def _fd_first_plain(f, x, eta):
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = eta
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * eta))
    return np.stack(cols, axis=-1)


def _fd_first(f, x, eta):
    """Central first differences with one Richardson level (error O(eta^4))."""
    a = _fd_first_plain(f, x, eta)
    b = _fd_first_plain(f, x, eta / 2)
    return (4 * b - a) / 3


def _fd_second_plain(f, x, s):
    m = x.size
    f0 = np.asarray(f(x))
    out = np.zeros(f0.shape + (m, m))
    for k in range(m):
        ek = np.zeros(m)
        ek[k] = s
        out[..., k, k] = (np.asarray(f(x + ek)) - 2 * f0 + np.asarray(f(x - ek))) / s**2
        for l in range(k + 1, m):
            el = np.zeros(m)
            el[l] = s
            v = (np.asarray(f(x + ek + el)) - np.asarray(f(x + ek - el))
                 - np.asarray(f(x - ek + el)) + np.asarray(f(x - ek - el))) / (4 * s**2)
            out[..., k, l] = v
            out[..., l, k] = v
    return out


def _fd_second(f, x, s):
    """Second derivatives with two Richardson levels (error O(s^6))."""
    a = _fd_second_plain(f, x, s)
    b = _fd_second_plain(f, x, s / 2)
    c = _fd_second_plain(f, x, s / 4)
    ab = (4 * b - a) / 3
    bc = (4 * c - b) / 3
    return (16 * bc - ab) / 15


def _fd_jet(f, x, eta):
    return np.asarray(f(x), float), _fd_first(f, x, eta), _fd_second(f, x, max(SECOND_DERIV_STEP, 1000 * eta))


# ---------------------------------------------------------------------------
# tensors


class LocalGeometry(NamedTuple):
    """All pointwise tensors needed by the curvature formulas."""
    g: np.ndarray
    ginv: np.ndarray
    gamma: np.ndarray
    riem: np.ndarray
    J: np.ndarray
    nablaJ: np.ndarray
    nabla2J: np.ndarray


def _inv(g):
    w = np.linalg.eigvalsh(0.5 * (g + g.T))
    if w[0] <= 1e-14 * max(1.0, abs(w[-1])):
        raise GeometryError("degenerate metric: not positive definite")
    return np.linalg.inv(g)


def _inverse_jets(jet: Jet):
    ginv = _inv(jet.g)
    # d_k g^{ij} = -g^{ia} d_k g_ab g^{bj}
    dginv = -np.einsum("ia,abk,bj->ijk", ginv, jet.dg, ginv)
    t = np.einsum("ia,abk,bc,cdl,dj->ijkl", ginv, jet.dg, ginv, jet.dg, ginv)
    d2ginv = t + t.transpose(0, 1, 3, 2) - np.einsum("ia,abkl,bj->ijkl", ginv, jet.d2g, ginv)
    return ginv, dginv, d2ginv


def _christoffel_from(jet: Jet, ginv, dginv):
    dg = jet.dg
    # low[a, i, j] = 1/2 (d_i g_aj + d_j g_ai - d_a g_ij)
    low = 0.5 * (dg.transpose(0, 2, 1) + dg - dg.transpose(2, 0, 1))
    gam = np.einsum("ka,aij->kij", ginv, low)
    d2g = jet.d2g
    dlow = 0.5 * (d2g.transpose(0, 2, 1, 3) + d2g - d2g.transpose(2, 0, 1, 3))
    dgam = np.einsum("kal,aij->kijl", dginv, low) + np.einsum("ka,aijl->kijl", ginv, dlow)
    return gam, dgam


def _riemann_from(gam, dgam):
    # R^i_jkl = d_l G^i_kj - d_k G^i_lj + G^a_kj G^i_la - G^a_lj G^i_ka
    t1 = dgam.transpose(0, 2, 1, 3)              # [i,j,k,l] = d_l G^i_kj
    t2 = t1.transpose(0, 1, 3, 2)                # d_k G^i_lj
    t3 = np.einsum("akj,ila->ijkl", gam, gam)
    return t1 - t2 + t3 - t3.transpose(0, 1, 3, 2)


class FirstOrder(NamedTuple):
    """Metric, inverse, Christoffels, J and nabla J (no second derivatives of J)."""
    jet: Jet
    ginv: np.ndarray
    dginv: np.ndarray
    gamma: np.ndarray
    J: np.ndarray
    dJ: np.ndarray
    nablaJ: np.ndarray


def first_order(base: ChartedBase, x, jet: Jet | None = None) -> FirstOrder:
    jet = base.jet(x) if jet is None else jet
    ginv = _inv(jet.g)
    dginv = -np.einsum("ia,abk,bj->ijk", ginv, jet.dg, ginv)
    dg = jet.dg
    low = 0.5 * (dg.transpose(0, 2, 1) + dg - dg.transpose(2, 0, 1))
    gam = np.einsum("ka,aij->kij", ginv, low)
    J = -ginv @ jet.om
    dJ = -np.einsum("iak,aj->ijk", dginv, jet.om) - np.einsum("ia,ajk->ijk", ginv, jet.dom)
    # (nabla_k J)^i_j = d_k J^i_j + G^i_ka J^a_j - G^a_kj J^i_a
    nJ = dJ + np.einsum("ika,aj->ijk", gam, J) - np.einsum("akj,ia->ijk", gam, J)
    return FirstOrder(jet, ginv, dginv, gam, J, dJ, nJ)


def local_geometry(base: ChartedBase, x) -> LocalGeometry:
    """Evaluate g, Christoffels, Riemann tensor, J, nabla J and nabla^2 J at ``x``."""
    jet = base.jet(x)
    ginv, dginv, d2ginv = _inverse_jets(jet)
    gam, dgam = _christoffel_from(jet, ginv, dginv)
    riem = _riemann_from(gam, dgam)
    om, dom, d2om = jet.om, jet.dom, jet.d2om
    J = -ginv @ om
    dJ = -np.einsum("iak,aj->ijk", dginv, om) - np.einsum("ia,ajk->ijk", ginv, dom)
    d2J = (-np.einsum("iakl,aj->ijkl", d2ginv, om)
           - np.einsum("iak,ajl->ijkl", dginv, dom)
           - np.einsum("ial,ajk->ijkl", dginv, dom)
           - np.einsum("ia,ajkl->ijkl", ginv, d2om))
    # (nabla_k J)^i_j = d_k J^i_j + G^i_ka J^a_j - G^a_kj J^i_a
    nJ = dJ + np.einsum("ika,aj->ijk", gam, J) - np.einsum("akj,ia->ijk", gam, J)
    dnJ = (d2J + np.einsum("ikal,aj->ijkl", dgam, J) + np.einsum("ika,ajl->ijkl", gam, dJ)
           - np.einsum("akjl,ia->ijkl", dgam, J) - np.einsum("akj,ial->ijkl", gam, dJ))
    n2J = (dnJ + np.einsum("ila,ajk->ijkl", gam, nJ)
           - np.einsum("alj,iak->ijkl", gam, nJ)
           - np.einsum("alk,ija->ijkl", gam, nJ))
    return LocalGeometry(jet.g, ginv, gam, riem, J, nJ, n2J)


def christoffel(base: ChartedBase, x) -> np.ndarray:
    """Levi-Civita symbols ``Gamma[k, i, j]``."""
    jet = base.jet(x)
    ginv, dginv, _ = _inverse_jets(jet)
    return _christoffel_from(jet, ginv, dginv)[0]


def riemann(base: ChartedBase, x) -> np.ndarray:
    """Riemann tensor ``R[i, j, k, l]`` (see module docstring for the convention)."""
    jet = base.jet(x)
    ginv, dginv, _ = _inverse_jets(jet)
    return _riemann_from(*_christoffel_from(jet, ginv, dginv))


def curvature_vector(riem, X, Y, Z):
    """``R(X, Y)Z``."""
    return np.einsum("ijkl,j,k,l->i", riem, Z, X, Y)


def sec(base: ChartedBase, x, X, Y) -> float:
    """Sectional curvature ``g(R(X,Y)X, Y) / |X ^ Y|^2`` of the plane spanned by X, Y."""
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    g = base.metric(np.asarray(x, float))
    num = curvature_vector(riemann(base, x), X, Y, X) @ g @ Y
    den = (X @ g @ X) * (Y @ g @ Y) - (X @ g @ Y) ** 2
    return float(num / den)


def J_at(base: ChartedBase, x) -> np.ndarray:
    """Matrix of J, defined by ``g(JX, Y) = Omega(X, Y)``."""
    x = np.asarray(x, float)
    return -_inv(np.asarray(base.metric(x), float)) @ np.asarray(base.magnetic_form(x), float)


def nabla_J(base: ChartedBase, x) -> np.ndarray:
    return local_geometry(base, x).nablaJ


def nabla2_J(base: ChartedBase, x) -> np.ndarray:
    return local_geometry(base, x).nabla2J


def exterior_derivative_defect(base: ChartedBase, x) -> float:
    """Max |dOmega| component, computed with central differences."""
    x = np.asarray(x, float)
    dom = _fd_first(base.magnetic_form, x, base.eta)
    m = base.dim
    worst = 0.0
    for i in range(m):
        for j in range(i + 1, m):
            for k in range(j + 1, m):
                s = dom[j, k, i] + dom[k, i, j] + dom[i, j, k]
                worst = max(worst, abs(s))
    return worst


def potential_defect(base: ChartedBase, x) -> float:
    """Max |dtheta - Omega| component, with ``(dtheta)_ij = d_i theta_j - d_j theta_i``."""
    x = np.asarray(x, float)
    dth = _fd_first(base.potential, x, base.eta)   # [i, k] = d_k theta_i
    dtheta = dth.T - dth
    return float(np.max(np.abs(dtheta - np.asarray(base.magnetic_form(x)))))


# ---------------------------------------------------------------------------
# model catalog


def _const_jet(mat, m):
    mat = np.asarray(mat, float)
    return mat, np.zeros(mat.shape + (m,)), np.zeros(mat.shape + (m, m))


def flat2d(B: float = 1.0) -> ChartedBase:
    """Euclidean plane with constant field ``Omega = B dx^dy`` (Heisenberg group)."""
    om = np.array([[0.0, B], [-B, 0.0]])
    return ChartedBase(
        dim=2,
        metric=lambda x: np.eye(2),
        magnetic_form=lambda x: om.copy(),
        potential=lambda x: np.array([-0.5 * B * x[1], 0.5 * B * x[0]]),
        potential_jac=lambda x: np.array([[0.0, -0.5 * B], [0.5 * B, 0.0]]),
        derivative_mode="analytic",
        metric_jet=lambda x: _const_jet(np.eye(2), 2),
        form_jet=lambda x: _const_jet(om, 2),
        name="flat2d", params={"B": B}, uniform=True,
    )


def sphere2d(r: float = 1.0, B: float = 1.0) -> ChartedBase:
    """Round sphere of radius r in (colatitude, longitude) with ``Omega = B * area form``."""

    def metric_jet(x):
        s, c = np.sin(x[0]), np.cos(x[0])
        g = np.diag([r * r, r * r * s * s])
        dg = np.zeros((2, 2, 2))
        dg[1, 1, 0] = 2 * r * r * s * c
        d2g = np.zeros((2, 2, 2, 2))
        d2g[1, 1, 0, 0] = 2 * r * r * (c * c - s * s)
        return g, dg, d2g

    def form(x):
        a = B * r * r * np.sin(x[0])
        return np.array([[0.0, a], [-a, 0.0]])

    def form_jet(x):
        s, c = np.sin(x[0]), np.cos(x[0])
        om = form(x)
        dom = np.zeros((2, 2, 2))
        dom[0, 1, 0], dom[1, 0, 0] = B * r * r * c, -B * r * r * c
        d2om = np.zeros((2, 2, 2, 2))
        d2om[0, 1, 0, 0], d2om[1, 0, 0, 0] = -B * r * r * s, B * r * r * s
        return om, dom, d2om

    return ChartedBase(
        dim=2,
        metric=lambda x: metric_jet(x)[0],
        magnetic_form=form,
        potential=lambda x: np.array([0.0, -B * r * r * np.cos(x[0])]),
        potential_jac=lambda x: np.array([[0.0, 0.0], [B * r * r * np.sin(x[0]), 0.0]]),
        derivative_mode="analytic", metric_jet=metric_jet, form_jet=form_jet,
        name="sphere2d", params={"r": r, "B": B}, uniform=True,
    )


def hyperbolic2d(r: float = 1.0, B: float = 1.0) -> ChartedBase:
    """Upper half plane ``r^2 (dx^2 + dy^2) / y^2`` with ``Omega = B * area form``."""

    def scalar_jet(c, y):
        # c / y^2 and its first two y-derivatives
        return c / y**2, -2 * c / y**3, 6 * c / y**4

    def metric_jet(x):
        f, f1, f2 = scalar_jet(r * r, x[1])
        dg = np.zeros((2, 2, 2))
        dg[0, 0, 1] = dg[1, 1, 1] = f1
        d2g = np.zeros((2, 2, 2, 2))
        d2g[0, 0, 1, 1] = d2g[1, 1, 1, 1] = f2
        return f * np.eye(2), dg, d2g

    def form_jet(x):
        f, f1, f2 = scalar_jet(B * r * r, x[1])
        rot = np.array([[0.0, 1.0], [-1.0, 0.0]])
        dom = np.zeros((2, 2, 2))
        dom[:, :, 1] = f1 * rot
        d2om = np.zeros((2, 2, 2, 2))
        d2om[:, :, 1, 1] = f2 * rot
        return f * rot, dom, d2om

    return ChartedBase(
        dim=2,
        metric=lambda x: metric_jet(x)[0],
        magnetic_form=lambda x: form_jet(x)[0],
        potential=lambda x: np.array([B * r * r / x[1], 0.0]),
        potential_jac=lambda x: np.array([[0.0, -B * r * r / x[1] ** 2], [0.0, 0.0]]),
        derivative_mode="analytic", metric_jet=metric_jet, form_jet=form_jet,
        name="hyperbolic2d", params={"r": r, "B": B}, uniform=True,
    )


def flat4d_uniform(B1: float = 1.0, B2: float = 1.0) -> ChartedBase:
    """R^4 with coordinates (x1, y1, x2, y2) and ``Omega = B1 dx1^dy1 + B2 dx2^dy2``."""
    om = np.zeros((4, 4))
    om[0, 1], om[1, 0] = B1, -B1
    om[2, 3], om[3, 2] = B2, -B2
    pj = np.zeros((4, 4))
    pj[0, 1], pj[1, 0] = -0.5 * B1, 0.5 * B1
    pj[2, 3], pj[3, 2] = -0.5 * B2, 0.5 * B2
    return ChartedBase(
        dim=4,
        metric=lambda x: np.eye(4),
        magnetic_form=lambda x: om.copy(),
        potential=lambda x: pj @ np.asarray(x, float),
        potential_jac=lambda x: pj.copy(),
        derivative_mode="analytic",
        metric_jet=lambda x: _const_jet(np.eye(4), 4),
        form_jet=lambda x: _const_jet(om, 4),
        name="flat4d_uniform", params={"B1": B1, "B2": B2}, uniform=True,
    )


def flat4d_kahler(B: float = 1.0) -> ChartedBase:
    """Flat C^2 with ``Omega = B (dx1^dy1 + dx2^dy2)``; Kaehler when B = 1."""
    base = flat4d_uniform(B, B)
    return ChartedBase(**{**base.__dict__, "name": "flat4d_kahler", "params": {"B": B}})


def flat2d_varfield(b0: float = 1.0, b1: float = 0.5) -> ChartedBase:
    """Euclidean plane with the non-uniform field ``Omega = (b0 + b1 x) dx^dy``."""
    rot = np.array([[0.0, 1.0], [-1.0, 0.0]])

    def form_jet(x):
        dom = np.zeros((2, 2, 2))
        dom[:, :, 0] = b1 * rot
        return (b0 + b1 * x[0]) * rot, dom, np.zeros((2, 2, 2, 2))

    return ChartedBase(
        dim=2,
        metric=lambda x: np.eye(2),
        magnetic_form=lambda x: (b0 + b1 * x[0]) * rot,
        potential=lambda x: np.array([0.0, b0 * x[0] + 0.5 * b1 * x[0] ** 2]),
        potential_jac=lambda x: np.array([[0.0, 0.0], [b0 + b1 * x[0], 0.0]]),
        derivative_mode="analytic",
        metric_jet=lambda x: _const_jet(np.eye(2), 2),
        form_jet=form_jet,
        name="flat2d_varfield", params={"b0": b0, "b1": b1}, uniform=(b1 == 0.0),
    )


CATALOG = {
    "flat2d": flat2d,
    "sphere2d": sphere2d,
    "hyperbolic2d": hyperbolic2d,
    "flat4d_kahler": flat4d_kahler,
    "flat2d_varfield": flat2d_varfield,
}


def make_model(name: str, **params) -> ChartedBase:
    """Build a catalog model by name, e.g. ``make_model("sphere2d", B=2.0)``."""
    try:
        factory = CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; available: {sorted(CATALOG)}") from None
    return factory(**params)
