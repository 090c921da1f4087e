"""Curvature maps of the Jacobi equation along an extremal.

Everything is expressed in the frame of :func:`magjacobi.splitting.split_at`
(or in a transported c-basis supplied by the caller): the a-direction is the
charge direction ``d/du0 / |Jp^h|``, the b-direction is ``Jp^h / |Jp^h|`` and
the c-directions are the rows of ``c_basis``.

The (c,a) and (a,a) maps involve flow derivatives of pointwise quantities.
For a uniform field (nabla J = 0) they vanish identically and are returned as
exact zeros; otherwise they are assembled from 7-point central differences
along an integrated extremal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ChartedBase
from .splitting import (CanonicalSplitting, CotangentPoint, PointData, A_form, beta_form,
                        invJnorm_derivs, split_at, V1_vector)

STENCIL_STEP = 0.01
STENCIL_REL_TOL = 1e-3

# 7-point central stencils
D1_W = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0
D2_W = np.array([2.0, -27.0, 270.0, -490.0, 270.0, -27.0, 2.0]) / 180.0


class StencilAccuracyError(RuntimeError):
    """Step-halving check of a flow derivative failed."""


@dataclass
class CurvatureMaps:
    rho_aa: float
    rho_bb: float
    rho_cb: np.ndarray
    rho_ca: np.ndarray
    Rcc: np.ndarray
    basis: CanonicalSplitting

    def big_matrix(self) -> np.ndarray:
        return assemble_big(self.rho_aa, self.rho_bb, self.rho_cb, self.rho_ca, self.Rcc)


def assemble_big(rho_aa, rho_bb, rho_cb, rho_ca, Rcc) -> np.ndarray:
    """Symmetric (n-1)x(n-1) matrix in the order (a, b, c_1, ..., c_{n-3})."""
    k = len(rho_cb)
    M = np.zeros((k + 2, k + 2))
    M[0, 0] = rho_aa
    M[1, 1] = rho_bb
    M[0, 2:] = M[2:, 0] = rho_ca
    M[1, 2:] = M[2:, 1] = rho_cb
    M[2:, 2:] = Rcc
    return M


def check_big_matrix(M, tol=1e-10):
    if M[0, 1] != 0.0 or M[1, 0] != 0.0:
        raise AssertionError("(a,b) entry of the big curvature matrix must vanish")
    if np.max(np.abs(M - M.T), initial=0.0) > tol * max(1.0, np.max(np.abs(M))):
        raise AssertionError("big curvature matrix is not symmetric")


# ---------------------------------------------------------------------------
# pointwise maps


def _frame(base, lam, basis, data):
    d = data if data is not None else PointData(base, lam)
    if basis is None:
        basis = split_at(base, lam, d)
    else:
        d.require_regular()
    return d, basis


def Rcc_quadratic(d: PointData, v) -> float:
    """Quadratic form of the (c,c) map on a vector v of V_c (horizontal part)."""
    p = d.ph
    Jv = d.J(v)
    A = A_form(d.base, d.lam, v, d)
    return float(d.dot(d.R(p, v, p), v) + d.u0 * d.dot(v, d.nJ(p, v))
                 + 0.25 * d.u0 ** 2 * d.dot(Jv, Jv) - 0.25 * A * A)


def Rcc_matrix(base: ChartedBase, lam: CotangentPoint, basis: CanonicalSplitting | None = None,
               data: PointData | None = None) -> np.ndarray:
    """Operator of the (c,c) map on the c-basis, obtained by polarization."""
    d, basis = _frame(base, lam, basis, data)
    C = basis.c_basis
    k = len(C)
    diag = [Rcc_quadratic(d, C[i]) for i in range(k)]
    M = np.diag(diag) if k else np.zeros((0, 0))
    for i in range(k):
        for j in range(i + 1, k):
            M[i, j] = M[j, i] = 0.5 * (Rcc_quadratic(d, C[i] + C[j]) - diag[i] - diag[j])
    return M


def rho_cb_value(d: PointData, v) -> float:
    n, u0, p, Jp = d.jnorm, d.u0, d.ph, d.Jp
    a = d.npp
    s = d.dot(Jp, a)
    return float(d.dot(d.R(p, Jp, p), v) / n
                 - 3.0 / n * d.dot(v, d.n2ppp)
                 + 4.0 * u0 / n * d.dot(v, d.nJ(Jp, p) + d.nJ(p, Jp))
                 + u0 ** 2 / n * d.dot(d.J(v), d.J2p)
                 + 8.0 / n ** 3 * s * d.dot(v, a)
                 - 4.0 * u0 / n ** 3 * s * d.dot(v, d.J2p))


def Rcb_covector(base, lam, basis=None, data=None) -> np.ndarray:
    """Components of the (c,b) covector on the c-basis."""
    d, basis = _frame(base, lam, basis, data)
    return np.array([rho_cb_value(d, c) for c in basis.c_basis])


def Rbb_scalar(base, lam, data=None) -> float:
    d = data if data is not None else PointData(base, lam)
    d.require_regular()
    n, u0, p, Jp = d.jnorm, d.u0, d.ph, d.Jp
    a = d.npp
    s = d.dot(a, Jp)
    n2 = n * n
    return float(d.dot(d.R(Jp, p, Jp), p) / n2
                 - 10.0 / n ** 4 * s * s
                 + 6.0 / n2 * d.dot(a, a)
                 + 3.0 / n2 * d.dot(Jp, d.n2ppp)
                 - 2.0 * u0 / n2 * d.dot(Jp, d.nJ(p, Jp))
                 - 3.0 * u0 / n2 * d.dot(Jp, d.nJ(Jp, p))
                 - 6.0 * u0 / n2 * d.dot(d.J2p, a)
                 + u0 ** 2 / n2 * d.dot(d.J2p, d.J2p))


def Q_forms(base, lam, v_b: float, v_c, basis=None, data=None) -> tuple[float, float]:
    """``(Qtilde(v), Q(v))`` for ``v = v_b * b_dir + sum_k v_c[k] c_k``."""
    d, basis = _frame(base, lam, basis, data)
    v_c = np.asarray(v_c, float).reshape(-1)
    vc = v_c @ basis.c_basis if v_c.size else np.zeros(base.dim)
    v = v_b * basis.b_dir + vc

    def qt(w):
        Jw = d.J(w)
        return d.dot(Jw, Jw) - d.dot(Jw, d.Jp) ** 2 / d.jnorm ** 2

    qv = qt(v)
    return float(qv), float(qv - 0.75 * qt(vc))


# ---------------------------------------------------------------------------
# flow-differentiated maps


@dataclass
class PointwiseBlocks:
    """Pointwise (stencil-free) data at one node of a trajectory."""
    jnorm: float
    d1: float
    d2: float
    rho_bb: float
    rho_cb: np.ndarray
    Rcc: np.ndarray
    beta: np.ndarray       # beta(w_k)
    V1c: np.ndarray        # g(w_k, V1^h)


def pointwise_blocks(base, lam, c_basis, need_flow_terms=True) -> PointwiseBlocks:
    d = PointData(base, lam)
    d.require_regular()
    C = np.asarray(c_basis, float).reshape(-1, base.dim)
    basis = CanonicalSplitting(d.ph, d.Jp, d.jnorm, d.Jp / d.jnorm, C)
    rcc = Rcc_matrix(base, lam, basis, d)
    rcb = np.array([rho_cb_value(d, c) for c in C])
    rbb = Rbb_scalar(base, lam, d)
    if need_flow_terms:
        d1, d2 = invJnorm_derivs(base, lam, d)
        V1 = V1_vector(base, lam, d)
        beta = np.array([beta_form(base, lam, c, d) for c in C])
        V1c = np.array([d.dot(c, V1) for c in C])
    else:
        d1 = d2 = 0.0
        beta = V1c = np.zeros(len(C))
    return PointwiseBlocks(d.jnorm, d1, d2, rbb, rcb, rcc, beta, V1c)


def _deriv(values, i, h, weights, order, stride=1):
    idx = i + stride * np.arange(-3, 4)
    return np.tensordot(weights, values[idx], axes=(0, 0)) / (stride * h) ** order


class StackedBlocks:
    """Pointwise blocks on a uniform grid, stacked into arrays once."""

    def __init__(self, pw: list[PointwiseBlocks]):
        self.pw = pw
        self.beta = np.array([q.beta for q in pw])
        self.rbb = np.array([q.rho_bb for q in pw])
        self.d2 = np.array([q.d2 for q in pw])
        self.cbV1 = np.array([q.rho_cb @ q.V1c for q in pw])


def assemble_flow_terms(S: StackedBlocks, i: int, h: float, stride: int = 1):
    """(rho_ca, rho_aa) at node ``i`` of a uniform grid of pointwise blocks."""
    P = S.pw[i]
    n, d1 = P.jnorm, P.d1
    dbeta = _deriv(S.beta, i, h, D1_W, 1, stride) if S.beta.shape[1] else np.zeros(0)
    rho_ca = n * dbeta + P.Rcc @ P.V1c - n * d1 * P.rho_cb
    rho_aa = (-_deriv(S.cbV1, i, h, D1_W, 1, stride)
              + n * d1 * _deriv(S.rbb, i, h, D1_W, 1, stride)
              + rho_ca @ P.V1c
              - n * d1 * (P.rho_cb @ P.V1c)
              + n * P.d2 * P.rho_bb
              + n * _deriv(S.d2, i, h, D2_W, 2, stride))
    return rho_ca, float(rho_aa)


def Rca_Raa(base: ChartedBase, lam: CotangentPoint, basis: CanonicalSplitting | None = None,
            branch: str = "auto", step: float = STENCIL_STEP, tol: float = 1e-12):
    """``(rho_ca, rho_aa)`` at ``lam``.

    ``branch="analytic"`` (default for uniform fields) returns exact zeros;
    ``branch="general"`` integrates the extremal through ``lam`` over
    ``[-6 step, 6 step]`` with the transported c-basis and differentiates by
    7-point stencils, checking the result against the doubled step.
    """
    from .flow import integrate_extremal

    d = PointData(base, lam)
    if basis is None:
        basis = split_at(base, lam, d)
    d.require_regular()
    k = len(basis.c_basis)
    if branch == "auto":
        branch = "analytic" if base.uniform else "general"
    if branch == "analytic":
        return np.zeros(k), 0.0
    if branch != "general":
        raise ValueError(f"unknown branch {branch!r}")
    t = step * np.arange(-6, 7)
    traj = integrate_extremal(base, lam, 6 * step, tol=tol, t_eval=t, c_basis=basis.c_basis,
                              t_start=-6 * step)
    S = StackedBlocks([pointwise_blocks(base, traj.point(j), traj.wbasis[j]) for j in range(len(t))])
    ca1, aa1 = assemble_flow_terms(S, 6, step, 1)
    ca2, aa2 = assemble_flow_terms(S, 6, step, 2)
    scale = max(1.0, abs(aa1))
    if abs(aa1 - aa2) > STENCIL_REL_TOL * scale or np.any(np.abs(ca1 - ca2) > STENCIL_REL_TOL * max(1.0, np.max(np.abs(ca1), initial=0))):
        raise StencilAccuracyError(
            f"stencil step {step} too coarse: rho_aa {aa1!r} vs {aa2!r} at doubled step")
    return ca1, aa1


def curvature_maps(base: ChartedBase, lam: CotangentPoint, basis: CanonicalSplitting | None = None,
                   branch: str = "auto", step: float = STENCIL_STEP) -> CurvatureMaps:
    """All curvature maps at ``lam`` in the frame ``basis`` (default: :func:`split_at`)."""
    d = PointData(base, lam)
    if basis is None:
        basis = split_at(base, lam, d)
    rcc = Rcc_matrix(base, lam, basis, d)
    rcb = Rcb_covector(base, lam, basis, d)
    rbb = Rbb_scalar(base, lam, d)
    rca, raa = Rca_Raa(base, lam, basis, branch, step=step)
    return CurvatureMaps(raa, rbb, rcb, rca, rcc, basis)


def big_matrix(base, lam, basis=None, branch="auto") -> np.ndarray:
    M = curvature_maps(base, lam, basis, branch).big_matrix()
    check_big_matrix(M)
    return M
