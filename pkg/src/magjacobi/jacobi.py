"""Structural (intrinsic Jacobi) equations along an extremal and conjugate
points from the moving frame.

The frame ``X = [E_a, E_b, E_c..., F_a, F_b, F_c...]`` lives in coordinates
of a fixed 2N-dimensional symplectic space (N = n - 1) and solves
``X' = X M(t)`` with::

    M = [[A, -R], [C, -A^T]],   A = e_b e_a^T,   C = diag(0, 1, 1, ...)

where R(t) is the big curvature matrix in the order (a, b, c...).  Column
by column this is E_a' = E_b, E_b' = F_b, E_c' = F_c, F_a' = -E R(., a),
F_b' = -E R(., b) - F_a, F_c' = -E R(., c).  With X(0) = I, t is conjugate
to 0 exactly when the lower N x N block of E(t) is singular.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .curvature import StackedBlocks, assemble_big, assemble_flow_terms, pointwise_blocks
from .flow import ConjugateReport, find_rank_drops, integrate_extremal
from .geometry import ChartedBase, J_at
from .splitting import CotangentPoint, NotRegularError, split_at

# |Jp^h| below this anywhere along the extremal means it meets the degenerate
# locus; the curvature maps blow up there and the structural equation is void.
CURVE_REGULARITY_TOL = 1e-6


@dataclass
class TransportState:
    t: np.ndarray
    w: np.ndarray     # (len(t), m-2, m)


@dataclass
class JacobiFrame:
    """Dense solution of the structural equation; ``X(t)`` is 2N x 2N."""
    N: int
    sol: object

    def X(self, t) -> np.ndarray:
        return self.sol.sol(t).reshape(2 * self.N, 2 * self.N)

    def E(self, t) -> np.ndarray:
        return self.X(t)[:, :self.N]

    def F(self, t) -> np.ndarray:
        return self.X(t)[:, self.N:]

    def d(self, t) -> float:
        """Determinant of [E(t) | E(0)] up to sign: det of the lower block of E(t)."""
        return float(np.linalg.det(self.E(t)[self.N:]))


def symplectic_form(N: int) -> np.ndarray:
    I = np.eye(N)
    Z = np.zeros((N, N))
    return np.block([[Z, I], [-I, Z]])


def darboux_defect(frame: JacobiFrame, t) -> float:
    """Max deviation of ``X^T Omega X`` from ``Omega`` (covers all three Darboux relations)."""
    Om = symplectic_form(frame.N)
    X = frame.X(t)
    return float(np.max(np.abs(X.T @ Om @ X - Om)))


def structural_matrix(R: np.ndarray) -> np.ndarray:
    N = R.shape[0]
    A = np.zeros((N, N))
    A[1, 0] = 1.0
    C = np.eye(N)
    C[0, 0] = 0.0
    return np.block([[A, -R], [C, -A.T]])


def structural_integrate(R_source, T: float, N: int | None = None, tol: float = 1e-12) -> JacobiFrame:
    """Integrate ``X' = X M(t)``, ``X(0) = I`` on ``[0, T]``.

    ``R_source`` is either a constant symmetric matrix or a callable
    ``t -> (N x N)`` big curvature matrix in the order (a, b, c...).
    """
    if callable(R_source):
        Rf = R_source
        N = N if N is not None else np.asarray(Rf(0.0)).shape[0]
    else:
        R0 = np.asarray(R_source, float)
        N = R0.shape[0]
        Rf = lambda t: R0
    if N < 2:
        raise ValueError("need at least the a and b directions")

    def fun(t, y):
        X = y.reshape(2 * N, 2 * N)
        return (X @ structural_matrix(np.asarray(Rf(t)))).ravel()

    sol = solve_ivp(fun, (0.0, T), np.eye(2 * N).ravel(), method="DOP853",
                    rtol=tol, atol=tol * 1e-2, dense_output=True)
    if sol.status != 0:
        raise RuntimeError(f"structural integration failed: {sol.message}")
    return JacobiFrame(N, sol)


def conjugate_from_frames(frame: JacobiFrame, T: float, dt: float = 0.01) -> ConjugateReport:
    """Conjugate times on (0, T] as rank drops of the lower block of E(t)."""
    N = frame.N
    return find_rank_drops(lambda t: frame.E(t)[N:], T, dt, method="jacobi")


def transport_basis(base: ChartedBase, lam0: CotangentPoint, T: float, t_eval=None,
                    c_basis=None, tol: float = 1e-12) -> TransportState:
    """Transport of the initial c-basis (default: the one of ``split_at``) along the extremal."""
    if c_basis is None:
        c_basis = split_at(base, lam0).c_basis
    traj = integrate_extremal(base, lam0, T, tol=tol, t_eval=t_eval, c_basis=c_basis)
    return TransportState(traj.t, traj.wbasis)


@dataclass
class CurvatureSamples:
    t: np.ndarray
    big: np.ndarray       # (len(t), N, N)


def _jp_norm(base: ChartedBase, x, p) -> float:
    g = np.asarray(base.metric(x), float)
    Jp = J_at(base, x) @ np.linalg.solve(g, p)
    return float(np.sqrt(Jp @ g @ Jp))


def _check_curve_regular(base: ChartedBase, traj) -> None:
    """Raise if ``|Jp^h|`` gets within ``CURVE_REGULARITY_TOL`` of zero on ``t >= 0``.

    Grid minima of ``|Jp^h|`` that are small compared with the variation to
    their neighbours are refined on the dense solution, so a transversal
    crossing of the degenerate locus between nodes is caught.  Near such a
    crossing ``|Jp^h|`` is V-shaped and the node value is bounded by the
    neighbour differences; flat stretches far from zero are skipped.
    """
    m = base.dim

    def jn(t):
        y = traj.sol.sol(t)
        return _jp_norm(base, y[:m], y[m:2 * m])

    t = traj.t
    vals = np.array([_jp_norm(base, traj.x[i], traj.p[i]) for i in range(len(t))])
    for i in range(len(t)):
        if t[i] < 0:
            continue
        lo, hi = max(i - 1, 0), min(i + 1, len(t) - 1)
        if vals[i] > vals[lo] or vals[i] > vals[hi]:
            continue
        spread = max(vals[lo], vals[hi]) - vals[i]
        best = vals[i]
        a, b = max(t[lo], 0.0), t[hi]
        if b > a and vals[i] <= 2 * spread + CURVE_REGULARITY_TOL:
            best = min(best, minimize_scalar(jn, bounds=(a, b), method="bounded",
                                             options={"xatol": 1e-12}).fun)
        if best < CURVE_REGULARITY_TOL:
            raise NotRegularError(f"not D-regular: J_q p = 0 along the extremal near t = {t[i]:.6g}")


def curvature_along(base: ChartedBase, lam0: CotangentPoint, T: float, dt: float = 0.01,
                    c_basis=None, tol: float = 1e-12, general: bool | None = None) -> CurvatureSamples:
    """Big curvature matrices on the grid ``0, dt, ..., T`` in the transported basis.

    For non-uniform fields (or ``general=True``) the grid is padded by three
    nodes on each side so the (c,a) and (a,a) blocks can be differentiated
    along the flow.
    """
    if c_basis is None:
        c_basis = split_at(base, lam0).c_basis
    general = (not base.uniform) if general is None else general
    nt = int(np.ceil(T / dt - 1e-9))
    t = dt * np.arange(-3 if general else 0, nt + (4 if general else 1))
    traj = integrate_extremal(base, lam0, float(t[-1]), tol=tol, t_eval=t, c_basis=c_basis,
                              t_start=float(t[0]))
    _check_curve_regular(base, traj)
    pw = [pointwise_blocks(base, traj.point(j), traj.wbasis[j], need_flow_terms=general)
          for j in range(len(t))]
    k = len(c_basis)
    S = StackedBlocks(pw)
    bigs = []
    idx = range(3, len(t) - 3) if general else range(len(t))
    for j in idx:
        q = pw[j]
        if general:
            rca, raa = assemble_flow_terms(S, j, dt)
        else:
            rca, raa = np.zeros(k), 0.0
        bigs.append(assemble_big(raa, q.rho_bb, q.rho_cb, rca, q.Rcc))
    tt = t[3:-3] if general else t
    return CurvatureSamples(tt, np.array(bigs))


def jacobi_conjugate_times(base: ChartedBase, lam0: CotangentPoint, T: float, dt: float = 0.01,
                           tol: float = 1e-12, c_basis=None, return_frame: bool = False):
    """End-to-end conjugate times from the structural equation along the extremal."""
    lam0.check_level(base)
    split_at(base, lam0)  # regularity check at the start
    samples = curvature_along(base, lam0, T, dt, c_basis, tol)
    spline = CubicSpline(samples.t, samples.big, axis=0)
    frame = structural_integrate(spline, T, samples.big.shape[1], tol)
    report = conjugate_from_frames(frame, T, dt)
    if return_frame:
        return report, frame, samples
    return report


def write_determinant_csv(path, t, d, D=None) -> None:
    """CSV with columns ``t, d`` (structural frame) and optionally ``D`` (oracle)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "d"] + (["D"] if D is not None else []))
        for i in range(len(t)):
            row = [repr(float(t[i])), repr(float(d[i]))]
            if D is not None:
                row.append(repr(float(D[i])))
            w.writerow(row)
