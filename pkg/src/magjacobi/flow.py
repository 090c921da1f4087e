"""Reduced extremal (magnetic geodesic) flow, its linearization and the
brute-force conjugate-point oracle.

The reduced state is ``(x, p, z)`` with constant charge ``u0``; ``p`` is the
momentum covector on the base, so ``h = 1/2 g^{ij} p_i p_j``.  Equations::

    x' = g^{-1} p
    p'_k = -1/2 d_k g^{ij} p_i p_j + LORENTZ_SIGN * u0 * Omega_ki x'^i
    z' = -theta(x')

Projected to the base this is ``D_t x' = -u0 J x'``.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from .geometry import ChartedBase, GeometryError, _inverse_jets, first_order
from .splitting import CotangentPoint, NotRegularError, REGULARITY_TOL

# Sign in front of the Lorentz term.  With Omega = d(theta) and p the reduced
# momentum p_x - u0 theta, the Hamiltonian flow of 1/2 |p_x - u0 theta|^2 gives
# +1; the oracle-vs-Jacobi agreement on a non-uniform field depends on it.
LORENTZ_SIGN = 1.0

MULT_REL_TOL = 1e-7
# smallest relative tolerance handed to the Runge-Kutta step control
RTOL_FLOOR = 100 * np.finfo(float).eps
ACCEPT_REL_TOL = 1e-6


class ConservationWarning(RuntimeWarning):
    """Hamiltonian drift above the requested tolerance even at the tightest step control."""


class ChartExitError(RuntimeError):
    pass


@dataclass
class ExtremalTrajectory:
    t: np.ndarray
    x: np.ndarray          # (N, m)
    p: np.ndarray          # (N, m)
    z: np.ndarray          # (N,)
    u0: float
    h: np.ndarray          # (N,) values of the Hamiltonian
    wbasis: np.ndarray | None = None   # (N, m-2, m) transported c-basis, if requested
    sol: object = None     # dense output of the forward integration

    def point(self, i: int) -> CotangentPoint:
        return CotangentPoint(self.x[i].copy(), self.p[i].copy(), self.u0)

    @property
    def h_drift(self) -> float:
        return float(np.max(np.abs(self.h - 0.5)))


@dataclass
class ConjugateReport:
    times: list
    multiplicities: list
    method: str = ""
    t_samples: np.ndarray = field(default=None, repr=False)
    values: np.ndarray = field(default=None, repr=False)   # scaled determinant samples

    @property
    def count(self) -> int:
        return int(sum(self.multiplicities))

    def as_list(self):
        return [{"t": float(t), "mult": int(k)} for t, k in zip(self.times, self.multiplicities)]


# ---------------------------------------------------------------------------
# right-hand sides


def _hamiltonian(base, x, p):
    return 0.5 * p @ np.linalg.solve(base.metric(x), p)


def extremal_rhs(base: ChartedBase, state, u0, fo=None):
    """Derivative of ``state = (x, p, z)``."""
    m = base.dim
    x, p = state[:m], state[m:2 * m]
    fo = first_order(base, x) if fo is None else fo
    xd = fo.ginv @ p
    pd = -0.5 * np.einsum("ijk,i,j->k", fo.dginv, p, p) + LORENTZ_SIGN * u0 * (fo.jet.om @ xd)
    zd = -np.asarray(base.potential(x)) @ xd
    return np.concatenate([xd, pd, [zd]])


def _transport_rhs(fo, xd, ph, u0, W):
    """Transport of the c-basis rows W: D_t w = -(u0/2) J w - A(w)/(2|Jp|) Jp."""
    g = fo.jet.g
    Jp = fo.J @ ph
    n = np.sqrt(Jp @ g @ Jp)
    npp = np.einsum("ijk,j,k->i", fo.nablaJ, ph, ph)
    J2p = fo.J @ Jp
    a_cov = (2.0 / n) * (g @ npp) - (u0 / n) * (g @ J2p)     # A(w) = a_cov . w
    A = W @ a_cov
    Dw = -0.5 * u0 * (W @ fo.J.T) - np.outer(A / (2.0 * n), Jp)
    return Dw - np.einsum("ijk,j,rk->ri", fo.gamma, xd, W)


def _check_chart(base, x):
    if not np.all(np.isfinite(x)):
        raise ChartExitError("state left the chart (non-finite)")
    g = base.metric(x)
    if not np.all(np.isfinite(g)) or np.linalg.eigvalsh(0.5 * (g + g.T))[0] <= 0:
        raise ChartExitError(f"state left the chart at x={x}")


def _project_basis(base, x, p, W):
    """Project rows of W off p^h, Jp^h and re-orthonormalize (Gram-Schmidt in g)."""
    fo = first_order(base, x)
    g = fo.jet.g
    ph = fo.ginv @ p
    Jp = fo.J @ ph
    frame = [ph / np.sqrt(ph @ g @ ph), Jp / np.sqrt(Jp @ g @ Jp)]
    out = []
    for w in W:
        for _ in range(2):
            for f in frame + out:
                w = w - (f @ g @ w) * f
        out.append(w / np.sqrt(w @ g @ w))
    return np.array(out).reshape(W.shape)


def _solve(fun, t_span, y0, tol, t_eval):
    try:
        sol = solve_ivp(fun, t_span, y0, method="DOP853", rtol=tol, atol=tol * 1e-2,
                        t_eval=t_eval, dense_output=True)
    except GeometryError as exc:
        raise ChartExitError(f"state left the chart: {exc}") from exc
    if sol.status != 0:
        raise ChartExitError(f"integration failed: {sol.message}")
    return sol


def integrate_extremal(base: ChartedBase, lam0: CotangentPoint, T: float, tol: float = 1e-11,
                       t_eval=None, c_basis=None, t_start: float = 0.0) -> ExtremalTrajectory:
    """Integrate the extremal through ``lam0`` on ``[t_start, T]`` (``t_start <= 0``).

    If ``c_basis`` (rows) is given, it is transported along the flow together
    with the extremal and re-projected at every output time.  ``tol`` is
    both the initial relative step tolerance and the bound on
    ``|h - 1/2|`` over the output grid: when the drift exceeds it, the
    integration is repeated with the step tolerance divided by 10, down to
    ``RTOL_FLOOR`` (a :class:`ConservationWarning` is issued if even that
    does not suffice).
    """
    if not T > 0:
        raise ValueError("T must be positive")
    m = base.dim
    u0 = float(lam0.u0)
    k = 0 if c_basis is None else len(c_basis)
    y0 = np.concatenate([lam0.x, lam0.p, [0.0], np.asarray(c_basis, float).ravel() if k else []])

    def fun(t, y):
        x = y[:m]
        fo = first_order(base, x)
        d = extremal_rhs(base, y[:2 * m + 1], u0, fo)
        if k:
            W = y[2 * m + 1:].reshape(k, m)
            d = np.concatenate([d, _transport_rhs(fo, d[:m], fo.ginv @ y[m:2 * m], u0, W).ravel()])
        return d

    if t_eval is None:
        nt = max(2, int(np.ceil((T - t_start) / 0.01)) + 1)
        t_eval = np.linspace(t_start, T, nt)
    t_eval = np.asarray(t_eval, float)
    fwd = t_eval[t_eval >= 0]
    bwd = t_eval[t_eval < 0][::-1]
    _check_chart(base, lam0.x)
    # step control bounds the local error only; tighten it until the
    # Hamiltonian stays within tol of 1/2 on the output grid
    rtol = max(tol, RTOL_FLOOR)
    while True:
        sol_f = _solve(fun, (0.0, T), y0, rtol, fwd)
        ys = [sol_f.y.T]
        ts = [sol_f.t]
        if bwd.size:
            sol_b = _solve(fun, (0.0, t_start), y0, rtol, bwd)
            ys.insert(0, sol_b.y.T[::-1])
            ts.insert(0, sol_b.t[::-1])
        t = np.concatenate(ts)
        Y = np.concatenate(ys)
        x, p, z = Y[:, :m], Y[:, m:2 * m], Y[:, 2 * m]
        for xi in x[:: max(1, len(x) // 20)]:
            _check_chart(base, xi)
        h = np.array([_hamiltonian(base, xi, pi) for xi, pi in zip(x, p)])
        drift = float(np.max(np.abs(h - 0.5)))
        if drift < tol:
            break
        if rtol <= RTOL_FLOOR:
            warnings.warn(f"Hamiltonian drift {drift:.3g} exceeds tol {tol:.3g}", ConservationWarning)
            break
        rtol = max(rtol / 10.0, RTOL_FLOOR)
    W = None if c_basis is None else np.zeros((len(t), 0, m))
    if k:
        W = np.array([_project_basis(base, x[i], p[i], Y[i, 2 * m + 1:].reshape(k, m))
                      for i in range(len(t))])
    return ExtremalTrajectory(t, x, p, z, u0, h, W, sol_f)


def write_trajectory_csv(traj: ExtremalTrajectory, path) -> None:
    m = traj.x.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{i}" for i in range(m)] + [f"p{i}" for i in range(m)] + ["z", "h"])
        for i in range(len(traj.t)):
            w.writerow([repr(float(traj.t[i]))] + [repr(float(v)) for v in traj.x[i]]
                       + [repr(float(v)) for v in traj.p[i]] + [repr(float(traj.z[i])), repr(float(traj.h[i]))])


# ---------------------------------------------------------------------------
# variational flow and the oracle


def variational_rhs(base: ChartedBase, state, u0, V, du0):
    """Linearization of :func:`extremal_rhs` applied to the columns of ``V``.

    ``V`` has shape ``(2m+1, k)`` (rows ``dx, dp, dz``); ``du0`` holds the
    constant charge variation of each column.
    """
    m = base.dim
    x, p = state[:m], state[m:2 * m]
    jet = base.jet(x)
    ginv, dginv, d2ginv = _inverse_jets(jet)
    om, dom = jet.om, jet.dom
    s = LORENTZ_SIGN
    dx, dp = V[:m], V[m:2 * m]
    xd = ginv @ p
    dxd = np.einsum("ijl,j,lc->ic", dginv, p, dx) + ginv @ dp
    dpd = (-0.5 * np.einsum("ijkl,i,j,lc->kc", d2ginv, p, p, dx)
           - np.einsum("ijk,i,jc->kc", dginv, p, dp)
           + s * np.outer(om @ xd, du0)
           + s * u0 * np.einsum("kil,i,lc->kc", dom, xd, dx)
           + s * u0 * om @ dxd)
    th = np.asarray(base.potential(x))
    dth = base.dpotential(x)
    dzd = -np.einsum("il,i,lc->c", dth, xd, dx) - th @ dxd
    return np.vstack([dxd, dpd, dzd[None, :]])


def initial_variations(base: ChartedBase, lam0: CotangentPoint):
    """The n-1 initial variations used by the oracle: m-1 momentum variations
    orthogonal to ``p`` (in ``g^{-1}``) and one unit charge variation."""
    m = base.dim
    ginv = np.linalg.inv(base.metric(lam0.x))
    p = lam0.p
    # g^{-1}-orthonormal complement of p among covectors
    basis = [p / np.sqrt(p @ ginv @ p)]
    cols = []
    for k in range(m):
        e = np.zeros(m)
        e[k] = 1.0
        w = e
        for _ in range(2):
            for f in basis:
                w = w - (f @ ginv @ w) * f
        nw = np.sqrt(w @ ginv @ w)
        if nw > 1e-6 and len(basis) < m:
            basis.append(w / nw)
            cols.append(w / nw)
    V0 = np.zeros((2 * m + 1, m))
    du0 = np.zeros(m)
    for c, dp in enumerate(cols):
        V0[m:2 * m, c] = dp
    du0[m - 1] = 1.0
    return V0, du0


def _scaled(M):
    # global scaling only; per-column normalization would hide a column that
    # vanishes at a conjugate time
    s = np.max(np.abs(M))
    return M / s if s > 0 else M


def oracle_matrix_fn(base: ChartedBase, lam0: CotangentPoint, T: float, tol: float = 1e-12):
    """Dense-output callable ``t -> (n x n) matrix [position variations | velocity]``."""
    m = base.dim
    u0 = float(lam0.u0)
    V0, du0 = initial_variations(base, lam0)
    y0 = np.concatenate([lam0.x, lam0.p, [0.0], V0.ravel()])
    k = V0.shape[1]

    def fun(t, y):
        st = y[:2 * m + 1]
        V = y[2 * m + 1:].reshape(2 * m + 1, k)
        return np.concatenate([extremal_rhs(base, st, u0), variational_rhs(base, st, u0, V, du0).ravel()])

    _check_chart(base, lam0.x)
    sol = _solve(fun, (0.0, T), y0, tol, None)

    def mat(t):
        y = sol.sol(t)
        st = y[:2 * m + 1]
        V = y[2 * m + 1:].reshape(2 * m + 1, k)
        vel = extremal_rhs(base, st, u0)
        pos = np.vstack([V[:m], V[2 * m:2 * m + 1]])        # (dx, dz) per variation
        v = np.concatenate([vel[:m], vel[2 * m:2 * m + 1]])
        return np.column_stack([pos, v / np.linalg.norm(v)])

    return mat, sol


def find_rank_drops(mat_fn, T: float, dt: float = 0.01, t_min: float | None = None,
                    method: str = "") -> ConjugateReport:
    """Times in (0, T] where the square matrix ``mat_fn(t)`` loses rank.

    Candidates are sign changes of the (globally scaled) determinant and local
    minima of ``sigma_min / sigma_max`` on a uniform grid; each candidate is
    refined by bounded minimization of the smallest relative singular value.
    Multiplicity is the number of singular values below ``MULT_REL_TOL`` times
    the largest one.
    """
    t_min = 0.5 * dt if t_min is None else t_min
    n = max(2, int(np.ceil((T - t_min) / dt)) + 1)
    ts = np.linspace(t_min, T, n)
    dets = np.empty(n)
    rel = np.empty(n)
    for i, t in enumerate(ts):
        M = _scaled(mat_fn(t))
        dets[i] = np.linalg.det(M)
        sv = np.linalg.svd(M, compute_uv=False)
        rel[i] = sv[-1] / sv[0]

    def srel(t):
        sv = np.linalg.svd(_scaled(mat_fn(t)), compute_uv=False)
        return sv[-1] / sv[0]

    cand = set()
    for i in range(n - 1):
        if dets[i] == 0.0 or dets[i] * dets[i + 1] < 0:
            cand.add(i)
    for i in range(1, n - 1):
        if rel[i] <= rel[i - 1] and rel[i] <= rel[i + 1]:
            cand.add(i)
    if rel[-1] < ACCEPT_REL_TOL:
        cand.add(n - 1)
    roots = []
    for i in sorted(cand):
        lo, hi = ts[max(i - 1, 0)], ts[min(i + 2, n - 1)]
        res = minimize_scalar(srel, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12, "maxiter": 500})
        tr, val = float(res.x), float(res.fun)
        if val > ACCEPT_REL_TOL:
            continue
        if tr <= t_min or any(abs(tr - r) < 1e-6 for r in roots):
            continue
        roots.append(tr)
    roots.sort()
    mults = []
    for tr in roots:
        sv = np.linalg.svd(_scaled(mat_fn(tr)), compute_uv=False)
        mults.append(int(np.sum(sv < MULT_REL_TOL * sv[0])) or 1)
    return ConjugateReport(roots, mults, method, ts, dets)


def oracle_conjugate_times(base: ChartedBase, lam0: CotangentPoint, T: float,
                           tol: float = 1e-12, dt: float = 0.01) -> ConjugateReport:
    """Conjugate times on (0, T] from rank drops of the projected endpoint map."""
    lam0.check_level(base)
    fo = first_order(base, lam0.x)
    Jp = fo.J @ (fo.ginv @ lam0.p)
    if not np.sqrt(Jp @ fo.jet.g @ Jp) > REGULARITY_TOL:
        raise NotRegularError("not D-regular: J_q p = 0")
    mat, _ = oracle_matrix_fn(base, lam0, T, tol)
    return find_rank_drops(mat, T, dt, method="oracle")
