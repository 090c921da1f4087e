"""Model functions, the closed-form conjugate count Z_T and the two-sided
comparison bound for uniform fields (``nabla J = 0``).

The model curve with constant curvature blocks ``R(b,b) = omega_b`` and
``R(c,c) = omega_c Id`` (all other blocks zero) has conjugate points exactly
at the zeros of ``phi_{omega_b}(t) psi_{omega_c}(t)^(n-3)`` on ``(0, T]``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from .flow import ConjugateReport
from .geometry import ChartedBase, local_geometry
from .splitting import CotangentPoint, PointData, split_at

# relative slack used when a count boundary (an integer multiple, or the
# horizon T itself) coincides with a zero up to rounding
BOUNDARY_REL_TOL = 1e-12
TAN_ROOT_TOL = 1e-12
# relative tolerance when placing observed conjugate times against the
# endpoints of the intervals of the interval statements
TIME_REL_TOL = 1e-6
SAMPLE_MARGIN = 0.01
DEFAULT_SAMPLES = 2000


class ComparisonScopeError(ValueError):
    """The comparison bound only applies to uniform fields."""


# ---------------------------------------------------------------------------
# model functions


def phi(omega: float, t):
    """``phi_omega(t)``; real for every omega (hyperbolic rewrite when omega < 0).

    ``phi_0(t) = t^4``.  For ``omega < 0`` the defining expression with
    ``sqrt(omega) = i s`` is already real and equals
    ``-sinh(x) (s t cosh(x) - 2 sinh(x))`` with ``x = s t / 2``.
    """
    t = np.asarray(t, float)
    if omega == 0:
        return t ** 4
    x = 0.5 * math.sqrt(abs(omega)) * t
    if omega > 0:
        return 2.0 * np.sin(x) * _xcos_minus_sin(x, 1.0)
    return -2.0 * np.sinh(x) * _xcos_minus_sin(x, -1.0)


def _xcos_minus_sin(x, sign):
    """``x cos x - sin x`` (sign=1) or ``x cosh x - sinh x`` (sign=-1), with a
    Taylor series near 0 where the direct formula cancels."""
    x = np.asarray(x, float)
    if sign > 0:
        direct = x * np.cos(x) - np.sin(x)
    else:
        direct = x * np.cosh(x) - np.sinh(x)
    x2 = sign * x * x
    # sum_k (-1)^k x^(2k+1) (1/(2k)! - 1/(2k+1)!) = -x^3/3 + x^5/30 - x^7/840 + x^9/45360
    series = x ** 3 * (-1.0 / 3 + x2 * (1.0 / 30 + x2 * (-1.0 / 840 + x2 * (1.0 / 45360))))
    if sign < 0:
        series = -series
    return np.where(np.abs(x) < 0.1, series, direct)


def psi(omega: float, t):
    """``psi_omega(t) = sin(sqrt(omega) t)``, ``t`` at omega = 0 and
    ``sinh(sqrt(-omega) t)`` for omega < 0 (the constant factor i is dropped)."""
    t = np.asarray(t, float)
    if omega == 0:
        return t.copy()
    if omega > 0:
        return np.sin(math.sqrt(omega) * t)
    return np.sinh(math.sqrt(-omega) * t)


# ---------------------------------------------------------------------------
# closed-form count


def _floor(v: float) -> int:
    return int(math.floor(v * (1.0 + BOUNDARY_REL_TOL)))


def tan_root(k: int, tol: float = TAN_ROOT_TOL) -> float:
    """The root of ``tan y = y`` in ``(k pi, k pi + pi/2)``, ``k >= 1``."""
    if k < 1:
        raise ValueError("branch index must be >= 1")
    # f(y) = sin y - y cos y has opposite signs at the branch endpoints
    return brentq(lambda y: math.sin(y) - y * math.cos(y), k * math.pi, k * math.pi + 0.5 * math.pi,
                  xtol=tol, rtol=4 * np.finfo(float).eps)


def count_tan_roots(Y: float) -> int:
    """Number of roots of ``tan y = y`` in ``(0, Y]``."""
    if Y <= 0:
        return 0
    count = 0
    k = 1
    while k * math.pi < Y * (1.0 + BOUNDARY_REL_TOL):
        if Y >= k * math.pi + 0.5 * math.pi or tan_root(k) <= Y * (1.0 + BOUNDARY_REL_TOL):
            count += 1
        k += 1
    return count


def Z_T(omega_b: float, omega_c: float, T: float, n: int) -> int:
    """Closed-form number of zeros of ``phi_{omega_b} psi_{omega_c}^(n-3)`` on ``(0, T]``.

    The zero at t = 0 is excluded.  In dimension n = 3 ``omega_c`` is ignored.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if n < 3:
        raise ValueError("n must be at least 3")
    total = 0
    if omega_b > 0:
        sb = math.sqrt(omega_b)
        total += _floor(T * sb / (2.0 * math.pi)) + count_tan_roots(0.5 * sb * T)
    if n > 3 and omega_c > 0:
        total += (n - 3) * _floor(T * math.sqrt(omega_c) / math.pi)
    return total


def _direct_zero_count(f, T: float, first_scale: float) -> int:
    """Zeros of a function with simple zeros on ``(0, T]`` by scanning and bracketing.

    ``first_scale`` bounds the spacing of consecutive zeros from below; the
    grid is 50 times finer than that.
    """
    t_end = T * (1.0 + 1e-9)
    n_pts = max(200, int(50 * t_end / first_scale) + 2)
    t = np.linspace(t_end / n_pts * 1e-3, t_end, n_pts)
    v = f(t)
    roots = []
    for i in range(len(t) - 1):
        if v[i] == 0.0:
            roots.append(t[i])
        elif v[i] * v[i + 1] < 0:
            roots.append(brentq(f, t[i], t[i + 1], xtol=1e-15, rtol=1e-15))
    if v[-1] == 0.0:
        roots.append(t[-1])
    return sum(1 for r in roots if r <= T * (1.0 + BOUNDARY_REL_TOL))


def Z_T_direct(omega_b: float, omega_c: float, T: float, n: int) -> int:
    """``Z_T`` by direct root finding of each factor, counted with multiplicity.

    The zeros of ``phi`` on ``t > 0`` are simple (its two factors never vanish
    together), and each zero of ``psi`` carries multiplicity ``n - 3``.
    """
    total = 0
    if omega_b > 0:
        total += _direct_zero_count(lambda t: phi(omega_b, t), T, math.pi / math.sqrt(omega_b))
    elif omega_b < 0:
        total += _direct_zero_count(lambda t: phi(omega_b, t), T, T)
    if n > 3:
        if omega_c > 0:
            total += (n - 3) * _direct_zero_count(lambda t: psi(omega_c, t), T,
                                                  math.pi / math.sqrt(omega_c))
        elif omega_c < 0:
            total += (n - 3) * _direct_zero_count(lambda t: psi(omega_c, t), T, T)
    return total


# ---------------------------------------------------------------------------
# constants


@dataclass
class ComparisonBounds:
    """Curvature bounds ``c_b <= C_b``, ``c_c <= C_c`` and Q-form bounds
    ``k_b <= K_b``, ``k_c <= K_c`` for the charge ``u0bar`` and horizon ``T``.

    In dimension n = 3 there is no c-factor; the c-constants are then ``None``.
    """
    c_b: float
    C_b: float
    k_b: float
    K_b: float
    c_c: float | None
    C_c: float | None
    k_c: float | None
    K_c: float | None
    u0bar: float
    T: float
    n: int
    empirical: bool = False
    model: str = "custom"

    def __post_init__(self):
        if not self.c_b <= self.C_b or not self.k_b <= self.K_b:
            raise ValueError("lower b-bounds exceed upper b-bounds")
        if not self.K_b > 0:
            raise ValueError("K_b must be positive")
        if self.n > 3:
            if None in (self.c_c, self.C_c, self.k_c, self.K_c):
                raise ValueError("c-bounds are required when n > 3")
            if not self.c_c <= self.C_c or not self.k_c <= self.K_c:
                raise ValueError("lower c-bounds exceed upper c-bounds")
            if not self.K_c > 0:
                raise ValueError("K_c must be positive")

    def omegas(self) -> tuple[tuple[float, float], tuple[float, float]]:
        """``((omega_b, omega_c) lower, (omega_b, omega_c) upper)``; c-entries are 0 for n = 3."""
        u2 = self.u0bar ** 2
        lo_c = 0.0 if self.n == 3 else self.c_c + self.k_c * u2
        hi_c = 0.0 if self.n == 3 else self.C_c + self.K_c * u2
        return (self.c_b + self.k_b * u2, lo_c), (self.C_b + self.K_b * u2, hi_c)


def _analytic_constants(base: ChartedBase):
    """(curvature, k_b, k_c) for catalog models with constant curvature and J^2 = -B^2 Id."""
    p = base.params
    if base.name == "flat2d":
        return 0.0, p["B"] ** 2, None
    if base.name == "sphere2d":
        return 1.0 / p["r"] ** 2, p["B"] ** 2, None
    if base.name == "hyperbolic2d":
        return -1.0 / p["r"] ** 2, p["B"] ** 2, None
    if base.name == "flat4d_kahler":
        return 0.0, p["B"] ** 2, 0.25 * p["B"] ** 2
    if base.name == "flat2d_varfield" and p.get("b1", 0.0) == 0.0:
        return 0.0, p["b0"] ** 2, None
    return None


def _sample_matrices(base: ChartedBase, rng, center, radius):
    """Matrices of ``g(R(p,v)p,v)`` and ``Q`` on ``V_b + V_c`` at a random regular point."""
    m = base.dim
    while True:
        x = center + radius * rng.uniform(-1.0, 1.0, m)
        g = base.metric(x)
        p = rng.normal(size=m)
        p = p / math.sqrt(p @ np.linalg.solve(g, p))
        lam = CotangentPoint(x, p, 1.0)
        d = PointData(base, lam, local_geometry(base, x))
        if d.jnorm > 1e-6:
            break
    sp = split_at(base, lam, d)
    frame = np.vstack([sp.b_dir[None, :], sp.c_basis])
    k = len(frame)
    Rm = np.array([[d.dot(d.R(d.ph, frame[i], d.ph), frame[j]) for j in range(k)] for i in range(k)])
    Rm = 0.5 * (Rm + Rm.T)
    # Q(v) = Qt(v) - 3/4 Qt(v_c), Qt(v) = |Jv|^2 - g(Jv, Jp)^2 / |Jp|^2
    Jf = np.array([d.J(f) for f in frame])
    G = Jf @ d.geo.g @ Jf.T
    s = Jf @ d.geo.g @ d.Jp
    Qt = G - np.outer(s, s) / d.jnorm ** 2
    Qm = Qt.copy()
    Qm[1:, 1:] -= 0.75 * Qt[1:, 1:]
    return Rm, Qm


def _split_bounds(mats, upper: bool):
    """Constants ``(b, c)`` with ``M - diag(b, c Id)`` PSD (lower) or NSD (upper) for every M.

    Every candidate below is a valid pair; the one with the largest
    ``b + (n-3) c`` (after the sign flip for upper bounds) is returned.  The
    candidates are the common bound ``b = c = min eig`` and, for a few shifts
    of ``c`` below the smallest c-block eigenvalue, the largest ``b`` allowed
    by the Schur complement of the c-block.
    """
    sgn = -1.0 if upper else 1.0
    mats = [sgn * M for M in mats]
    if mats[0].shape[0] == 1:
        return float(sgn * min(M[0, 0] for M in mats)), None
    k = mats[0].shape[0] - 1
    lam_all = min(np.linalg.eigvalsh(M)[0] for M in mats)
    cands = [(lam_all, lam_all)]
    c0 = min(np.linalg.eigvalsh(M[1:, 1:])[0] for M in mats)
    scale = max(1.0, max(np.abs(M).max() for M in mats))
    for shift in (1e-9, 1e-6, 1e-3, 1e-2, 1e-1, 1.0):
        c = c0 - shift * scale
        b = min(M[0, 0] - M[0, 1:] @ np.linalg.solve(M[1:, 1:] - c * np.eye(k), M[0, 1:])
                for M in mats)
        cands.append((b, c))
    b, c = max(cands, key=lambda bc: bc[0] + k * bc[1])
    return float(sgn * b), float(sgn * c)


def _widen(lo: float, hi: float, margin: float) -> tuple[float, float]:
    return lo - margin * abs(lo), hi + margin * abs(hi)


def model_constants(base: ChartedBase, u0bar: float, T: float = 1.0, *, samples: int = DEFAULT_SAMPLES,
                    seed: int = 0, center=None, radius: float = 1.0,
                    force_sampling: bool = False) -> ComparisonBounds:
    """Constants of the comparison bound for a uniform-field base.

    Catalog models get exact constants.  Otherwise ``samples`` random regular
    points in the box ``center +- radius`` are drawn, the curvature and
    Q-form matrices on ``V_b + V_c`` are bounded (jointly, via the Schur
    complement of the c-block) and the result is widened by 1%.
    """
    if not base.uniform:
        raise ComparisonScopeError("comparison requires ∇J = 0")
    n = base.dim + 1
    const = None if force_sampling else _analytic_constants(base)
    if const is not None:
        curv, kb, kc = const
        cc = curv if n > 3 else None
        return ComparisonBounds(float(curv), float(curv), float(kb), float(kb), cc, cc,
                                None if kc is None else float(kc), None if kc is None else float(kc),
                                float(u0bar), float(T), n,
                                empirical=False, model=base.name)
    rng = np.random.default_rng(seed)
    center = np.zeros(base.dim) if center is None else np.asarray(center, float)
    Rs, Qs = [], []
    for _ in range(samples):
        Rm, Qm = _sample_matrices(base, rng, center, radius)
        Rs.append(Rm)
        Qs.append(Qm)
    rb_lo, rc_lo = _split_bounds(Rs, upper=False)
    rb_hi, rc_hi = _split_bounds(Rs, upper=True)
    qb_lo, qc_lo = _split_bounds(Qs, upper=False)
    qb_hi, qc_hi = _split_bounds(Qs, upper=True)
    c_b, C_b = _widen(rb_lo, rb_hi, SAMPLE_MARGIN)
    k_b, K_b = _widen(qb_lo, qb_hi, SAMPLE_MARGIN)
    if n > 3:
        c_c, C_c = _widen(rc_lo, rc_hi, SAMPLE_MARGIN)
        k_c, K_c = _widen(qc_lo, qc_hi, SAMPLE_MARGIN)
    else:
        c_c = C_c = k_c = K_c = None
    return ComparisonBounds(c_b, C_b, k_b, K_b, c_c, C_c, k_c, K_c, float(u0bar), float(T), n,
                            empirical=True, model=base.name)


# ---------------------------------------------------------------------------
# verdict


@dataclass
class IntervalAssertion:
    item: int
    applicable: bool
    statement: str
    interval: list            # [left, right]; right may be inf
    closed_right: bool
    required_min: int | None  # None: no conjugate points allowed
    observed: int
    holds: bool


@dataclass
class ComparisonVerdict:
    lower: int
    upper: int
    observed: int
    passed: bool
    omega_lower: tuple
    omega_upper: tuple
    T: float
    n: int
    empirical_constants: bool
    assertions: list = field(default_factory=list)

    @property
    def all_hold(self) -> bool:
        return self.passed and all(a.holds for a in self.assertions)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        for a in d["assertions"]:
            a["interval"] = [_json_float(v) for v in a["interval"]]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _json_float(v):
    return "inf" if v == math.inf else v


def _count_in(report: ConjugateReport, right: float, closed: bool) -> int:
    tol = TIME_REL_TOL * max(1.0, right if right != math.inf else 1.0)
    total = 0
    for t, m in zip(report.times, report.multiplicities):
        inside = t <= right + tol if closed else t < right - tol
        if t > 0 and inside:
            total += m
    return total


def interval_assertions(report: ConjugateReport, bounds: ComparisonBounds) -> list[IntervalAssertion]:
    """The eight interval statements implied by the bound, evaluated on ``report``.

    Statements about times beyond the horizon are marked not applicable.
    """
    (lb, lc), (Ub, Uc) = bounds.omegas()
    n, T = bounds.n, bounds.T
    out = []

    def add(item, cond, text, right, closed, req):
        applicable = bool(cond) and (right <= T * (1 + TIME_REL_TOL) or req is None)
        right_eff = min(right, T)
        obs = _count_in(report, right_eff, closed or right > T)
        if not applicable:
            holds = True
        elif req is None:
            holds = obs == 0
        else:
            holds = obs >= req
        out.append(IntervalAssertion(item, applicable, text, [0.0, right], closed, req, obs, holds))

    inf = math.inf
    r = lambda w, c: c * math.pi / math.sqrt(w)
    add(1, Ub > 0 and Uc > 0, "no conjugate points before min(2pi/sqrt(Wb), pi/sqrt(Wc))",
        min(r(Ub, 2), r(Uc, 1)) if Ub > 0 and Uc > 0 else inf, False, None)
    add(2, Ub > 0 and Uc <= 0, "no conjugate points before 2pi/sqrt(Wb)",
        r(Ub, 2) if Ub > 0 else inf, False, None)
    add(3, Ub <= 0 and Uc > 0, "no conjugate points before pi/sqrt(Wc)",
        r(Uc, 1) if Uc > 0 else inf, False, None)
    add(4, Ub <= 0 and Uc <= 0, "no conjugate points at all", inf, False, None)
    add(5, lb > 4 * lc > 0, "at least one conjugate point in (0, 2pi/sqrt(wb)]",
        r(lb, 2) if lb > 0 else inf, True, 1)
    eq = lb > 0 and abs(lb - 4 * lc) <= 1e-12 * max(1.0, abs(lb))
    add(6, lc > 0 and (lc >= 0.25 * lb or eq) and lb > 0,
        "at least n-3 (n-2 when wb = 4 wc) conjugate points in (0, pi/sqrt(wc)]",
        r(lc, 1) if lc > 0 else inf, True, (n - 2) if eq else (n - 3))
    add(7, lb > 0 and lc <= 0, "at least one conjugate point in (0, 2pi/sqrt(wb)]",
        r(lb, 2) if lb > 0 else inf, True, 1)
    add(8, lb <= 0 and lc > 0, "at least n-3 conjugate points in (0, pi/sqrt(wc)]",
        r(lc, 1) if lc > 0 else inf, True, n - 3)
    return out


def check_comparison(report: ConjugateReport, bounds: ComparisonBounds) -> ComparisonVerdict:
    """Check ``Z_T(lower) <= observed <= Z_T(upper)`` and the interval statements."""
    (lb, lc), (Ub, Uc) = bounds.omegas()
    lower = Z_T(lb, lc, bounds.T, bounds.n)
    upper = Z_T(Ub, Uc, bounds.T, bounds.n)
    observed = _count_in(report, bounds.T, True)
    return ComparisonVerdict(
        lower=lower, upper=upper, observed=observed, passed=lower <= observed <= upper,
        omega_lower=(lb, lc), omega_upper=(Ub, Uc), T=bounds.T, n=bounds.n,
        empirical_constants=bounds.empirical,
        assertions=interval_assertions(report, bounds),
    )
