"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records one PASS/FAIL line (printed and repeated in the terminal
summary under "acceptance criteria").
"""
import itertools
import math
import time

import numpy as np
import pytest

from magjacobi.comparison import Z_T, Z_T_direct, check_comparison, model_constants, phi, psi, tan_root
from magjacobi.curvature import Q_forms, Rca_Raa, Rcb_covector, Rbb_scalar, Rcc_matrix, big_matrix
from magjacobi.flow import integrate_extremal, oracle_conjugate_times
from magjacobi.geometry import flat4d_uniform, make_model
from magjacobi.jacobi import (
    conjugate_from_frames, curvature_along, darboux_defect, jacobi_conjugate_times, structural_integrate,
)
from magjacobi.splitting import CotangentPoint, PointData, split_at

from conftest import flat4_nonuniform, random_point, record, uniform_models

TWO_Y = 2 * tan_root(1)

# (label, model, params, x, p, u0, T)
SCENARIOS = [
    ("flat2d", "flat2d", {"B": 1.0}, [0, 0], [1, 0], 1.0, 10.0),
    ("sphere2d", "sphere2d", {"r": 1.0, "B": 1.0}, [math.pi / 2, 0], [1, 0], 1.0, 10.0),
    ("hyperbolic2d u0=1", "hyperbolic2d", {"r": 1.0, "B": 1.0}, [0, 1], [-1, 0], 1.0, 20.0),
    ("hyperbolic2d u0=2", "hyperbolic2d", {"r": 1.0, "B": 1.0}, [0, 1], [-1, 0], 2.0, 10.0),
    ("flat4d_kahler", "flat4d_kahler", {"B": 1.0}, [0, 0, 0, 0], [1, 0, 0, 0], 1.0, 7.0),
    ("flat2d_varfield", "flat2d_varfield", {"b0": 1.0, "b1": 0.5}, [0, 0], [0, 1], 1.0, 10.0),
]

_reports = {}


def _setup(label):
    _, name, params, x, p, u0, T = next(s for s in SCENARIOS if s[0] == label)
    base = make_model(name, **params)
    return base, CotangentPoint.on_level(base, np.asarray(x, float), np.asarray(p, float), u0), T


def _both(label):
    if label not in _reports:
        base, lam, T = _setup(label)
        t0 = time.perf_counter()
        jr = jacobi_conjugate_times(base, lam, T)
        orc = oracle_conjugate_times(base, lam, T)
        _reports[label] = (jr, orc, time.perf_counter() - t0)
    return _reports[label]


def _agree(a, b, tol):
    if a.multiplicities != b.multiplicities or len(a.times) != len(b.times):
        return False, math.inf
    d = float(np.max(np.abs(np.subtract(a.times, b.times)))) if a.times else 0.0
    return d <= tol, d


def test_criterion_01_oracle_formula_agreement():
    lines, ok_all, total = [], True, 0.0
    for label, *_ in SCENARIOS:
        jr, orc, dt = _both(label)
        ok, d = _agree(jr, orc, 1e-5)
        ok_all &= ok
        total += dt
        lines.append(f"{label}: {len(jr.times)} times, max diff {d:.1e}")
    ok_all &= total < 30.0
    record(1, ok_all, f"runtime {total:.1f}s; " + "; ".join(lines))
    assert ok_all


def test_criterion_02_heisenberg():
    jr, orc, _ = _both("flat2d")
    want = [2 * math.pi, TWO_Y]
    ok = all(len(r.times) == 2 and np.allclose(r.times, want, atol=1e-5) and r.multiplicities == [1, 1]
             for r in (jr, orc))
    ok &= abs(TWO_Y - 8.98682) < 1e-5 and math.pi < TWO_Y / 2 < 1.5 * math.pi
    record(2, ok, f"jacobi {np.round(jr.times, 6).tolist()}, oracle {np.round(orc.times, 6).tolist()}")
    assert ok


def test_criterion_03_kahler_multiplicity():
    jr, orc, _ = _both("flat4d_kahler")
    ok = all(len(r.times) == 1 and abs(r.times[0] - 2 * math.pi) < 1e-5 and r.multiplicities == [3]
             for r in (jr, orc))
    record(3, ok, f"jacobi {jr.as_list()}, oracle {orc.as_list()}")
    assert ok


def test_criterion_04_uniform_vanishing():
    rng = np.random.default_rng(4)
    worst, exact = 0.0, True
    for name, base in uniform_models().items():
        for _ in range(3):
            lam = random_point(base, rng, (0.5, 1.5))
            ca, aa = Rca_Raa(base, lam, branch="general")
            worst = max(worst, abs(aa), float(np.max(np.abs(ca), initial=0.0)))
            ca0, aa0 = Rca_Raa(base, lam, branch="analytic")
            exact &= aa0 == 0.0 and bool(np.all(ca0 == 0.0))
    ok = worst < 1e-4 and exact
    record(4, ok, f"general branch max |.| = {worst:.2e}; analytic exact zero: {exact}")
    assert ok


# closed forms of the uniform-field and Kaehler specializations, written
# directly from their statements

def _uniform_cc(d, v):
    Jv = d.J(v)
    return (d.dot(d.R(d.ph, v, d.ph), v)
            + 0.25 * d.u0 ** 2 * (d.dot(Jv, Jv) - d.dot(v, d.J2p) ** 2 / d.jnorm ** 2))


def _uniform_cb(d, v):
    n = d.jnorm
    return d.dot(d.R(d.ph, d.Jp, d.ph), v) / n + d.u0 ** 2 / n * d.dot(d.J(v), d.J2p)


def _uniform_bb(d):
    n2 = d.jnorm ** 2
    return d.dot(d.R(d.Jp, d.ph, d.Jp), d.ph) / n2 + d.u0 ** 2 * d.dot(d.J2p, d.J2p) / n2


def _kahler_cc(d, v):
    return d.dot(d.R(d.ph, v, d.ph), v) + 0.25 * d.u0 ** 2 * d.dot(v, v)


def _kahler_cb(d, v):
    return d.dot(d.R(d.ph, d.Jp, d.ph), v)


def _kahler_bb(d):
    return d.dot(d.R(d.ph, d.Jp, d.ph), d.Jp) + d.u0 ** 2


def test_criterion_05_specialization_consistency():
    rng = np.random.default_rng(5)
    worst = {"kahler-vs-uniform": 0.0, "uniform-vs-general": 0.0, "kahler-vs-general": 0.0}
    kahler = {"flat4d_kahler": make_model("flat4d_kahler"),
              "sphere2d B=1": make_model("sphere2d", B=1.0),
              "hyperbolic2d B=1": make_model("hyperbolic2d", B=1.0)}
    uniform = {"flat4d_uniform": flat4d_uniform(1.0, 2.0), "sphere2d B=0.8": make_model("sphere2d", B=0.8),
               "hyperbolic2d B=1.5": make_model("hyperbolic2d", B=1.5), **kahler}

    def bump(key, a, b):
        worst[key] = max(worst[key], float(np.max(np.abs(np.asarray(a) - np.asarray(b)), initial=0.0)))

    for name, base in uniform.items():
        is_kahler = name in kahler
        for _ in range(100):
            lam = random_point(base, rng)
            d = PointData(base, lam)
            sp = split_at(base, lam, d)
            C = sp.c_basis
            gen_cc = [v @ Rcc_matrix(base, lam, sp, d) @ v for v in np.eye(len(C))]
            gen_cb = Rcb_covector(base, lam, sp, d)
            gen_bb = Rbb_scalar(base, lam, d)
            uni = ([_uniform_cc(d, c) for c in C], [_uniform_cb(d, c) for c in C], _uniform_bb(d))
            bump("uniform-vs-general", np.r_[gen_cc, gen_cb, gen_bb], np.r_[uni[0], uni[1], uni[2]])
            if is_kahler:
                kah = ([_kahler_cc(d, c) for c in C], [_kahler_cb(d, c) for c in C], _kahler_bb(d))
                bump("kahler-vs-uniform", np.r_[kah[0], kah[1], kah[2]], np.r_[uni[0], uni[1], uni[2]])
                bump("kahler-vs-general", np.r_[kah[0], kah[1], kah[2]], np.r_[gen_cc, gen_cb, gen_bb])
                ca, aa = Rca_Raa(base, lam)
                bump("kahler-vs-general", np.r_[ca, aa], 0.0)
    ok = all(v < 1e-10 for v in worst.values())
    record(5, ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert ok


def test_criterion_06_identity_with_Q():
    rng = np.random.default_rng(6)
    worst = 0.0
    for name, base in uniform_models().items():
        for _ in range(100):
            lam = random_point(base, rng)
            d = PointData(base, lam)
            sp = split_at(base, lam, d)
            M = big_matrix(base, lam, sp)
            vb = rng.normal()
            vc = rng.normal(size=len(sp.c_basis))
            coeff = np.r_[vb, vc]
            lhs = coeff @ M[1:, 1:] @ coeff
            vh = vb * sp.b_dir + (vc @ sp.c_basis if len(vc) else 0.0)
            vch = vc @ sp.c_basis if len(vc) else np.zeros(base.dim)

            def qt(w):
                Jw = d.J(w)
                return d.dot(Jw, Jw) - d.dot(Jw, d.Jp) ** 2 / d.jnorm ** 2

            Q = qt(vh) - 0.75 * qt(vch)
            rhs = d.dot(d.R(d.ph, vh, d.ph), vh) + lam.u0 ** 2 * Q
            worst = max(worst, abs(lhs - rhs))
            assert Q == pytest.approx(Q_forms(base, lam, vb, vc, sp, d)[1], abs=1e-12)
    ok = worst < 1e-10
    record(6, ok, f"max |lhs - rhs| = {worst:.1e} over {100 * len(uniform_models())} samples")
    assert ok


def test_criterion_07_ZT_exactness():
    rng = np.random.default_rng(7)
    mism = 0
    for _ in range(500):
        wb, wc = rng.uniform(-4, 4, 2)
        T = rng.uniform(0, 20) or 1e-3
        n = int(rng.choice([3, 4, 5, 6]))
        mism += Z_T(wb, wc, T, n) != Z_T_direct(wb, wc, T, n)
    wbs = np.linspace(-4, 4, 20)
    wcs = np.linspace(-4, 4, 20)
    Ts = np.linspace(0.5, 20, 20)
    nonmono = 0
    for n in (3, 4, 5, 6):
        Z = np.array([[[Z_T(a, b, T, n) for T in Ts] for b in wcs] for a in wbs])
        for ax in range(3):
            nonmono += int(np.sum(np.diff(Z, axis=ax) < 0))
    ok = mism == 0 and nonmono == 0
    record(7, ok, f"closed vs direct mismatches {mism}/500; monotonicity violations {nonmono} on 20^3 x 4")
    assert ok


def test_criterion_08_comparison_bracket():
    lines, ok = [], True
    for label, name, *_ in SCENARIOS:
        base, lam, T = _setup(label)
        if not base.uniform:
            continue
        jr, orc, _ = _both(label)
        v = check_comparison(orc, model_constants(base, abs(lam.u0), T))
        good = v.passed and v.all_hold and v.observed == jr.count
        if name in ("flat2d", "flat4d_kahler"):
            good &= v.lower == v.observed == v.upper
        ok &= good
        lines.append(f"{label}: {v.lower}<={v.observed}<={v.upper}")
    record(8, ok, "; ".join(lines))
    assert ok


def test_criterion_09_structural_integrity():
    T = 4 * math.pi
    darboux = 0.0
    for wb, wc, n in [(1.0, 0.25, 5), (2.0, -0.5, 4), (0.5, 1.0, 6)]:
        fr = structural_integrate(np.diag([0.0, wb] + [wc] * (n - 3)), T, tol=1e-10)
        darboux = max(darboux, max(darboux_defect(fr, t) for t in np.linspace(0, T, 100)))
    for label in ("sphere2d", "flat2d_varfield"):
        base, lam, _ = _setup(label)
        _, fr, _ = jacobi_conjugate_times(base, lam, T, tol=1e-10, return_frame=True)
        darboux = max(darboux, max(darboux_defect(fr, t) for t in np.linspace(0, T, 100)))
    hdrift = 0.0
    for label, *_ in SCENARIOS:
        base, lam, _ = _setup(label)
        hdrift = max(hdrift, integrate_extremal(base, lam, T, tol=1e-10).h_drift)
    corr = 1.0
    t = np.linspace(0.05, 10, 500)
    for wb, wc, n in [(1.0, 0.25, 5), (2.0, 0.7, 4), (0.5, -1.0, 3), (-0.7, 1.3, 6), (3.0, 3.0, 5)]:
        fr = structural_integrate(np.diag([0.0, wb] + [wc] * (n - 3)), 10.0)
        dv = np.array([fr.d(s) for s in t])
        f = phi(wb, t) * psi(wc, t) ** (n - 3)
        corr = min(corr, abs(dv @ f) / (np.linalg.norm(dv) * np.linalg.norm(f)))
    ok = darboux < 1e-8 and hdrift < 1e-10 and corr > 1 - 1e-8
    record(9, ok, f"Darboux {darboux:.1e}, h drift {hdrift:.1e}, min correlation 1-{1 - corr:.1e}")
    assert ok


def test_criterion_10_frame_covariance():
    rng = np.random.default_rng(10)
    cases = [(make_model("flat4d_kahler"), [0, 0, 0, 0], [1, 0, 0, 0], 1.0, 7.0),
             (flat4d_uniform(1.0, 2.0), [0, 0, 0, 0], [0.5, 0.2, -0.7, 0.4], 1.0, 6.0),
             (flat4_nonuniform(), [0, 0, 0, 0], [0.3, 0.5, -0.6, 0.2], 1.5, 4.0)]
    worst_t, worst_R, mult_ok = 0.0, 0.0, True
    for base, x, p, u0, T in cases:
        lam = CotangentPoint.on_level(base, np.asarray(x, float), np.asarray(p, float), u0)
        C = split_at(base, lam).c_basis
        q, _ = np.linalg.qr(rng.normal(size=(len(C), len(C))))
        C2 = q @ C
        s1 = curvature_along(base, lam, 1.0, dt=0.25)
        s2 = curvature_along(base, lam, 1.0, dt=0.25, c_basis=C2)
        for M1, M2 in zip(s1.big, s2.big):
            worst_R = max(worst_R, np.max(np.abs(M2[2:, 2:] - q @ M1[2:, 2:] @ q.T)),
                          np.max(np.abs(M2[2:, 1] - q @ M1[2:, 1])), np.max(np.abs(M2[2:, 0] - q @ M1[2:, 0])),
                          abs(M2[0, 0] - M1[0, 0]), abs(M2[1, 1] - M1[1, 1]))
        r1 = jacobi_conjugate_times(base, lam, T)
        r2 = jacobi_conjugate_times(base, lam, T, c_basis=C2)
        mult_ok &= r1.multiplicities == r2.multiplicities and len(r1.times) == len(r2.times) > 0
        if len(r1.times) == len(r2.times):
            worst_t = max(worst_t, float(np.max(np.abs(np.subtract(r1.times, r2.times)))))
    ok = mult_ok and worst_t < 1e-7 and worst_R < 1e-8
    record(10, ok, f"max time change {worst_t:.1e}, max block conjugation defect {worst_R:.1e}, "
                   f"multiplicities equal: {mult_ok}")
    assert ok
