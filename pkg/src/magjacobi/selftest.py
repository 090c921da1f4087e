"""Fast end-to-end checks behind ``magjacobi selftest``.

Each check returns ``(name, ok, detail)``.  The set mirrors the acceptance
checks of the test suite at reduced size so it runs in a few seconds.
"""
from __future__ import annotations

import math

import numpy as np

from .comparison import Z_T, Z_T_direct, check_comparison, model_constants, tan_root
from .curvature import Rca_Raa
from .flow import oracle_conjugate_times
from .geometry import make_model
from .jacobi import jacobi_conjugate_times
from .splitting import CotangentPoint


def _agree(a, b, tol):
    if len(a.times) != len(b.times) or list(a.multiplicities) != list(b.multiplicities):
        return False, math.inf
    d = float(np.max(np.abs(np.subtract(a.times, b.times)))) if a.times else 0.0
    return d <= tol, d


def check_heisenberg():
    base = make_model("flat2d", B=1.0)
    lam = CotangentPoint.on_level(base, [0.0, 0.0], [1.0, 0.0], 1.0)
    o = oracle_conjugate_times(base, lam, 10.0)
    j = jacobi_conjugate_times(base, lam, 10.0)
    expected = [2 * math.pi, 2 * tan_root(1)]
    ok = (len(o.times) == 2 and len(j.times) == 2
          and max(abs(a - b) for a, b in zip(o.times, expected)) < 1e-5
          and max(abs(a - b) for a, b in zip(j.times, expected)) < 1e-5)
    return "heisenberg", ok, f"oracle={o.times} jacobi={j.times}"


def check_kahler():
    base = make_model("flat4d_kahler", B=1.0)
    lam = CotangentPoint.on_level(base, np.zeros(4), [1.0, 0.0, 0.0, 0.0], 1.0)
    o = oracle_conjugate_times(base, lam, 7.0)
    j = jacobi_conjugate_times(base, lam, 7.0)
    ok = (o.multiplicities == [3] and j.multiplicities == [3]
          and abs(o.times[0] - 2 * math.pi) < 1e-5 and abs(j.times[0] - 2 * math.pi) < 1e-5)
    return "kahler multiplicity", ok, f"oracle={o.as_list()} jacobi={j.as_list()}"


def check_varfield():
    base = make_model("flat2d_varfield", b0=1.0, b1=0.5)
    lam = CotangentPoint.on_level(base, [0.0, 0.0], [0.0, 1.0], 1.0)
    o = oracle_conjugate_times(base, lam, 8.0)
    j = jacobi_conjugate_times(base, lam, 8.0)
    ok, d = _agree(o, j, 1e-5)
    return "non-uniform agreement", ok and o.count > 0, f"max diff {d:.3g}, count {o.count}"


def check_uniform_vanishing():
    worst = 0.0
    for name, x in (("flat2d", [0.0, 0.0]), ("sphere2d", [1.0, 0.2])):
        base = make_model(name)
        lam = CotangentPoint.on_level(base, x, [0.6, 0.8], 1.0)
        rca, raa = Rca_Raa(base, lam, branch="general")
        worst = max(worst, abs(raa), float(np.max(np.abs(rca))) if rca.size else 0.0)
    return "uniform vanishing", worst < 1e-4, f"max |general branch| {worst:.3g}"


def check_ZT():
    rng = np.random.default_rng(7)
    bad = 0
    for _ in range(50):
        wb, wc = rng.uniform(-4, 4, 2)
        T = float(rng.uniform(0.1, 20))
        n = int(rng.integers(3, 7))
        bad += Z_T(wb, wc, T, n) != Z_T_direct(wb, wc, T, n)
    return "Z_T closed form", bad == 0, f"{bad} mismatches of 50"


def check_bracket():
    base = make_model("flat2d", B=1.0)
    lam = CotangentPoint.on_level(base, [0.0, 0.0], [1.0, 0.0], 1.0)
    v = check_comparison(oracle_conjugate_times(base, lam, 10.0), model_constants(base, 1.0, 10.0))
    ok = v.lower == v.observed == v.upper == 2 and v.all_hold
    return "comparison bracket", ok, f"{v.lower} <= {v.observed} <= {v.upper}"


CHECKS = (check_heisenberg, check_kahler, check_varfield, check_uniform_vanishing, check_ZT,
          check_bracket)


def run_all():
    out = []
    for chk in CHECKS:
        try:
            out.append(chk())
        except Exception as e:  # a crash is a failed check, not a crash of the runner
            out.append((chk.__name__, False, f"{type(e).__name__}: {e}"))
    return out
