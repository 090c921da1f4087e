import math

import numpy as np
import pytest

from magjacobi.geometry import ChartedBase, flat4d_uniform, make_model
from magjacobi.splitting import CotangentPoint

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS[criterion] = (bool(ok), detail)
    print(f"CRITERION {criterion}: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def flat4_nonuniform(c: float = 0.15, d: float = 0.2) -> ChartedBase:
    """Flat R^4 with a closed, non-parallel field (finite-difference derivatives)."""

    def form(x):
        om = np.zeros((4, 4))
        om[0, 1] = 1.0
        om[2, 3] = 1.3
        om[2, 1] += 2 * c * x[2]
        om[0, 3] += d * x[1]
        om[1, 3] += d * x[0]
        return om - om.T

    def pot(x):
        return np.array([-0.5 * x[1], 0.5 * x[0] + c * x[2] ** 2, -0.65 * x[3],
                         0.65 * x[2] + d * x[0] * x[1]])

    return ChartedBase(4, lambda x: np.eye(4), form, pot, name="flat4_nonuniform")


def uniform_models():
    return {
        "flat2d": make_model("flat2d", B=1.3),
        "sphere2d": make_model("sphere2d", r=1.0, B=0.8),
        "hyperbolic2d": make_model("hyperbolic2d", r=1.0, B=1.5),
        "flat4d_uniform": flat4d_uniform(1.0, 2.0),
        "flat4d_kahler": make_model("flat4d_kahler"),
        "varfield_b1_0": make_model("flat2d_varfield", b0=1.2, b1=0.0),
    }


def random_point(base: ChartedBase, rng, u0_range=(-2.0, 2.0)) -> CotangentPoint:
    """Random covector on h = 1/2 at a chart-safe point of ``base``."""
    m = base.dim
    if base.name == "sphere2d":
        x = np.array([rng.uniform(0.4, math.pi - 0.4), rng.uniform(-math.pi, math.pi)])
    elif base.name == "hyperbolic2d":
        x = np.array([rng.uniform(-1, 1), rng.uniform(0.5, 2.0)])
    else:
        x = rng.uniform(-0.5, 0.5, m)
    p = rng.normal(size=m)
    u0 = rng.uniform(*u0_range)
    return CotangentPoint.on_level(base, x, p, u0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
