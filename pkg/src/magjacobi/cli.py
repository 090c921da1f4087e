"""Command-line front end.

Subcommands: ``curvature``, ``flow``, ``conjugate``, ``comparison``,
``list-models`` and ``selftest``.  A scenario is given either by a JSON
config file (``--config``) or by flags; flags override config entries.

Exit codes: 0 ok, 2 invalid configuration, 3 non-regular point, 4 the two
conjugate-point methods disagree, 5 request outside the scope of the
comparison bound.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from .comparison import ComparisonScopeError, check_comparison, model_constants
from .curvature import curvature_maps
from .flow import ChartExitError, integrate_extremal, oracle_conjugate_times, write_trajectory_csv
from .geometry import CATALOG, make_model
from .jacobi import darboux_defect, jacobi_conjugate_times
from .splitting import CotangentPoint, NotRegularError, split_at

log = logging.getLogger("magjacobi")

EXIT_OK, EXIT_CONFIG, EXIT_REGULARITY, EXIT_DISAGREE, EXIT_SCOPE = 0, 2, 3, 4, 5
AGREEMENT_TOL = 1e-4
MODEL_PARAMS = ("B", "r", "b0", "b1")

DEFAULT_POINT = {"sphere2d": [math.pi / 2, 0.0], "hyperbolic2d": [0.0, 1.0]}


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    model: str
    params: dict
    x: list
    p: list
    u0: float
    T: float = 10.0
    tol: float = 1e-12
    dt: float = 0.01
    stencil_step: float = 0.01
    output: str | None = None
    csv: str | None = None
    options: dict = field(default_factory=dict)

    def base(self):
        try:
            return make_model(self.model, **self.params)
        except KeyError as e:
            raise ConfigError(str(e.args[0])) from None
        except TypeError as e:
            raise ConfigError(f"bad parameters for {self.model}: {e}") from None

    def point(self, base) -> CotangentPoint:
        x = np.asarray(self.x, float)
        p = np.asarray(self.p, float)
        if x.shape != (base.dim,) or p.shape != (base.dim,):
            raise ConfigError(f"x and p must have length {base.dim}")
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(p)) or not np.any(p):
            raise ConfigError("x and p must be finite and p nonzero")
        lam = CotangentPoint.on_level(base, x, p, self.u0)
        if not np.allclose(lam.p, p, rtol=1e-12, atol=0):
            log.warning("p renormalized to the level h = 1/2")
        return lam


def load_config(args) -> ScenarioConfig:
    raw = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config: {e}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    model = args.model or raw.get("model")
    if isinstance(model, dict):
        raw.setdefault("params", model.get("params", {}))
        model = model.get("name")
    if not model:
        raise ConfigError("no model given")
    if model not in CATALOG:
        raise ConfigError(f"unknown model {model!r}; available: {sorted(CATALOG)}")
    params = dict(raw.get("params", {}))
    for k in MODEL_PARAMS:
        v = getattr(args, k, None)
        if v is not None:
            params[k] = v
    try:
        dim = make_model(model, **params).dim
    except TypeError as e:
        raise ConfigError(f"bad parameters for {model}: {e}") from None
    x = args.x if args.x is not None else raw.get("x", DEFAULT_POINT.get(model, [0.0] * dim))
    p = args.p if args.p is not None else raw.get("p", [1.0] + [0.0] * (dim - 1))

    def pick(name, default):
        v = getattr(args, name, None)
        return v if v is not None else raw.get(name, default)

    try:
        cfg = ScenarioConfig(
            model=model, params=params, x=[float(v) for v in x], p=[float(v) for v in p],
            u0=float(pick("u0", 1.0)), T=float(pick("T", 10.0)), tol=float(pick("tol", 1e-12)),
            dt=float(pick("dt", 0.01)), stencil_step=float(pick("stencil_step", 0.01)),
            output=pick("output", None), csv=pick("csv", None), options=raw.get("options", {}),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"malformed config: {e}") from None
    if not cfg.T > 0:
        raise ConfigError("T must be positive")
    if not (0 < cfg.dt < cfg.T) or not (0 < cfg.tol < 1e-3):
        raise ConfigError("dt and tol out of range")
    return cfg


# ---------------------------------------------------------------------------
# deterministic JSON


def _fmt(obj, indent=0):
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_fmt(v, indent + 1)}" for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + _fmt(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, np.ndarray):
        return _fmt(obj.tolist(), indent)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return json.dumps(str(v))
        return format(v, ".17g")
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def dumps(obj) -> str:
    """JSON with sorted keys and floats written with 17 significant digits."""
    return _fmt(obj) + "\n"


def _emit(obj, path):
    text = dumps(obj)
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _scenario_dict(cfg, lam):
    return {"model": cfg.model, "params": cfg.params, "x": lam.x, "p": lam.p, "u0": lam.u0,
            "T": cfg.T}


# ---------------------------------------------------------------------------
# subcommands


def run_curvature(cfg: ScenarioConfig) -> int:
    base = cfg.base()
    lam = cfg.point(base)
    sp = split_at(base, lam)
    maps = curvature_maps(base, lam, sp, step=cfg.stencil_step)
    big = maps.big_matrix()
    report = {
        "scenario": _scenario_dict(cfg, lam),
        "frame": {"p_h": sp.ph, "b_dir": sp.b_dir, "c_basis": sp.c_basis},
        "regularity": {"Jp_norm": sp.jnorm, "uniform": bool(base.uniform)},
        "rho_aa": maps.rho_aa, "rho_bb": maps.rho_bb, "rho_cb": maps.rho_cb,
        "rho_ca": maps.rho_ca, "Rcc": maps.Rcc,
        "Rcc_eigenvalues": np.linalg.eigvalsh(maps.Rcc) if maps.Rcc.size else [],
        "big_matrix": big,
    }
    _emit(report, cfg.output)
    return EXIT_OK


def run_flow(cfg: ScenarioConfig) -> int:
    base = cfg.base()
    lam = cfg.point(base)
    traj = integrate_extremal(base, lam, cfg.T, tol=cfg.tol,
                              t_eval=np.linspace(0.0, cfg.T, int(round(cfg.T / cfg.dt)) + 1))
    if cfg.csv:
        write_trajectory_csv(traj, cfg.csv)
    _emit({"scenario": _scenario_dict(cfg, lam), "h_drift": traj.h_drift, "samples": len(traj.t),
           "x_end": traj.x[-1], "p_end": traj.p[-1], "z_end": traj.z[-1]}, cfg.output)
    return EXIT_OK


def compare_reports(a, b) -> tuple[bool, float]:
    """Agreement of two reports: same count and multiplicities, times within AGREEMENT_TOL."""
    if len(a.times) != len(b.times) or list(a.multiplicities) != list(b.multiplicities):
        return False, math.inf
    if not a.times:
        return True, 0.0
    diff = float(np.max(np.abs(np.asarray(a.times) - np.asarray(b.times))))
    return diff <= AGREEMENT_TOL, diff


def run_conjugate(cfg: ScenarioConfig) -> int:
    base = cfg.base()
    lam = cfg.point(base)
    jrep, frame, _ = jacobi_conjugate_times(base, lam, cfg.T, dt=cfg.dt, tol=cfg.tol, return_frame=True)
    orep = oracle_conjugate_times(base, lam, cfg.T, tol=cfg.tol, dt=cfg.dt)
    ok, diff = compare_reports(jrep, orep)
    if cfg.csv:
        with open(cfg.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "d", "D"])
            for t, d, D in zip(jrep.t_samples, jrep.values, orep.values):
                w.writerow([format(float(t), ".17g"), format(float(d), ".17g"), format(float(D), ".17g")])
    _emit({
        "scenario": _scenario_dict(cfg, lam),
        "jacobi": jrep.as_list(), "oracle": orep.as_list(),
        "max_time_discrepancy": diff, "agree": ok,
        "darboux_defect": darboux_defect(frame, cfg.T),
    }, cfg.output)
    if not ok:
        log.error("methods disagree (max discrepancy %s)", diff)
        return EXIT_DISAGREE
    return EXIT_OK


def run_comparison(cfg: ScenarioConfig) -> int:
    base = cfg.base()
    lam = cfg.point(base)
    if not base.uniform:
        raise ComparisonScopeError("comparison requires ∇J = 0")
    bounds = model_constants(base, lam.u0, cfg.T)
    report = oracle_conjugate_times(base, lam, cfg.T, tol=cfg.tol, dt=cfg.dt)
    verdict = check_comparison(report, bounds)
    out = verdict.to_dict()
    out["scenario"] = _scenario_dict(cfg, lam)
    out["conjugate_times"] = report.as_list()
    out["constants"] = {k: getattr(bounds, k) for k in
                        ("c_b", "C_b", "k_b", "K_b", "c_c", "C_c", "k_c", "K_c", "empirical")}
    _emit(out, cfg.output)
    return EXIT_OK


def run_list_models(_cfg=None) -> int:
    import inspect
    out = {}
    for name, fn in sorted(CATALOG.items()):
        sig = inspect.signature(fn)
        base = fn()
        out[name] = {"dim": base.dim, "uniform_default": bool(base.uniform),
                     "params": {k: v.default for k, v in sig.parameters.items()},
                     "description": (fn.__doc__ or "").strip().splitlines()[0]}
    sys.stdout.write(dumps(out))
    return EXIT_OK


def run_selftest() -> int:
    from .selftest import run_all
    results = run_all()
    for name, ok, detail in results:
        sys.stdout.write(f"{'PASS' if ok else 'FAIL'} {name}: {detail}\n")
    return EXIT_OK if all(ok for _, ok, _ in results) else 1


COMMANDS = {"curvature": run_curvature, "flow": run_flow, "conjugate": run_conjugate,
            "comparison": run_comparison}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="magjacobi", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON scenario file")
        sp.add_argument("--model")
        for k in MODEL_PARAMS:
            sp.add_argument(f"--{k}", type=float)
        sp.add_argument("--x", type=float, nargs="+")
        sp.add_argument("--p", type=float, nargs="+")
        sp.add_argument("--u0", type=float)
        sp.add_argument("--T", type=float)
        sp.add_argument("--tol", type=float)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--stencil-step", dest="stencil_step", type=float)
        sp.add_argument("--output", help="JSON report path (default: stdout)")
        sp.add_argument("--csv", help="CSV path for time series")
    sub.add_parser("list-models")
    sub.add_parser("selftest")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    if args.command == "list-models":
        return run_list_models()
    if args.command == "selftest":
        return run_selftest()
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as e:
        sys.stderr.write(f"config error: {e}\n")
        return EXIT_CONFIG
    except NotRegularError as e:
        sys.stderr.write(f"{e}\n")
        return EXIT_REGULARITY
    except ComparisonScopeError as e:
        sys.stderr.write(f"{e}\n")
        return EXIT_SCOPE
    except ChartExitError as e:
        sys.stderr.write(f"config error: {e}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
