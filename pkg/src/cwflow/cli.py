"""Command-line front end: reproducible runs of every capability.

Each subcommand writes one CSV (a single '#'-prefixed JSON metadata
line, then plain columns at full double precision) and one JSON summary
mirroring the scalar results. Both embed the fully resolved config and
the package version, so a file documents the run that produced it and
`--config file.json` reproduces it byte for byte. The thread count is
an execution knob, deliberately kept out of the config: outputs never
depend on it.

Exit codes: 0 success, 2 bad usage or parameter domain, 3 numerical
failure, 4 insufficient Monte Carlo acceptance.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from ._util import dump_json, write_csv
from .acc import monotone_pieces, pre_bad_intervals, transport
from .cost import classify_bad, optimal_histories
from .gamma import kernel, kernel_one_sided
from .ldp import hamiltonian, lagrangian, optimal_momentum
from .mcsim import InsufficientAcceptance, estimate_kernel, simulate
from .model import DomainError, ModelParams
from .phase import RegionLabel, diagram

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_ACCEPTANCE = 4

_REQUIRED = object()

# resolved parameter schema per command: name -> (type, default)
_SCHEMAS = {
    "lagrangian": {
        "beta_prime": (float, _REQUIRED),
        "m": (float, None),
        "v": (float, None),
        "grid": (int, 101),
        "m_min": (float, -0.99), "m_max": (float, 0.99),
        "v_min": (float, -3.0), "v_max": (float, 3.0),
        "out": (str, "lagrangian"),
    },
    "transport": {
        "beta": (float, _REQUIRED), "beta_prime": (float, _REQUIRED),
        "t": (float, _REQUIRED),
        "grid": (int, 400), "window": (float, 0.999),
        "rtol": (float, 1e-10), "atol": (float, 1e-12),
        "out": (str, "transport"),
    },
    "cost": {
        "beta": (float, _REQUIRED), "beta_prime": (float, _REQUIRED),
        "t": (float, _REQUIRED), "m_prime": (float, _REQUIRED),
        "grid": (int, 400), "window": (float, 0.999),
        "samples": (int, 201),
        "rtol": (float, 1e-10), "atol": (float, 1e-12),
        "out": (str, "cost"),
    },
    "bad": {
        "beta": (float, _REQUIRED), "beta_prime": (float, _REQUIRED),
        "t": (float, _REQUIRED),
        "grid": (int, 400), "window": (float, 0.999), "scan": (int, 2001),
        "rtol": (float, 1e-10), "atol": (float, 1e-12),
        "out": (str, "bad"),
    },
    "gamma": {
        "beta": (float, _REQUIRED), "beta_prime": (float, _REQUIRED),
        "t": (float, _REQUIRED), "m_prime": (float, _REQUIRED),
        "side": (int, None),
        "grid": (int, 400), "window": (float, 0.999),
        "rtol": (float, 1e-10), "atol": (float, 1e-12),
        "out": (str, "gamma"),
    },
    "diagram": {
        "beta_prime": (float, _REQUIRED),
        "beta_inv": (list, [0.6, 0.7, 0.8, 0.9, 1.0, 1.1]),
        "ts": (list, [0.25, 0.5, 0.8, 1.2, 1.7, 2.4]),
        "grid": (int, 150), "window": (float, 0.999), "tol": (float, 1e-3),
        "max_unknown": (float, 0.25),
        "rtol": (float, 1e-10), "atol": (float, 1e-12),
        "out": (str, "diagram"),
    },
    "mc": {
        "beta": (float, _REQUIRED), "beta_prime": (float, _REQUIRED),
        "t": (float, _REQUIRED),
        "n": (int, 1000), "seed": (int, 0),
        "m_prime": (float, None), "window": (float, None),
        "replicas": (int, 4000), "m0": (float, None),
        "grid": (int, 101),
        "out": (str, "mc"),
    },
}

_HELP = {
    "beta": "inverse temperature of the initial measure",
    "beta_prime": "inverse temperature of the dynamics",
    "t": "time horizon",
    "m_prime": "conditioning magnetization",
    "m": "magnetization for a single-point evaluation",
    "v": "velocity for a single-point evaluation",
    "grid": "main grid resolution",
    "m_min": "lower magnetization bound", "m_max": "upper magnetization bound",
    "v_min": "lower velocity bound", "v_max": "upper velocity bound",
    "window": "symmetric launch/conditioning window half-width",
    "samples": "number of path sample times",
    "scan": "number of conditioning points scanned for ties",
    "side": "one-sided kernel limit: -1 from below, +1 from above",
    "beta_inv": "comma-separated inverse-temperature column positions",
    "ts": "comma-separated horizon row positions",
    "tol": "bisection tolerance for threshold times",
    "max_unknown": "fail (exit 3) when the unknown cell fraction exceeds this",
    "n": "system size",
    "seed": "master seed",
    "replicas": "Monte Carlo replica count",
    "m0": "fixed initial magnetization (default: equilibrium draw)",
    "rtol": "integrator relative tolerance",
    "atol": "integrator absolute tolerance",
    "out": "output path stem (writes <out>.csv and <out>.json)",
}


class UsageError(Exception):
    """Bad flag combination or value; maps to exit code 2."""


def _require(cond: bool, flag: str, msg: str):
    if not cond:
        raise UsageError(f"invalid {flag}: {msg}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cwflow",
        description="conditioned-history and Gibbs/non-Gibbs analysis "
                    "of mean-field spin-flip dynamics")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)
    for command, schema in _SCHEMAS.items():
        sp = subs.add_parser(command)
        for name, (kind, _) in schema.items():
            flag = "--" + name.replace("_", "-")
            if kind is list:
                sp.add_argument(flag, type=str, default=None,
                                help=_HELP.get(name))
            else:
                sp.add_argument(flag, type=kind, default=None,
                                help=_HELP.get(name))
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (never affects output)")
        sp.add_argument("--config", type=str, default=None,
                        help="JSON file of parameters; explicit flags win")
    return parser


def _load_config(path: str, schema: dict) -> dict:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise UsageError(f"invalid --config: {exc}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"invalid --config: not JSON ({exc})")
    if isinstance(obj, dict) and isinstance(obj.get("config"), dict):
        obj = obj["config"]  # accept a previously emitted summary whole
    if not isinstance(obj, dict):
        raise UsageError("invalid --config: expected a JSON object")
    unknown = set(obj) - set(schema)
    if unknown:
        raise UsageError(f"invalid --config: unknown key "
                         f"{sorted(unknown)[0]!r}")
    return obj


def _floats(val, flag: str) -> list[float]:
    if isinstance(val, str):
        parts = [p for p in val.split(",") if p.strip()]
        try:
            val = [float(p) for p in parts]
        except ValueError:
            raise UsageError(f"invalid {flag}: expected comma-separated "
                             f"numbers, got {val!r}")
    _require(len(val) >= 1, flag, "needs at least one value")
    return [float(x) for x in val]


def _resolve(args) -> dict:
    """Merge flags over config file over schema defaults; cast types."""
    schema = _SCHEMAS[args.command]
    file_cfg = _load_config(args.config, schema) if args.config else {}
    cfg = {}
    for name, (kind, default) in schema.items():
        value = getattr(args, name, None)
        if value is None:
            value = file_cfg.get(name, default)
        if value is _REQUIRED:
            raise UsageError(f"missing --{name.replace('_', '-')}")
        if value is not None and kind in (int, float):
            try:
                value = kind(value)
            except (TypeError, ValueError):
                raise UsageError(f"invalid --{name.replace('_', '-')}: "
                                 f"{value!r}")
        if kind is list:
            value = _floats(value, "--" + name.replace("_", "-"))
        cfg[name] = value
    return cfg


def _threads(args) -> int:
    if args.threads is not None:
        _require(args.threads >= 1, "--threads", "must be >= 1")
        return args.threads
    env = os.environ.get("CWFLOW_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _plain(x):
    """Recursive numpy -> builtin conversion for JSON emission."""
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    return x


def _emit(command: str, cfg: dict, header, rows, results: dict) -> None:
    meta = {"command": command, "version": __version__, "config": cfg}
    write_csv(cfg["out"] + ".csv", header, rows, meta=meta)
    payload = {"command": command, "version": __version__, "config": cfg,
               "results": _plain(results)}
    with open(cfg["out"] + ".json", "w") as fh:
        fh.write(dump_json(payload) + "\n")
    print(f"{command}: wrote {cfg['out']}.csv and {cfg['out']}.json")


def _model_params(cfg) -> ModelParams:
    _require(cfg["beta"] > 0, "--beta", "must be > 0")
    _require(cfg["beta_prime"] >= 0, "--beta-prime", "must be >= 0")
    _require(cfg["t"] >= 0, "--t", "must be >= 0")
    _require(cfg.get("rtol", 1e-10) > 0, "--rtol", "must be > 0")
    _require(cfg.get("atol", 1e-12) > 0, "--atol", "must be > 0")
    return ModelParams(cfg["beta"], cfg["beta_prime"], cfg["t"],
                       rtol=cfg.get("rtol", 1e-10),
                       atol=cfg.get("atol", 1e-12))


def _window(cfg) -> tuple:
    w = cfg["window"]
    _require(0 < w < 1, "--window", "must lie in (0, 1)")
    return (-w, w)


def cmd_lagrangian(cfg, threads) -> int:
    bp = cfg["beta_prime"]
    _require(bp >= 0, "--beta-prime", "must be >= 0")
    header = ["m", "v", "j", "momentum", "energy"]
    if cfg["m"] is not None or cfg["v"] is not None:
        if cfg["m"] is None or cfg["v"] is None:
            raise UsageError("point evaluation needs both --m and --v")
        _require(abs(cfg["m"]) < 1, "--m", "needs |m| < 1")
        ev = lagrangian(cfg["m"], cfg["v"], bp)
        rows = [(cfg["m"], cfg["v"], ev.value, ev.momentum, ev.energy)]
        results = {"points": 1, "j": ev.value, "momentum": ev.momentum,
                   "energy": ev.energy}
    else:
        _require(cfg["grid"] >= 2, "--grid", "must be >= 2")
        _require(-1 < cfg["m_min"] < cfg["m_max"] < 1, "--m-min",
                 "bounds must satisfy -1 < m_min < m_max < 1")
        _require(cfg["v_min"] < cfg["v_max"], "--v-min",
                 "bounds must satisfy v_min < v_max")
        ms = np.linspace(cfg["m_min"], cfg["m_max"], cfg["grid"])
        vs = np.linspace(cfg["v_min"], cfg["v_max"], cfg["grid"])
        mm, vv = [a.ravel() for a in np.meshgrid(ms, vs, indexing="ij")]
        lam = optimal_momentum(mm, vv, bp)
        ham = hamiltonian(mm, lam, bp)
        j = lam * vv - ham
        rows = zip(mm.tolist(), vv.tolist(), j.tolist(), lam.tolist(),
                   ham.tolist())
        results = {"points": len(mm), "j_min": float(j.min()),
                   "j_max": float(j.max())}
    _emit("lagrangian", cfg, header, rows, results)
    return EXIT_OK


def cmd_transport(cfg, threads) -> int:
    params = _model_params(cfg)
    _require(cfg["grid"] >= 2, "--grid", "must be >= 2")
    res = transport(params, cfg["grid"], window=_window(cfg),
                    threads=threads)
    rows = [(s.m0, s.v0, s.end.m, s.end.v, s.F, s.action)
            for s in res.samples]
    results = {
        "samples": len(res.samples),
        "quarantined": [[m0, s_exit] for m0, s_exit in res.quarantined],
        "pieces": len(monotone_pieces(res)),
        "pre_bad": [[iv.lo, iv.hi] for iv in pre_bad_intervals(res)],
    }
    _emit("transport", cfg, ["m0", "v0", "m_t", "v_t", "F", "action"],
          rows, results)
    return EXIT_OK


def cmd_cost(cfg, threads) -> int:
    params = _model_params(cfg)
    _require(-1 < cfg["m_prime"] < 1, "--m-prime", "needs |m'| < 1")
    _require(cfg["grid"] >= 2, "--grid", "must be >= 2")
    _require(cfg["samples"] >= 2, "--samples", "must be >= 2")
    cands = optimal_histories(cfg["m_prime"], params,
                              transport_grid=cfg["grid"],
                              window=_window(cfg), threads=threads)
    best = cands[0]
    ss = np.linspace(0.0, params.t, cfg["samples"])
    rows = []
    for s in ss:
        pt = best.trajectory.state_at(float(s))
        rows.append((float(s), pt.m, pt.v))
    tie = (len(cands) > 1
           and cands[1].cost - best.cost <= params.cost_tie_tol)
    results = {
        "m_prime": cfg["m_prime"],
        "cost": best.cost, "m0": best.m0, "v0": best.v0,
        "action": best.action, "branch": best.branch,
        "candidates": [[c.m0, c.cost] for c in cands],
        "tie": bool(tie),
    }
    _emit("cost", cfg, ["s", "m", "v"], rows, results)
    return EXIT_OK


def cmd_bad(cfg, threads) -> int:
    params = _model_params(cfg)
    _require(cfg["grid"] >= 2, "--grid", "must be >= 2")
    _require(cfg["scan"] >= 3, "--scan", "must be >= 3")
    report = classify_bad(params,
                          scan=np.linspace(-0.99, 0.99, cfg["scan"]),
                          transport_grid=cfg["grid"], window=_window(cfg),
                          threads=threads)
    rows = [(b.m, b.m0_a, b.m0_b, b.cost_gap, b.kernel_jump)
            for b in report.bad]
    results = {
        "bad": [b.m for b in report.bad],
        "pre_bad": [[iv.lo, iv.hi] for iv in report.pre_bad],
        "points": [{
            "m": b.m, "m0_a": b.m0_a, "m0_b": b.m0_b,
            "cost_gap": b.cost_gap,
            "kernel_jump": None if math.isnan(b.kernel_jump)
            else b.kernel_jump,
        } for b in report.bad],
    }
    _emit("bad", cfg, ["m", "m0_a", "m0_b", "cost_gap", "kernel_jump"],
          rows, results)
    return EXIT_OK


def cmd_gamma(cfg, threads) -> int:
    params = _model_params(cfg)
    _require(-1 < cfg["m_prime"] < 1, "--m-prime", "needs |m'| < 1")
    _require(cfg["grid"] >= 2, "--grid", "must be >= 2")
    if cfg["side"] is None:
        kv = kernel(cfg["m_prime"], params, transport_grid=cfg["grid"],
                    window=_window(cfg))
    else:
        _require(cfg["side"] in (-1, 1), "--side", "must be -1 or +1")
        kv = kernel_one_sided(cfg["m_prime"], params, cfg["side"],
                              transport_grid=cfg["grid"],
                              window=_window(cfg))
    p = kv.p
    rows = [(kv.m_end, kv.m0_star, kv.gamma_plus,
             p[0, 0], p[0, 1], p[1, 0], p[1, 1])]
    results = {
        "m_prime": kv.m_end, "m0_star": kv.m0_star,
        "gamma_plus": kv.gamma_plus,
        "p": [[p[0, 0], p[0, 1]], [p[1, 0], p[1, 1]]],
    }
    _emit("gamma", cfg,
          ["m_prime", "m0_star", "gamma_plus", "p_pp", "p_pm", "p_mp",
           "p_mm"], rows, results)
    return EXIT_OK


def cmd_diagram(cfg, threads) -> int:
    _require(cfg["beta_prime"] >= 0, "--beta-prime", "must be >= 0")
    _require(cfg["grid"] >= 2, "--grid", "must be >= 2")
    _require(cfg["tol"] > 0, "--tol", "must be > 0")
    _require(0 <= cfg["max_unknown"] <= 1, "--max-unknown",
             "must lie in [0, 1]")
    diag = diagram(cfg["beta_prime"], cfg["beta_inv"], cfg["ts"],
                   trace_boundary=True, tol=cfg["tol"],
                   transport_grid=cfg["grid"], window=_window(cfg),
                   threads=threads)
    rows = []
    unknown = 0
    for i, t in enumerate(diag.ts):
        for j, b in enumerate(diag.beta_inv):
            label = diag.labels[i][j]
            unknown += label is RegionLabel.UNKNOWN
            rows.append((b, t, label.value))
    results = json.loads(diag.to_json())
    _emit("diagram", cfg, ["beta_inv", "t", "label"], rows, results)

    boundary_rows = [("numeric", b, t) for b, t in diag.boundary
                     if t is not None]
    boundary_rows += [("closed", b, t) for b, t in diag.closed_form
                      if t is not None]
    meta = {"command": "diagram", "version": __version__, "config": cfg}
    write_csv(cfg["out"] + "_boundary.csv", ["kind", "beta_inv", "t"],
              boundary_rows, meta=meta)

    frac = unknown / (len(diag.ts) * len(diag.beta_inv))
    if frac > cfg["max_unknown"]:
        print(f"error: {unknown} unknown cells "
              f"(fraction {frac:.3f} > {cfg['max_unknown']})",
              file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_mc(cfg, threads) -> int:
    params = _model_params(cfg)
    _require(cfg["n"] >= 2, "--n", "must be >= 2")
    _require(cfg["seed"] >= 0, "--seed", "must be >= 0")
    if cfg["m_prime"] is not None:
        _require(-1 <= cfg["m_prime"] <= 1, "--m-prime", "needs |m'| <= 1")
        _require(cfg["replicas"] >= 1, "--replicas", "must be >= 1")
        if cfg["window"] is not None:
            _require(cfg["window"] > 0, "--window", "must be > 0")
        est = estimate_kernel(cfg["n"], params, cfg["m_prime"],
                              window=cfg["window"],
                              replicas=cfg["replicas"], rng=cfg["seed"],
                              threads=threads)
        rows = [(est.estimate, est.low, est.high, est.plus, est.accepted,
                 est.replicas)]
        _emit("mc", cfg,
              ["estimate", "low", "high", "plus", "accepted", "replicas"],
              rows, json.loads(est.to_json()))
        return EXIT_OK
    _require(cfg["grid"] >= 1, "--grid", "must be >= 1")
    times = np.linspace(0.0, params.t, cfg["grid"])
    path = simulate(cfg["n"], params, rng=cfg["seed"], times=times,
                    m0=cfg["m0"])
    rows = list(zip(path.times.tolist(), path.m.tolist()))
    results = {"n": path.n, "k0": path.k0, "events": path.events,
               "rate_integral": path.rate_integral, "seed": path.seed,
               "final_m": float(path.m[-1])}
    _emit("mc", cfg, ["time", "m"], rows, results)
    return EXIT_OK


_COMMANDS = {
    "lagrangian": cmd_lagrangian,
    "transport": cmd_transport,
    "cost": cmd_cost,
    "bad": cmd_bad,
    "gamma": cmd_gamma,
    "diagram": cmd_diagram,
    "mc": cmd_mc,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        threads = _threads(args)
        return _COMMANDS[args.command](cfg, threads)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InsufficientAcceptance as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    except (ArithmeticError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
