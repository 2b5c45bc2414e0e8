"""Command-line front end.

Every command takes a JSON config (``--config FILE`` or ``--config -`` for
stdin); command-line flags override config fields.  Tables are written as CSV
with a header line and 17 significant digits; with ``--out`` a JSON sidecar
(``<out>.json``) records the resolved config, tool version and seed.

Exit status: 0 success, 2 invalid config, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
from typing import Any, Callable

import jsonschema
import numpy as np

from . import __version__, fluct, numbervar, radial, simulate, stepdist
from .stepdist import LAW_SCHEMA, LawParameterError, law_from_dict

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

_INT_LIST = {"type": "array", "items": {"type": "integer"}, "minItems": 1}
_GRID = {"oneOf": [{"type": "array", "items": {"type": "number"}, "minItems": 1}, {"type": "string"}]}
_COMMON = {
    "law": LAW_SCHEMA,
    "seed": {"type": "integer", "minimum": 0},
    "out": {"type": "string"},
    "tol": {"type": "number", "exclusiveMinimum": 0},
}

COMMAND_SCHEMAS: dict[str, dict[str, Any]] = {
    "walkinfo": {"jmax": {"type": "integer", "minimum": 1}},
    "radial": {
        "n": {"type": "integer", "minimum": 0},
        "K": {"type": "integer", "minimum": 1},
        "oracle": {"type": "boolean"},
    },
    "variance-scan": {
        "n": {"type": "integer", "minimum": 0},
        "L": {"oneOf": [_INT_LIST, {"type": "integer", "minimum": 0}]},
    },
    "fluct-cov": {
        "kappa": {"type": "number", "minimum": 1},
        "i": {"type": "integer", "minimum": 0},
        "n": {"type": "integer", "minimum": 1},
        "grid": _GRID,
    },
    "gkappa": {
        "kappa": {"type": "number", "minimum": 1},
        "m_range": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
        "s": {"type": "number", "exclusiveMinimum": 0},
        "t": {"type": "number", "exclusiveMinimum": 0},
    },
    "simulate": {
        "n": {"type": "integer", "minimum": 0},
        "L": {"type": "integer", "minimum": 0},
        "statistic": {"enum": ["mean", "variance", "fluct_cov"]},
        "times": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2, "maxItems": 2},
        "replicas": {"type": "integer", "minimum": 3},
        "model": {"enum": ["deterministic", "poisson"]},
        "lambda": {"type": "number", "exclusiveMinimum": 0},
        "raw_out": {"type": "string"},
    },
    "sample-limit": {
        "process": {"enum": ["kappa", "critical", "y", "poisson"]},
        "kappa": {"type": "number", "minimum": 1},
        "theta": {"type": "number", "exclusiveMinimum": 0},
        "lambda": {"type": "number", "exclusiveMinimum": 0},
        "grid": _GRID,
        "replicas": {"type": "integer", "minimum": 1},
    },
}

REQUIRED = {
    "walkinfo": ["law"],
    "radial": ["law", "n"],
    "variance-scan": ["law", "n", "L"],
    "fluct-cov": ["law", "grid"],
    "gkappa": ["law", "kappa"],
    "simulate": ["law", "n", "statistic"],
    "sample-limit": ["process", "grid"],
}


def schema_for(command: str) -> dict[str, Any]:
    return {
        "type": "object",
        "properties": {**_COMMON, **COMMAND_SCHEMAS[command]},
        "required": REQUIRED[command],
        "additionalProperties": False,
    }


class ConfigError(ValueError):
    pass


# -- formatting ---------------------------------------------------------------------


def fmt(x: Any) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(rows: list[dict[str, Any]], columns: list[str], stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row[c]) for c in columns])


_GRID_RE = re.compile(r"^\s*(a\^\{?-m\}?|M\^\{?m\}?)\s*,\s*m\s*=\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*$")


def parse_grid(grid, a: float | None, order: int | None) -> list[float]:
    """Explicit list, or shorthand ``"a^{-m}, m=0..5"`` / ``"M^{m}, m=0..3"``."""
    if isinstance(grid, list):
        return sorted(float(x) for x in grid)
    m = _GRID_RE.match(grid)
    if not m:
        raise ConfigError(f"cannot parse grid {grid!r}")
    lo, hi = int(m.group(2)), int(m.group(3))
    if m.group(1).startswith("a"):
        if a is None or a >= 1:
            raise ConfigError("a^{-m} grid needs a law with a < 1")
        return [(1.0 / a) ** k for k in range(lo, hi + 1)]
    if order is None:
        raise ConfigError("M^{m} grid needs a law")
    return [float(order) ** k for k in range(lo, hi + 1)]


# -- commands -----------------------------------------------------------------------

Result = tuple[list[dict[str, Any]], list[str], dict[str, Any]]


def cmd_walkinfo(cfg: dict) -> Result:
    law = law_from_dict(cfg["law"])
    jmax = cfg.get("jmax", 20)
    js = np.arange(1, jmax + 1)
    r, h, f = law.prob(js), law.tail(js), law.eigen_f(js)
    rows = [{"j": int(j), "r": r[i], "h": h[i], "f": f[i]} for i, j in enumerate(js)]
    info: dict[str, Any] = {}
    try:
        p = law.params()
        info = {"a": p.a, "b": p.b, "theta": p.theta, "gamma": p.gamma, "classification": p.classification.value}
    except LawParameterError as exc:
        info = {"params": str(exc)}
    return rows, ["j", "r", "h", "f"], info


def cmd_radial(cfg: dict) -> Result:
    law = law_from_dict(cfg["law"])
    n, K = cfg["n"], cfg.get("K", 40)
    closed = radial.radial_pmf(law, n, K)
    rows = [{"k": k, "pmf": closed.pmf[k]} for k in range(K + 1)]
    cols = ["k", "pmf"]
    info: dict[str, Any] = {"tail_above_K": closed.tail}
    if cfg.get("oracle"):
        dp = radial.radial_pmf_oracle(law, n, K)
        for row in rows:
            row["oracle"] = dp.pmf[row["k"]]
            row["absdiff"] = abs(row["pmf"] - row["oracle"])
        cols += ["oracle", "absdiff"]
        info["max_absdiff"] = float(np.max(np.abs(closed.pmf - dp.pmf)))
        info["oracle_error_bound"] = dp.error_bound
    return rows, cols, info


def cmd_variance_scan(cfg: dict) -> Result:
    law = law_from_dict(cfg["law"])
    L = cfg["L"]
    radii = list(range(L + 1)) if isinstance(L, int) else L
    rows = numbervar.variance_scan(law, cfg["n"], radii)
    lim = numbervar.variance_limit(law, cfg["n"])
    cols = ["L", "mean", "var_rel", "var_abs", "part_I", "part_II", "limit"]
    return rows, cols, {"variance_limit": None if lim is None else lim}


def cmd_fluct_cov(cfg: dict) -> Result:
    law = law_from_dict(cfg["law"])
    p = law.params()
    R = fluct.TimeShift.for_law(law)
    grid = parse_grid(cfg["grid"], p.a, law.order)
    kappa = cfg.get("kappa", 1.0)
    if "n" in cfg:
        n = cfg["n"]
    elif p.a < 1:
        n = stepdist.kappa_sequence(law, kappa, cfg.get("i", 20))
    else:
        raise ConfigError("a = 1 laws need an explicit n")
    Ln = stepdist.radius_scale(law, n)
    rows = []
    for i, s in enumerate(grid):
        for t in grid[i:]:
            fin = fluct.finite_n_cov(law, n, s, t, R, Ln=Ln)
            lim = fluct.limit_cov(law, kappa, s, t, R) if p.a < 1 else fluct.limit_cov_critical(s, t, R)
            rows.append({"s": s, "t": t, "finite_n": fin, "limit": lim, "rel_err": abs(fin - lim) / abs(lim)})
    info = {"n": n, "L_n": Ln, "n_h_Ln": n * float(law.tail(Ln)), "max_rel_err": max(r["rel_err"] for r in rows)}
    return rows, ["s", "t", "finite_n", "limit", "rel_err"], info


def cmd_gkappa(cfg: dict) -> Result:
    law = law_from_dict(cfg["law"])
    p = law.params()
    if p.a >= 1:
        raise ConfigError("gkappa needs a law with a < 1")
    kappa = cfg["kappa"]
    lo, hi = cfg.get("m_range", [0, 30])
    s = cfg.get("s", 1.0)
    t = cfg.get("t", 1.0 / p.a)
    lrd = dict((m, v) for m, (tau, v) in zip(range(lo, hi + 1), fluct.lrd_scan(law, kappa, s, t, range(lo, hi + 1))))
    rows = []
    for m in range(lo, hi + 1):
        g = fluct.g_kappa(law, kappa, m)
        rows.append(
            {
                "m": m,
                "g_kappa": g,
                "g_direct": fluct.g_kappa_direct(law, kappa, m),
                "scaled": g * p.a ** (-m),
                "lrd": lrd[m],
            }
        )
    return rows, ["m", "g_kappa", "g_direct", "scaled", "lrd"], {"two_kappa": 2 * kappa, "C_kappa": fluct.c_kappa(kappa)}


def cmd_simulate(cfg: dict, workers: int | None = None) -> Result:
    law = law_from_dict(cfg["law"])
    plan = simulate.ReplicaPlan(
        law=law,
        n=cfg["n"],
        statistic=cfg["statistic"],
        replicas=cfg.get("replicas", 10_000),
        base_seed=cfg.get("seed", 0),
        radii=(cfg["L"],) if "L" in cfg else (),
        times=tuple(cfg["times"]) if "times" in cfg else None,
        model=cfg.get("model", "deterministic"),
        lam=cfg.get("lambda", 1.0),
        tol=cfg.get("tol", simulate.SHELL_TOL),
    )
    if plan.statistic in ("mean", "variance") and not plan.radii:
        raise ConfigError(f"{plan.statistic} needs L")
    if "raw_out" in cfg:
        draws = simulate.draw_replicas(plan, workers)
        with open(cfg["raw_out"], "w") as fh:
            cols = ["replica"] + [f"N{i}" for i in range(draws.shape[1])]
            write_csv([dict(zip(cols, [i, *row])) for i, row in enumerate(draws)], cols, fh)
    rep = simulate.estimate(plan, workers)
    row = {k: getattr(rep, k) for k in ("statistic", "estimate", "se", "reference", "z", "replicas")}
    return [row], list(row), rep.to_dict()


def cmd_sample_limit(cfg: dict) -> Result:
    proc = cfg["process"]
    seed = cfg.get("seed", 0)
    reps = cfg.get("replicas", 1)
    law = law_from_dict(cfg["law"]) if "law" in cfg else None
    a = law.ratio_limit() if law else None
    grid = parse_grid(cfg["grid"], a, law.order if law else None)
    if proc == "y":
        cov: fluct.CovarianceSpec = fluct.YProcessCov(cfg.get("theta", law.params().theta if law else 1.0))
    else:
        if law is None:
            raise ConfigError(f"process {proc!r} needs a law")
        R = fluct.TimeShift.for_law(law)
        if proc == "kappa":
            cov = fluct.LimitKappaCov(law, cfg.get("kappa", 1.0), R)
        elif proc == "critical":
            cov = fluct.CriticalCov(fluct.TimeShift.log_m(law.order))
        else:
            lam = cfg.get("lambda", 1.0)
            cov = fluct.CriticalCov(fluct.TimeShift.log_m(law.order), scale=lam / fluct.CRITICAL_VARIANCE)
    paths = fluct.gaussian_path_sample(cov, grid, seed, size=reps)
    rows = [{"path": p, "t": t, "value": paths[p, i]} for p in range(reps) for i, t in enumerate(grid)]
    return rows, ["path", "t", "value"], {"process": proc}


COMMANDS: dict[str, Callable[..., Result]] = {
    "walkinfo": cmd_walkinfo,
    "radial": cmd_radial,
    "variance-scan": cmd_variance_scan,
    "fluct-cov": cmd_fluct_cov,
    "gkappa": cmd_gkappa,
    "simulate": cmd_simulate,
    "sample-limit": cmd_sample_limit,
}

# flag dest -> config key
_FLAG_KEYS = {
    "seed": "seed",
    "out": "out",
    "tol": "tol",
    "replicas": "replicas",
    "n": "n",
    "L": "L",
    "K": "K",
    "kappa": "kappa",
    "grid": "grid",
    "m_range": "m_range",
    "lam": "lambda",
    "law": "law",
    "oracle": "oracle",
    "statistic": "statistic",
    "process": "process",
    "times": "times",
    "i": "i",
    "model": "model",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hierwalk", description="Hierarchical random walk number-variance laboratory")
    parser.add_argument("--version", action="version", version=f"hierwalk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file, or - for stdin")
        p.add_argument("--law", type=json.loads, help='law descriptor, e.g. \'{"family":"crw","M":2,"c":1}\'')
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="CSV output path (sidecar written to <out>.json)")
        p.add_argument("--replicas", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--n", type=int)
        p.add_argument("--L", type=json.loads, help="radius or JSON list of radii")
        p.add_argument("--K", type=int)
        p.add_argument("--kappa", type=float)
        p.add_argument("--grid", help="JSON list of times or 'a^{-m}, m=0..5'")
        p.add_argument("--m-range", dest="m_range", type=int, nargs=2)
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--i", type=int)
        p.add_argument("--oracle", action="store_true", default=None)
        p.add_argument("--statistic")
        p.add_argument("--process")
        p.add_argument("--model")
        p.add_argument("--times", type=float, nargs=2)
    return parser


def resolve_config(args: argparse.Namespace) -> dict[str, Any]:
    cfg: dict[str, Any] = {}
    if args.config:
        text = sys.stdin.read() if args.config == "-" else open(args.config).read()
        cfg = json.loads(text)
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    for dest, key in _FLAG_KEYS.items():
        val = getattr(args, dest, None)
        if val is None:
            continue
        if dest == "grid" and val.lstrip().startswith("["):
            val = json.loads(val)
        if isinstance(val, tuple):
            val = list(val)
        cfg[key] = val
    jsonschema.validate(cfg, schema_for(args.command))
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = resolve_config(args)
    except (jsonschema.ValidationError, json.JSONDecodeError, ConfigError, OSError) as exc:
        print(f"config error: {getattr(exc, 'message', exc)}", file=sys.stderr)
        return EXIT_CONFIG
    workers = int(os.environ.get("HRW_THREADS", "1"))
    try:
        fn = COMMANDS[args.command]
        rows, cols, info = fn(cfg, workers) if args.command == "simulate" else fn(cfg)
    except (ConfigError, LawParameterError, jsonschema.ValidationError) as exc:
        print(f"config error: {getattr(exc, 'message', exc)}", file=sys.stderr)
        return EXIT_CONFIG
    except (
        ArithmeticError,
        np.linalg.LinAlgError,
        radial.SeriesTruncationError,
        fluct.ZetaMonotonicityError,
        simulate.SimulationRangeError,
        RuntimeError,
    ) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    buf = io.StringIO()
    write_csv(rows, cols, buf)
    out = cfg.get("out")
    if out:
        with open(out, "w") as fh:
            fh.write(buf.getvalue())
        sidecar = {"command": args.command, "config": cfg, "version": __version__, "seed": cfg.get("seed"), "info": info}
        with open(out + ".json", "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
    else:
        sys.stdout.write(buf.getvalue())
    for key, val in info.items():
        if not isinstance(val, (dict, list)):
            print(f"# {key}: {fmt(val) if isinstance(val, float) else val}", file=sys.stderr)
    return EXIT_OK


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, float) and math.isinf(o):
        return "inf"
    raise TypeError(type(o))


if __name__ == "__main__":
    sys.exit(main())
