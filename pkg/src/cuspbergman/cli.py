"""Command-line front end.

Four subcommands share one set of kernel and grid flags::

    cuspbergman rho      --base point --m 2 --t 1
    cuspbergman sup      --base point --m 64:4096:x2
    cuspbergman localize --m 100:2000:100 --sigma 0.36787944117144233
    cuspbergman expand   --m 64:4096:x2 --N 3

Output is CSV (default) or JSON and depends only on the inputs, never on
``CUSPBERGMAN_THREADS``.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import (b_approx_sup, expansion_error, gamma_threshold, lambda_polys,
                          localization_report, rate_fit, sup_rho)
from .basekernel import BaseKernel, BasePoint, kernel_from_config
from .cusp import CuspPoint, rho_cusp
from .errors import ConvergenceError
from .numkernel import LogReal

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
SCHEMA_PATH = Path(__file__).with_name("report.schema.json")

COLUMNS = {
    "rho": ["m", "k", "t", "sign", "value_log10", "value", "tail_rel", "q_lo", "q_hi"],
    "sup": ["m", "k", "sup_log10", "sup", "t_star", "a_x", "a_y", "normalized",
            "alpha", "q_alpha", "gap"],
    "localize": ["m", "t", "deviation_log10", "deviation", "r_covers_sigma",
                 "gamma_above_threshold", "sigma_against_gamma", "admissible"],
    "expand": ["m", "N", "sup_weighted_error", "b_sup", "b_t_star"],
}


class ConfigError(ValueError):
    pass


# argument parsing


def parse_m_list(spec: str) -> list[int]:
    """``"2,3,5"``, ``"100:2000:100"`` (arithmetic) or ``"64:4096:x2"`` (geometric)."""
    out = set()
    for part in str(spec).split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            bits = part.split(":")
            if len(bits) != 3:
                raise ConfigError(f"bad m range {part!r}")
            lo, hi, step = int(bits[0]), int(bits[1]), bits[2].strip()
            if step.startswith("x"):
                ratio = int(step[1:])
                if ratio < 2:
                    raise ConfigError("geometric m ratio must be >= 2")
                v = lo
                while v <= hi:
                    out.add(v)
                    v *= ratio
            else:
                if int(step) < 1:
                    raise ConfigError("m step must be positive")
                out.update(range(lo, hi + 1, int(step)))
        else:
            out.add(int(part))
    if not out or min(out) < 1:
        raise ConfigError("m list must be nonempty and positive")
    return sorted(out)


def parse_grid(spec: str) -> list[float]:
    """``"0.5,1,2"``, ``"lo:hi:n"`` (geometric, n points) or ``"lin:lo:hi:n"``."""
    spec = str(spec).strip()
    if spec.startswith("lin:"):
        lo, hi, n = spec[4:].split(":")
        vals = np.linspace(float(lo), float(hi), int(n))
    elif ":" in spec:
        lo, hi, n = spec.split(":")
        if float(lo) <= 0:
            raise ConfigError("geometric grids need a positive lower end")
        vals = np.geomspace(float(lo), float(hi), int(n))
    else:
        vals = np.array([float(p) for p in spec.split(",") if p.strip()])
    if vals.size == 0 or not np.all(np.isfinite(vals)):
        raise ConfigError(f"bad grid {spec!r}")
    return sorted(set(float(v) for v in vals))


def default_t_grid() -> list[float]:
    """64 points per decade on ``(1e-2, 1e3]``."""
    return [float(v) for v in np.geomspace(1e-2, 1e3, 5 * 64 + 1)[1:]]


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("kernel")
    g.add_argument("--base", choices=["point", "theta"])
    g.add_argument("--tau-re", type=float)
    g.add_argument("--tau-im", type=float)
    g.add_argument("--group-order", type=int)
    g.add_argument("--character", type=int)
    g.add_argument("--unitaries", help="JSON file {q: [U_0, ..., U_{r-1}]}")
    g.add_argument("--n", type=int, help="dimension check against the base")
    g.add_argument("--a-re", type=float, help="base point x")
    g.add_argument("--a-im", type=float, help="base point y")
    g.add_argument("--agrid", type=int, help="theta base: scan an agrid x agrid lattice")
    g = p.add_argument_group("grids")
    g.add_argument("--m", help="list or range of m")
    g.add_argument("--t", help="grid of t = |log h_D|")
    g.add_argument("--hd", help="grid of h_D values in (0, 1)")
    g.add_argument("--k", type=int)
    g = p.add_argument_group("parameters")
    g.add_argument("--sigma", type=float)
    g.add_argument("--gamma", help="observation level, or 'auto' for the threshold")
    g.add_argument("--xi", type=float)
    g.add_argument("--kappa", type=float)
    g.add_argument("--r", type=float)
    g.add_argument("--N", type=int)
    g.add_argument("--qmax", type=int)
    g.add_argument("--tmax", type=float)
    g.add_argument("--bm", action="store_true", help="expand: also fit the b_m comparison")
    g = p.add_argument_group("output")
    g.add_argument("--format", choices=["csv", "json"])
    g.add_argument("--out", help="output path (default stdout)")
    g.add_argument("--config", help="file of key = value lines; flags override it")
    return p


DEFAULTS = {
    "base": "point", "tau_re": 0.0, "tau_im": 1.0, "group_order": 1, "character": 0,
    "unitaries": None, "n": None, "a_re": 0.0, "a_im": 0.0, "agrid": None,
    "m": None, "t": None, "hd": None, "k": 0, "sigma": math.exp(-1.0), "gamma": "auto",
    "xi": 1.0, "kappa": 1.0, "r": None, "N": 3, "qmax": None, "tmax": None, "bm": False,
    "format": "csv", "out": None,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cuspbergman", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_parser()
    sub.add_parser("rho", parents=[common], help="cusp density on a (m, t) grid")
    sub.add_parser("sup", parents=[common], help="sup of the density and its normalization")
    sub.add_parser("localize", parents=[common], help="full vs truncated cusp deviation")
    sub.add_parser("expand", parents=[common], help="Gaussian expansion errors and slopes")
    return parser


def read_config_file(path: str) -> dict:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    text = Path(path).read_text()
    parser.read_string("[run]\n" + text)
    return {key.replace("-", "_"): val for key, val in parser["run"].items()}


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, the config file and explicit flags, in that order."""
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            filed = read_config_file(args.config)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        for key, raw in filed.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            cfg[key] = _coerce(key, raw)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None and not (key == "bm" and val is False):
            cfg[key] = val
    cfg["command"] = args.command
    if cfg["m"] is None:
        raise ConfigError("--m is required")
    cfg["m_list"] = parse_m_list(cfg["m"])
    if cfg["t"] is not None and cfg["hd"] is not None:
        raise ConfigError("give either --t or --hd, not both")
    if cfg["hd"] is not None:
        hds = parse_grid(cfg["hd"])
        if any(not 0 < h < 1 for h in hds):
            raise ConfigError("h_D values must lie in (0, 1)")
        cfg["t_grid"] = sorted(-math.log(h) for h in hds)
    elif cfg["t"] is not None:
        cfg["t_grid"] = parse_grid(cfg["t"])
        lower = -1.0 if cfg["command"] == "expand" else 0.0
        if any(t <= lower for t in cfg["t_grid"]):
            raise ConfigError(f"t values must exceed {lower:g}")
    else:
        cfg["t_grid"] = None
    if cfg["k"] < 0:
        raise ConfigError("--k must be nonnegative")
    return cfg


def _coerce(key: str, raw: str):
    kind = type(DEFAULTS[key])
    if key == "bm":
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if key in ("m", "t", "hd", "gamma", "unitaries", "base", "format", "out"):
        return raw.strip()
    if kind is int or key in ("n", "agrid", "qmax"):
        return int(raw)
    return float(raw)


def make_kernel(cfg: dict) -> BaseKernel:
    kernel = kernel_from_config({
        "base": cfg["base"], "tau_re": cfg["tau_re"], "tau_im": cfg["tau_im"],
        "group_order": cfg["group_order"], "character_index": cfg["character"],
        "unitaries": cfg["unitaries"],
    })
    if cfg["n"] is not None and cfg["n"] != kernel.n:
        raise ConfigError(f"--n {cfg['n']} does not match the {cfg['base']} base (n = {kernel.n})")
    return kernel


def base_points(cfg: dict, kernel: BaseKernel) -> list[BasePoint] | None:
    if cfg["agrid"]:
        if cfg["base"] != "theta":
            raise ConfigError("--agrid applies to the theta base only")
        k = int(cfg["agrid"])
        T = float(cfg["tau_im"])
        return [BasePoint(i / k, T * j / k) for i in range(k) for j in range(k)]
    return [BasePoint(cfg["a_re"], cfg["a_im"])]


# parallel map with order-preserving slots


def thread_count() -> int:
    raw = os.environ.get("CUSPBERGMAN_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ConfigError(f"CUSPBERGMAN_THREADS must be an integer, got {raw!r}")
    return os.cpu_count() or 1


def pmap(fn, items):
    items = list(items)
    workers = min(thread_count(), max(1, len(items)))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# commands


def _log10(v: LogReal):
    return None if v.is_zero else v.log_abs / math.log(10.0)


def _float(v: LogReal):
    x = v.to_float()
    return x if math.isfinite(x) else None


def cmd_rho(cfg: dict, kernel: BaseKernel) -> dict:
    ts = cfg["t_grid"] if cfg["t_grid"] is not None else default_t_grid()
    a = base_points(cfg, kernel)[0]
    k = cfg["k"]
    tasks = [(m, t) for m in cfg["m_list"] for t in ts]

    def one(task):
        m, t = task
        res = rho_cusp(kernel, m, CuspPoint(t, a), k)
        return {"m": m, "k": k, "t": t, "sign": res.value.sign,
                "value_log10": _log10(res.value), "value": _float(res.value),
                "tail_rel": res.rel_tail, "q_lo": res.q_window[0], "q_hi": res.q_window[1]}

    return {"rows": pmap(one, tasks)}


def cmd_sup(cfg: dict, kernel: BaseKernel) -> dict:
    grid = base_points(cfg, kernel)
    k = cfg["k"]

    def one(m):
        res = sup_rho(kernel, m, k, cfg["tmax"], grid, cfg["qmax"])
        return {"m": m, "k": k, "sup_log10": _log10(res.value), "sup": _float(res.value),
                "t_star": res.t_star, "a_x": res.a_star.x, "a_y": res.a_star.y,
                "normalized": res.normalized, "alpha": res.alpha, "q_alpha": res.q_alpha,
                "gap": res.gap}

    rows = pmap(one, cfg["m_list"])
    fits = {}
    samples = [(r["m"], r["gap"]) for r in rows if r["gap"] > 0]
    if len(samples) >= 4:
        fits["gap"] = _fit_record(samples)
    return {"rows": rows, "fits": fits}


def cmd_localize(cfg: dict, kernel: BaseKernel) -> dict:
    sigma = float(cfg["sigma"])
    if not 0 < sigma <= 1:
        raise ConfigError("--sigma must lie in (0, 1]")
    a = base_points(cfg, kernel)[0]

    def one(m):
        if m < 2:
            raise ConfigError("localize needs m >= 2")
        if str(cfg["gamma"]).strip().lower() == "auto":
            log_gamma = gamma_threshold(m, cfg["kappa"])
        else:
            g = float(cfg["gamma"])
            if not 0 < g < 1:
                raise ConfigError("--gamma must lie in (0, 1) or be 'auto'")
            log_gamma = math.log(g)
        inner = -log_gamma
        ts = cfg["t_grid"]
        if ts is None:
            ts = [inner * f for f in np.geomspace(1.0, 10.0, 33)]
        elif min(ts) < inner * (1 - 1e-12):
            raise ConfigError(f"m = {m}: t grid must stay inside V_gamma (t >= {inner:.10g})")
        rep = localization_report(kernel, m, math.exp(log_gamma), sigma, ts, cfg["xi"],
                                  cfg["kappa"], cfg["r"], log_gamma=log_gamma,
                                  log_sigma=math.log(sigma), a=a)
        p = rep.pair
        flags = {"r_covers_sigma": p.r_covers_sigma,
                 "gamma_above_threshold": p.gamma_above_threshold,
                 "sigma_against_gamma": p.sigma_against_gamma, "admissible": p.admissible}
        rows = [dict({"m": m, "t": t, "deviation_log10": _log10(d), "deviation": _float(d)},
                     **flags) for t, d in rep.profile]
        summary = {"m": m, "sup_log10": _log10(rep.sup_deviation), "t_argmax": rep.t_argmax,
                   "monotone": rep.monotone, "admissible": p.admissible,
                   "warning": rep.warning}
        return rows, summary, rep.sup_deviation

    results = pmap(one, cfg["m_list"])
    rows = [r for rs, _, _ in results for r in rs]
    summary = [s for _, s, _ in results]
    fits = {}
    samples = [(s["m"], d) for (_, s, d) in results if d.sign > 0]
    if len(samples) >= 4:
        fits["sup_deviation"] = _fit_record(samples)
    return {"rows": rows, "summary": summary, "fits": fits}


def cmd_expand(cfg: dict, kernel: BaseKernel) -> dict:
    N = cfg["N"]
    lambda_polys(N)  # validates N before any work

    def one(m):
        err = expansion_error(m, N, cfg["t_grid"])
        row = {"m": m, "N": N, "sup_weighted_error": err, "b_sup": None, "b_t_star": None}
        if cfg["bm"]:
            a = base_points(cfg, kernel)[0]
            row["b_sup"], row["b_t_star"] = b_approx_sup(kernel, m, N, a)
        return row

    rows = pmap(one, cfg["m_list"])
    fits = {}
    samples = [(r["m"], r["sup_weighted_error"]) for r in rows if r["sup_weighted_error"] > 0]
    if len(samples) >= 4:
        fits["sup_weighted_error"] = _fit_record(samples)
    if cfg["bm"]:
        samples = [(r["m"], r["b_sup"]) for r in rows if r["b_sup"] > 0]
        if len(samples) >= 4:
            fits["b_sup"] = _fit_record(samples)
    out = {"rows": rows, "fits": fits}
    if N <= 8:
        poly = lambda_polys(N)
        out["lambda"] = {str(l): poly.describe(l) for l in range(3, N + 1)}
    return out


def _fit_record(samples) -> dict:
    fit = rate_fit(samples)
    return {"exponent": fit.exponent, "constant": fit.constant, "residual": fit.residual,
            "count": len(samples)}


COMMANDS = {"rho": cmd_rho, "sup": cmd_sup, "localize": cmd_localize, "expand": cmd_expand}


# rendering


def _cell(v) -> str:
    if isinstance(v, np.generic):
        v = v.item()
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_csv(command: str, report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = COLUMNS[command]
    w.writerow(cols)
    for row in report["rows"]:
        w.writerow([_cell(row.get(c)) for c in cols])
    for s in report.get("summary", []):
        buf.write("# summary " + " ".join(f"{k}={_cell(v)}" for k, v in s.items()) + "\n")
    for name, fit in report.get("fits", {}).items():
        buf.write(f"# fit {name}: slope={fit['exponent']!r} intercept={fit['constant']!r} "
                  f"residual={fit['residual']!r} samples={fit['count']}\n")
    for l, text in report.get("lambda", {}).items():
        buf.write(f"# lambda_{l} = {text}\n")
    return buf.getvalue()


def _json_clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, (np.floating,)):
        return _json_clean(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, dict):
        return {k: _json_clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_clean(x) for x in v]
    return v


def render_json(command: str, report: dict, cfg: dict) -> str:
    params = {k: cfg[k] for k in DEFAULTS if k not in ("out", "format")}
    doc = {"command": command, "version": __version__, "columns": COLUMNS[command],
           "parameters": params, "rows": report["rows"],
           "summary": report.get("summary", []), "fits": report.get("fits", {}),
           "lambda": report.get("lambda")}
    return json.dumps(_json_clean(doc), indent=2) + "\n"


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        kernel = make_kernel(cfg)
        report = COMMANDS[cfg["command"]](cfg, kernel)
        text = (render_json(cfg["command"], report, cfg) if cfg["format"] == "json"
                else render_csv(cfg["command"], report))
    except (ConvergenceError, ArithmeticError) as exc:
        print(f"cuspbergman: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, KeyError) as exc:
        print(f"cuspbergman: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg["out"]:
        Path(cfg["out"]).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main() -> None:
    sys.exit(run())
