"""
Command-line entry point.

    freefront [--config PATH] [--out DIR] [--waive-compat] COMMAND

Commands: check, solve, mms, probe, equilibrium. Exit codes:

    0  success (check passed, run completed, orders met, root found)
    1  negative finding (check failed, incompatible data, orders missed,
       no equilibrium)
    2  usage or configuration error, malformed expression, Neumann violation
    3  front collapse
    4  divergence
"""

from __future__ import annotations

import argparse
import ast
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis
from .core import FRONT_COLUMNS, DomainError, Grid, InvalidInput, Parameters
from .expr import ExprSyntaxError, parse
from .solver import IncompatibleData, RunResult, Status, run
from .verify import (
    NeumannViolation,
    NoEquilibrium,
    StudyAborted,
    compatibility_check,
    convergence_study,
    equilibrium_front,
    equilibrium_residual,
    make_mms_case,
)

logger = logging.getLogger("freefront")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_COLLAPSE = 3
EXIT_DIVERGED = 4

STATUS_EXIT = {Status.COMPLETED: EXIT_OK, Status.FRONT_COLLAPSE: EXIT_COLLAPSE, Status.DIVERGED: EXIT_DIVERGED}

P_SPACE_MIN = 1.9
P_TIME_MIN = 0.9
# a manufactured case the scheme reproduces exactly has no measurable order;
# its error sits at the roundoff of the second-derivative forcing stencil,
# about eps*|v|/h^2 ~ 1e-9 for h = 1e-3
EXACT_ERROR = 1e-8


class ConfigError(ValueError):
    pass


# -- configuration -------------------------------------------------------------


@dataclass
class RunConfig:
    """Flat experiment configuration; ``lambda`` is spelled ``lam`` in Python."""

    lam: Optional[float] = None
    sigma: Optional[float] = None
    b: Optional[float] = None
    t_end: Optional[float] = None
    s_min: float = 1e-6
    n_xi: Optional[int] = None
    dt: Optional[float] = None
    f_expr: Optional[str] = None
    phi_expr: Optional[str] = None
    snapshot_times: list = field(default_factory=list)
    output_dir: str = "out"
    epsilon_layer: Optional[float] = None
    k_max: int = 4
    threshold_factor: float = 10.0
    stride: int = 1
    compat_tol: float = 1e-6
    s_bar: Optional[str] = None
    v_shape: Optional[str] = None
    levels: list = field(default_factory=list)

    def params(self) -> Parameters:
        self.require("lam", "sigma", "b", "t_end")
        return Parameters(self.lam, self.sigma, self.b, self.t_end, self.s_min)

    def grid(self) -> Grid:
        self.require("n_xi", "dt")
        return Grid(self.n_xi, self.dt)

    def require(self, *names):
        missing = [_KEY_OF.get(n, n) for n in names if getattr(self, n) is None]
        if missing:
            raise ConfigError(f"missing required key(s): {', '.join(missing)}")


# config key -> attribute
_ATTR_OF = {f.name: f.name for f in fields(RunConfig)}
_ATTR_OF["lambda"] = _ATTR_OF.pop("lam")
_KEY_OF = {v: k for k, v in _ATTR_OF.items()}

_FLOATS = {"lam", "sigma", "b", "t_end", "s_min", "dt", "epsilon_layer", "threshold_factor", "compat_tol"}
_INTS = {"n_xi", "k_max", "stride"}
_STRINGS = {"f_expr", "phi_expr", "output_dir", "s_bar", "v_shape"}


def _coerce(attr: str, value, lineno: int):
    where = f"line {lineno}: {_KEY_OF[attr]}"
    if attr in _FLOATS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if attr in _INTS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if attr in _STRINGS:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a quoted string")
        return value
    if attr == "snapshot_times":
        if not isinstance(value, (list, tuple)) or not all(isinstance(v, (int, float)) for v in value):
            raise ConfigError(f"{where} must be a list of numbers")
        return [float(v) for v in value]
    if attr == "levels":
        ok = isinstance(value, (list, tuple)) and all(
            isinstance(v, (list, tuple)) and len(v) == 2 and isinstance(v[0], int) and isinstance(v[1], (int, float))
            for v in value
        )
        if not ok:
            raise ConfigError(f"{where} must be a list of [n_xi, dt] pairs")
        return [[int(n), float(dt)] for n, dt in value]
    raise ConfigError(f"{where}: unsupported key")


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines; values are Python/JSON literals."""
    cfg = RunConfig()
    seen = set()
    # split on LF only: splitlines() would also break on separators that may
    # legitimately sit inside quoted strings
    for lineno, raw in enumerate(text.split("\n"), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in _ATTR_OF:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        try:
            literal = ast.literal_eval(value.strip())
        except (ValueError, SyntaxError) as exc:
            raise ConfigError(f"line {lineno}: cannot read value for {key!r} (strings must be quoted)") from exc
        setattr(cfg, _ATTR_OF[key], _coerce(_ATTR_OF[key], literal, lineno))
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: RunConfig) -> str:
    """Inverse of parse_config; keys with value None are omitted."""
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if value is not None:
            lines.append(f"{_KEY_OF[f.name]} = {json.dumps(value, ensure_ascii=False)}")
    return "\n".join(lines) + "\n"


# -- output helpers ------------------------------------------------------------


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def write_json(path: Path, payload: dict):
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _finite_or_none(x):
    return float(x) if x is not None and math.isfinite(x) else None


SUMMARY_SCHEMA = {
    "type": "object",
    "required": [
        "status",
        "t_final",
        "final_s",
        "final_s_prime",
        "n_rows",
        "max_identity_residual",
        "collapse_time",
        "equilibrium_front",
        "max_front_deviation",
        "wall_time_s",
    ],
    "additionalProperties": False,
    "properties": {
        "status": {"enum": [s.value for s in Status]},
        "t_final": {"type": "number"},
        "final_s": {"type": "number"},
        "final_s_prime": {"type": "number"},
        "n_rows": {"type": "integer", "minimum": 1},
        "max_identity_residual": {"type": ["number", "null"], "minimum": 0},
        "collapse_time": {"type": ["number", "null"]},
        "equilibrium_front": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "max_front_deviation": {"type": ["number", "null"], "minimum": 0},
        "wall_time_s": {"type": "number", "minimum": 0},
    },
}


def _parse_expr(text: Optional[str], key: str, variables=None):
    if text is None:
        raise ConfigError(f"missing required key: {key}")
    return parse(text, variables)


def _print_compat(report):
    width = max(len(c.name) for c in report.checks)
    for c in report.checks:
        mark = "pass" if c.passed else "FAIL"
        print(f"{c.name:<{width}}  lhs={c.lhs: .10e}  rhs={c.rhs: .10e}  gap={c.gap:.3e}  {mark}")
    print(f"overall: {'pass' if report.overall else 'FAIL'}")
    print(json.dumps(report.as_dict()))


# -- commands ------------------------------------------------------------------


def cmd_check(cfg: RunConfig, out: Path, waive: bool) -> int:
    params = cfg.params()
    f = _parse_expr(cfg.f_expr, "f_expr")
    phi = _parse_expr(cfg.phi_expr, "phi_expr")
    report = compatibility_check(params, f, phi, cfg.compat_tol)
    _print_compat(report)
    if not report.overall:
        print("failing condition(s): " + "; ".join(report.failing()), file=sys.stderr)
    return EXIT_OK if report.overall else EXIT_FAIL


def _solve(cfg: RunConfig, out: Path, waive: bool):
    params = cfg.params()
    grid = cfg.grid()
    f = _parse_expr(cfg.f_expr, "f_expr")
    phi = _parse_expr(cfg.phi_expr, "phi_expr")
    if waive:
        logger.warning("compatibility check waived by --waive-compat")
    start = time.perf_counter()
    result = run(params, grid, f, phi, snapshot_times=cfg.snapshot_times, waive_compat=waive, compat_tol=cfg.compat_tol)
    wall = time.perf_counter() - start

    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "front.csv", FRONT_COLUMNS, result.series.rows)
    for t_req, state in result.snapshots:
        xi = np.linspace(0.0, 1.0, state.v.size)
        write_csv(out / f"snap_{t_req:.6g}.csv", ("xi", "x", "v"), zip(xi, xi * state.s, state.v))
    write_json(out / "summary.json", _summary(result, params, f, wall))
    return result, params


def _summary(result: RunResult, params: Parameters, f, wall: float) -> dict:
    series = result.series
    t = series.column("t")
    s = series.column("s")
    residual = series.column("identity_residual")
    window = (t >= 0.1 * t[-1]) & np.isfinite(residual)
    s_star = deviation = None
    if not f.uses():
        try:
            s_star = equilibrium_front(float(f(0.0)), params.lam, params.sigma)
            deviation = float(np.max(np.abs(s - s_star)))
        except (NoEquilibrium, InvalidInput):
            pass
    final = result.final_state
    return {
        "status": result.status.value,
        "t_final": float(t[-1]),
        "final_s": float(final.s),
        "final_s_prime": float(final.s_prime),
        "n_rows": len(series),
        "max_identity_residual": _finite_or_none(float(residual[window].max())) if window.any() else None,
        "collapse_time": result.event_time if result.status is Status.FRONT_COLLAPSE else None,
        "equilibrium_front": s_star,
        "max_front_deviation": deviation,
        "wall_time_s": wall,
    }


def cmd_solve(cfg: RunConfig, out: Path, waive: bool) -> int:
    result, _ = _solve(cfg, out, waive)
    if result.status is not Status.COMPLETED:
        print(result.message, file=sys.stderr)
    print(f"{result.status.value}: t={result.final_state.t:.6g} s={result.final_state.s:.10g}")
    return STATUS_EXIT[result.status]


def cmd_probe(cfg: RunConfig, out: Path, waive: bool) -> int:
    result, params = _solve(cfg, out, waive)
    if result.status is not Status.COMPLETED:
        print(result.message, file=sys.stderr)
        return STATUS_EXIT[result.status]
    epsilon = cfg.epsilon_layer if cfg.epsilon_layer is not None else 0.05 * params.t_end
    report = analysis.regularity_report(result.series, epsilon, cfg.k_max, cfg.threshold_factor, cfg.stride)
    write_json(out / "report.json", report.as_dict())
    for k in range(1, cfg.k_max + 1):
        t, d = analysis.derivative_table(result.series, k, epsilon, cfg.stride)
        write_csv(out / f"deriv_k{k}.csv", ("t", f"d{k}s"), zip(t, d))
    for order in report.orders:
        where = ", ".join(f"t={d.location:.6g} (|jump|={d.magnitude:.3g})" for d in order.jumps) or "none"
        print(f"k={order.k}: jumps {where}")
    return EXIT_OK


def cmd_mms(cfg: RunConfig, out: Path, waive: bool) -> int:
    cfg.require("lam", "sigma", "t_end")
    if len(cfg.levels) < 3:
        raise ConfigError("mms needs at least 3 levels")
    s_bar = _parse_expr(cfg.s_bar, "s_bar", ("t",))
    v_shape = _parse_expr(cfg.v_shape, "v_shape", ("xi", "t"))
    # b is replaced by s_bar(0) inside the case
    base = Parameters(cfg.lam, cfg.sigma, 1.0, cfg.t_end, min(cfg.s_min, 0.5))
    case = make_mms_case(s_bar, v_shape, base)
    table = convergence_study(case, cfg.levels)

    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "convergence.csv", ("n_xi", "dt", "err_v_max", "err_s_max"), table.rows)
    exact = max(max(r[2], r[3]) for r in table.rows) <= EXACT_ERROR
    space_ok = table.p_space is None or table.p_space >= P_SPACE_MIN
    time_ok = table.p_time is None or table.p_time >= P_TIME_MIN
    measured = table.p_space is not None or table.p_time is not None
    passed = exact or (space_ok and time_ok and measured)
    write_json(out / "convergence.json", {**table.as_dict(), "exact": exact, "pass": passed})

    for n_xi, dt, ev, es in table.rows:
        print(f"n_xi={n_xi:<5d} dt={dt:.4e}  err_v={ev:.4e}  err_s={es:.4e}")
    fmt = lambda p: "n/a" if p is None else f"{p:.4f}"  # noqa: E731
    print(f"p_space={fmt(table.p_space)} p_time={fmt(table.p_time)} exact={exact} -> {'pass' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_FAIL


def cmd_equilibrium(c: float, lam: float, sigma: float) -> int:
    try:
        s_star = equilibrium_front(c, lam, sigma)
    except NoEquilibrium as exc:
        print(f"NoEquilibrium: {exc}")
        return EXIT_FAIL
    print(f"s* = {s_star:.17g}")
    print(f"residual = {equilibrium_residual(s_star, c, lam, sigma):.3e}")
    return EXIT_OK


# -- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="freefront", description=__doc__.split("\n\n")[0])
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument("--out", help="output directory (overrides output_dir)")
    parser.add_argument("--waive-compat", action="store_true", help="run even if the corner conditions fail")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("check", "solve", "mms", "probe"):
        sub.add_parser(name)
    eq = sub.add_parser("equilibrium", help="steady front for constant boundary data")
    eq.add_argument("--c", type=float, required=True)
    eq.add_argument("--lambda", dest="lam", type=float, default=None, help="default 1, or the config value")
    eq.add_argument("--sigma", type=float, default=None, help="default 1, or the config value")
    return parser


COMMANDS = {"check": cmd_check, "solve": cmd_solve, "mms": cmd_mms, "probe": cmd_probe}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.command == "equilibrium":
            lam = next(x for x in (args.lam, cfg.lam, 1.0) if x is not None)
            sigma = next(x for x in (args.sigma, cfg.sigma, 1.0) if x is not None)
            return cmd_equilibrium(args.c, lam, sigma)
        if not args.config:
            raise ConfigError(f"{args.command} needs --config")
        out = Path(args.out if args.out else cfg.output_dir)
        return COMMANDS[args.command](cfg, out, args.waive_compat)
    except ExprSyntaxError as exc:
        print(f"expression error: {exc}", file=sys.stderr)
        if exc.text:
            print(f"  {exc.text}\n  {' ' * exc.pos}^", file=sys.stderr)
        return EXIT_USAGE
    except IncompatibleData as exc:
        _print_compat(exc.report)
        print(f"{exc} (use --waive-compat to run anyway)", file=sys.stderr)
        return EXIT_FAIL
    except StudyAborted as exc:
        print(f"convergence study aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ConfigError, InvalidInput, NeumannViolation, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
