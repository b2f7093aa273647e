"""Command-line front end.

Subcommands ``rates``, ``measure``, ``scan``, ``critical``, ``natoms`` and
``validate``.  Settings come from flags, then from an optional ``key = value``
config file, then from built-in defaults.  Exit codes: 0 success, 1 usage,
2 numerical failure, 3 failed validation.
"""

from __future__ import annotations

import argparse
import contextlib
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .errors import NMCavityError, NoSignChange, NonPositiveParameter
from .model import DEFAULT_DT, CavityParams, RegOrder, make_grid, validate_params

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_VALIDATION = 0, 1, 2, 3
SCHEMES = ("fast", "direct")

DEFAULTS = {
    "omega0": 1.0,
    "d": 0.0,
    "t_end": 350.0,
    "dt": DEFAULT_DT,
    "scheme": "fast",
    "uncorrelated": False,
    "alpha": 1,
    "points": 40,
    "log_spacing": False,
    "include_inf": False,
    "tol": 5e-3,
    "workers": 1,
    "quick": False,
    "n_min": 1,
    "n_max": 50,
}
# the distance range means a sweep for ``scan`` and a bracket for ``critical``
RANGE_DEFAULTS = {"scan": (0.0, 2.1), "critical": (1.5, 2.1)}

FLOAT_KEYS = {"gamma0", "lambda", "omega0", "d", "t_end", "dt", "d_min", "d_max", "tol"}
INT_KEYS = {"alpha", "points", "workers", "n_min", "n_max"}
BOOL_KEYS = {"uncorrelated", "log_spacing", "include_inf", "quick"}
STR_KEYS = {"scheme", "out"}
KNOWN_KEYS = FLOAT_KEYS | INT_KEYS | BOOL_KEYS | STR_KEYS


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class RunConfig:
    params: CavityParams
    t_end: float
    dt: float
    scheme: str = "fast"
    uncorrelated: bool = False
    alpha: int = 1
    out: str | None = None


def parse_float(text) -> float:
    """Float parser that also accepts ``inf``/``infinity`` for the far limit."""
    s = str(text).strip().lower()
    if s in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        return float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _parse_bool(text) -> bool:
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, dashes in keys are
    treated as underscores."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "lam":
            key = "lambda"
        if key not in KNOWN_KEYS:
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        try:
            if key in FLOAT_KEYS:
                out[key] = parse_float(value)
            elif key in INT_KEYS:
                out[key] = int(value)
            elif key in BOOL_KEYS:
                out[key] = _parse_bool(value)
            else:
                out[key] = value
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{path}:{n}: {exc}") from None
    return out


def _common(p):
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--gamma0", type=parse_float)
    p.add_argument("--lambda", dest="lambda_", type=parse_float, metavar="LAMBDA")
    p.add_argument("--omega0", type=parse_float)
    p.add_argument("--d", type=parse_float, help="interatomic distance; 'inf' for the far limit")
    p.add_argument("--t-end", dest="t_end", type=parse_float)
    p.add_argument("--dt", type=parse_float)
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--out", help="output file (default: stdout)")


def _flag(p, name, **kw):
    p.add_argument(name, default=None, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nmcavity", description="Non-Markovianity of two atoms in a lossy cavity.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sp = {}
    for name, help_ in (("rates", "decay rates and g-functions on the time grid"),
                        ("measure", "regularized non-Markovianity measure"),
                        ("scan", "measure and rate minima over a range of distances"),
                        ("critical", "bisect for the critical distance"),
                        ("natoms", "N-atom threshold table"),
                        ("validate", "run the numerical self-checks")):
        sp[name] = sub.add_parser(name, help=help_)
        _common(sp[name])
    for name in ("measure",):
        _flag(sp[name], "--uncorrelated", action="store_const", const=True)
        _flag(sp[name], "--alpha", type=int)
    for name in ("scan", "critical"):
        _flag(sp[name], "--d-min", dest="d_min", type=parse_float)
        _flag(sp[name], "--d-max", dest="d_max", type=parse_float)
    _flag(sp["scan"], "--points", type=int)
    _flag(sp["scan"], "--log-spacing", dest="log_spacing", action="store_const", const=True)
    _flag(sp["scan"], "--include-inf", dest="include_inf", action="store_const", const=True)
    _flag(sp["scan"], "--workers", type=int)
    _flag(sp["critical"], "--uncorrelated", action="store_const", const=True)
    _flag(sp["critical"], "--tol", type=parse_float)
    _flag(sp["natoms"], "--n-min", dest="n_min", type=int)
    _flag(sp["natoms"], "--n-max", dest="n_max", type=int)
    _flag(sp["validate"], "--quick", action="store_const", const=True)
    return parser


def resolve(args) -> dict:
    """Merge flags over config-file values over defaults."""
    settings = dict(DEFAULTS)
    lo, hi = RANGE_DEFAULTS.get(args.command, (None, None))
    settings.update(d_min=lo, d_max=hi)
    if args.config:
        settings.update(read_config(args.config))
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        settings["lambda" if key == "lambda_" else key] = value
    return settings


def _params(s) -> CavityParams:
    missing = [k for k in ("gamma0", "lambda") if s.get(k) is None]
    if missing:
        raise UsageError("missing required setting(s): " + ", ".join("--" + k for k in missing))
    p = CavityParams(s["gamma0"], s["lambda"], s["omega0"], s["d"])
    report = validate_params(p)
    if not report.ok:
        raise UsageError(str(report.errors[0]))
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return p


def run_config(s) -> RunConfig:
    p = _params(s)
    if not s["t_end"] > 0 or not math.isfinite(s["t_end"]):
        raise UsageError("t_end must be positive and finite")
    if not s["dt"] > 0:
        raise UsageError("dt must be positive")
    if s["scheme"] not in SCHEMES:
        raise UsageError(f"scheme must be one of {SCHEMES}")
    try:
        RegOrder(s["alpha"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return RunConfig(p, float(s["t_end"]), float(s["dt"]), s["scheme"], bool(s["uncorrelated"]),
                     int(s["alpha"]), s.get("out"))


@contextlib.contextmanager
def _sink(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _fmt(x) -> str:
    return repr(float(x))


def cmd_rates(s) -> int:
    from .rates import rates_from_amplitudes, write_rates_csv
    from .volterra import solve_pair

    cfg = run_config(s)
    grid = make_grid(cfg.params, cfg.t_end, cfg.dt)
    c1, c2 = solve_pair(cfg.params, grid, cfg.scheme)
    rates = rates_from_amplitudes(c1, c2)
    with _sink(cfg.out) as fh:
        write_rates_csv(rates, fh)
    return EXIT_OK


def cmd_measure(s) -> int:
    from .measure import nonmarkovianity

    cfg = run_config(s)
    run = nonmarkovianity(cfg.params, cfg.t_end, cfg.dt, cfg.scheme, cfg.uncorrelated, RegOrder(cfg.alpha))
    res = run.result
    report = [("value", _fmt(res.value)), ("relaxation_estimate", _fmt(res.relaxation_estimate)),
              ("pole_count", str(res.pole_count)), ("variant", res.variant), ("t_end", _fmt(res.t_end)),
              ("d", _fmt(cfg.params.d))]
    for k, v in report:
        print(f"{k}={v}")
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(",".join(k for k, _ in report) + "\n")
            fh.write(",".join(v for _, v in report) + "\n")
    return EXIT_OK


def cmd_scan(s) -> int:
    from .scan import distance_grid, sweep_distance, write_scan_csv

    cfg = run_config(s)
    try:
        ds = distance_grid(s["d_min"], s["d_max"], s["points"], s["log_spacing"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if s["workers"] < 1:
        raise UsageError("workers must be >= 1")
    rows = sweep_distance(cfg.params, ds, cfg.t_end, cfg.dt, s["include_inf"], cfg.scheme, s["workers"])
    with _sink(cfg.out) as fh:
        write_scan_csv(rows, fh)
    for r in rows:
        if r.error:
            print(f"warning: d={r.d!r}: {r.error}", file=sys.stderr)
    return EXIT_OK if any(r.ok for r in rows) else EXIT_NUMERIC


def cmd_critical(s) -> int:
    from .scan import critical_distance

    cfg = run_config(s)
    if not (s["d_min"] < s["d_max"]):
        raise UsageError("need d_min < d_max")
    if not s["tol"] > 0:
        raise UsageError("tol must be positive")
    res = critical_distance(cfg.params, (s["d_min"], s["d_max"]), s["tol"], cfg.uncorrelated,
                            cfg.t_end, cfg.dt, cfg.scheme)
    key = "d_uc" if cfg.uncorrelated else "d_c"
    lines = [f"{key}={_fmt(res.d_star)}", f"bracket_lo={_fmt(res.bracket[0])}",
             f"bracket_hi={_fmt(res.bracket[1])}", f"iterations={res.iterations}",
             f"evaluations={res.evaluations}"]
    with _sink(cfg.out) as fh:
        fh.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_natoms(s) -> int:
    from .scan import natom_scan, write_natoms_csv

    p = _params(s)
    if not 1 <= s["n_min"] <= s["n_max"]:
        raise UsageError("need 1 <= n_min <= n_max")
    rows = natom_scan(p, range(s["n_min"], s["n_max"] + 1))
    with _sink(s.get("out")) as fh:
        write_natoms_csv(rows, fh)
    return EXIT_OK


def cmd_validate(s) -> int:
    from .validation import run_checks

    if not s["dt"] > 0:
        raise UsageError("dt must be positive")
    checks = run_checks(s["dt"], s["quick"])
    with _sink(s.get("out")) as fh:
        for c in checks:
            fh.write(f"{'PASS' if c.ok else 'FAIL'} {c.name}: {c.detail}\n")
    return EXIT_OK if all(c.ok for c in checks) else EXIT_VALIDATION


COMMANDS = {"rates": cmd_rates, "measure": cmd_measure, "scan": cmd_scan,
            "critical": cmd_critical, "natoms": cmd_natoms, "validate": cmd_validate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = resolve(args)
        return COMMANDS[args.command](settings)
    except (UsageError, NonPositiveParameter) as exc:
        print(f"nmcavity: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoSignChange as exc:
        print(f"nmcavity: no sign change: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (NMCavityError, ArithmeticError) as exc:
        print(f"nmcavity: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BrokenPipeError:
        # downstream reader closed early (e.g. ``| head``); not an error
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK
    except OSError as exc:
        print(f"nmcavity: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
