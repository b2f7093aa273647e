"""Distance sweeps, critical-distance bisection, peak search and the N-atom table."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import BracketNotUnimodal, NoSignChange, NMCavityError
from .measure import measure_channels
from .model import DEFAULT_DT, CavityParams, make_grid
from .rates import critical_N, rates_from_amplitudes
from .volterra import solve_pair

DEFAULT_TOL = 5e-3
GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class ScanRow:
    d: float
    measure_total: float
    measure_uncorrelated: float
    min_gamma1: float
    min_gamma_sum: float
    t_end: float
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


@dataclass(frozen=True)
class CriticalResult:
    d_star: float
    bracket: tuple
    tolerance: float
    iterations: int
    kind: str
    evaluations: int = 0
    value: float = math.nan


def _finite_min(x):
    x = x[np.isfinite(x)]
    return float(np.min(x)) if x.size else math.nan


def _rate_minima(rates, c1, c2):
    # t = 0 is excluded: every rate starts at exactly zero there.  Nodes where
    # an amplitude has decayed into the solver's round-off floor carry no rate
    # information and are skipped as well.
    ok1 = c1.reliable.copy()
    ok2 = c2.reliable.copy()
    ok1[0] = ok2[0] = False
    with np.errstate(invalid="ignore"):
        gs = rates.gamma1 + rates.gamma2
    return _finite_min(rates.gamma1[ok1]), _finite_min(gs[ok1 & ok2])


def min_gamma(d: float, p: CavityParams, t_end: float, dt: float = DEFAULT_DT, scheme: str = "fast"):
    """``(min_t gamma1, min_t (gamma1 + gamma2))`` over ``(0, t_end]``."""
    q = p.with_d(d)
    grid = make_grid(q, t_end, dt)
    c1, c2 = solve_pair(q, grid, scheme)
    return _rate_minima(rates_from_amplitudes(c1, c2), c1, c2)


def critical_distance(p: CavityParams, bracket=(1.5, 2.1), tol: float = DEFAULT_TOL,
                      uncorrelated: bool = False, t_end: float = 350.0, dt: float = DEFAULT_DT,
                      scheme: str = "fast") -> CriticalResult:
    """Bisect on ``d`` for the sign change of the relevant minimum rate.

    The total dynamics is non-Markovian when ``min gamma1 < 0``; the
    uncorrelated part when ``min (gamma1 + gamma2) < 0``.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise ValueError("bracket must satisfy lo < hi")
    col = 1 if uncorrelated else 0
    evals = 0

    def f(d):
        nonlocal evals
        evals += 1
        return min_gamma(d, p, t_end, dt, scheme)[col]

    flo, fhi = f(lo), f(hi)
    if not (np.sign(flo) * np.sign(fhi) < 0):
        raise NoSignChange(
            f"minimum rate has the same sign at d={lo} ({flo:.3g}) and d={hi} ({fhi:.3g})"
        )
    it = 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
        it += 1
    kind = "Uncorrelated" if uncorrelated else "Total"
    return CriticalResult(0.5 * (lo + hi), (lo, hi), tol, it, kind, evals)


def scan_row(p: CavityParams, d: float, t_end: float, dt: float = DEFAULT_DT,
             scheme: str = "fast") -> ScanRow:
    """Total and uncorrelated measure plus rate minima at one distance."""
    q = p.with_d(d)
    try:
        grid = make_grid(q, t_end, dt)
        c1, c2 = solve_pair(q, grid, scheme)
        rates = rates_from_amplitudes(c1, c2)
        tot = measure_channels(c1, c2, False, rates=rates).value
        unc = measure_channels(c1, c2, True, rates=rates).value
        m1, ms = _rate_minima(rates, c1, c2)
        return ScanRow(float(d), tot, unc, m1, ms, float(t_end))
    except (NMCavityError, ValueError, ArithmeticError) as exc:
        nan = math.nan
        return ScanRow(float(d), nan, nan, nan, nan, float(t_end), f"{type(exc).__name__}: {exc}")


def sweep_distance(p: CavityParams, d_list, t_end: float, dt: float = DEFAULT_DT,
                   include_inf: bool = False, scheme: str = "fast", workers: int = 1) -> list:
    """Independent rows for every distance, ordered by ``d`` (inf last)."""
    ds = sorted({float(d) for d in d_list})
    if include_inf and math.inf not in ds:
        ds.append(math.inf)
    if not ds:
        raise ValueError("d_list must not be empty")
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as ex:
            futs = [ex.submit(scan_row, p, d, t_end, dt, scheme) for d in ds]
            return [f.result() for f in futs]
    return [scan_row(p, d, t_end, dt, scheme) for d in ds]


def distance_grid(d_min: float, d_max: float, points: int, log_spacing: bool = False) -> np.ndarray:
    if points < 1:
        raise ValueError("points must be >= 1")
    if log_spacing:
        if d_min <= 0:
            raise ValueError("log spacing needs d_min > 0")
        return np.geomspace(d_min, d_max, points)
    return np.linspace(d_min, d_max, points)


def find_dmax(p: CavityParams, bracket, t_end: float, tol: float = DEFAULT_TOL,
              dt: float = DEFAULT_DT, scheme: str = "fast") -> CriticalResult:
    """Golden-section search for the distance maximizing the total measure."""
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise ValueError("bracket must satisfy lo < hi")
    cache = {}

    def f(d):
        if d not in cache:
            grid = make_grid(p.with_d(d), t_end, dt)
            c1, c2 = solve_pair(p.with_d(d), grid, scheme)
            cache[d] = measure_channels(c1, c2, False).value
        return cache[d]

    a, b = lo, hi
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    fa, fb, f1, f2 = f(a), f(b), f(x1), f(x2)
    if max(f1, f2) <= max(fa, fb) or max(f1, f2) == 0:
        raise BracketNotUnimodal(
            f"no interior maximum in [{lo}, {hi}]: ends {fa:.3g}, {fb:.3g}; interior {f1:.3g}, {f2:.3g}"
        )
    it = 0
    while b - a > tol:
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
        it += 1
    best = max(cache.items(), key=lambda kv: kv[1] if lo <= kv[0] <= hi else -1)
    d_star = min(max(best[0], a + 1e-15), b - 1e-15) if a < best[0] < b else 0.5 * (a + b)
    return CriticalResult(d_star, (a, b), tol, it, "MaxMeasure", len(cache), best[1])


@dataclass(frozen=True)
class NAtomRow:
    N: int
    omega_N_sq: float
    nonmarkovian: bool
    N_c: int


def natom_scan(p: CavityParams, N_list) -> list:
    """Analytic threshold table: non-Markovian iff ``lam < sqrt(2N) gamma0``."""
    nc = critical_N(p)
    rows = []
    for N in N_list:
        N = int(N)
        if N < 1:
            raise ValueError("N must be >= 1")
        o2 = p.lam**2 - 2 * N * p.gamma0**2
        rows.append(NAtomRow(N, o2, bool(p.lam < math.sqrt(2 * N) * p.gamma0), nc))
    return rows


SCAN_HEADER = ["d", "measure_total", "measure_uncorrelated", "min_gamma1", "min_gamma_sum", "t_end"]
NATOM_HEADER = ["N", "omega_N_sq", "nonmarkovian", "N_c"]


def _fmt(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def write_scan_csv(rows, out=None) -> str:
    """Scan rows as CSV; failed rows keep NaN values and add an ``error`` column."""
    buf = io.StringIO() if out is None else out
    w = csv.writer(buf, lineterminator="\n")
    any_err = any(r.error for r in rows)
    w.writerow(SCAN_HEADER + (["error"] if any_err else []))
    for r in rows:
        vals = [_fmt(r.d), _fmt(r.measure_total), _fmt(r.measure_uncorrelated),
                _fmt(r.min_gamma1), _fmt(r.min_gamma_sum), _fmt(r.t_end)]
        w.writerow(vals + ([r.error] if any_err else []))
    return buf.getvalue() if out is None else ""


def write_natoms_csv(rows, out=None) -> str:
    buf = io.StringIO() if out is None else out
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(NATOM_HEADER)
    for r in rows:
        w.writerow([_fmt(r.N), _fmt(r.omega_N_sq), _fmt(r.nonmarkovian), _fmt(r.N_c)])
    return buf.getvalue() if out is None else ""
