"""Weight function, non-Markovianity measures and the end-to-end pipeline.

The regularized measure is ``[int g**(1/(alpha+1)) w dt]**(alpha+1)`` with
``w = log F / int log F`` over ``[0, t_end]``.  Simple poles of ``g`` (amplitude
zeros) are integrable after the root; the quadrature treats a small window
around each of them separately.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .errors import DegenerateWeight, NonIntegrablePole, NotApplicable, PoleOrderMismatch
from .model import DEFAULT_DT, CavityParams, RegOrder, TimeGrid, make_grid
from .quantum_map import ChannelSnapshot, choi, choi_asymptotic, fidelity_series
from .rates import RateTrajectory, neg_part, pole_times, rates_from_amplitudes, u_from_amplitudes
from .volterra import AmplitudeTrajectory, solve_pair

DEFAULT_THIN = 10
POLE_WINDOW_STEPS = 10
# local strength of a simple zero: gamma ~ -2/(t - t*) on the far side
ZERO_STRENGTH = 2.0
VARIANTS = ("RHP", "Weighted", "SqrtWeighted", "SqrtWeightedUncorrelated")


@dataclass(frozen=True)
class MeasureResult:
    value: float
    t_end: float
    variant: str
    reg: RegOrder = field(default_factory=RegOrder)
    relaxation_estimate: float = math.nan
    pole_count: int = 0
    diagnostics: dict = field(default_factory=dict)


def _trapz(y, x):
    return float(np.sum(0.5 * np.diff(x) * (y[1:] + y[:-1])))


def weight(F, grid: TimeGrid):
    """Normalized weight ``w = log F / int_0^t_end log F`` on the grid nodes.

    Returns ``(w, relaxation_estimate)`` with ``relaxation_estimate =
    -int_0^t_end log F``.
    """
    F = np.asarray(F, dtype=float)
    t = grid.nodes
    if F.shape != t.shape:
        raise ValueError("F must be sampled on the grid nodes")
    if np.any(F <= 0) or np.any(F > 1 + 1e-12):
        raise ValueError("fidelity samples must lie in (0, 1]")
    logF = np.log(np.minimum(F, 1.0))
    total = _trapz(logF, t)
    if total == 0.0:
        raise DegenerateWeight("F == 1 on the whole window; the weight is undefined")
    return logF / total, -total


def _pole_times_of(poles):
    out = []
    for z in poles:
        out.append(float(getattr(z, "time", z)))
    return out


def measure_rhp(g, grid: TimeGrid, t_end: float | None = None, poles=()) -> MeasureResult:
    """Unweighted ``int_0^t_end g``; refuses windows that contain a pole."""
    t = grid.nodes
    t_end = grid.t_end if t_end is None else float(t_end)
    g = np.asarray(g, dtype=float)
    inside = [tp for tp in _pole_times_of(poles) if 0 <= tp <= t_end]
    if inside or not np.all(np.isfinite(g[t <= t_end])):
        raise NonIntegrablePole(
            f"g has {len(inside) or 'a'} non-integrable pole(s) in [0, {t_end}]; use the root-regularized measure"
        )
    mask = t <= t_end
    return MeasureResult(_trapz(g[mask], t[mask]), t_end, "RHP")


def measure_weighted(g, w, grid: TimeGrid, poles=()) -> MeasureResult:
    """``int g w``; like the RHP measure it is undefined across poles."""
    g = np.asarray(g, dtype=float)
    if _pole_times_of(poles) or not np.all(np.isfinite(g)):
        raise NonIntegrablePole("weighted measure diverges at poles of g")
    return MeasureResult(_trapz(g * np.asarray(w), grid.nodes), grid.t_end, "Weighted")


def _windows(minima, delta, t_end):
    """Merged ``[t* - delta, t* + delta]`` intervals around sharp amplitude minima."""
    spans = []
    for z in sorted(minima, key=lambda z: z.time):
        if not (z.exact or z.kappa < delta):
            continue
        a, b = max(0.0, z.time - delta), min(t_end, z.time + delta)
        if a >= b:
            continue
        if spans and a <= spans[-1][1]:
            spans[-1][1] = max(spans[-1][1], b)
            spans[-1][2].append(z)
        else:
            spans.append([a, b, [z]])
    return spans


def _quad_singular(f, u, v, left, right, k):
    """``int_u^v f`` for ``f ~ |x - x*|**(1/k - 1)`` at the flagged ends.

    The substitution ``x = x* +- s**k`` makes the integrand bounded there.
    """
    if left and right:
        m = 0.5 * (u + v)
        return _quad_singular(f, u, m, True, False, k) + _quad_singular(f, m, v, False, True, k)
    opts = dict(limit=400, epsabs=1e-16, epsrel=1e-10)
    if left:
        return quad(lambda s: f(u + s**k) * k * s ** (k - 1), 0.0, (v - u) ** (1 / k), **opts)[0]
    if right:
        return quad(lambda s: f(v - s**k) * k * s ** (k - 1), 0.0, (v - u) ** (1 / k), **opts)[0]
    return quad(f, u, v, **opts)[0]


def local_pole_integral(c: float, w_star: float, delta: float, reg: RegOrder = RegOrder()) -> float:
    """``int_0^delta (c/tau)**(1/(alpha+1)) w* dtau`` for a pole ``g ~ c/tau``.

    For ``alpha = 1`` this is ``2 sqrt(c delta) w*``.
    """
    q = 1.0 / reg.power
    return c**q * delta ** (1 - q) / (1 - q) * w_star


def measure_sqrt(g, w, grid: TimeGrid, reg: RegOrder = RegOrder(), minima=(),
                 g_fn=None, w_fn=None, delta: float | None = None,
                 variant: str = "SqrtWeighted", relaxation_estimate: float = math.nan) -> MeasureResult:
    """Root-regularized weighted measure.

    Off the pole windows the composite trapezoidal rule runs on the nodes.
    Inside each window (half-width ``delta``, default ``10*dt``) the integrand
    is integrated adaptively from the continuous reconstructions ``g_fn`` and
    ``w_fn``; without them the window falls back to the leading local model
    ``g ~ c/(t - t*)`` on the side where the rate is negative.
    """
    q = 1.0 / reg.power
    for z in minima:
        if z.order > reg.alpha:
            raise PoleOrderMismatch(f"pole of order {z.order} at t={z.time:.6g} needs alpha >= {z.order}")
    t = grid.nodes
    t_end = grid.t_end
    g = np.asarray(g, dtype=float)
    w = np.asarray(w, dtype=float)
    delta = POLE_WINDOW_STEPS * grid.dt if delta is None else float(delta)
    f = np.where(np.isfinite(g), np.power(np.maximum(g, 0.0), q), 0.0) * w
    spans = _windows(minima, delta, t_end)
    if not spans and np.all(np.isfinite(g)) and not np.any(g > 0):
        return MeasureResult(0.0, t_end, variant, reg, relaxation_estimate, 0, {"windows": 0})

    def f_at(x):
        if g_fn is not None and w_fn is not None:
            return float(max(g_fn(x), 0.0) ** q * w_fn(x))
        return float(np.interp(x, t, f))

    total = 0.0
    # trapezoid on the complement of the windows
    edges = [0.0] + [v for s in spans for v in s[:2]] + [t_end]
    for a, b in zip(edges[::2], edges[1::2]):
        if b <= a:
            continue
        sel = (t > a) & (t < b)
        xs = np.concatenate(([a], t[sel], [b]))
        ys = np.concatenate(([f_at(a) if a > 0 else f[0]], f[sel], [f_at(b) if b < t_end else f[-1]]))
        total += _trapz(ys, xs)
    window_part = 0.0
    for a, b, zs in spans:
        if g_fn is not None and w_fn is not None:
            pts = sorted({min(max(x, a), b) for z in zs for x in (z.time, z.time + z.kappa)} | {a, b})
            sing = {z.time for z in zs if z.exact}
            val = sum(_quad_singular(f_at, u, v, u in sing, v in sing, 1.0 / (1.0 - q))
                      for u, v in zip(pts[:-1], pts[1:]))
        else:
            val = 0.0
            for z in zs:
                c = 2.0 / 3.0 * ZERO_STRENGTH
                ws = float(np.interp(z.time, t, w))
                val += local_pole_integral(c, ws, min(b - z.time, delta), reg)
        window_part += val
    total += window_part
    value = max(total, 0.0) ** reg.power
    diag = {"windows": len(spans), "delta": delta, "window_part": window_part}
    npoles = sum(1 for z in minima if z.exact)
    return MeasureResult(value, t_end, variant, reg, relaxation_estimate, npoles, diag)


def measure_sqrt_uncorrelated(rates: RateTrajectory, w, reg: RegOrder = RegOrder(), g_fn=None,
                              w_fn=None, delta: float | None = None,
                              relaxation_estimate: float = math.nan) -> MeasureResult:
    """Root-regularized measure of the uncorrelated part, driven by ``g_uc``."""
    return measure_sqrt(rates.g_uc, w, rates.grid, reg, rates.minima, g_fn, w_fn, delta,
                        "SqrtWeightedUncorrelated", relaxation_estimate)


# --------------------------------------------------------------------------
# closed-form d -> 0 limit


def _omega2_abs(p):
    o2 = p.lam**2 - 4 * p.gamma0**2
    if o2 >= 0:
        raise NotApplicable("lambda >= 2 gamma0: the coincident pair is Markovian")
    return math.sqrt(-o2)


def measure_d0_limit(p: CavityParams) -> float:
    """Long-time limit of the measure as ``d`` decreases to 0: ``(2 gamma0 - lam)/3``."""
    _omega2_abs(p)
    return (2 * p.gamma0 - p.lam) / 3


def i0_period_integral(p: CavityParams) -> float:
    """Integral of ``sqrt(g)`` over one negative-rate interval at ``d = 0``."""
    _omega2_abs(p)
    return 2 * math.pi / math.sqrt(6 * p.gamma0 + 3 * p.lam)


def d0_period(p: CavityParams) -> float:
    """Oscillation period ``2 pi/|Omega_2|`` of the coincident pair."""
    return 2 * math.pi / _omega2_abs(p)


def d0_negative_interval(p: CavityParams, n: int = 1):
    """``(start, end)`` of the ``n``-th interval where the coincident-pair rate
    is negative: from the ``n``-th pole to the following zero of the rate."""
    T = d0_period(p)
    start = pole_times(p, n, N=2)[-1]
    return start, n * T


# --------------------------------------------------------------------------
# pipeline


@dataclass(frozen=True, eq=False)
class NonMarkovianityRun:
    """Measure plus every intermediate series, for inspection and CSV output."""

    result: MeasureResult
    params: CavityParams
    grid: TimeGrid
    channels: tuple
    rates: RateTrajectory
    F: np.ndarray
    w: np.ndarray
    sqrt_g: np.ndarray

    @property
    def value(self) -> float:
        return self.result.value


def _fidelity_curve(grid, snapshot_at, reference, thin):
    n = grid.nodes.size
    idx = np.unique(np.concatenate((np.arange(0, n, max(1, thin)), [n - 1])))
    snaps = [snapshot_at(i) for i in idx]
    Fk = fidelity_series(snaps, reference)
    if idx.size < 4:
        spline = None
        F = np.interp(grid.nodes, grid.nodes[idx], Fk)
    else:
        spline = CubicSpline(grid.nodes[idx], Fk)
        F = spline(grid.nodes)
    return np.clip(F, 1e-300, 1.0), spline


def _g_function(c1: AmplitudeTrajectory, c2: AmplitudeTrajectory, uncorrelated: bool):
    def g_fn(x):
        r1, d1 = c1.interpolate(x)
        r2, d2 = c2.interpolate(x)
        ga = -2 * (d1 / r1).real if r1 != 0 else -math.inf
        gb = -2 * (d2 / r2).real if r2 != 0 else -math.inf
        if uncorrelated:
            return 2.0 / 3.0 * float(neg_part(ga + gb))
        return 2.0 / 3.0 * float(neg_part(ga) + neg_part(gb))
    return g_fn


def measure_channels(c1: AmplitudeTrajectory, c2: AmplitudeTrajectory, uncorrelated: bool = False,
                     reg: RegOrder = RegOrder(), thin: int = DEFAULT_THIN, delta: float | None = None,
                     rates: RateTrajectory | None = None) -> NonMarkovianityRun:
    """Regularized measure from already solved channel amplitudes."""
    p, grid = c1.params, c1.grid
    if rates is None:
        rates = rates_from_amplitudes(c1, c2)
    if uncorrelated:
        u = u_from_amplitudes(c1, c2)
        # u -> 0 for every d, so the reference is the fully relaxed map
        ref = choi(ChannelSnapshot(0.0, 0.0))

        def snap(i):
            return ChannelSnapshot(u[i], u[i], grid.nodes[i])
        g = rates.g_uc
    else:
        ref = choi_asymptotic(p)

        def snap(i):
            return ChannelSnapshot(c1.r[i], c2.r[i], grid.nodes[i])
        g = rates.g
    # rates below the solver's round-off floor are noise, not memory effects
    g = np.where(c1.reliable & c2.reliable, g, 0.0)
    F, spline = _fidelity_curve(grid, snap, ref, thin)
    w, relax = weight(F, grid)
    w_fn = None
    if spline is not None:
        norm = -relax

        def w_fn(x):
            return math.log(min(max(float(spline(x)), 1e-300), 1.0)) / norm
    g_fn = _g_function(c1, c2, uncorrelated)
    variant = "SqrtWeightedUncorrelated" if uncorrelated else "SqrtWeighted"
    res = measure_sqrt(g, w, grid, reg, rates.minima, g_fn, w_fn, delta, variant, relax)
    sqrt_g = np.where(np.isfinite(g), np.sqrt(np.maximum(g, 0.0)), np.inf)
    return NonMarkovianityRun(res, p, grid, (c1, c2), rates, F, w, sqrt_g)


def nonmarkovianity(p: CavityParams, t_end: float, dt: float = DEFAULT_DT, scheme: str = "fast",
                    uncorrelated: bool = False, reg: RegOrder = RegOrder(),
                    thin: int = DEFAULT_THIN, delta: float | None = None) -> NonMarkovianityRun:
    """Solve, build rates and fidelities, and evaluate the regularized measure."""
    grid = make_grid(p, t_end, dt)
    c1, c2 = solve_pair(p, grid, scheme)
    return measure_channels(c1, c2, uncorrelated, reg, thin, delta)


def write_measure_csv(run: NonMarkovianityRun, out=None) -> str:
    """Dump ``t,F,logF,w,sqrt_g``; returns the text if ``out`` is None."""
    buf = io.StringIO() if out is None else out
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["t", "F", "logF", "w", "sqrt_g"])
    for row in zip(run.grid.nodes, run.F, np.log(run.F), run.w, run.sqrt_g):
        wr.writerow([repr(float(v)) for v in row])
    return buf.getvalue() if out is None else ""
