"""Decay rates, Lamb shifts and the non-Markovian g-functions.

Numerical rates come from amplitude trajectories through the log-derivative
``rdot/r``.  Closed forms for the single atom, the coincident pair, far
separated atoms and ``N`` coincident atoms are kept alongside, both as
physics in their own right and as oracles for the solvers.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import GridMismatch, NoPoles, NotApplicable
from .model import CavityParams, TimeGrid
from .volterra import AmplitudeTrajectory, hermite


class BoundaryCase(UserWarning):
    """Parameters sit exactly on a Markovian/non-Markovian threshold."""


def neg_part(x):
    """``(|x| - x)/2``; ``-inf`` maps to ``inf``, ``+inf`` to 0."""
    x = np.asarray(x, dtype=float)
    out = np.where(x < 0, -x, 0.0)
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# closed forms


def _omega_sq(N, p):
    return p.lam**2 - 2 * N * p.gamma0**2


def gamma_N(t, N: int, p: CavityParams):
    """``2N gamma0**2 / (lam + Omega_N coth(Omega_N t/2))`` with
    ``Omega_N = sqrt(lam**2 - 2N gamma0**2)``.

    Written in the pole-free numerator/denominator form so ``t = 0`` gives 0
    and an imaginary ``Omega_N`` uses real trigonometric functions.  At a pole
    the value is a signed infinity.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    t = np.asarray(t, dtype=float)
    c = 2 * N * p.gamma0**2
    o2 = _omega_sq(N, p)
    with np.errstate(divide="ignore", invalid="ignore"):
        if o2 > 0:
            om = math.sqrt(o2)
            th = np.tanh(om * t / 2)
            out = c * th / (p.lam * th + om)
        elif o2 < 0:
            w = math.sqrt(-o2)
            sn = np.sin(w * t / 2)
            cs = np.cos(w * t / 2)
            out = c * sn / (p.lam * sn + w * cs)
        else:
            out = c * t / (p.lam * t + 2)
    return out if out.ndim else float(out)


def gamma_single(t, p: CavityParams):
    """Decay rate of one atom in the cavity."""
    return gamma_N(t, 1, p)


def g_atom(t, p: CavityParams):
    """Negative part of the single-atom rate."""
    return neg_part(gamma_single(t, p))


def g_N(t, N: int, p: CavityParams):
    """``2/(N+1)`` times the negative part of ``gamma_N``."""
    return 2.0 / (N + 1) * neg_part(gamma_N(t, N, p))


def g_two_atoms_d0(t, p: CavityParams):
    """Coincident pair: only the symmetric channel decays, at rate ``gamma_N(., 2)``."""
    return g_N(t, 2, p)


def g_two_atoms_far(t, p: CavityParams):
    """Infinitely separated pair: both channels decay at the single-atom rate."""
    return 4.0 / 3.0 * neg_part(gamma_single(t, p))


def c_plus_N(t, N: int, p: CavityParams):
    """Normalized symmetric amplitude of ``N`` coincident atoms."""
    if N < 1:
        raise ValueError("N must be >= 1")
    t = np.asarray(t, dtype=float)
    lam = p.lam
    o2 = _omega_sq(N, p)
    if o2 > 0:
        om = math.sqrt(o2)
        # cosh + (lam/om) sinh in exponentials; expm1 keeps the sinh/om part
        # accurate when om << lam (close to the threshold)
        x = om * t / 2
        lo = np.exp(-x - lam * t / 2)
        hi = np.exp(x - lam * t / 2)
        with np.errstate(over="ignore"):
            diff = np.where(x < 300, lo * np.expm1(np.minimum(2 * x, 600)), hi - lo)
        out = 0.5 * (hi + lo) + lam / (2 * om) * diff
    elif o2 < 0:
        w = math.sqrt(-o2)
        out = np.exp(-lam * t / 2) * (np.cos(w * t / 2) + lam / w * np.sin(w * t / 2))
    else:
        out = np.exp(-lam * t / 2) * (1 + lam * t / 2)
    return out if out.ndim else float(out)


def r1_closed_d0(t, p: CavityParams):
    """Symmetric amplitude of the coincident pair."""
    return c_plus_N(t, 2, p)


def pole_times(p: CavityParams, n_max: int, N: int = 1) -> list:
    """First ``n_max`` poles of ``gamma_N``; spacing is ``2*pi/|Omega_N|``."""
    o2 = _omega_sq(N, p)
    if o2 >= 0:
        raise NoPoles(f"lambda >= sqrt({2 * N}) gamma0: the rate has no poles")
    w = math.sqrt(-o2)
    phase = math.atan2(w, p.lam)
    return [2.0 / w * (math.pi * n - phase) for n in range(1, n_max + 1)]


def critical_N(p: CavityParams) -> int:
    """``ceil(lam**2 / (2 gamma0**2))``.

    At exact equality ``lam = sqrt(2N) gamma0`` the strict criterion fails for
    the returned ``N`` itself; a :class:`BoundaryCase` warning is issued instead
    of silently picking a side.
    """
    x = p.lam**2 / (2 * p.gamma0**2)
    n = max(1, math.ceil(x))
    nearest = round(x)
    if nearest >= 1 and abs(x - nearest) <= 1e-12 * x:
        warnings.warn(
            f"lambda = sqrt({2 * nearest}) gamma0 sits on the threshold; "
            f"N = {nearest} is marginal (strictly non-Markovian from N = {nearest + 1})",
            BoundaryCase,
            stacklevel=2,
        )
        return int(nearest)
    return int(n)


@dataclass(frozen=True)
class AnalyticFamily:
    """Closed-form rates of a configuration.

    ``variant`` is one of ``SingleAtom``, ``TwoAtomD0``, ``TwoAtomDInf``,
    ``NAtomD0`` (with ``N``) or ``Uncorrelated`` (``d`` must be 0 or inf).
    """

    variant: str
    params: CavityParams
    N: int = 1

    VARIANTS = ("SingleAtom", "TwoAtomD0", "TwoAtomDInf", "NAtomD0", "Uncorrelated")

    def __post_init__(self):
        if self.variant not in self.VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.variant == "Uncorrelated" and not (self.params.d == 0 or self.params.far):
            raise NotApplicable("closed-form uncorrelated rates exist only for d = 0 or d = inf")

    def rates(self, t):
        """``(gamma1, gamma2)``; single-atom and N-atom families return the
        symmetric channel and zero."""
        v, p = self.variant, self.params
        t = np.asarray(t, dtype=float)
        if v == "SingleAtom":
            return gamma_single(t, p), np.zeros_like(t)
        if v == "TwoAtomD0":
            return gamma_N(t, 2, p), np.zeros_like(t)
        if v == "TwoAtomDInf":
            g = gamma_single(t, p)
            return g, g
        if v == "NAtomD0":
            return gamma_N(t, self.N, p), np.zeros_like(t)
        if p.d == 0:
            return gamma_N(t, 2, p), np.zeros_like(t)
        g = gamma_single(t, p)
        return g, g

    def g(self, t):
        v, p = self.variant, self.params
        if v == "SingleAtom":
            return g_atom(t, p)
        if v == "TwoAtomD0":
            return g_two_atoms_d0(t, p)
        if v == "TwoAtomDInf":
            return g_two_atoms_far(t, p)
        if v == "NAtomD0":
            return g_N(t, self.N, p)
        g1, g2 = self.rates(t)
        return 2.0 / 3.0 * neg_part(np.asarray(g1) + np.asarray(g2))

    def amplitude(self, t):
        v, p = self.variant, self.params
        if v in ("SingleAtom", "TwoAtomDInf"):
            return c_plus_N(t, 1, p)
        if v == "NAtomD0":
            return c_plus_N(t, self.N, p)
        return c_plus_N(t, 2, p)


# --------------------------------------------------------------------------
# numerical rates


@dataclass(frozen=True)
class AmplitudeMinimum:
    """A local minimum of ``|r|`` between grid nodes.

    ``kappa = depth/|slope|`` is the time scale on which the log-derivative
    swings through its ``1/(t - time)`` shape; ``exact`` marks a true zero
    (``depth`` below the trajectory's zero tolerance).
    """

    channel: int
    time: float
    depth: float
    slope: complex
    kappa: float
    exact: bool
    order: int = 1


def amplitude_minima(traj: AmplitudeTrajectory) -> list:
    """Locate local minima of ``|r|`` by the sign change of ``Re(conj(r) rdot)``
    refined on the Hermite reconstruction."""
    r, rd, t = traj.r, traj.rdot, traj.t
    q = (np.conj(r) * rd).real
    ok = traj.reliable
    idx = np.nonzero((q[:-1] < 0) & (q[1:] >= 0) & (ok[:-1] | ok[1:]))[0]
    out = []
    tol = traj.zero_tol

    def qf(x):
        v, dv = hermite(t, r, rd, x)
        return float((np.conj(v) * dv).real)

    for j in idx:
        a, b = t[j], t[j + 1]
        if q[j + 1] == 0:
            ts = b
        elif qf(a) < 0 < qf(b):
            ts = brentq(qf, a, b, xtol=1e-14 * max(1.0, b), rtol=1e-15)
        else:
            # the reconstruction disagrees with the nodes (round-off level |r|)
            ts = a + (b - a) * q[j] / (q[j] - q[j + 1])
        v, dv = hermite(t, r, rd, ts)
        depth = float(abs(v))
        slope = complex(dv)
        kappa = depth / abs(slope) if slope != 0 else math.inf
        out.append(AmplitudeMinimum(traj.m, float(ts), depth, slope, kappa, depth < tol))
    return out


@dataclass(frozen=True, eq=False)
class RateTrajectory:
    """Rates of both channels and the g-functions on a common grid.

    At a node where an amplitude vanishes the rate is stored as a signed
    infinity; the matching :class:`AmplitudeMinimum` carries the slope.
    """

    grid: TimeGrid
    gamma1: np.ndarray
    gamma2: np.ndarray
    S1: np.ndarray
    S2: np.ndarray
    g: np.ndarray
    g_uc: np.ndarray
    poles: tuple = ()
    minima: tuple = ()
    params: CavityParams | None = field(default=None)

    @property
    def t(self):
        return self.grid.nodes


def _channel_rates(traj, minima):
    r, rd = traj.r, traj.rdot
    tol = traj.zero_tol
    with np.errstate(divide="ignore", invalid="ignore"):
        x = rd / r
    # + 0.0 folds the -0.0 produced at t = 0 into +0.0
    gamma = -2 * x.real + 0.0
    S = -2 * x.imag + 0.0
    # signed infinities only next to a genuine zero; a small but smoothly
    # decaying amplitude keeps its finite log-derivative
    zeros = [z for z in minima if z.exact]
    reach = 2.0 * float(np.max(np.diff(traj.t))) if len(traj.t) > 1 else 0.0
    cand = np.nonzero(np.abs(r) < tol)[0]
    bad = [i for i in cand
           if r[i] == 0 or any(abs(z.time - traj.t[i]) <= reach for z in zeros)]
    for i in bad:
        ti = traj.t[i]
        # sign from the side of the nearest zero: 1/(t - t*) behaviour
        near = min(minima, key=lambda z: abs(z.time - ti)) if minima else None
        after = near is None or ti >= near.time
        gamma[i] = -math.inf if after else math.inf
        S[i] = 0.0
    return gamma, S


def rates_from_amplitudes(t1: AmplitudeTrajectory, t2: AmplitudeTrajectory) -> RateTrajectory:
    """Rates, Lamb shifts, ``g`` and ``g_uc`` from the two channel amplitudes."""
    if not t1.grid.same_as(t2.grid):
        raise GridMismatch("channel trajectories live on different grids")
    if t1.params != t2.params:
        raise GridMismatch("channel trajectories were solved for different parameters")
    m1 = amplitude_minima(t1)
    m2 = amplitude_minima(t2)
    g1, s1 = _channel_rates(t1, m1)
    g2, s2 = _channel_rates(t2, m2)
    g = 2.0 / 3.0 * (neg_part(g1) + neg_part(g2))
    with np.errstate(invalid="ignore"):
        tot = g1 + g2
    g_uc = 2.0 / 3.0 * neg_part(np.nan_to_num(tot, nan=0.0))
    poles = tuple(z for z in m1 + m2 if z.exact)
    minima = tuple(sorted(m1 + m2, key=lambda z: z.time))
    return RateTrajectory(t1.grid, g1, g2, s1, s2, g, g_uc, poles, minima, t1.params)


def u_uncorrelated(rates: RateTrajectory, i: int) -> complex:
    """``exp(-1/2 int_0^t (gamma_uc + i S_uc))`` by the cumulative trapezoid."""
    if i == 0:
        return 1.0 + 0j
    t = rates.t[: i + 1]
    f = 0.5 * (rates.gamma1[: i + 1] + rates.gamma2[: i + 1]) \
        + 0.5j * (rates.S1[: i + 1] + rates.S2[: i + 1])
    integral = np.sum(0.5 * np.diff(t) * (f[1:] + f[:-1]))
    return complex(np.exp(-0.5 * integral))


def u_from_amplitudes(t1: AmplitudeTrajectory, t2: AmplitudeTrajectory) -> np.ndarray:
    """Uncorrelated amplitude on every node.

    Integrating the averaged log-derivatives gives exactly ``sqrt(r1 r2)`` on
    the branch continuous from ``u(0) = 1``; this form stays finite through
    amplitude zeros where the rates diverge.
    """
    if not t1.grid.same_as(t2.grid):
        raise GridMismatch("channel trajectories live on different grids")
    prod = t1.r * t2.r
    phase = np.unwrap(np.angle(prod))
    return np.sqrt(np.abs(prod)) * np.exp(0.5j * phase)


def write_rates_csv(rates: RateTrajectory, out=None) -> str:
    """Dump ``t,gamma1,gamma2,S1,S2,g,g_uc``; returns the text if ``out`` is None."""
    buf = io.StringIO() if out is None else out
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "gamma1", "gamma2", "S1", "S2", "g", "g_uc"])
    cols = (rates.t, rates.gamma1, rates.gamma2, rates.S1, rates.S2, rates.g, rates.g_uc)
    for row in zip(*cols):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue() if out is None else ""
