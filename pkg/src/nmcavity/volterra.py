"""Solvers for the homogeneous Volterra equations of the two channel amplitudes.

Each channel ``m`` obeys ``r'(t) = -int_0^t K_m(t - s) r(s) ds`` with
``r(0) = 1``.  Two schemes are provided:

``solve_direct``
    Reference scheme.  The memory integral is the composite trapezoidal rule
    over all previous nodes with the closed-form kernel (sub-stepped inside the
    retardation window) and ``r`` is advanced with a trapezoidal
    predictor-corrector.  O(n**2).

``solve_fast``
    Exploits the exponential-sum structure of the kernel.  Convolutions with
    each exponential are carried by accumulators, the retardation window is
    slid along by method of steps with the delayed end point taken from cubic
    Hermite interpolation of the stored history.  O(n).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import NumericalInstability, PoleAt
from .kernels import KernelId, exp_kernel, kernel
from .model import CavityParams, TimeGrid

ZERO_TOL = 1e-9
# below this fraction of max|r| the amplitude is close to underflow and its
# log-derivative carries no information
RELIABLE_FLOOR = 1e-250
GROWTH_TOL = 1e-6
INSTABILITY_TOL = 1e-3
N_CORRECT = 2


@dataclass(frozen=True, eq=False)
class AmplitudeTrajectory:
    """Normalized amplitude ``r[i]`` and right-hand side ``rdot[i]`` of channel
    ``m`` sampled on ``grid``.  Amplitudes for any other initial value follow by
    scaling, so only the ``r(0) = 1`` solution is stored."""

    grid: TimeGrid
    r: np.ndarray
    rdot: np.ndarray
    m: int
    scheme: str
    params: CavityParams

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def zero_tol(self) -> float:
        return ZERO_TOL * float(np.max(np.abs(self.r)))

    @property
    def reliable(self) -> np.ndarray:
        """Mask of nodes whose amplitude is above the round-off floor."""
        return np.abs(self.r) > RELIABLE_FLOOR * float(np.max(np.abs(self.r)))

    def interpolate(self, t):
        """Cubic Hermite reconstruction of ``(r, rdot)`` at arbitrary times."""
        return hermite(self.grid.nodes, self.r, self.rdot, t)


def hermite(nodes, y, dy, t):
    """Piecewise cubic Hermite interpolant of ``y`` and its derivative."""
    t = np.asarray(t, dtype=float)
    j = np.clip(np.searchsorted(nodes, t, side="right") - 1, 0, nodes.size - 2)
    h = nodes[j + 1] - nodes[j]
    s = (t - nodes[j]) / h
    s2 = s * s
    s3 = s2 * s
    y0, y1 = y[j], y[j + 1]
    d0, d1 = dy[j] * h, dy[j + 1] * h
    val = (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * d0 + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * d1
    der = ((6 * s2 - 6 * s) * y0 + (3 * s2 - 4 * s + 1) * d0 + (-6 * s2 + 6 * s) * y1 + (3 * s2 - 2 * s) * d1) / h
    return val, der


def _dark(m, p, grid, scheme):
    n = grid.nodes.size
    return AmplitudeTrajectory(grid, np.ones(n, dtype=complex), np.zeros(n, dtype=complex),
                               m, scheme, p)


def _check(traj):
    peak = float(np.max(np.abs(traj.r)))
    if not np.all(np.isfinite(traj.r)) or peak > 1 + INSTABILITY_TOL:
        raise NumericalInstability(
            f"|r| reached {peak:.6g} in channel {traj.m} ({traj.scheme}); grid too coarse"
        )
    return traj


# --------------------------------------------------------------------------
# direct scheme


def _history_weights(k, t, p, kid, hsub):
    """Weights ``w`` with ``int_0^{t_k} K(t_k - s) r(s) ds ~= sum_j w[j] r[j]``.

    Outside the retardation window the trapezoidal rule runs on the nodes; the
    window ``[t_k - d, t_k]`` is integrated on a sub-grid of step ``<= hsub`` with
    ``r`` linearly interpolated between nodes, so the kernel kink at lag ``d``
    always falls on a quadrature boundary.
    """
    tk = t[k]
    w = np.zeros(k + 1, dtype=complex)
    d = p.d
    if d == 0 or math.isinf(d) or k == 0:
        window = 0.0
    else:
        window = min(d, tk)
    cut = tk - window

    # trapezoid on nodes with t_j <= cut
    jc = int(np.searchsorted(t[: k + 1], cut, side="right")) - 1
    if jc >= 1:
        tt = t[: jc + 1]
        kv = kernel(kid, tk - tt, p)
        hh = np.diff(tt)
        w[:jc] += 0.5 * hh * kv[:-1]
        w[1 : jc + 1] += 0.5 * hh * kv[1:]
    if window == 0.0:
        return w
    # partial panel from t_jc to cut, r(cut) linear in r_jc, r_jc+1
    if cut > t[jc] and jc < k:
        hp = cut - t[jc]
        theta = hp / (t[jc + 1] - t[jc])
        k0 = kernel(kid, tk - t[jc], p)
        kc = kernel(kid, tk - cut, p)
        w[jc] += 0.5 * hp * k0 + 0.5 * hp * kc * (1 - theta)
        w[jc + 1] += 0.5 * hp * kc * theta
        cut_lo = cut
    else:
        cut_lo = cut

    # window on a sub-grid
    nsub = max(4, int(math.ceil(window / hsub - 1e-9)))
    s = np.linspace(cut_lo, tk, nsub + 1)
    s[-1] = tk
    q = np.full(nsub + 1, window / nsub)
    q[0] *= 0.5
    q[-1] *= 0.5
    kv = kernel(kid, tk - s, p) * q
    j = np.clip(np.searchsorted(t[: k + 1], s, side="right") - 1, 0, k - 1)
    theta = (s - t[j]) / (t[j + 1] - t[j])
    lo = kv * (1 - theta)
    hi = kv * theta
    for part, idx in ((lo, j), (hi, j + 1)):
        w += np.bincount(idx, weights=part.real, minlength=k + 1)[: k + 1]
        w += 1j * np.bincount(idx, weights=part.imag, minlength=k + 1)[: k + 1]
    return w


def solve_direct(m: int, p: CavityParams, grid: TimeGrid) -> AmplitudeTrajectory:
    """Trapezoidal-in-history reference solution of channel ``m``."""
    kid = KernelId("K", m)
    if exp_kernel(m, p).zero:
        return _dark(m, p, grid, "direct")
    t = grid.nodes
    n = t.size
    hsub = min(grid.step or grid.dt, 2 * math.pi / (20 * p.omega0)) / grid.window_refine
    r = np.zeros(n, dtype=complex)
    rdot = np.zeros(n, dtype=complex)
    r[0] = 1.0
    for i in range(n - 1):
        k = i + 1
        h = t[k] - t[i]
        w = _history_weights(k, t, p, kid, hsub)
        known = np.dot(w[:k], r[:k])
        c = w[k]
        if i == 0:
            rp = r[i] + h * rdot[i]
        else:
            hprev = t[i] - t[i - 1]
            rp = r[i] + h * (rdot[i] + 0.5 * h / hprev * (rdot[i] - rdot[i - 1]))
        for _ in range(N_CORRECT):
            rp = r[i] + 0.5 * h * (rdot[i] - (known + c * rp))
        r[k] = rp
        rdot[k] = -(known + c * rp)
    return _check(AmplitudeTrajectory(grid, r, rdot, m, "direct", p))


# --------------------------------------------------------------------------
# fast scheme


@numba.njit(cache=True)
def _e1e2(z):
    # (e^z - 1)/z and (e^z - 1 - z)/z^2, stable for small |z|
    if abs(z) < 0.1:
        e1 = 0j
        e2 = 0j
        term = 1.0 + 0j
        fact1 = 1.0
        for k in range(12):
            # term = z^k
            e1 += term / fact1 / (k + 1)
            e2 += term / fact1 / ((k + 1) * (k + 2))
            term = term * z
            fact1 = fact1 * (k + 1)
        return e1, e2
    ez = np.exp(z)
    return (ez - 1.0) / z, (ez - 1.0 - z) / (z * z)


@numba.njit(cache=True)
def _phi(mu, h):
    # int_0^h e^{mu (h-u)} (1-u/h, u/h) du
    e1, e2 = _e1e2(mu * h)
    return h * (e1 - e2), h * e2


@numba.njit(cache=True)
def _herm(t, tj, tj1, y0, y1, d0, d1):
    h = tj1 - tj
    s = (t - tj) / h
    s2 = s * s
    s3 = s2 * s
    return ((2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * d0
            + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * d1)


@numba.njit(cache=True)
def _window_direct(mu, t, r, rdot, k, lo):
    """int_lo^{t_k} e^{mu (t_k - s)} r(s) ds with r linear on panels and r(lo)
    from Hermite interpolation."""
    tk = t[k]
    if lo >= tk:
        return 0j
    j = np.searchsorted(t[: k + 1], lo, side="right") - 1
    if j < 0:
        j = 0
    total = 0j
    a = lo
    ra = _herm(lo, t[j], t[j + 1], r[j], r[j + 1], rdot[j], rdot[j + 1])
    while j < k:
        b = t[j + 1]
        hb = b - a
        if hb > 0:
            p0, p1 = _phi(mu, hb)
            total += np.exp(mu * (tk - b)) * (p0 * ra + p1 * r[j + 1])
        a = b
        ra = r[j + 1]
        j += 1
    return total


@numba.njit(cache=True)
def _fast_kernel(t, d, lam, far_coef, rates, coefs, r, rdot, z):
    n = t.size
    nw = rates.size
    far = far_coef != 0
    finite_d = d > 0 and not np.isinf(d)
    whole = np.isinf(d)
    w_state = np.zeros(nw, dtype=np.complex128)
    anchor_t = np.zeros(nw)
    w_new = np.zeros(nw, dtype=np.complex128)
    r[0] = 1.0
    rdot[0] = 0.0
    z[0] = 0.0
    jd = 0  # panel pointer for delayed times
    for i in range(n - 1):
        k = i + 1
        h = t[k] - t[i]
        tk = t[k]
        # predictor
        if i == 0:
            rp = r[i] + h * rdot[i]
        else:
            hprev = t[i] - t[i - 1]
            rp = r[i] + h * (rdot[i] + 0.5 * h / hprev * (rdot[i] - rdot[i - 1]))
        rdp = rdot[i]
        pz0, pz1 = _phi(-lam, h)
        ez = math.exp(-lam * h)
        # delayed bracket [a, b] = [max(0, t_i - d), max(0, t_k - d)]
        a = 0.0
        b = 0.0
        if finite_d:
            a = max(0.0, t[i] - d)
            b = max(0.0, tk - d)
            while jd < i and t[jd + 1] <= b:
                jd += 1
            ja = np.searchsorted(t[: k + 1], a, side="right") - 1
            if ja > k - 1:
                ja = k - 1
            if ja < 0:
                ja = 0
        for it in range(N_CORRECT + 1):
            zk = ez * z[i] + pz0 * r[i] + pz1 * rp
            # delayed quantities; may fall in the current panel when d < h
            if finite_d and b > 0:
                jb = jd if jd < k else k - 1
                if t[jb + 1] < b and jb + 1 < k:
                    jb += 1
                rk = rp
                rdk = rdp
                zd0 = z[jb]
                zd1 = zk if jb + 1 == k else z[jb + 1]
                r1 = rk if jb + 1 == k else r[jb + 1]
                rd1 = rdk if jb + 1 == k else rdot[jb + 1]
                rb = _herm(b, t[jb], t[jb + 1], r[jb], r1, rdot[jb], rd1)
                zb = _herm(b, t[jb], t[jb + 1], zd0, zd1, -lam * zd0 + r[jb], -lam * zd1 + r1)
                r1a = rk if ja + 1 == k else r[ja + 1]
                rd1a = rdk if ja + 1 == k else rdot[ja + 1]
                ra = _herm(a, t[ja], t[ja + 1], r[ja], r1a, rdot[ja], rd1a)
            else:
                rb = 0j
                zb = 0j
                ra = 0j
            total = 0j
            if far:
                if d == 0:
                    total += far_coef * zk
                elif b > 0:
                    total += far_coef * zb
            for q in range(nw):
                mu = rates[q]
                p0, p1 = _phi(mu, h)
                wq = np.exp(mu * h) * w_state[q] + p0 * r[i] + p1 * rp
                if finite_d and b > a:
                    d0, d1 = _phi(mu, b - a)
                    wq -= np.exp(mu * d) * (d0 * ra + d1 * rb)
                w_new[q] = wq
                total += coefs[q] * wq
            rdp = -total
            if it < N_CORRECT:
                rp = r[i] + 0.5 * h * (rdot[i] + rdp)
        r[k] = rp
        rdot[k] = rdp
        z[k] = zk
        for q in range(nw):
            w_state[q] = w_new[q]
            # recursive windows keep round-off at the scale of past values, so
            # each one is re-summed once per window length; growing ones also
            # before round-off can be amplified by more than a factor of two
            gr = rates[q].real
            span = d if gr <= 0 else min(d, 0.69 / gr)
            if not whole and tk - anchor_t[q] >= span:
                lo = max(0.0, tk - d)
                w_state[q] = _window_direct(rates[q], t, r, rdot, k, lo)
                anchor_t[q] = tk
        if not np.isfinite(r[k].real) or abs(r[k]) > 1.0 + 1e-3:
            return k
    return -1


def solve_fast(m: int, p: CavityParams, grid: TimeGrid) -> AmplitudeTrajectory:
    """O(n) exponential-accumulator solution of channel ``m``."""
    ek = exp_kernel(m, p)
    if ek.zero:
        return _dark(m, p, grid, "fast")
    t = np.ascontiguousarray(grid.nodes, dtype=float)
    n = t.size
    r = np.zeros(n, dtype=complex)
    rdot = np.zeros(n, dtype=complex)
    z = np.zeros(n, dtype=complex)
    rates = np.array(ek.near_rates, dtype=complex)
    coefs = np.array(ek.near_coefs, dtype=complex)
    bad = _fast_kernel(t, float(ek.d), float(ek.lam), complex(ek.far_coef), rates, coefs, r, rdot, z)
    if bad >= 0:
        raise NumericalInstability(
            f"|r| left the unit disk at t={t[bad]:.6g} in channel {m}; grid too coarse"
        )
    return _check(AmplitudeTrajectory(grid, r, rdot, m, "fast", p))


SOLVERS = {"direct": solve_direct, "fast": solve_fast}


def solve(m: int, p: CavityParams, grid: TimeGrid, scheme: str = "fast") -> AmplitudeTrajectory:
    try:
        fn = SOLVERS[scheme]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {sorted(SOLVERS)}") from None
    return fn(m, p, grid)


def solve_pair(p: CavityParams, grid: TimeGrid, scheme: str = "fast"):
    """Both channels on the same grid; the channels are independent."""
    return solve(1, p, grid, scheme), solve(2, p, grid, scheme)


def log_derivative(traj: AmplitudeTrajectory, i: int) -> complex:
    """``rdot[i] / r[i]``; raises :class:`PoleAt` at an amplitude zero."""
    if not 0 <= i < traj.r.size:
        raise IndexError(i)
    if abs(traj.r[i]) < traj.zero_tol:
        raise PoleAt(i, complex(traj.rdot[i]))
    return complex(traj.rdot[i] / traj.r[i])


def write_trajectory_csv(traj: AmplitudeTrajectory, out=None) -> str:
    """Dump ``t,re_r,im_r,re_rdot,im_rdot``; returns the text if ``out`` is None."""
    buf = io.StringIO() if out is None else out
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "re_r", "im_r", "re_rdot", "im_rdot"])
    for ti, ri, di in zip(traj.t, traj.r, traj.rdot):
        w.writerow([repr(float(ti)), repr(float(ri.real)), repr(float(ri.imag)),
                    repr(float(di.real)), repr(float(di.imag))])
    return buf.getvalue() if out is None else ""
