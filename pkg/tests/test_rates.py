import io
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from nmcavity.errors import GridMismatch, NoPoles, NotApplicable
from nmcavity.model import CavityParams, make_grid
from nmcavity.rates import (AnalyticFamily, BoundaryCase, amplitude_minima, c_plus_N, critical_N,
                            g_atom, g_N, g_two_atoms_d0, gamma_N, gamma_single, neg_part, pole_times,
                            r1_closed_d0, rates_from_amplitudes, u_from_amplitudes, u_uncorrelated,
                            write_rates_csv)
from nmcavity.volterra import solve_fast, solve_pair

G0 = 0.01


def rate_coth(t, lam, N=1):
    """Direct complex evaluation of 2N g0^2 / (lam + W coth(W t/2))."""
    W = np.sqrt(complex(lam**2 - 2 * N * G0**2))
    return (2 * N * G0**2 / (lam + W / np.tanh(W * t / 2))).real


@pytest.mark.parametrize("lam", [0.02, 0.0165, 0.007, 0.003])
def test_gamma_single_matches_coth_form(lam):
    p = CavityParams(G0, lam)
    ts = np.linspace(0.5, 300, 97)
    for t in ts:
        ref = rate_coth(t, lam)
        if abs(ref) < 1e3:
            assert gamma_single(t, p) == pytest.approx(ref, rel=1e-10, abs=1e-18)


def test_gamma_single_values():
    p = CavityParams(G0, 0.02)
    assert gamma_single(0.0, p) == 0
    om = math.sqrt(2) * 1e-2
    assert gamma_single(1e5, p) == pytest.approx(2 * G0**2 / (0.02 + om), rel=1e-12)
    assert 2 * G0**2 / (0.02 + om) == pytest.approx(5.858e-3, rel=1e-4)
    assert math.sqrt(0.0165**2 - 2 * G0**2) == pytest.approx(8.5e-3, rel=1e-12)


def test_gamma_at_critical_omega_zero():
    lam = math.sqrt(2) * G0
    p = CavityParams(G0, lam)
    # W -> 0 limit of the coth form: 2 g0^2 t / (lam t + 2)
    assert gamma_single(10.0, p) == pytest.approx(2 * G0**2 * 10 / (lam * 10 + 2), rel=1e-6)


def test_g_atom_regimes():
    ts = np.linspace(0, 1000, 2001)
    assert np.all(g_atom(ts, CavityParams(G0, 0.0165)) == 0)
    p = CavityParams(G0, 0.007)
    t1 = pole_times(p, 1)[0]
    assert np.all(g_atom(ts[ts < t1], p) == 0)
    after = t1 + np.array([1e-3, 1e-2])
    vals = g_atom(after, p)
    # Laurent expansion: g ~ 2/(t - t1)
    np.testing.assert_allclose(vals * (after - t1), 2.0, rtol=1e-2)


def test_pole_times_against_bisection():
    p = CavityParams(G0, 0.007)
    W = math.sqrt(2 * G0**2 - 0.007**2)
    den = lambda t: 0.007 * math.sin(W * t / 2) + W * math.cos(W * t / 2)
    t1 = brentq(den, 1.0, 2 * math.pi / W - 1.0, xtol=1e-14)
    ts = pole_times(p, 3)
    assert ts[0] == pytest.approx(t1, abs=1e-8)
    assert np.diff(ts) == pytest.approx(2 * math.pi / W, rel=1e-12)
    with pytest.raises(NoPoles):
        pole_times(CavityParams(G0, 0.0165), 1)


def test_r1_closed_d0():
    assert r1_closed_d0(0.0, CavityParams(G0, 0.0165)) == 1
    p = CavityParams(G0, 2 * G0)
    t = np.linspace(0, 300, 7)
    np.testing.assert_allclose(r1_closed_d0(t, p), np.exp(-G0 * t) * (1 + G0 * t), rtol=1e-14)
    # continuity across the Omega = 0 limit
    near = CavityParams(G0, 2 * G0 * (1 + 1e-9))
    np.testing.assert_allclose(r1_closed_d0(t, near), r1_closed_d0(t, p), rtol=1e-6)


def test_r1_closed_d0_zeros():
    p = CavityParams(G0, 0.0165)
    W = math.sqrt(4 * G0**2 - 0.0165**2)
    cot_eq = lambda t: 1 / math.tan(W * t / 2) + 0.0165 / W
    z = brentq(cot_eq, 1.0, 2 * math.pi / W - 1.0, xtol=1e-12)
    assert abs(r1_closed_d0(z, p)) < 1e-12


@pytest.mark.parametrize("N", [1, 2, 3, 7, 50])
@pytest.mark.parametrize("lam", [0.007, 0.0165, 0.03, 0.1])
def test_c_plus_log_derivative_is_gamma_N(N, lam):
    p = CavityParams(G0, lam)
    ts = np.linspace(5, 400, 40)
    h = 1e-4
    c = lambda t: c_plus_N(t, N, p)
    ok = np.abs(c(ts)) > 1e-6
    fd = -2 * (c(ts + h) - c(ts - h)) / (2 * h) / c(ts)
    g = gamma_N(ts, N, p)
    assert np.max(np.abs(fd[ok] - g[ok]) / np.maximum(np.abs(g[ok]), 1e-3)) <= 1e-6


def test_gamma_N_reduces():
    p = CavityParams(G0, 0.0165)
    ts = np.linspace(0, 500, 101)
    assert np.array_equal(gamma_N(ts, 1, p), gamma_single(ts, p))
    np.testing.assert_array_equal(c_plus_N(ts, 2, p), r1_closed_d0(ts, p))
    assert all(gamma_N(0.0, N, p) == 0 for N in (1, 2, 9))
    with pytest.raises(ValueError):
        gamma_N(1.0, 0, p)


def test_g_N_thresholds():
    p = CavityParams(G0, 0.0165)
    ts = np.linspace(0, 3000, 6001)
    assert np.all(g_N(ts, 1, p) == 0)
    assert np.any(g_N(ts, 2, p) > 0)
    assert np.any(g_N(ts, 6000, CavityParams(G0, 1.0)) > 0)
    np.testing.assert_array_equal(g_N(ts, 1, CavityParams(G0, 0.007)), g_atom(ts, CavityParams(G0, 0.007)))
    assert np.all(g_two_atoms_d0(ts, CavityParams(G0, 0.025)) == 0)


@pytest.mark.parametrize("ratio,expected", [(1.65, 2), (0.7, 1), (3.0, 5), (10.0, 50)])
def test_critical_N(ratio, expected):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryCase)
        assert critical_N(CavityParams(G0, ratio * G0)) == expected


def test_critical_N_boundary_warns():
    with pytest.warns(BoundaryCase):
        critical_N(CavityParams(G0, math.sqrt(2) * G0 * (1 + 1e-15)))


@given(st.floats(0.05, 20.0))
@settings(max_examples=100, deadline=None)
def test_critical_N_is_threshold(ratio):
    p = CavityParams(G0, ratio * G0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryCase)
        nc = critical_N(p)
    x = ratio**2 / 2
    if abs(x - round(x)) > 1e-9:
        assert p.lam < math.sqrt(2 * nc) * G0
        assert nc == 1 or p.lam >= math.sqrt(2 * (nc - 1)) * G0


def test_neg_part():
    np.testing.assert_array_equal(neg_part([-2.0, 0.0, 3.0, -np.inf, np.inf]), [2.0, 0.0, 0.0, np.inf, 0.0])
    assert neg_part(-1.5) == 1.5


@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_neg_part_definition(x):
    assert neg_part(x) == pytest.approx((abs(x) - x) / 2)


def test_rates_far_limit():
    p = CavityParams(G0, 0.02, 1.0, math.inf)
    grid = make_grid(p, 300.0, 0.05)
    R = rates_from_amplitudes(*solve_pair(p, grid))
    ref = gamma_single(grid.nodes, p)
    np.testing.assert_allclose(R.gamma1[1:], ref[1:], rtol=1e-6)
    np.testing.assert_array_equal(R.gamma1, R.gamma2)
    np.testing.assert_array_equal(R.g, 4 / 3 * neg_part(R.gamma1))


def test_rates_coincident_pair():
    p = CavityParams(G0, 0.0165, 1.0, 0.0)
    grid = make_grid(p, 300.0, 0.05)
    R = rates_from_amplitudes(*solve_pair(p, grid))
    assert np.all(R.gamma2 == 0) and np.all(R.S2 == 0)
    np.testing.assert_allclose(R.gamma1[1:], gamma_N(grid.nodes[1:], 2, p), rtol=1e-6)
    fin = np.isfinite(R.g)
    np.testing.assert_allclose(R.g[fin], g_two_atoms_d0(grid.nodes, p)[fin], rtol=1e-6, atol=1e-12)


@pytest.mark.parametrize("d", [0.0, 0.4, 1.5, math.inf])
def test_markovian_above_two_gamma0(d):
    p = CavityParams(G0, 2.5 * G0, 1.0, d)
    R = rates_from_amplitudes(*solve_pair(p, make_grid(p, 350.0, 0.05)))
    assert np.max(R.g) <= 1e-10 and np.max(R.g_uc) <= 1e-10


def test_rate_invariants(p165):
    q = p165.with_d(1.0)
    R = rates_from_amplitudes(*solve_pair(q, make_grid(q, 1000.0, 0.05)))
    assert np.all(R.g >= 0) and np.all(R.g_uc >= 0)
    fin = np.isfinite(R.gamma1) & np.isfinite(R.gamma2)
    np.testing.assert_allclose(R.g[fin], 2 / 3 * (neg_part(R.gamma1[fin]) + neg_part(R.gamma2[fin])))
    np.testing.assert_allclose(R.g_uc[fin], 2 / 3 * neg_part(R.gamma1[fin] + R.gamma2[fin]))


def test_grid_mismatch(p165):
    q = p165.with_d(1.0)
    a = solve_fast(1, q, make_grid(q, 10.0, 0.05))
    b = solve_fast(2, q, make_grid(q, 10.0, 0.1))
    with pytest.raises(GridMismatch):
        rates_from_amplitudes(a, b)


def test_minima_at_amplitude_zeros():
    p = CavityParams(G0, 0.0165, 1.0, 0.0)
    grid = make_grid(p, 1500.0, 0.05)
    c1 = solve_fast(1, p, grid)
    mins = amplitude_minima(c1)
    W = math.sqrt(4 * G0**2 - 0.0165**2)
    expected = [2 / W * (math.pi * n - math.atan2(W, 0.0165)) for n in (1, 2)]
    times = [z.time for z in mins if z.exact]
    assert len(times) == 2
    np.testing.assert_allclose(times, expected, rtol=1e-7)
    R = rates_from_amplitudes(c1, solve_fast(2, p, grid))
    assert R.poles


def test_uncorrelated_far_equals_single_atom():
    p = CavityParams(G0, 0.02, 1.0, math.inf)
    grid = make_grid(p, 200.0, 0.05)
    c1, c2 = solve_pair(p, grid)
    R = rates_from_amplitudes(c1, c2)
    assert u_uncorrelated(R, 0) == 1
    for i in (100, 1000, 3999):
        assert abs(u_uncorrelated(R, i) - c1.r[i]) <= 1e-6
    u = u_from_amplitudes(c1, c2)
    np.testing.assert_allclose(u, c1.r, rtol=1e-12)
    assert np.all(np.diff(np.abs(u)) <= 0)


def test_u_continuous_branch(p165):
    q = p165.with_d(0.8)
    c1, c2 = solve_pair(q, make_grid(q, 600.0, 0.05))
    u = u_from_amplitudes(c1, c2)
    np.testing.assert_allclose(u**2, c1.r * c2.r, rtol=1e-10, atol=1e-30)
    assert np.max(np.abs(np.diff(u))) < 0.01


def test_analytic_family():
    p0 = CavityParams(G0, 0.0165, 1.0, 0.0)
    fam = AnalyticFamily("TwoAtomD0", p0)
    ts = np.linspace(0, 100, 11)
    np.testing.assert_array_equal(fam.rates(ts)[0], gamma_N(ts, 2, p0))
    np.testing.assert_array_equal(AnalyticFamily("Uncorrelated", p0).g(ts), fam.g(ts))
    with pytest.raises(NotApplicable):
        AnalyticFamily("Uncorrelated", p0.with_d(1.0))
    with pytest.raises(ValueError):
        AnalyticFamily("Bogus", p0)


def test_rates_csv_header(p165):
    q = p165.with_d(2.1)
    R = rates_from_amplitudes(*solve_pair(q, make_grid(q, 5.0, 0.5)))
    text = write_rates_csv(R)
    assert text.splitlines()[0] == "t,gamma1,gamma2,S1,S2,g,g_uc"
    rows = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1)
    np.testing.assert_array_equal(rows[:, 1], R.gamma1)
