import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmcavity.errors import InvalidGrid, NonPositiveParameter
from nmcavity.model import CavityParams, RegOrder, make_grid, validate_params


@pytest.mark.parametrize("field", ["gamma0", "lam", "omega0"])
@pytest.mark.parametrize("bad", [0.0, -1.0, math.nan])
def test_nonpositive_fields_rejected(field, bad):
    kw = dict(gamma0=0.01, lam=0.0165, omega0=1.0, d=1.0)
    kw[field] = bad
    rep = validate_params(CavityParams(**kw))
    assert not rep.ok
    with pytest.raises(NonPositiveParameter):
        rep.raise_for_errors()


def test_negative_distance_rejected():
    assert not validate_params(CavityParams(0.01, 0.0165, 1.0, -0.1)).ok


def test_inf_distance_valid():
    assert validate_params(CavityParams(0.01, 0.0165, 1.0, math.inf)).ok


def test_regime_warnings():
    assert validate_params(CavityParams(0.5, 0.0165)).warnings
    assert validate_params(CavityParams(0.01, 0.5)).warnings
    assert not validate_params(CavityParams(0.01, 0.0165)).warnings


def test_grid_basic():
    g = make_grid(CavityParams(0.01, 0.0165), 350.0, 0.05)
    assert len(g) == 7001
    assert g.nodes[0] == 0 and g.nodes[-1] == 350.0
    np.testing.assert_allclose(np.diff(g.nodes), 0.05, rtol=1e-9)
    with pytest.raises(ValueError):
        g.nodes[3] = 1.0


def test_grid_inserts_distance():
    g = make_grid(CavityParams(0.01, 0.0165, 1.0, 1.904), 350.0, 0.05)
    assert 1.904 in g.nodes
    assert np.all(np.diff(g.nodes) > 0)


def test_grid_step_cap():
    g = make_grid(CavityParams(0.01, 0.0165, 1.0, 2.0), 10.0, 1.0)
    assert np.max(np.diff(g.nodes)) <= 2 * math.pi / 20 + 1e-12


def test_grid_no_insertion_beyond_end():
    g = make_grid(CavityParams(0.01, 0.0165, 1.0, 400.0), 350.0, 0.05)
    assert len(g) == 7001


@pytest.mark.parametrize("t_end,dt", [(0, 0.1), (10, 0), (10, 20), (math.inf, 0.1)])
def test_invalid_grid(t_end, dt):
    with pytest.raises(InvalidGrid):
        make_grid(CavityParams(0.01, 0.0165), t_end, dt)


@given(st.floats(0.5, 500), st.floats(1e-3, 0.5), st.floats(0.0, 600))
@settings(max_examples=60, deadline=None)
def test_grid_monotone_and_bounded(t_end, dt, d):
    g = make_grid(CavityParams(0.01, 0.0165, 1.0, d), t_end, min(dt, t_end))
    assert g.nodes[0] == 0 and g.nodes[-1] == t_end
    assert np.all(np.diff(g.nodes) > 0)
    assert np.max(np.diff(g.nodes)) <= min(dt, t_end) * (1 + 1e-9)


def test_index_of():
    g = make_grid(CavityParams(0.01, 0.0165), 10.0, 0.5)
    assert g.index_of(2.4) == 5 and g.index_of(-1) == 0 and g.index_of(99) == len(g) - 1


def test_reg_order():
    assert RegOrder().power == 2
    assert RegOrder(2).power == 3
    with pytest.raises(ValueError):
        RegOrder(0)
