"""Alternating-cap iteration on the glued neck model."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hodge_neck import gluing as G
from hodge_neck.complex import StructuralError
from hodge_neck.experiments import standard_pair
from hodge_neck.metric import DomainError

COEFFS = np.array([1.0, 0.5, -0.3])


@pytest.fixture(scope="module")
def space1(modes1):
    return G.ModeSpace.from_modes(modes1)


@pytest.fixture(scope="module")
def pair1(space1):
    return standard_pair(space1, seed=1, bulk=1250.0, higher=1.0)


@pytest.fixture(scope="module")
def sweep(pair1):
    out = {}
    for T in (3.0, 4.0, 5.0, 6.0):
        gm = G.make_glued(*pair1, T, 8)
        out[T] = (gm,) + G.iterate(gm, COEFFS, min_steps=8)
    return out


def test_mode_space_signs(space1):
    assert len(space1.positive) == len(space1.negative)
    assert np.all(np.diff(space1.lam[space1.positive]) >= 0)
    assert space1.lowest().sum() == 6
    with pytest.raises(DomainError):
        G.ModeSpace(np.array([1.0, 0.0]))


def test_regions_partition_neck(pair1):
    gm = G.make_glued(*pair1, 2.5, 4, collar=0.5)
    assert G.check_partition(gm)
    assert gm.t[0] == -1.5 and gm.t[-1] == pytest.approx(4.0)
    assert gm.euler == 0


def test_make_glued_rejects(pair1):
    with pytest.raises(DomainError):
        G.make_glued(*pair1, 3.1, 4)
    with pytest.raises(DomainError):
        G.make_glued(*pair1, 3.0, 1)
    with pytest.raises(DomainError):
        G.make_glued(*pair1, -1.0, 4)


def test_iteration_solves_the_equation(sweep):
    for T, (gm, u, parts, trace) in sweep.items():
        assert trace.residual < 1e-12 * trace.u1_norm
        assert trace.support_ok
        assert trace.telescoping < 1e-12
        np.testing.assert_allclose(sum(parts), u)


def test_distance_rates(sweep, space1):
    lam_min = space1.lam[space1.positive][0]
    T = np.array(sorted(sweep))
    d1 = np.array([sweep[t][3].dist_u1 for t in T])
    d12 = np.array([sweep[t][3].dist_u12 for t in T])
    # u - u1 is carried by the slowest mode once across the neck, u - u1 - u2 twice
    assert G.loglinear_fit("d1", T, d1).slope == pytest.approx(-lam_min, rel=0.03)
    assert G.loglinear_fit("d12", T, d12).slope == pytest.approx(-2 * lam_min, rel=0.05)


def test_no_convergence_raises(pair1):
    gm = G.make_glued(*pair1, 1.0, 4)
    with pytest.raises(G.ConvergenceError):
        G.iterate(gm, COEFFS, max_steps=2, tol=1e-30)


def test_period_needs_marked_cycle(sweep):
    gm, u, _, _ = sweep[3.0]
    with pytest.raises(StructuralError):
        G.period(gm, u)


def test_disc_cap_passes_everything(space1):
    disc = G.disc_cap(space1)
    assert not np.any(disc.reflection)
    assert disc.b_plus == 0


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-3, 3), st.lists(st.floats(-10, 10), min_size=3, max_size=8, unique=True))
def test_loglinear_fit_exact(slope, intercept, xs):
    x = np.array(xs)
    if np.ptp(x) < 1e-3:
        return
    fit = G.loglinear_fit("q", x, np.exp(intercept + slope * x))
    assert fit.slope == pytest.approx(slope, abs=1e-8)
    assert fit.intercept == pytest.approx(intercept, abs=1e-7)


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.5, 1.5))
def test_smoothstep_range(x):
    y = G.smoothstep(x)
    assert 0.0 <= y <= 1.0
    assert G.smoothstep(1.0 - x) == pytest.approx(1.0 - y, abs=1e-12)
