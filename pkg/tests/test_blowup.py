"""Flat-space forms near the blown-up point and the blowup cap."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hodge_neck import blowup as B
from hodge_neck.complex import build_blowup_cap
from hodge_neck.metric import flat_star2


def matrix_inner(A, C):
    """<A, C> for 2-forms u^T A v, u^T C v: half the Frobenius product."""
    return 0.5 * np.trace(A.T @ C)


def test_reference_gram_from_matrices():
    # independent route: Frobenius products of the three potentials
    mats = [B.pairs_to_antisym(w) for w in B.omega_basis()]
    G = np.array([[matrix_inner(a, c) for c in mats] for a in mats])
    np.testing.assert_array_equal(G, 2.0 * np.eye(3))
    np.testing.assert_array_equal(B.reference_gram(), G)


def test_reference_forms_are_self_dual():
    S = flat_star2()
    for w in B.omega_basis():
        np.testing.assert_array_equal(S @ w, w)


@settings(max_examples=60, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_pairing_with_kahler_form(a1, a2, a3):
    assert B.psi2_pairing(a1, a2, a3) == pytest.approx(8.0 * a1, abs=1e-12 * (1 + abs(a1) + abs(a2) + abs(a3)))


@settings(max_examples=30, deadline=None)
@given(st.floats(-np.pi, np.pi), st.sampled_from([0, 1, 2]))
def test_gram_is_unitary_invariant(theta, axis):
    U = B.u2_element(theta, axis)
    np.testing.assert_allclose(U.T @ U, np.eye(4), atol=1e-14)
    np.testing.assert_allclose(B.reference_gram(rotation=U), 2.0 * np.eye(3), atol=1e-12)


def test_gamma_at_unit_vector():
    # by hand at x = e_1: 4 omega = 16 (dx01 + dx23), (x.dx) ^ i_x omega = 4 dx01
    expected = np.zeros(6)
    expected[0], expected[5] = -16.0, 16.0
    np.testing.assert_allclose(B.gamma_closed_form(np.eye(4)[:1])[0], expected, atol=1e-14)


def test_gamma_finite_differences_match_closed_form(rng):
    x = rng.standard_normal((8, 4))
    _, gamma, diag = B.gamma_field(x)
    np.testing.assert_allclose(gamma, B.gamma_closed_form(x), rtol=1e-8, atol=1e-8)
    assert diag.asd_residual < 1e-8
    assert diag.length_variance < 1e-8
    assert diag.lie_error < 1e-6
    np.testing.assert_allclose(diag.lengths, 16 * np.sqrt(2), rtol=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=4, max_size=4).filter(lambda v: np.linalg.norm(v) > 1e-2))
def test_gamma_closed_form_is_asd_with_constant_length(x):
    g = B.gamma_closed_form(np.array(x))[0]
    S = flat_star2()
    np.testing.assert_allclose(S @ g, -g, atol=1e-9 * np.abs(g).max())
    assert np.linalg.norm(g) == pytest.approx(16 * np.sqrt(2), rel=1e-12)


def test_scaling_covariance():
    assert B.scaling_covariance(0.5) < 1e-6
    assert B.scaling_covariance(2.0) < 1e-6


@pytest.fixture(scope="module")
def cap():
    return build_blowup_cap(2, 4, 4)


def test_collar_masses_do_not_depend_on_epsilon(cap):
    m1 = B.burns_cap_metric(cap, 0.2)
    m2 = B.burns_cap_metric(cap, 0.4)
    rho = B._fiber_cell_radius(cap)
    P, Q, _, F = B._cap_cell_data(cap)[2]
    outer = np.array([rho[q][f] >= B.COLLAR_START for q, f in zip(Q, F)])
    assert outer.any()
    w1, w2 = m1.masses[2].diagonal(), m2.masses[2].diagonal()
    np.testing.assert_array_equal(w1[outer], w2[outer])
    assert np.any(w1[~outer] != w2[~outer])


def test_exceptional_area(cap):
    a = [B.exceptional_area(cap, e) for e in (0.1, 0.2, 0.4)]
    # the centre section carries eps^2 times the total area of the round unit sphere
    np.testing.assert_allclose(a, 4 * np.pi * np.array([0.01, 0.04, 0.16]), rtol=1e-12)
    with pytest.raises(B.GeometryError):
        B.burns_cap_metric(cap, 0.7)


def test_smoothing_weight():
    np.testing.assert_array_equal(B.smoothing_weight([0.0, 0.5, 0.75, 1.0]), [1.0, 1.0, 0.0, 0.0])
