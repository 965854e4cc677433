"""Metric families on the torus, the evaluation map and its first variation."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hodge_neck import period as P
from hodge_neck.blowup import omega_basis, psi2_pairing
from hodge_neck.metric import DomainError, flat_star2


@pytest.fixture(scope="module")
def flat4():
    return P.flat_family(4)


@pytest.fixture(scope="module")
def family4(flat4):
    return P.calibrated_family(flat4, P.Window.shell(flat4, 1, 2), amplitude=0.3)


def test_flat_evaluation(flat4):
    # on the flat torus psi_i = omega_i, so pi is the pointwise pairing with the Kahler form
    expected = [psi2_pairing(*e) for e in np.eye(3)]
    np.testing.assert_allclose(P.pi_eval(flat4, np.zeros(3)), expected, atol=1e-12)
    np.testing.assert_allclose(expected, [8.0, 0.0, 0.0])
    E = P.evaluation_matrix(flat4, np.zeros(3))
    np.testing.assert_allclose(E, np.eye(3), atol=1e-12)


def test_cube_offsets_wrap():
    off = P.cube_offsets(5, 0)
    assert off.min() == -2 and off.max() == 2
    d = P.combinatorial_distance(5, 0)
    assert d[0] == 0 and d.max() == 8
    assert np.sum(d == 1) == 8


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=21, max_size=21), st.integers(0, 2 ** 31))
def test_star_sign_derivative_matches_differences(entries, seed):
    K = np.zeros((6, 6))
    K[np.triu_indices(6)] = entries
    K = K + np.triu(K, 1).T
    if np.linalg.norm(K) < 1e-3:
        return
    K /= np.linalg.norm(K, 2)
    rng = np.random.default_rng(seed)
    R = rng.standard_normal((6, 6))
    base, _ = P.star_sign(flat_star2()[None], (0.2 * (R + R.T) / np.linalg.norm(R + R.T, 2))[None])
    G0 = P.star_to_gram(base[0])
    h = np.linalg.solve(G0, K)          # G0-self-adjoint direction
    eps = 1e-5
    plus, _ = P.star_sign(base, (eps * h)[None])
    minus, _ = P.star_sign(base, (-eps * h)[None])
    fd = (plus[0] - minus[0]) / (2 * eps)
    np.testing.assert_allclose(P.star_sign_derivative(base[0], h), fd, atol=1e-7)


def test_zero_field_has_zero_derivative(flat4):
    assert not np.any(P.honda_derivative(flat4, 0))
    np.testing.assert_array_equal(P.jacobian(flat4), np.zeros((3, 3)))


def test_honda_derivative_second_order(family4):
    exact = P.honda_derivative(family4, 0)
    errs = [np.linalg.norm(P.finite_difference_derivative(family4, 0, h) - exact) / np.linalg.norm(exact)
            for h in (1e-2, 5e-3)]
    assert np.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.1)
    assert errs[1] < 1e-4


def test_constructed_fields(family4, flat4):
    assert np.all(P.combinatorial_distance(4, flat4.point.cube)[family4.support] >= 1)
    J = P.jacobian(family4)
    assert np.all(np.diag(J) > 0)
    assert np.max(np.abs(J - np.diag(np.diag(J)))) < 1e-10 * np.abs(J).max()


def test_construct_h_degenerate_classes(flat4):
    classes = omega_basis()[[0, 0, 1]]
    with pytest.raises(P.DegeneracyError):
        P.construct_h(flat4, P.Window.shell(flat4, 1), classes)


def test_domain_checks(flat4, family4):
    with pytest.raises(DomainError):
        P.Window.shell(flat4, 0)
    with pytest.raises(DomainError):
        family4.star(np.array([1.5, 0.0, 0.0]))
    with pytest.raises(DomainError):
        family4.check_s(np.zeros(2))
    with pytest.raises(DomainError):
        P.background_family(4, 0, inner=20)


def test_calibration_reaches_zero():
    fam = P.background_family(4, 3, inner=3)
    base, steps = P.calibrate(fam, P.Window.shell(fam, 1, 2), amplitude=0.3)
    assert np.max(np.abs(P.pi_eval(base, np.zeros(3)))) < 1e-12
    assert not np.any(base.fields)
    np.testing.assert_allclose(steps[0].pi, [8.0, 0.0, 0.0], atol=0.5)
    # the neighbourhood of p is untouched
    near = P.combinatorial_distance(4, base.point.cube) == 0
    np.testing.assert_array_equal(base.base_star[near], np.broadcast_to(flat_star2(), (near.sum(), 6, 6)))


def test_calibration_budget_exhausted():
    fam = P.flat_family(4)
    with pytest.raises(P.SolverError):
        P.calibrate(fam, P.Window.shell(fam, 1, 2), amplitude=0.3, max_steps=1)
