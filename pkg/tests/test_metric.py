"""Mass matrices, the involution on 2-cochains and conformal behaviour."""

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from hodge_neck.complex import build_product, build_torus4
from hodge_neck.metric import (DomainError, SingularMetricError, build_metric, conformal_rescale, flat_star2,
                               laplacian, sd_asd_project, star_to_gram, validate_star, wedge_form_q6)
from hodge_neck.period import star_sign


def levi_civita_star():
    """Euclidean star on Lambda^2 R^4 from the permutation sign, an independent construction."""
    pairs = [(a, b) for a in range(4) for b in range(a + 1, 4)]
    S = np.zeros((6, 6))
    for i, (a, b) in enumerate(pairs):
        c, d = [x for x in range(4) if x not in (a, b)]
        sign = np.linalg.det(np.eye(4)[[a, b, c, d]])
        S[pairs.index((c, d)), i] = sign
    return S


def test_flat_star_matches_permutation_sign():
    np.testing.assert_array_equal(flat_star2(), levi_civita_star())
    np.testing.assert_array_equal(flat_star2() @ flat_star2(), np.eye(6))
    np.testing.assert_array_equal(star_to_gram(flat_star2()), np.eye(6))
    assert np.allclose(wedge_form_q6(), wedge_form_q6().T)


def test_validate_star_rejects():
    with pytest.raises(SingularMetricError):
        validate_star(2 * flat_star2())
    with pytest.raises(SingularMetricError):
        validate_star(-flat_star2())
    validate_star(flat_star2())


@pytest.fixture(scope="module")
def flat3():
    return build_metric(build_torus4(3), "flat_periodic")


def test_torus_masses_symmetric_positive(flat3):
    for M in flat3.masses:
        assert abs(M - M.T).max() < 1e-14
        assert sp.linalg.eigsh(M, k=1, which="SA", return_eigenvectors=False)[0] > 0


def test_torus_volume(flat3):
    one = np.ones(flat3.complex.n(0))
    assert flat3.inner(0, one, one) == pytest.approx(81.0, rel=1e-13)


def test_involution_properties(flat3):
    S = flat3.star2
    n2 = flat3.complex.n(2)
    assert np.max(np.abs(S @ S - np.eye(n2))) < 1e-10
    MS = flat3.masses[2] @ S
    assert np.max(np.abs(MS - MS.T)) < 1e-10


def test_sd_split_is_orthogonal(flat3, rng):
    w = rng.standard_normal(flat3.complex.n(2))
    sd, asd = sd_asd_project(flat3, w)
    assert abs(flat3.inner(2, sd, asd)) < 1e-10 * flat3.norm(2, w) ** 2
    np.testing.assert_allclose(sd + asd, w)


def test_laplacian_kills_constants(flat3):
    L = laplacian(flat3, 0)
    assert np.max(np.abs(L @ np.ones(flat3.complex.n(0)))) < 1e-12
    with pytest.raises(DomainError):
        laplacian(flat3, 5)


def test_conformal_rescale_keeps_two_form_mass(flat3, rng):
    f = np.exp(rng.uniform(-0.5, 0.5, flat3.complex.n(4)))
    g = conformal_rescale(flat3, f)
    assert (g.masses[2] != flat3.masses[2]).nnz == 0
    one = np.ones(flat3.complex.n(0))
    # 0-form mass scales with the volume factor f^2
    assert g.inner(0, one, one) == pytest.approx(np.sum(f ** 2), rel=1e-12)
    with pytest.raises(DomainError):
        conformal_rescale(flat3, -1.0)


def test_product_metric_volume(sphere1):
    prism = build_product(sphere1, 4, 0.5)
    m = build_metric(prism, "product")
    one = np.ones(prism.n(0))
    base = build_metric(sphere1, "euclidean_embedding")
    vol3 = base.inner(0, np.ones(sphere1.n(0)), np.ones(sphere1.n(0)))
    assert m.inner(0, one, one) == pytest.approx(2.0 * vol3, rel=1e-12)
    # the wedge pairing of a manifold with boundary is degenerate
    assert m.wedge2.shape == (prism.n(2), prism.n(2))


def test_metric_mode_checks(sphere1):
    from hodge_neck.complex import StructuralError
    with pytest.raises(StructuralError):
        build_metric(sphere1, "flat_periodic")
    with pytest.raises(ValueError):
        build_metric(sphere1, "nonsense")


symmetric6 = st.lists(st.floats(-1, 1, allow_nan=False), min_size=21, max_size=21)


def _sym(entries, scale):
    K = np.zeros((6, 6))
    K[np.triu_indices(6)] = entries
    K = K + np.triu(K, 1).T
    nrm = np.linalg.norm(K, 2)
    return K * (scale / nrm) if nrm > 0 else K


@settings(max_examples=40, deadline=None)
@given(symmetric6, st.floats(0.01, 0.4))
def test_star_sign_is_metric_involution(entries, scale):
    H = _sym(entries, scale)[None]
    S, gap = star_sign(flat_star2()[None], H)
    assert np.max(np.abs(S[0] @ S[0] - np.eye(6))) < 1e-10
    validate_star(S[0])
    assert gap[0] >= 1 - scale - 1e-12


@settings(max_examples=25, deadline=None)
@given(symmetric6, st.floats(0.01, 0.4), st.floats(0.1, 10.0))
def test_star_sign_conformally_invariant(entries, scale, c):
    # scaling the 2-form Gram by c leaves the star unchanged
    H = _sym(entries, scale)
    S, _ = star_sign(flat_star2()[None], H[None])
    S2, _ = star_sign(flat_star2()[None], (c * (np.eye(6) + H) - np.eye(6))[None])
    np.testing.assert_allclose(S2, S, atol=1e-10)
