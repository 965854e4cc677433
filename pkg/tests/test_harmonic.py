"""Harmonic 2-forms on the cubical torus and their self-dual half."""

import numpy as np
import pytest
import scipy.linalg as la

from hodge_neck.harmonic import (SolverError, constant_two_forms, harmonic_basis, harmonic_representatives,
                                 sd_harmonic_basis)
from hodge_neck.metric import build_metric
from hodge_neck.period import star_sign


@pytest.fixture(scope="module")
def flat(torus3):
    return build_metric(torus3, "flat_periodic")


@pytest.fixture(scope="module")
def bumpy(torus3):
    rng = np.random.default_rng(5)
    K = rng.standard_normal((torus3.n(4), 6, 6))
    K = 0.5 * (K + np.swapaxes(K, 1, 2))
    K *= 0.3 / np.linalg.norm(K, ord=2, axis=(1, 2))[:, None, None]
    flat = build_metric(torus3, "flat_periodic")
    stars, _ = star_sign(flat.cell_star, K)
    return build_metric(torus3, "flat_periodic", cell_star=stars)


def dense_kernel_dim(metric, k):
    """Kernel dimension of the full M-weighted Hodge Laplacian, assembled densely."""
    cx = metric.complex
    M = [m.toarray() for m in metric.masses]
    d = cx.d(k).toarray()
    A = d.T @ M[k + 1] @ d
    dm = cx.d(k - 1).toarray()
    A = A + M[k] @ dm @ np.linalg.solve(M[k - 1], dm.T @ M[k])
    w = la.eigh(A, M[k], eigvals_only=True)
    return int(np.sum(np.abs(w) < 1e-8 * np.abs(w).max()))


def test_b2_matches_dense_kernel(bumpy):
    H = harmonic_basis(bumpy, 2)
    assert H.dim == dense_kernel_dim(bumpy, 2) == 6
    np.testing.assert_allclose(H.gram, np.eye(6), atol=1e-10)
    assert H.residuals.max() < 1e-8


def test_flat_harmonic_forms_are_constant(flat, torus3):
    H = harmonic_basis(flat, 2, expected=6)
    C = constant_two_forms(torus3)
    # the span of the constants equals the harmonic space
    M = flat.masses[2]
    sv = la.svdvals(H.forms.T @ (M @ C) / np.sqrt(np.diag(C.T @ (M @ C))))
    np.testing.assert_allclose(sv, 1.0, atol=1e-10)


def test_b2_plus(flat, bumpy):
    assert sd_harmonic_basis(flat).dim == 3
    assert sd_harmonic_basis(bumpy).dim == 3


def test_expected_mismatch_raises(flat):
    with pytest.raises(SolverError):
        harmonic_basis(flat, 2, expected=5)


def test_representatives_are_closed_and_coclosed(bumpy, torus3):
    C = constant_two_forms(torus3)
    R = harmonic_representatives(bumpy, C)
    d1, d2 = torus3.d(1), torus3.d(2)
    assert np.abs(d2 @ R).max() < 1e-10
    assert np.abs(d1.T @ (bumpy.masses[2] @ R)).max() < 1e-9
    # same cohomology class: R - C lies in the image of d
    assert np.linalg.matrix_rank(np.column_stack([R - C, d1.toarray()]), tol=1e-8) == \
        np.linalg.matrix_rank(d1.toarray(), tol=1e-8)


def test_canonical_solve(bumpy, torus3, rng):
    from hodge_neck.harmonic import canonical_solve
    from hodge_neck.metric import sd_asd_project
    sd, _ = sd_asd_project(bumpy, rng.standard_normal(torus3.n(2)))
    rhs = torus3.d(2) @ sd
    H = sd_harmonic_basis(bumpy)
    v, rep = canonical_solve(bumpy, rhs, orthogonal_to=H)
    assert np.linalg.norm(torus3.d(2) @ v - rhs) < 1e-8 * np.linalg.norm(rhs)
    np.testing.assert_allclose(bumpy.star2 @ v, v, atol=1e-9 * np.abs(v).max())
    assert np.abs(H.forms.T @ (bumpy.masses[2] @ v)).max() < 1e-9 * bumpy.norm(2, v)
    # least norm: v differs from sd by a closed form and is no longer than it
    assert bumpy.norm(2, v) <= bumpy.norm(2, sd) * (1 + 1e-12)
    assert rep.constant_A > 0
