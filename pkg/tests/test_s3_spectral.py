"""Spectrum of the Hodge Laplacian on 2-forms of the round 3-sphere."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hodge_neck.complex import build_sphere3
from hodge_neck.s3_spectral import (clusters, embed_reference_forms, ritz_reference_forms, spectrum2,
                                    sphere_operators)

# round S^3: coclosed 2-forms k(k+2) (3, 8, ...), closed 2-forms (k+1)^2 (4, 9, ...)
COCLOSED, CLOSED = 3.0, 4.0


@pytest.fixture(scope="module")
def spectra():
    return {lv: spectrum2(build_sphere3(lv), 20) for lv in (1, 2)}


def test_multiplicities_level2(spectra):
    b = spectra[2]
    co = b.eigenvalues[~b.closed_flags.astype(bool)]
    cl = b.eigenvalues[b.closed_flags.astype(bool)]
    # 4 coclosed forms d*(x_i vol) near 3 and 6 closed Killing duals near 4
    assert len(clusters(co)[0]) == 4
    assert len(clusters(cl)[0]) == 6
    assert co[0] < cl[0]


def test_second_order_convergence(spectra):
    # one refinement halves the mesh size
    for flag, exact in ((False, COCLOSED), (True, CLOSED)):
        e1, e2 = (spectra[lv].eigenvalues[spectra[lv].closed_flags.astype(bool) == flag][0] - exact
                  for lv in (1, 2))
        assert e1 > e2 > 0
        assert np.log2(e1 / e2) > 1.8


def test_closed_flags_and_residuals(sphere1, spectra):
    ops = sphere_operators(sphere1)
    b = spectra[1]
    for f, flag in zip(b.eigenforms.T, b.closed_flags):
        closed = np.linalg.norm(ops.d2 @ f) < 1e-8 * np.linalg.norm(f)
        assert closed == bool(flag)
    assert b.residuals.max() < 1e-8


def test_dense_and_sparse_agree(sphere1):
    dense = spectrum2(sphere1, 20, method="dense")
    sparse = spectrum2(sphere1, 20, method="sparse")
    np.testing.assert_allclose(dense.eigenvalues, sparse.eigenvalues, rtol=1e-9)


def test_closed_mode_rates(modes2):
    low = modes2.select(np.abs(modes2.lam) < 2.5)
    assert len(low) == 6
    assert np.sum(low.lam > 0) == 3
    np.testing.assert_allclose(low.lam ** 2, low.mu, rtol=1e-6)
    np.testing.assert_allclose(np.abs(low.lam), 2.0, rtol=0.07)


def test_closed_modes_are_orthonormal(sphere2, modes2):
    ops = sphere_operators(sphere2)
    G = modes2.forms.T @ (ops.M[2] @ modes2.forms)
    np.testing.assert_allclose(G, np.eye(len(modes2)), atol=1e-8)


def test_reference_forms(sphere2):
    ops = sphere_operators(sphere2)
    ritz = ritz_reference_forms(sphere2)
    cell = embed_reference_forms(sphere2)
    for r, c in zip(ritz, cell):
        assert np.linalg.norm(ops.d2 @ r) < 1e-10 * np.linalg.norm(r)
        assert np.linalg.norm(ops.d2 @ c) < 1e-10 * np.linalg.norm(c)
        assert ops.rayleigh(r) == pytest.approx(CLOSED, rel=0.15)
        assert ops.rayleigh(r) <= ops.rayleigh(c) + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=30))
def test_clusters_partition(values):
    v = np.sort(np.array(values))
    groups = clusters(v)
    assert sorted(i for g in groups for i in g) == list(range(len(v)))
    means = [np.mean(v[g]) for g in groups]
    assert means == sorted(means)
