"""Self-dual closed forms on the cylinder [0, T] x S^3."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hodge_neck.complex import build_product
from hodge_neck.metric import DomainError
from hodge_neck.neck import (DecompositionError, NeckExpansion, closedness_residual, decay_check, expand,
                             neck_cochain, propagate, slice_norm_sq, split_blocks)


@pytest.fixture(scope="module")
def prism1(sphere1):
    return build_product(sphere1, 12, 0.25)


def test_neck_cochain_closedness_converges(sphere1, sphere2, modes1, modes2):
    # d star alpha = lam alpha holds only up to discretization, so d psi shrinks under refinement
    res = []
    for sphere, modes in ((sphere1, modes1), (sphere2, modes2)):
        prism = build_product(sphere, 8, 0.25)
        k = int(np.argmin(np.where(modes.lam > 0, modes.lam, np.inf)))
        res.append(closedness_residual(prism, neck_cochain(NeckExpansion.from_modes(modes, np.eye(len(modes))[k]),
                                                           prism)))
    assert res[1] < 0.5 * res[0]


def test_neck_cochain_slices_are_closed(prism1, modes1):
    exp = NeckExpansion.from_modes(modes1, np.linspace(1.0, 0.2, len(modes1)))
    A, _ = split_blocks(prism1, neck_cochain(exp, prism1))
    d2 = prism1.meta["base"].d(2)
    assert np.abs(d2 @ A.T).max() < 1e-10 * np.abs(A).max()


def test_expand_recovers_single_mode(prism1, modes1):
    k = int(np.argmax(modes1.lam))
    coef = np.zeros(len(modes1))
    coef[k] = 0.7
    exp = expand(neck_cochain(NeckExpansion.from_modes(modes1, coef), prism1), prism1, modes1)
    assert len(exp) == 1
    assert exp.lam[0] == pytest.approx(modes1.lam[k], rel=1e-10)
    assert exp.coef[0] == pytest.approx(0.7, rel=1e-10)


def test_expand_rejects_non_exponential(prism1, modes1):
    w = neck_cochain(NeckExpansion.from_modes(modes1, np.eye(len(modes1))[0]), prism1)
    nodes = prism1.meta["layers"] + 1
    n2 = prism1.meta["base"].n(2)
    w[: nodes * n2] *= np.repeat(1.0 + 0.5 * np.sin(np.arange(nodes)), n2)
    with pytest.raises(DecompositionError):
        expand(w, prism1, modes1)


def test_single_mode_ratio_is_exact(prism1, modes1):
    k = int(np.argmin(np.where(modes1.lam > 0, modes1.lam, np.inf)))
    exp = NeckExpansion.from_modes(modes1, np.eye(len(modes1))[k])
    rows = decay_check(exp, prism1, [0.0, 0.5, 1.0, 2.0])
    for r in rows:
        assert abs(r.ratio - r.sharp_bound) < 1e-10
        assert r.passed


def test_slice_norm_self_dual_identity(prism1, modes1):
    # |psi|^2 = 2 |alpha|^2 pointwise in the continuum; the discrete masses agree to mesh accuracy
    exp = NeckExpansion.from_modes(modes1, np.eye(len(modes1))[1])
    fast = slice_norm_sq(exp, prism1, 0.0)
    full = slice_norm_sq(exp, prism1, 0.0, full=True)
    assert full == pytest.approx(fast, rel=0.15)


def test_propagate_domain(prism1, modes1):
    exp = NeckExpansion.from_modes(modes1, np.eye(len(modes1))[0])
    assert propagate(exp, prism1, 1.0).shape[0] > 0
    with pytest.raises(DomainError):
        propagate(exp, prism1, 2.5)
    with pytest.raises(DomainError):
        propagate(exp, prism1, 0.3)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(-2, 2, allow_nan=False).filter(lambda x: abs(x) > 1e-3), min_size=3, max_size=3),
       st.sampled_from([0.5, 1.0, 1.5, 2.0]))
def test_decay_bound_for_mixtures(prism1, modes1, coefs, s):
    # any combination of decaying modes shrinks at least like the slowest one
    pos = np.flatnonzero(modes1.lam > 0)
    pick = pos[[0, len(pos) // 2, -1]]
    coef = np.zeros(len(modes1))
    coef[pick] = coefs
    exp = NeckExpansion.from_modes(modes1, coef)
    row = decay_check(exp, prism1, [s])[0]
    assert row.ratio <= row.sharp_bound * (1 + 1e-10)
