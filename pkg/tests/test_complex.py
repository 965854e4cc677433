"""Incidence structure, Betti numbers and marked cycles of the three complexes."""

import itertools

import numpy as np
import pytest

from hodge_neck.complex import (ResourceError, StructuralError, build_blowup_cap, build_product,
                                build_sphere3, build_torus4, relative_self_intersection, torus_cell_index)


def cross_polytope_counts():
    """Face counts of the boundary of conv(+-e_i) in R^4, by brute-force enumeration."""
    verts = [(a, s) for a in range(4) for s in (1, -1)]
    counts = []
    for k in range(1, 5):
        # a set of vertices spans a face iff no two of them are antipodal
        counts.append(sum(1 for c in itertools.combinations(verts, k) if len({a for a, _ in c}) == k))
    return tuple(counts)


def test_sphere_level0_matches_enumeration():
    cx = build_sphere3(0)
    assert cx.counts == cross_polytope_counts() == (8, 24, 32, 16)


@pytest.mark.parametrize("level", [0, 1, 2])
def test_sphere_refinement(level):
    cx = build_sphere3(level)
    assert cx.n(3) == 16 * 8 ** level
    assert cx.chain_defect() == 0
    assert cx.euler_characteristic() == 0
    np.testing.assert_allclose(np.linalg.norm(cx.vertices, axis=1), 1.0, atol=1e-14)


def test_sphere_betti(sphere1):
    assert sphere1.betti() == (1, 0, 0, 1)


def test_sphere_level_bounds():
    with pytest.raises(ValueError):
        build_sphere3(-1)
    with pytest.raises(ResourceError):
        build_sphere3(5)


def test_torus_counts_and_betti(torus3):
    assert torus3.counts == tuple(81 * c for c in (1, 4, 6, 4, 1))
    assert torus3.chain_defect() == 0
    assert torus3.betti() == (1, 4, 6, 4, 1)


def test_torus_cell_index_roundtrip():
    n = 4
    cx = build_torus4(n)
    x = (1, 3, 0, 2)
    i = torus_cell_index(n, x, (0, 2))
    j = torus_cell_index(n, np.add(x, (n, 0, -n, 0)), (2, 0))
    assert i == j
    # the boundary of a unit square has four edges with coefficients +-1
    col = cx.boundary[2][:, i].toarray().ravel()
    assert np.count_nonzero(col) == 4 and set(col[col != 0]) == {1, -1}


def test_torus_too_small():
    with pytest.raises(ValueError):
        build_torus4(2)


def test_product_structure(sphere1):
    prism = build_product(sphere1, 4, 0.5)
    assert prism.chain_defect() == 0
    # [0, T] x S^3 has the homology of S^3
    base = sphere1.counts
    assert prism.n(0) == 5 * base[0]
    assert prism.euler_characteristic() == 0


def test_blowup_cap_cycle():
    cap = build_blowup_cap(1, 4, 2)
    assert cap.chain_defect() == 0
    C = cap.meta["C"]
    assert not np.any(cap.boundary[2] @ C)
    # a disc bundle over S^2 retracts onto C
    assert cap.betti() == (1, 0, 1, 0, 0)
    assert cap.euler_characteristic() == 2
    assert relative_self_intersection(cap) == pytest.approx(-1.0, abs=1e-10)


def test_blowup_cap_twist_sign():
    cap = build_blowup_cap(1, 4, 2, twist=-1)
    assert relative_self_intersection(cap) == pytest.approx(1.0, abs=1e-10)


def test_blowup_cap_partition_of_boundary():
    cap = build_blowup_cap(2, 4, 2)
    bd = cap.region("boundary")
    # the boundary region is closed under taking faces
    for k in range(1, 4):
        faces = np.flatnonzero(abs(cap.boundary[k][:, bd.cells[k]]).sum(axis=1))
        assert np.all(np.isin(faces, bd.cells[k - 1]))
    with pytest.raises(StructuralError):
        cap.region("missing")


def test_blowup_cap_rejects_bad_arguments():
    with pytest.raises(StructuralError):
        build_blowup_cap(1, 2, 1)
    with pytest.raises(StructuralError):
        build_blowup_cap(1, 4, 1, twist=2)


def test_checksum_is_stable():
    assert build_sphere3(1).checksum() == build_sphere3(1).checksum()
    assert build_sphere3(1).checksum() != build_sphere3(0).checksum()
