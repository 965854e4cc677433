"""Whitney-form mass and wedge matrices on simplicial complexes.

The Whitney k-form of the simplex [s_0..s_k] is
``k! sum_i (-1)^i lambda_{s_i} dlambda_{s_0} ^ .. (omit s_i) .. ^ dlambda_{s_k}``.
Inner products reduce to integrals of barycentric products and
determinants of the Gram matrix of barycentric gradients.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import scipy.sparse as sp

from .complex import CellComplex, StructuralError


def _barycentric_gram(cx: CellComplex):
    """Per top simplex: Gram matrix of barycentric gradients and volume."""
    top = cx.cells[cx.dim]
    P = cx.vertices[top]                       # (N, n+1, ambient)
    E = P[:, 1:] - P[:, :1]                    # (N, n, ambient)
    G = np.einsum("nia,nja->nij", E, E)
    det = np.linalg.det(G)
    if np.any(det <= 1e-300):
        raise StructuralError("degenerate simplex in Whitney assembly")
    Ginv = np.linalg.inv(G)
    n = cx.dim
    # gradients of lambda_1..lambda_n in the (edge) dual basis; lambda_0 = 1 - sum
    C = np.zeros((n + 1, n))
    C[0] = -1.0
    C[1:] = np.eye(n)
    gram = np.einsum("ia,nab,jb->nij", C, Ginv, C)
    vol = np.sqrt(det) / math.factorial(n)
    return gram, vol


def _local_terms(face):
    """Whitney form of a local face as (sign, lambda index, gradient indices)."""
    out = []
    for i, s in enumerate(face):
        rest = tuple(x for x in face if x != s)
        out.append(((-1) ** i, s, rest))
    return out


def whitney_mass(cx: CellComplex, k: int) -> sp.csr_matrix:
    """Galerkin mass matrix of Whitney k-forms, SPD."""
    n = cx.dim
    gram, vol = _barycentric_gram(cx)
    top = cx.cells[n]
    N = len(top)
    local = list(itertools.combinations(range(n + 1), k + 1))
    glob = {tuple(c): i for i, c in enumerate(map(tuple, cx.cells[k]))}
    gidx = np.array([[glob[tuple(t[list(f)])] for f in local] for t in top]) if N else np.zeros((0, len(local)), int)
    denom = (n + 1) * (n + 2)
    kf2 = math.factorial(k) ** 2
    rows, cols, vals = [], [], []
    for a, fa in enumerate(local):
        for b, fb in enumerate(local):
            if b < a:
                continue
            acc = np.zeros(N)
            for sa, la, ga in _local_terms(fa):
                for sb, lb, gb in _local_terms(fb):
                    integral = vol * (1.0 + (la == lb)) / denom
                    if k == 0:
                        dets = 1.0
                    else:
                        dets = np.linalg.det(gram[:, list(ga)][:, :, list(gb)])
                    acc += sa * sb * integral * dets
            acc *= kf2
            rows.append(gidx[:, a]); cols.append(gidx[:, b]); vals.append(acc)
            if b != a:
                rows.append(gidx[:, b]); cols.append(gidx[:, a]); vals.append(acc)
    m = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(cx.n(k), cx.n(k)))
    return m


def _wedge_coefficient(ga, gb, n):
    """Coefficient c with dl_ga ^ dl_gb = c * dl_1 ^ .. ^ dl_n (lambda_0 eliminated)."""
    C = np.zeros((n + 1, n))
    C[0] = -1.0
    C[1:] = np.eye(n)
    return float(np.linalg.det(C[list(ga) + list(gb)]))


def whitney_wedge(cx: CellComplex, k: int) -> sp.csr_matrix:
    """Matrix of the pairing (a, b) -> integral of w_a ^ w_b, a a k-form, b an (n-k)-form.

    The integral is taken over the complex oriented by ``meta['top_orientation']``.
    """
    n = cx.dim
    l = n - k
    top = cx.cells[n]
    orient = cx.meta.get("top_orientation", np.ones(len(top), dtype=np.int64)).astype(float)
    N = len(top)
    la_ = list(itertools.combinations(range(n + 1), k + 1))
    lb_ = list(itertools.combinations(range(n + 1), l + 1))
    ga_ = {tuple(c): i for i, c in enumerate(map(tuple, cx.cells[k]))}
    gb_ = {tuple(c): i for i, c in enumerate(map(tuple, cx.cells[l]))}
    ia = np.array([[ga_[tuple(t[list(f)])] for f in la_] for t in top])
    ib = np.array([[gb_[tuple(t[list(f)])] for f in lb_] for t in top])
    # reference-simplex integral: int lambda_x lambda_y dl_1..dl_n = (1+delta)/((n+1)(n+2) n!)
    ref = 1.0 / ((n + 1) * (n + 2) * math.factorial(n))
    scale = math.factorial(k) * math.factorial(l)
    rows, cols, vals = [], [], []
    for a, fa in enumerate(la_):
        for b, fb in enumerate(lb_):
            c = 0.0
            for sa, xa, gA in _local_terms(fa):
                for sb, xb, gB in _local_terms(fb):
                    w = _wedge_coefficient(gA, gB, n)
                    if w:
                        c += sa * sb * w * (1.0 + (xa == xb)) * ref
            c *= scale
            if c != 0.0:
                rows.append(ia[:, a]); cols.append(ib[:, b]); vals.append(c * orient)
    if not vals:
        return sp.csr_matrix((cx.n(k), cx.n(l)))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(cx.n(k), cx.n(l)))


def integrate_constant_form(cx: CellComplex, k: int, form) -> np.ndarray:
    """Integrate an ambient constant k-form over the sorted k-simplices.

    ``form(u_1, .., u_k)`` must be a multilinear alternating callable taking
    arrays of shape (N, ambient); the integral over a flat simplex is
    ``form(e_1, .., e_k) / k!`` with e_i = v_i - v_0.
    """
    s = cx.cells[k]
    P = cx.vertices[s]
    E = [P[:, i] - P[:, 0] for i in range(1, k + 1)]
    return np.asarray(form(*E), float) / math.factorial(k)
