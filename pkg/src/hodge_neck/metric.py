"""Discrete Hodge structure: mass matrices, involutive 2-star, Laplacians.

Every metric stores Galerkin mass matrices ``M_k`` (inner products of
Whitney-type interpolating forms) and, in dimension four, the wedge
pairing ``W`` on 2-cochains.  The involution ``S`` on 2-cochains is the
spectral sign of ``M_2^{-1} W``: it is self-adjoint for ``M_2`` and squares
to the identity exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .complex import CellComplex, StructuralError
from .whitney import whitney_mass, whitney_wedge

ID_TOL = 1e-10
PROJ_TOL = 1e-12
DENSE_STAR_LIMIT = 6000


class SingularMetricError(ValueError):
    """Degenerate geometry or a star without spectral gap at zero."""


class DomainError(ValueError):
    """Argument outside the admissible domain."""


PAIRS = list(itertools.combinations(range(4), 2))   # basis dx_a ^ dx_b of Lambda^2 R^4


def wedge_form_q6() -> np.ndarray:
    """Q[I, J] with dx_I ^ dx_J = Q[I, J] vol on R^4."""
    Q = np.zeros((6, 6))
    for i, I in enumerate(PAIRS):
        for j, J in enumerate(PAIRS):
            idx = I + J
            if len(set(idx)) == 4:
                perm = np.argsort(idx)
                Q[i, j] = np.linalg.det(np.eye(4)[perm])
    return Q


def flat_star2() -> np.ndarray:
    """Euclidean Hodge star on Lambda^2 R^4 in the basis dx_a ^ dx_b, a < b."""
    return wedge_form_q6()      # orthonormal basis: star = Q


@dataclass
class HodgeMetric:
    """Mass matrices per degree and the involution on 2-cochains."""

    complex: CellComplex
    mode: str
    masses: list
    wedge2: sp.spmatrix | None = None
    conformal_factor: np.ndarray | None = None
    cell_star: np.ndarray | None = None     # per 4-cell 6x6 star (cubical complexes)
    _S: np.ndarray | None = field(default=None, repr=False)
    _lu: dict = field(default_factory=dict, repr=False)

    def mass(self, k: int) -> sp.csc_matrix:
        return self.masses[k]

    def mass_solve(self, k: int, b: np.ndarray) -> np.ndarray:
        if k not in self._lu:
            self._lu[k] = sla.splu(sp.csc_matrix(self.masses[k]))
        return self._lu[k].solve(np.asarray(b, float))

    def inner(self, k: int, a: np.ndarray, b: np.ndarray) -> float:
        return float(a @ (self.masses[k] @ b))

    def norm(self, k: int, a: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(k, a, a), 0.0)))

    @property
    def star2(self) -> np.ndarray:
        """Involution S on 2-cochains (dense)."""
        if self._S is None:
            self._S = involution_from_wedge(self.masses[2], self.wedge2)
        return self._S

    def codifferential(self, k: int, x: np.ndarray) -> np.ndarray:
        """d* on k-cochains: M_{k-1}^{-1} d_{k-1}^T M_k."""
        cx = self.complex
        return self.mass_solve(k - 1, cx.d(k - 1).T @ (self.masses[k] @ x))


def involution_from_wedge(M2, W) -> np.ndarray:
    """Sign of the M2-self-adjoint operator M2^{-1} W, as a dense matrix."""
    if W is None:
        raise StructuralError("metric has no wedge pairing on 2-cochains")
    n = M2.shape[0]
    if n > DENSE_STAR_LIMIT:
        raise MemoryError(f"dense involution limited to {DENSE_STAR_LIMIT} 2-cells")
    Md = M2.toarray() if sp.issparse(M2) else np.asarray(M2)
    Wd = W.toarray() if sp.issparse(W) else np.asarray(W)
    mu, X = la.eigh(Wd, Md)
    if np.min(np.abs(mu)) < 1e-10 * np.max(np.abs(mu)):
        raise SingularMetricError("wedge operator has a kernel; star sign undefined")
    sgn = np.sign(mu)
    S = (X * sgn) @ X.T @ Md
    return S


# ------------------------------------------------------------------ simplicial

def simplicial_masses(cx: CellComplex) -> list:
    return [whitney_mass(cx, k).tocsc() for k in range(cx.dim + 1)]


# --------------------------------------------------------------------- torus

def _subsets(k):
    return [tuple(c) for c in itertools.combinations(range(4), k)]


_HAT = np.array([[1 / 3, 1 / 6], [1 / 6, 1 / 3]])   # int phi_i phi_j on a unit cell
_MIX = np.array([0.5, 0.5])                         # int phi_i * (edge indicator)


def _local_dofs(n, grid_shift, I):
    """Global indices of the Whitney dofs of component I touching each cube.

    Returns (ncubes, 2**(4-|I|)) array; local dof order enumerates offsets in
    the axes not in I (lexicographic, axis ascending).
    """
    free = [a for a in range(4) if a not in I]
    N = n ** 4
    base = np.arange(N)
    comp = _subsets(len(I)).index(tuple(I))
    cols = []
    for offs in itertools.product((0, 1), repeat=len(free)):
        idx = base.copy()
        for a, o in zip(free, offs):
            if o:
                idx = grid_shift[a][idx]
        cols.append(comp * N + idx)
    return np.stack(cols, axis=1), free


def _profile(I, J, free_I, free_J):
    """Tensor of axis integrals between local dofs of components I and J."""
    mats = []
    for a in range(4):
        inI, inJ = a in I, a in J
        if inI and inJ:
            mats.append(np.ones((1, 1)))
        elif not inI and not inJ:
            mats.append(_HAT)
        elif inI:
            mats.append(_MIX[None, :])
        else:
            mats.append(_MIX[:, None])
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def torus_mass(cx: CellComplex, k: int, G=None) -> sp.csc_matrix:
    """Tensor-product Whitney mass for k-forms on the periodic cubical torus.

    ``G`` is the inner product on constant k-forms in the basis dx_I,
    either one matrix or one per cube (shape (n^4, C, C)); identity if None.
    """
    n = cx.meta["n"]
    shift = cx.meta["shift"]
    subs = _subsets(k)
    C = len(subs)
    N = n ** 4
    if G is None:
        G = np.eye(C)
    G = np.asarray(G, float)
    per_cell = G.ndim == 3
    rows, cols, vals = [], [], []
    dofs = [_local_dofs(n, shift, I) for I in subs]
    for i, I in enumerate(subs):
        for j, J in enumerate(subs):
            g = G[:, i, j] if per_cell else np.full(N, G[i, j])
            if not np.any(g):
                continue
            P = _profile(I, J, dofs[i][1], dofs[j][1])
            di, dj = dofs[i][0], dofs[j][0]
            for a in range(P.shape[0]):
                for b in range(P.shape[1]):
                    if P[a, b] == 0:
                        continue
                    rows.append(di[:, a]); cols.append(dj[:, b]); vals.append(g * P[a, b])
    if not vals:
        return sp.csc_matrix((C * N, C * N))
    m = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(C * N, C * N))
    return ((m + m.T) * 0.5).tocsc()


def torus_wedge2(cx: CellComplex) -> sp.csc_matrix:
    """Pairing int a ^ b on 2-cochains of the cubical torus (metric free)."""
    n = cx.meta["n"]
    shift = cx.meta["shift"]
    Q = wedge_form_q6()
    N = n ** 4
    dofs = [_local_dofs(n, shift, I) for I in PAIRS]
    rows, cols, vals = [], [], []
    for i, I in enumerate(PAIRS):
        for j, J in enumerate(PAIRS):
            if Q[i, j] == 0:
                continue
            P = _profile(I, J, None, None)
            di, dj = dofs[i][0], dofs[j][0]
            for a in range(P.shape[0]):
                for b in range(P.shape[1]):
                    if P[a, b]:
                        rows.append(di[:, a]); cols.append(dj[:, b]); vals.append(np.full(N, Q[i, j] * P[a, b]))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(6 * N, 6 * N)).tocsc()


def star_to_gram(star: np.ndarray) -> np.ndarray:
    """Inner product on Lambda^2 induced by a 2-form star: <a, b> vol = a ^ star b."""
    Q = wedge_form_q6()
    G = np.einsum("ij,...jk->...ik", Q, star)
    return 0.5 * (G + np.swapaxes(G, -1, -2))


def validate_star(star: np.ndarray) -> None:
    s = np.asarray(star)
    if np.max(np.abs(s @ s - np.eye(6))) > 1e-9:
        raise SingularMetricError("cell star is not an involution")
    ev = np.linalg.eigvalsh(star_to_gram(s))
    if np.min(ev) <= 0:
        raise SingularMetricError("cell star does not define a positive inner product")


# ----------------------------------------------------------------- factories

def build_metric(cx: CellComplex, mode: str, cell_star=None) -> HodgeMetric:
    """Assemble the Hodge metric for one of the supported complex kinds.

    ``euclidean_embedding`` uses the vertex coordinates of a simplicial
    complex; ``flat_periodic`` the unit cubes of the torus (optionally with
    per-cube 2-form stars ``cell_star``); ``product`` the prism complex
    over a simplicial 3-complex.
    """
    if mode == "euclidean_embedding":
        if cx.vertices is None or cx.dim not in (2, 3, 4):
            raise StructuralError("euclidean_embedding needs a simplicial complex with coordinates")
        masses = simplicial_masses(cx)
        W = whitney_wedge(cx, 2) if cx.dim == 4 else None
        return HodgeMetric(cx, mode, masses, wedge2=W)
    if mode == "flat_periodic":
        if cx.kind != "torus4":
            raise StructuralError("flat_periodic mode needs a torus complex")
        N = cx.n(4)
        if cell_star is None:
            stars = np.broadcast_to(flat_star2(), (N, 6, 6)).copy()
        else:
            stars = np.asarray(cell_star, float)
            if stars.shape == (6, 6):
                stars = np.broadcast_to(stars, (N, 6, 6)).copy()
        G2 = star_to_gram(stars)
        if np.any(np.linalg.eigvalsh(G2)[:, 0] <= 0):
            raise SingularMetricError("non positive 2-form inner product")
        masses = [torus_mass(cx, k, G2 if k == 2 else None) for k in range(5)]
        return HodgeMetric(cx, mode, masses, wedge2=torus_wedge2(cx), cell_star=stars,
                           conformal_factor=np.ones(N))
    if mode == "product":
        if cx.kind != "prism":
            raise StructuralError("product mode needs a prism complex")
        return product_metric(cx)
    raise ValueError(f"unknown metric mode {mode!r}")


def _interval_masses(nodes: int, h: float):
    m0 = sp.diags([np.full(nodes - 1, h / 6), np.r_[h / 3, np.full(nodes - 2, 2 * h / 3), h / 3],
                   np.full(nodes - 1, h / 6)], [-1, 0, 1]).tocsc()
    m1 = sp.identity(nodes - 1, format="csc") / h
    # int phi_i * (1/h on edge j) dt = 1/2 for the two end nodes
    p = sp.csr_matrix((np.full(2 * (nodes - 1), 0.5),
                       (np.r_[np.arange(nodes - 1), np.arange(1, nodes)], np.r_[np.arange(nodes - 1), np.arange(nodes - 1)])),
                      shape=(nodes, nodes - 1))
    return m0, m1, p


def product_metric(cx: CellComplex) -> HodgeMetric:
    """Tensor-product Whitney masses on [0, T] x Y for the product metric."""
    base = cx.meta["base"]
    nodes = cx.meta["layers"] + 1
    h = cx.meta["layer_length"]
    mb = base.meta.get("_masses")
    if mb is None:
        mb = simplicial_masses(base)
        base.meta["_masses"] = mb
    m0, m1, p = _interval_masses(nodes, h)
    masses = []
    for k in range(base.dim + 2):
        blocks = []
        if k <= base.dim:
            blocks.append(sp.kron(m0, mb[k]))
        if k >= 1:
            blocks.append(sp.kron(m1, mb[k - 1]))
        masses.append(sp.block_diag(blocks, format="csc"))
    W = None
    if base.dim == 3:
        W12 = base.meta.get("_wedge12")
        if W12 is None:
            W12 = whitney_wedge(base, 1)
            base.meta["_wedge12"] = W12
        # A-block (2-form x node) pairs with B-block (1-form x edge): int w_s ^ w_t ^ dt
        WAB = sp.kron(p, W12.T)
        W = sp.bmat([[None, WAB], [WAB.T, None]], format="csc")
    return HodgeMetric(cx, "product", masses, wedge2=W, conformal_factor=np.ones(cx.n(4)))


# ------------------------------------------------------------------ operators

def sd_asd_project(metric: HodgeMetric, w: np.ndarray):
    """Split a 2-cochain into its +1 and -1 parts for the involution S."""
    w = np.asarray(w, float)
    Sw = metric.star2 @ w
    sd = 0.5 * (w + Sw)
    asd = w - sd
    return sd, asd


def laplacian(metric: HodgeMetric, k: int) -> sla.LinearOperator:
    """Hodge Laplacian d* d + d d* on k-cochains as a linear operator."""
    cx = metric.complex
    n = cx.dim
    if not 0 <= k <= n:
        raise DomainError("degree out of range")
    M = metric.masses

    def mv(x):
        x = np.asarray(x, float).ravel()
        y = np.zeros_like(x)
        if k < n:
            dk = cx.d(k)
            y += metric.mass_solve(k, dk.T @ (M[k + 1] @ (dk @ x)))
        if k > 0:
            dm = cx.d(k - 1)
            y += dm @ metric.mass_solve(k - 1, dm.T @ (M[k] @ x))
        return y

    return sla.LinearOperator((cx.n(k), cx.n(k)), matvec=mv, dtype=float)


def laplacian_form(metric: HodgeMetric, k: int):
    """Symmetric 'stiffness' pieces (d_k^T M_{k+1} d_k, M_k d_{k-1}) of M_k Delta_k."""
    cx = metric.complex
    M = metric.masses
    up = (cx.d(k).T @ M[k + 1] @ cx.d(k)).tocsc() if k < cx.dim else None
    down = (M[k] @ cx.d(k - 1)).tocsc() if k > 0 else None
    return up, down


def conformal_rescale(metric: HodgeMetric, factor) -> HodgeMetric:
    """Metric for factor * g, with factor given per top cell.

    For a conformal factor c on a 4-dimensional cell, k-form inner
    products scale by c^{(4-2k)/2}; the 2-form mass, the wedge pairing and
    hence S are unchanged.  Cubical tori and product necks are supported
    (per-cube and per-top-cell factors respectively).
    """
    cx = metric.complex
    f = np.asarray(factor, float)
    if f.ndim == 0:
        f = np.full(cx.n(cx.dim), float(f))
    if np.any(f <= 0) or not np.all(np.isfinite(f)):
        raise DomainError("conformal factor must be positive")
    if cx.dim != 4:
        raise StructuralError("conformal rescaling implemented in dimension 4")
    new_masses = []
    for k in range(5):
        p = (4 - 2 * k) / 2.0
        if k == 2:
            new_masses.append(metric.masses[2])
            continue
        if metric.mode == "flat_periodic":
            G = star_to_gram(metric.cell_star) if k == 2 else None
            scale = f ** p
            C = len(_subsets(k))
            Gk = np.eye(C)[None] * scale[:, None, None]
            new_masses.append(torus_mass(cx, k, Gk))
        else:
            # per-cell scale applied symmetrically through the lumped cell weights
            w = _vertex_average(cx, k, f ** p)
            Dh = sp.diags(np.sqrt(w))
            new_masses.append((Dh @ metric.masses[k] @ Dh).tocsc())
    out = HodgeMetric(cx, metric.mode, new_masses, wedge2=metric.wedge2,
                      conformal_factor=(metric.conformal_factor if metric.conformal_factor is not None
                                        else np.ones_like(f)) * f,
                      cell_star=metric.cell_star)
    out._S = metric._S
    return out


def _vertex_average(cx: CellComplex, k: int, top_values: np.ndarray) -> np.ndarray:
    """Average of a top-cell field over the top cells incident to each k-cell."""
    inc = sp.identity(cx.n(cx.dim), format="csr")
    for j in range(cx.dim, k, -1):
        inc = (abs(cx.boundary[j]) @ inc).tocsr()
        inc.data[:] = 1.0
    cnt = np.asarray(inc.sum(axis=1)).ravel()
    return (inc @ top_values) / np.maximum(cnt, 1)
