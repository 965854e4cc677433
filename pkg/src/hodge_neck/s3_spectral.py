"""Hodge Laplacian on 2-cochains of the discrete round 3-sphere.

Delta_3 on 2-forms splits into a closed branch (alpha = d x with
d^T M_2 d x = mu M_1 x) and a coclosed branch (alpha = M_2^{-1} d^T M_3 y
with M_3 d M_2^{-1} d^T M_3 y = mu M_3 y).  Each branch is solved by
shift-invert Lanczos through a sparse saddle system, so that neither
gradients nor M_2^{-1} are ever formed explicitly.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .complex import CellComplex, StructuralError
from .harmonic import SolverError
from .metric import HodgeMetric, build_metric, laplacian
from .whitney import integrate_constant_form, whitney_wedge

CLOSED_TOL = 1e-8
CLUSTER_WIDTH = 0.10


@dataclass
class SpectralBasis:
    eigenvalues: np.ndarray
    eigenforms: np.ndarray          # (n2, m) M_2-orthonormal columns
    closed_flags: np.ndarray
    residuals: np.ndarray
    sphere: "S3Operators" = field(repr=False, default=None)
    curl_signs: np.ndarray | None = None

    def __len__(self):
        return len(self.eigenvalues)

    def subset(self, mask) -> "SpectralBasis":
        mask = np.asarray(mask)
        return SpectralBasis(self.eigenvalues[mask], self.eigenforms[:, mask], self.closed_flags[mask],
                             self.residuals[mask], self.sphere,
                             None if self.curl_signs is None else self.curl_signs[mask])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "eigenvalue", "closed_flag", "residual"])
            for i, (lam, c, r) in enumerate(zip(self.eigenvalues, self.closed_flags, self.residuals)):
                w.writerow([i, f"{lam:.12g}", int(bool(c)), f"{r:.3e}"])


class S3Operators:
    """Mass matrices, wedge pairing and cached factorizations on a sphere mesh."""

    def __init__(self, sphere: CellComplex):
        if sphere.dim != 3 or sphere.vertices is None:
            raise StructuralError("expected a simplicial 3-complex with coordinates")
        self.cx = sphere
        self.metric: HodgeMetric = build_metric(sphere, "euclidean_embedding")
        self.M = self.metric.masses
        self.W12 = sphere.meta.get("_wedge12")
        if self.W12 is None:
            self.W12 = whitney_wedge(sphere, 1).tocsc()
            sphere.meta["_wedge12"] = self.W12
        sphere.meta["_masses"] = self.M
        self.d0, self.d1, self.d2 = sphere.d(0), sphere.d(1), sphere.d(2)

    def star_2to1(self, alpha: np.ndarray) -> np.ndarray:
        """Discrete star of 2-cochains as 1-cochains: M_1 beta = W alpha."""
        return self.metric.mass_solve(1, self.W12 @ alpha)

    def d_star(self, alpha: np.ndarray) -> np.ndarray:
        """d of star on 2-cochains (maps closed forms to closed forms)."""
        return self.d1 @ self.star_2to1(alpha)

    def delta2(self, alpha: np.ndarray) -> np.ndarray:
        return laplacian(self.metric, 2) @ alpha

    def rayleigh(self, alpha: np.ndarray) -> float:
        M1, M2, M3 = self.M[1], self.M[2], self.M[3]
        g = self.d1.T @ (M2 @ alpha)
        up = self.d2 @ alpha
        num = g @ self.metric.mass_solve(1, g) + up @ (M3 @ up)
        return float(num / (alpha @ (M2 @ alpha)))

    # ---------------------------------------------------------------- branches
    def closed_branch(self, count: int, sigma: float = 3.0):
        n1, n0 = self.cx.n(1), self.cx.n(0)
        M1 = self.M[1]
        A = (self.d1.T @ self.M[2] @ self.d1).tocsc()
        G = (M1 @ self.d0).tocsc()
        K = sp.bmat([[A - sigma * M1, G], [G.T, None]], format="csc")
        lu = sla.splu(K)
        Op = sla.LinearOperator((n1, n1), matvec=lambda b: lu.solve(np.concatenate([b, np.zeros(n0)]))[:n1],
                                dtype=float)
        try:
            w, X = sla.eigsh(A, k=min(count, n1 - n0 - 1), M=M1, sigma=sigma, OPinv=Op, which="LM",
                             tol=1e-12, v0=np.ones(n1))
        except sla.ArpackError as exc:
            raise SolverError(f"closed branch eigensolve failed: {exc}") from exc
        order = np.argsort(w)
        w, X = w[order], X[:, order]
        F = self.d1 @ X
        F /= np.sqrt(np.einsum("ij,ij->j", F, self.M[2] @ F))
        return w, F

    def coclosed_branch(self, count: int, sigma: float = 2.0):
        n2, n3 = self.cx.n(2), self.cx.n(3)
        M2, M3 = self.M[2], self.M[3]
        B = (M3 @ self.d2).tocsc()
        K = sp.bmat([[M2, -B.T], [B, -sigma * M3]], format="csc")
        lu = sla.splu(K)
        Op = sla.LinearOperator((n3, n3), matvec=lambda b: lu.solve(np.concatenate([np.zeros(n2), b]))[n2:],
                                dtype=float)
        Kop = sla.LinearOperator((n3, n3), matvec=lambda y: B @ self.metric.mass_solve(2, B.T @ y), dtype=float)
        try:
            w, Y = sla.eigsh(Kop, k=min(count + 1, n3 - 1), M=M3, sigma=sigma, OPinv=Op, which="LM",
                             tol=1e-12, v0=np.ones(n3))
        except sla.ArpackError as exc:
            raise SolverError(f"coclosed branch eigensolve failed: {exc}") from exc
        keep = w > 1e-8
        w, Y = w[keep], Y[:, keep]
        order = np.argsort(w)
        w, Y = w[order], Y[:, order]
        F = np.column_stack([self.metric.mass_solve(2, B.T @ y) for y in Y.T]) if len(w) else np.zeros((n2, 0))
        if len(w):
            F /= np.sqrt(np.einsum("ij,ij->j", F, M2 @ F))
        return w, F

    def curl_split(self, forms: np.ndarray):
        """Diagonalize d star on a block of closed forms; returns (values, rotated forms)."""
        M2 = self.M[2]
        T = np.column_stack([self.d_star(f) for f in forms.T])
        B = forms.T @ (M2 @ T)
        B = 0.5 * (B + B.T)
        vals, V = np.linalg.eigh(B)
        return vals, forms @ V


_SPHERE_CACHE: dict = {}


def sphere_operators(sphere: CellComplex) -> S3Operators:
    key = id(sphere)
    ops = _SPHERE_CACHE.get(key)
    if ops is None or ops.cx is not sphere:
        ops = S3Operators(sphere)
        _SPHERE_CACHE.clear()
        _SPHERE_CACHE[key] = ops
    return ops


def spectrum2(sphere: CellComplex, count: int, method: str = "auto") -> SpectralBasis:
    """Lowest ``count`` nonzero eigenpairs of Delta_3 on 2-cochains, ascending.

    ``method`` is "sparse" (two shift-invert branch solves), "dense" (one
    generalized dense eigensolve) or "auto" (dense below 400 2-cells).
    """
    ops = sphere_operators(sphere)
    n2 = sphere.n(2)
    if method == "dense" or (method == "auto" and n2 <= 400):
        return _dense_spectrum(ops, count)
    wc, Fc = ops.closed_branch(count)
    wo, Fo = ops.coclosed_branch(count)
    lam = np.r_[wc, wo]
    F = np.column_stack([Fc, Fo])
    order = np.argsort(lam, kind="stable")[:count]
    return _finish(ops, lam[order], F[:, order])


def _finish(ops: S3Operators, lam, F) -> SpectralBasis:
    M2, M3 = ops.M[2], ops.M[3]
    L = laplacian(ops.metric, 2)
    res, closed = [], []
    for l, f in zip(lam, F.T):
        nf = np.sqrt(f @ (M2 @ f))
        res.append(np.linalg.norm(L @ f - l * f) / (np.linalg.norm(f) * max(1.0, abs(l))))
        df = ops.d2 @ f
        closed.append(np.sqrt(df @ (M3 @ df)) < CLOSED_TOL * nf)
    return SpectralBasis(np.asarray(lam), F, np.array(closed), np.array(res), ops)


def _dense_spectrum(ops: S3Operators, count: int) -> SpectralBasis:
    """Dense generalized eigensolve of M_2 Delta_3 (small meshes, oracle use)."""
    import scipy.linalg as la
    M1 = ops.M[1].toarray()
    M2 = ops.M[2].toarray()
    M3 = ops.M[3].toarray()
    d1 = ops.d1.toarray().astype(float)
    d2 = ops.d2.toarray().astype(float)
    D = M2 @ d1
    K = d2.T @ M3 @ d2 + D @ np.linalg.solve(M1, D.T)
    w, V = la.eigh(0.5 * (K + K.T), M2)
    keep = w > 1e-9
    w, V = w[keep][:count], V[:, keep][:, :count]
    # orthonormal bases inside (near-)degenerate clusters may mix branches; separate them
    V = _branch_separate(ops, w, V)
    return _finish(ops, w, V)


def _branch_separate(ops, w, V):
    M2 = ops.M[2]
    out = V.copy()
    i = 0
    while i < len(w):
        j = i + 1
        while j < len(w) and abs(w[j] - w[i]) < 1e-8 * max(1.0, abs(w[i])):
            j += 1
        if j - i > 1:
            blk = V[:, i:j]
            dv = ops.d2 @ blk
            C = dv.T @ (ops.M[3] @ dv)
            _, R = np.linalg.eigh(0.5 * (C + C.T))
            out[:, i:j] = blk @ R
        i = j
    return out


def closed_subspectrum(basis: SpectralBasis) -> SpectralBasis:
    """Restrict a spectral basis to its closed eigenforms."""
    return basis.subset(np.asarray(basis.closed_flags, bool))


def clusters(values: np.ndarray, width: float = CLUSTER_WIDTH):
    """Group ascending values into clusters of relative width ``width``."""
    groups, cur = [], [0]
    for i in range(1, len(values)):
        if values[i] <= values[cur[0]] * (1 + width):
            cur.append(i)
        else:
            groups.append(cur)
            cur = [i]
    if len(values):
        groups.append(cur)
    return groups


# ------------------------------------------------------------- reference forms

def embed_reference_forms(sphere: CellComplex):
    """Cellwise integrals of omega/4, Re(dz^dw), Im(dz^dw) over the 2-cells.

    Coordinates are (x1, y1, x2, y2) with z = x1 + i y1, w = x2 + i y2.  The
    cochains are exactly closed (Stokes on each flat tetrahedron).
    """
    if sphere.vertices is None or sphere.vertices.shape[1] != 4:
        raise StructuralError("reference forms need R^4 vertex coordinates")
    return tuple(integrate_constant_form(sphere, 2, lambda u, v, B=B: np.einsum("na,ab,nb->n", u, B, v))
                 for B in reference_potentials())


@dataclass
class ClosedModes:
    """Closed 2-forms on the sphere split by the sign of d star.

    A mode with signed rate ``lam`` satisfies d star alpha ~ lam alpha, so
    ``alpha exp(-lam t)`` is the closed self-dual neck form it generates;
    positive rates decay toward increasing t.  Within each eigenvalue
    cluster the forms are Ritz vectors of Delta_3 on the two sign
    subspaces, so ``mu`` are Ritz values (exact eigenvalues whenever a
    cluster splits into exactly degenerate pairs).
    """

    mu: np.ndarray
    lam: np.ndarray
    forms: np.ndarray
    ops: S3Operators = field(repr=False, default=None)
    cluster_ids: np.ndarray | None = None
    residuals: np.ndarray | None = None

    @property
    def rates(self):
        return np.abs(self.lam)

    def __len__(self):
        return len(self.lam)

    def select(self, mask) -> "ClosedModes":
        mask = np.asarray(mask)
        return ClosedModes(self.mu[mask], self.lam[mask], self.forms[:, mask], self.ops,
                           None if self.cluster_ids is None else self.cluster_ids[mask],
                           None if self.residuals is None else self.residuals[mask])


def _ritz(ops: S3Operators, V: np.ndarray):
    """Rayleigh-Ritz for Delta_3 on the span of closed M_2-orthonormal columns."""
    G = V.T @ (ops.M[2] @ V)
    R = np.linalg.cholesky(0.5 * (G + G.T))
    V = np.linalg.solve(R, V.T).T
    g = ops.d1.T @ (ops.M[2] @ V)
    K = g.T @ np.column_stack([ops.metric.mass_solve(1, x) for x in g.T])
    w, Y = np.linalg.eigh(0.5 * (K + K.T))
    return w, V @ Y


def closed_modes(sphere: CellComplex, count: int) -> ClosedModes:
    """Closed eigen-clusters of Delta_3, each split into d-star sign halves."""
    ops = sphere_operators(sphere)
    w, F = ops.closed_branch(count)
    groups = clusters(w)
    if len(groups) > 1:
        groups = groups[:-1]           # the top cluster may be truncated by the solve
    L = laplacian(ops.metric, 2)
    mus, lams, forms, ids, res = [], [], [], [], []
    for g_id, g in enumerate(groups):
        vals, Fr = ops.curl_split(F[:, g])
        for sgn in (1.0, -1.0):
            sel = np.sign(vals) == sgn
            if not np.any(sel):
                continue
            mu, V = _ritz(ops, Fr[:, sel])
            for m_, f in zip(mu, V.T):
                mus.append(m_)
                lams.append(sgn * np.sqrt(m_))
                forms.append(f)
                ids.append(g_id)
                res.append(np.linalg.norm(L @ f - m_ * f) / (np.linalg.norm(f) * m_))
    order = np.lexsort((-np.array(lams), np.array(mus)))
    pick = lambda a: np.asarray(a)[order]
    return ClosedModes(pick(mus), pick(lams), np.column_stack(forms)[:, order], ops, pick(ids), pick(res))


def reference_potentials():
    """Antisymmetric matrices B of omega/4, Re(dz^dw), Im(dz^dw): form(u, v) = u^T B v."""
    B1 = np.zeros((4, 4)); B1[0, 1] = B1[2, 3] = 1.0
    B2 = np.zeros((4, 4)); B2[0, 2] = 1.0; B2[1, 3] = -1.0
    B3 = np.zeros((4, 4)); B3[0, 3] = 1.0; B3[1, 2] = 1.0
    return [B - B.T for B in (B1, B2, B3)]


_QUAD_A = (5 - np.sqrt(5)) / 20
_QUAD_B = (5 + 3 * np.sqrt(5)) / 20


def _potential_load(ops: S3Operators, B: np.ndarray) -> np.ndarray:
    """L^2 load of the potential eta_x(v) = x^T B v / 2 against Whitney 1-forms."""
    cx = ops.cx
    top = cx.cells[3]
    P = cx.vertices[top]
    E = P[:, 1:] - P[:, :1]
    G = np.einsum("nia,nja->nij", E, E)
    Gi = np.linalg.inv(G)
    vol = np.sqrt(np.linalg.det(G)) / 6.0
    C = np.zeros((4, 3)); C[0] = -1.0; C[1:] = np.eye(3)
    glob = {tuple(f): i for i, f in enumerate(map(tuple, cx.cells[1]))}
    b = np.zeros(cx.n(1))
    pts = []
    for i in range(4):
        l = np.full(4, _QUAD_A); l[i] = _QUAD_B
        pts.append(l)
    for p, q in itertools.combinations(range(4), 2):
        idx = np.fromiter((glob[(t[p], t[q])] for t in top), dtype=np.int64, count=len(top))
        acc = np.zeros(len(top))
        for l in pts:
            x = np.einsum("i,nia->na", l, P)
            x /= np.linalg.norm(x, axis=1, keepdims=True)
            eta = 0.5 * np.einsum("na,ab,nib->ni", x, B, E)
            we = l[p] * C[q] - l[q] * C[p]
            acc += 0.25 * vol * np.einsum("i,nij,nj->n", we, Gi, eta)
        np.add.at(b, idx, acc)
    return b


def ritz_reference_forms(sphere: CellComplex):
    """Energy-consistent pullbacks of omega/4, Re(dz^dw), Im(dz^dw).

    Each is the closed cochain d x whose discrete codifferential equals the
    L^2 projection of the ambient potential x^T B dx / 2 restricted to the
    sphere (d^T M_2 d x = load), i.e. the elliptic projection of the form.
    Unlike the cellwise integrals, these converge in the energy norm, which
    is what the Rayleigh quotient measures.
    """
    ops = sphere_operators(sphere)
    n1, n0 = sphere.n(1), sphere.n(0)
    A = (ops.d1.T @ ops.M[2] @ ops.d1).tocsc()
    G = (ops.M[1] @ ops.d0).tocsc()
    lu = sla.splu(sp.bmat([[A, G], [G.T, None]], format="csc"))
    out = []
    for B in reference_potentials():
        x = lu.solve(np.concatenate([_potential_load(ops, B), np.zeros(n0)]))[:n1]
        f = ops.d1 @ x
        # scale to the cellwise integral so both versions carry the same units
        ref = integrate_constant_form(sphere, 2, lambda u, v, B=B: np.einsum("na,ab,nb->n", u, B, v))
        f *= (f @ (ops.M[2] @ ref)) / (f @ (ops.M[2] @ f))
        out.append(f)
    return tuple(out)
