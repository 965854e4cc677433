"""Harmonic cochains, self-dual harmonic bases and the least-norm SD solve."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .metric import HodgeMetric, laplacian


class SolverError(RuntimeError):
    """Eigensolver or iterative solver failure."""


class ConsistencyError(ValueError):
    """Right-hand side outside the range of the operator."""


@dataclass
class HarmonicBasis:
    forms: np.ndarray            # (n_k, dim) columns
    gram: np.ndarray
    degree: int
    betti_check: int | None = None
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    eigenvalues: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.forms.shape[1]


def _orthonormalize(M, X: np.ndarray) -> np.ndarray:
    G = X.T @ (M @ X)
    G = 0.5 * (G + G.T)
    w, V = np.linalg.eigh(G)
    keep = w > 1e-12 * max(w.max(), 1e-300)
    return X @ (V[:, keep] / np.sqrt(w[keep]))


def harmonic_basis(metric: HodgeMetric, k: int, expected: int | None = None,
                   block: int | None = None, tol: float = 1e-9) -> HarmonicBasis:
    """M_k-orthonormal basis of ker Delta_k.

    Shift-invert Lanczos at a small negative shift through the saddle system
    [[U + s M_k, M_k d], [d^T M_k, -M_{k-1}]], which applies
    (M_k Delta_k + s M_k)^{-1} without forming M_{k-1}^{-1}.  The number of
    requested eigenpairs is ``expected + 2`` so a miscount is visible.
    """
    cx = metric.complex
    n = cx.n(k)
    M = metric.masses[k]
    up = (cx.d(k).T @ metric.masses[k + 1] @ cx.d(k)) if k < cx.dim else sp.csc_matrix((n, n))
    if k > 0:
        D = (M @ cx.d(k - 1)).tocsc()
        Mm = metric.masses[k - 1]
    scale = abs(up).sum() / max(n, 1) + 1.0
    shift = 1e-6 * scale
    if n <= 1500:
        A = up.toarray() if sp.issparse(up) else up
        if k > 0:
            A = A + D.toarray() @ np.linalg.solve(Mm.toarray(), D.toarray().T)
        w, V = la.eigh(0.5 * (A + A.T), M.toarray())
    else:
        nev = (expected if expected is not None else 6) + 2
        if k > 0:
            m = Mm.shape[0]
            K = sp.bmat([[up + shift * M, D], [D.T, -Mm]], format="csc")
        else:
            m = 0
            K = (up + shift * M).tocsc()
        lu = sla.splu(K)

        def solve(b):
            return lu.solve(np.concatenate([b, np.zeros(m)]))[:n]

        Op = sla.LinearOperator((n, n), matvec=solve, dtype=float)
        Kfull = sla.LinearOperator((n, n), matvec=lambda x: up @ x + (D @ sla_solve(metric, k - 1, D.T @ x) if k > 0 else 0), dtype=float)
        try:
            w, V = sla.eigsh(Kfull, k=min(nev, n - 1), M=M, sigma=-shift, OPinv=Op, which="LM", tol=1e-12)
        except sla.ArpackError as exc:  # pragma: no cover - solver failure path
            raise SolverError(str(exc)) from exc
        order = np.argsort(w)
        w, V = w[order], V[:, order]
    keep = np.abs(w) < tol * max(scale, 1.0) * 1e-2 + 1e-9
    H = _orthonormalize(M, V[:, keep])
    L = laplacian(metric, k)
    res = np.array([np.linalg.norm(L @ h) / max(np.linalg.norm(h), 1e-300) for h in H.T])
    if expected is not None and H.shape[1] != expected:
        raise SolverError(f"kernel dimension {H.shape[1]} differs from expected {expected}; eigenvalues {w[:expected + 2]}")
    return HarmonicBasis(H, H.T @ (M @ H), k, expected, res, w)


def sla_solve(metric: HodgeMetric, k: int, b):
    return metric.mass_solve(k, b)


def harmonic_representatives(metric: HodgeMetric, closed: np.ndarray) -> np.ndarray:
    """Harmonic 2-cochains cohomologous to the given closed cochains (columns).

    Removes the M_2-projection onto exact forms: h = c - d y with
    d^T M_2 d y = d^T M_2 c; the gauge is fixed by adding d_0 d_0^T and the
    harmonic 1-forms, all of which vanish on the relevant range.
    """
    cx = metric.complex
    d1 = cx.d(1)
    d0 = cx.d(0)
    M2 = metric.masses[2]
    key = "_h1_gauge"
    if key not in metric._lu:
        H1 = _constant_one_forms(cx)
        A = (d1.T @ M2 @ d1 + d0 @ d0.T).tocsc()
        Afull = A + sp.csc_matrix(H1 @ H1.T) if H1 is not None else A
        metric._lu[key] = sla.splu(sp.csc_matrix(Afull))
    lu = metric._lu[key]
    C = np.atleast_2d(np.asarray(closed, float).T).T
    rhs = d1.T @ (M2 @ C)
    Y = lu.solve(np.asarray(rhs))
    return C - d1 @ Y


def _constant_one_forms(cx):
    if cx.kind == "torus4":
        N = cx.meta["n"] ** 4
        H = np.zeros((4 * N, 4))
        for a in range(4):
            H[a * N:(a + 1) * N, a] = 1.0
        return H
    return None


def constant_two_forms(cx) -> np.ndarray:
    """The closed cochains dx_a ^ dx_b on the cubical torus (columns)."""
    N = cx.meta["n"] ** 4
    C = np.zeros((6 * N, 6))
    for i in range(6):
        C[i * N:(i + 1) * N, i] = 1.0
    return C


def sd_split_matrices(metric: HodgeMetric, H: np.ndarray):
    """Gram G and intersection Q of harmonic forms H (columns)."""
    G = H.T @ (metric.masses[2] @ H)
    Q = H.T @ (metric.wedge2 @ H)
    return 0.5 * (G + G.T), 0.5 * (Q + Q.T)


def sd_harmonic_basis(metric: HodgeMetric, H: np.ndarray | None = None) -> HarmonicBasis:
    """Self-dual part of the harmonic 2-cochains.

    The star restricted to harmonic forms is represented by G^{-1} Q, G the
    Gram and Q the wedge pairing; its positive eigenspace is the SD harmonic
    space (its dimension equals the number of positive eigenvalues of the
    intersection form).  Eigenvalues are returned for inspection; they equal
    +-1 exactly when S preserves the harmonic space.
    """
    if H is None:
        H = harmonic_basis(metric, 2).forms
    G, Q = sd_split_matrices(metric, H)
    mu, X = la.eigh(Q, G)
    pos = mu > 0
    F = H @ X[:, pos]
    F = _orthonormalize(metric.masses[2], F)
    return HarmonicBasis(F, F.T @ (metric.masses[2] @ F), 2, int(pos.sum()), eigenvalues=mu)


def sd_projector_coeffs(G: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Projector onto the SD harmonic part in coefficient space: (I + sign(G^{-1}Q)) / 2."""
    mu, X = la.eigh(Q, G)
    return 0.5 * (np.eye(len(G)) + (X * np.sign(mu)) @ X.T @ G)


@dataclass
class SolveReport:
    residual: float
    constant_A: float
    iterations: int
    rhs_norm: float


def canonical_solve(metric: HodgeMetric, rhs: np.ndarray, orthogonal_to: HarmonicBasis | None = None,
                    tol: float = 1e-8):
    """Least-norm SD 2-cochain v with d v = rhs, M_2-orthogonal to a basis.

    On SD forms the Hodge operator D = d + d* is determined by d (d* v is
    minus star of d v), so the equation D v = rhs is imposed as d v = rhs on
    the +1 eigenspace of S.  Returns (v, report) where report.constant_A is
    ||v|| / ||rhs||.
    """
    cx = metric.complex
    rhs = np.asarray(rhs, float)
    S = metric.star2
    M2 = metric.masses[2]
    n2 = cx.n(2)
    key = "_sd_frame"
    if key not in metric._lu:
        Md = M2.toarray()
        w, X = la.eigh(0.5 * (Md @ S + (Md @ S).T), Md)
        metric._lu[key] = X[:, w > 0]
    V = metric._lu[key]
    if orthogonal_to is not None and orthogonal_to.dim:
        Hb = orthogonal_to.forms
        # remove directions of V spanned by the SD parts of the basis
        P = V.T @ (M2 @ Hb)
        q, _ = np.linalg.qr(P)
        V = V - V @ q @ q.T
    A = cx.d(2) @ V
    if np.linalg.norm(rhs) == 0:
        return np.zeros(n2), SolveReport(0.0, 0.0, 0, 0.0)
    c, *_ = np.linalg.lstsq(A, rhs, rcond=1e-12)
    v = V @ c
    res = np.linalg.norm(cx.d(2) @ v - rhs) / np.linalg.norm(rhs)
    if res > tol:
        raise ConsistencyError(f"rhs not in the range of d on SD forms (relative residual {res:.2e})")
    rn = metric.norm(3, rhs)
    return v, SolveReport(float(res), metric.norm(2, v) / rn, 1, rn)
