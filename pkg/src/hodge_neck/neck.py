"""Self-dual harmonic forms on the cylinder [0, T] x S^3.

A closed sphere mode alpha with d star alpha = lam alpha generates the
closed self-dual neck form (alpha - dt ^ star alpha) exp(-lam t).  On the
prism complex its cochain carries ``alpha exp(-lam t_i)`` on the
(2-cell x node) block and ``star alpha * int_{e_j} exp(-lam t) dt`` on the
(1-cell x edge) block.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .complex import CellComplex, StructuralError, build_product, prism_slab
from .metric import DomainError, product_metric
from .s3_spectral import ClosedModes


class DecompositionError(ValueError):
    """Slice profiles are not exponential within tolerance."""


@dataclass
class NeckExpansion:
    """psi = sum_k c_k (alpha_k - dt ^ star alpha_k) exp(-lam_k t)."""

    lam: np.ndarray
    coef: np.ndarray
    forms: np.ndarray                 # (n2, m) sphere 2-cochains (unit M_2 norm)
    modes: ClosedModes | None = field(default=None, repr=False)
    fit_residuals: np.ndarray | None = None

    def __len__(self):
        return len(self.lam)

    @classmethod
    def from_modes(cls, modes: ClosedModes, coef) -> "NeckExpansion":
        coef = np.asarray(coef, float)
        nz = np.flatnonzero(coef)
        return cls(modes.lam[nz].copy(), coef[nz].copy(), modes.forms[:, nz], modes)

    def shifted(self, s: float) -> "NeckExpansion":
        return NeckExpansion(self.lam, self.coef * np.exp(-self.lam * s), self.forms, self.modes,
                             self.fit_residuals)


def _sphere_ops(modes: ClosedModes):
    if modes is None or modes.ops is None:
        raise StructuralError("expansion carries no sphere operators")
    return modes.ops


def neck_cochain(exp: NeckExpansion, prism: CellComplex, t0: float = 0.0) -> np.ndarray:
    """De Rham cochain of the expansion on a prism complex whose t = 0 sits at ``t0``."""
    base = prism.meta["base"]
    nodes = prism.meta["layers"] + 1
    h = prism.meta["layer_length"]
    t = t0 + np.arange(nodes) * h
    n2, n1 = base.n(2), base.n(1)
    A = np.zeros((nodes, n2))
    B = np.zeros((nodes - 1, n1))
    if len(exp):
        ops = _sphere_ops(exp.modes)
        star = np.column_stack([ops.star_2to1(f) for f in exp.forms.T])
        for lam, c, f, sf in zip(exp.lam, exp.coef, exp.forms.T, star.T):
            A += c * np.exp(-lam * t)[:, None] * f[None, :]
            if abs(lam) > 0:
                seg = (np.exp(-lam * t[:-1]) - np.exp(-lam * t[1:])) / lam
            else:
                seg = np.full(nodes - 1, h)
            # -dt ^ star alpha = (star alpha) ^ dt: positive on (1-cell x edge) cells
            B += c * seg[:, None] * sf[None, :]
    return np.concatenate([A.ravel(), B.ravel()])


def split_blocks(prism: CellComplex, w: np.ndarray):
    base = prism.meta["base"]
    nodes = prism.meta["layers"] + 1
    n2, n1 = base.n(2), base.n(1)
    A = w[: nodes * n2].reshape(nodes, n2)
    B = w[nodes * n2:].reshape(nodes - 1, n1)
    return A, B


def closedness_residual(prism: CellComplex, w: np.ndarray) -> float:
    """||d w|| / ||w|| in the Euclidean cochain norm."""
    dw = prism.d(2) @ w
    return float(np.linalg.norm(dw) / max(np.linalg.norm(w), 1e-300))


def expand(neck_form: np.ndarray, prism: CellComplex, modes: ClosedModes, fit_tol: float = 0.05,
           tail_tol: float = 0.01, drop: float = 1e-12) -> NeckExpansion:
    """Recover the mode expansion of a neck 2-cochain.

    Each node slice of the (2-cell x node) block is projected onto the
    sphere modes; each coefficient profile is fitted by a log-linear law.
    Entries with equal fitted rate are merged into one (rate, form) pair.
    """
    A, _ = split_blocks(prism, np.asarray(neck_form, float))
    ops = modes.ops
    M2 = ops.M[2]
    nodes = A.shape[0]
    t = np.arange(nodes) * prism.meta["layer_length"]
    total = np.einsum("ij,ij->i", A, (M2 @ A.T).T)
    if np.all(total == 0):
        return NeckExpansion(np.zeros(0), np.zeros(0), np.zeros((A.shape[1], 0)), modes, np.zeros(0))
    P = A @ (M2 @ modes.forms)           # (nodes, m)
    captured = np.sum(P ** 2, axis=1)
    tail = 1.0 - captured / np.maximum(total, 1e-300)
    if tail[0] > tail_tol:
        raise DecompositionError(f"mode basis misses {tail[0]:.2%} of the slice energy")
    lam, coef, res, idx = [], [], [], []
    scale = np.abs(P).max()
    for k in range(P.shape[1]):
        p = P[:, k]
        if np.max(np.abs(p)) <= drop * scale:
            continue
        if np.any(p == 0) or np.any(np.sign(p) != np.sign(p[0])):
            raise DecompositionError(f"mode {k} changes sign along the neck")
        y = np.log(np.abs(p))
        X = np.column_stack([np.ones_like(t), -t])
        sol, *_ = np.linalg.lstsq(X, y, rcond=None)
        fitted = np.exp(X @ sol) * np.sign(p[0])
        r = np.max(np.abs(fitted - p)) / np.max(np.abs(p))
        if r > fit_tol:
            raise DecompositionError(f"mode {k} is not exponential (relative misfit {r:.2e})")
        lam.append(sol[1]); coef.append(np.sign(p[0]) * np.exp(sol[0])); res.append(r); idx.append(k)
    idx = np.array(idx, dtype=int)
    return _merge_equal_rates(np.array(lam), np.array(coef), modes.forms[:, idx], modes, np.array(res))


def _merge_equal_rates(lam, coef, forms, modes, res, tol=1e-6):
    """Combine entries with equal rate into one (lam, alpha) pair."""
    out_l, out_c, out_f, out_r = [], [], [], []
    used = np.zeros(len(lam), bool)
    M2 = modes.ops.M[2]
    for i in range(len(lam)):
        if used[i]:
            continue
        grp = np.flatnonzero(~used & (np.abs(lam - lam[i]) <= tol * max(1.0, abs(lam[i]))))
        used[grp] = True
        f = forms[:, grp] @ coef[grp]
        nrm = np.sqrt(f @ (M2 @ f))
        out_l.append(np.mean(lam[grp])); out_c.append(nrm); out_f.append(f / nrm); out_r.append(np.max(res[grp]))
    return NeckExpansion(np.array(out_l), np.array(out_c),
                         np.column_stack(out_f) if out_f else np.zeros((forms.shape[0], 0)), modes, np.array(out_r))


def propagate(exp: NeckExpansion, prism: CellComplex, s: float) -> np.ndarray:
    """Cochain of the expansion restricted to the slab Q1 + s (length one)."""
    T = prism.meta["T"]
    h = prism.meta["layer_length"]
    if s < 0 or s + 1 > T + 1e-12:
        raise DomainError(f"slab [s, s+1] = [{s}, {s + 1}] outside [0, {T}]")
    j = int(round(s / h))
    if abs(j * h - s) > 1e-9:
        raise DomainError("s must be a multiple of the layer length")
    per = int(round(1.0 / h))
    full = neck_cochain(exp, prism)
    region = prism_slab(prism, j, j + per)
    return full[region.cells[2]]


def slab_metric(prism: CellComplex):
    """Product metric of a one-unit slab with the prism's base and layer length."""
    key = "_slab_metric"
    if key not in prism.meta:
        h = prism.meta["layer_length"]
        slab = build_product(prism.meta["base"], int(round(1.0 / h)), h)
        prism.meta[key] = (slab, product_metric(slab))
    return prism.meta[key]


def slice_norm_sq(exp: NeckExpansion, prism: CellComplex, s: float, full: bool = False) -> float:
    """Squared L^2 norm of psi on Q1 + s.

    By default uses |psi|^2 = 2 |alpha|^2, valid pointwise for self-dual
    forms of this shape; ``full=True`` uses the complete prism mass.
    """
    slab, metric = slab_metric(prism)
    local = NeckExpansion(exp.lam, exp.coef * np.exp(-exp.lam * s), exp.forms, exp.modes)
    w = neck_cochain(local, slab)
    if full:
        return float(w @ (metric.masses[2] @ w))
    A, _ = split_blocks(slab, w)
    base = slab.meta["base"]
    nodes = slab.meta["layers"] + 1
    h = slab.meta["layer_length"]
    from .metric import _interval_masses
    m0, _, _ = _interval_masses(nodes, h)
    M2 = base.meta["_masses"][2]
    G = A @ (M2 @ A.T)
    return float(2.0 * np.sum(m0.toarray() * G))


@dataclass
class DecayRow:
    s: float
    slice_norm_sq: float
    ratio: float
    sharp_bound: float
    loose_bound: float
    passed: bool


def decay_check(exp: NeckExpansion, prism: CellComplex, s_values) -> list:
    """Slice-norm ratios against exp(-2 lam_min s) and the continuum exp(-4 s)."""
    if not len(exp):
        raise DomainError("empty expansion")
    modes = exp.modes
    lam_min = float(np.min(np.abs(modes.lam[modes.lam > 0]))) if modes is not None else float(np.min(exp.lam))
    n0 = slice_norm_sq(exp, prism, 0.0)
    rows = []
    for s in s_values:
        ns = slice_norm_sq(exp, prism, s)
        ratio = ns / n0
        sharp = np.exp(-2 * lam_min * s)
        rows.append(DecayRow(float(s), ns, ratio, sharp, float(np.exp(-4 * s)), bool(ratio <= sharp * (1 + 1e-8))))
    return rows


def write_decay_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "slice_norm_sq", "sharp_bound", "loose_bound_e4s", "pass"])
        for r in rows:
            w.writerow([f"{r.s:.6g}", f"{r.slice_norm_sq:.12e}", f"{r.sharp_bound:.12e}",
                        f"{r.loose_bound:.12e}", int(r.passed)])


def flat_form_on_cylinder(prism: CellComplex, B: np.ndarray, rate: float = 2.0) -> np.ndarray:
    """Constant ambient 2-form u^T B v carried to the cylinder by x -> exp(-t) x.

    Node slices hold the cellwise integrals scaled by exp(-2 t); the
    (edge x layer) cells hold a^T B b * int exp(-2 t) dt, the exact
    integral over the radially swept chord from a to b.
    """
    from .whitney import integrate_constant_form
    base = prism.meta["base"]
    nodes = prism.meta["layers"] + 1
    h = prism.meta["layer_length"]
    t = np.arange(nodes) * h
    a2 = integrate_constant_form(base, 2, lambda u, v: np.einsum("na,ab,nb->n", u, B, v))
    e = base.cells[1]
    V = base.vertices
    b1 = np.einsum("na,ab,nb->n", V[e[:, 0]], B, V[e[:, 1]])
    A = np.exp(-rate * t)[:, None] * a2[None, :]
    seg = (np.exp(-rate * t[:-1]) - np.exp(-rate * t[1:])) / rate
    Bk = seg[:, None] * b1[None, :]
    return np.concatenate([A.ravel(), Bk.ravel()])
