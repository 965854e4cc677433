"""Flat C^2 Kahler algebra, the field gamma and the exceptional period.

Coordinates are (x1, y1, x2, y2) with z = x1 + i y1, w = x2 + i y2 and
the orientation dx1 dy1 dx2 dy2.  Two-forms are arrays of shape (..., 6)
in the orthonormal basis dx_a ^ dx_b, a < b (``metric.PAIRS`` order).
The Kahler form is omega = -dd^c r^2 = 4 (dx1 ^ dy1 + dx2 ^ dy2) and
omega_1 = omega / 4, omega_2 = Re dz ^ dw, omega_3 = Im dz ^ dw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .complex import CellComplex, StructuralError
from .metric import PAIRS, HodgeMetric, flat_star2
from .s3_spectral import reference_potentials

FD_ORDER6 = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0
FD_OFFSETS = np.arange(-3, 4)
RICHARDSON_TOL = 1e-6


class NumericalDifferentiationError(ArithmeticError):
    """Richardson extrapolation did not settle."""


class GeometryError(ValueError):
    """Cap smoothing scale incompatible with the collar."""


# ------------------------------------------------------------------ pointwise algebra

def antisym_to_pairs(B: np.ndarray) -> np.ndarray:
    """Coefficients of the 2-form u^T B v in the dx_a ^ dx_b basis."""
    B = np.asarray(B, float)
    return np.stack([B[..., a, b] for a, b in PAIRS], axis=-1)


def pairs_to_antisym(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, float)
    B = np.zeros(c.shape[:-1] + (4, 4))
    for i, (a, b) in enumerate(PAIRS):
        B[..., a, b] = c[..., i]
        B[..., b, a] = -c[..., i]
    return B


def omega_basis() -> np.ndarray:
    """Rows omega_1, omega_2, omega_3."""
    return np.array([antisym_to_pairs(B) for B in reference_potentials()])


def kahler_form() -> np.ndarray:
    return 4.0 * omega_basis()[0]


def pointwise_inner(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...i->...", a, b)


@dataclass
class FlatFormField:
    """A 2-form field on R^4 minus the origin, evaluated pointwise."""

    name: str
    evaluate: callable
    self_dual: int = 0          # +1 SD, -1 ASD, 0 undeclared

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(np.atleast_2d(np.asarray(x, float)))


def constant_field(name: str, coeffs: np.ndarray, self_dual: int = 0) -> FlatFormField:
    c = np.asarray(coeffs, float)
    return FlatFormField(name, lambda x: np.broadcast_to(c, x.shape[:-1] + (6,)).copy(), self_dual)


def reference_gram(points=None, rotation=None) -> np.ndarray:
    """Pointwise Gram matrix of omega_1..omega_3 averaged over sample points.

    Also checks that the matrix is the same at every sample.  A U(2)
    ``rotation`` (4x4) pulls the three forms back before evaluation.
    """
    if points is None:
        points = np.random.default_rng(0).standard_normal((12, 4))
    pts = np.asarray(points, float)
    forms = omega_basis()
    if rotation is not None:
        U = np.asarray(rotation, float)
        forms = antisym_to_pairs(np.einsum("ai,kab,bj->kij", U, pairs_to_antisym(forms), U))
    fields = [constant_field(f"omega_{k + 1}", w, 1) for k, w in enumerate(forms)]
    vals = np.stack([f(pts) for f in fields], axis=1)            # (N, 3, 6)
    grams = np.einsum("nia,nja->nij", vals, vals)
    spread = np.max(np.abs(grams - grams[0]))
    if spread > 1e-12:
        raise ArithmeticError(f"Gram varies across samples by {spread:.2e}")
    return grams.mean(axis=0)


def psi2_pairing(a1: float, a2: float, a3: float, point=None) -> float:
    """<a1 omega_1 + a2 omega_2 + a3 omega_3, omega> at a point (constant on R^4)."""
    psi = np.array([a1, a2, a3]) @ omega_basis()
    return float(pointwise_inner(psi, kahler_form()))


def u2_element(theta: float, axis: int = 0) -> np.ndarray:
    """A unitary transformation of C^2 as a real 4x4 matrix."""
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    M = np.eye(4)
    if axis == 0:           # multiply z by e^{i theta}
        M[:2, :2] = rot
    elif axis == 1:         # mix z and w by a real rotation
        M = np.array([[c, 0, -s, 0], [0, c, 0, -s], [s, 0, c, 0], [0, s, 0, c]])
    else:                   # multiply w by e^{i theta}
        M[2:, 2:] = rot
    return M


# ------------------------------------------------------------------ the field gamma

def r_inv2_omega(x: np.ndarray) -> np.ndarray:
    r2 = np.sum(x ** 2, axis=-1, keepdims=True)
    return kahler_form() / r2


def _partial(f, x, axis, h):
    """Order-6 central difference of f along one coordinate axis."""
    acc = 0.0
    e = np.zeros(4)
    e[axis] = 1.0
    for w, k in zip(FD_ORDER6, FD_OFFSETS):
        if w:
            acc = acc + w * f(x + k * h * e)
    return acc / h


def codifferential_fd(beta, h: float):
    """x -> (d* beta)(x) for a 2-form field, (d* beta)_j = -sum_i d_i beta_ij."""
    def dstar(x):
        out = np.zeros(x.shape[:-1] + (4,))
        for i in range(4):
            dB = pairs_to_antisym(_partial(beta, x, i, h))
            out = out - dB[..., i, :]
        return out
    return dstar


def exterior_one_fd(alpha, h: float):
    """x -> d alpha for a 1-form field, (d alpha)_ab = d_a alpha_b - d_b alpha_a."""
    def d(x):
        grads = [_partial(alpha, x, a, h) for a in range(4)]
        return np.stack([grads[a][..., b] - grads[b][..., a] for a, b in PAIRS], axis=-1)
    return d


def _richardson(fn, x, h: float, order: int = 6):
    coarse = fn(h)(x)
    fine = fn(h / 2)(x)
    est = (2 ** order * fine - coarse) / (2 ** order - 1)
    change = np.max(np.abs(fine - coarse)) / max(np.max(np.abs(est)), 1e-300)
    return est, change


def dd_star(beta, x, h: float = 1e-2):
    """d d* beta at points x by nested order-6 differences with Richardson extrapolation."""
    def scheme(step):
        return exterior_one_fd(codifferential_fd(beta, step), step)
    est, change = _richardson(scheme, np.atleast_2d(x), h)
    if change > RICHARDSON_TOL:
        raise NumericalDifferentiationError(f"extrapolation unsettled (relative change {change:.2e})")
    return est


def lie_derivative_gradient(x, h: float = 1e-2):
    """L_X omega with X = grad r^-2, via Cartan: d (i_X omega) (omega constant and closed)."""
    Bw = pairs_to_antisym(kahler_form())

    def contraction(y):
        r2 = np.sum(y ** 2, axis=-1, keepdims=True)
        X = -2.0 * y / r2 ** 2
        return np.einsum("...i,ij->...j", X, Bw)

    def scheme(step):
        return exterior_one_fd(contraction, step)
    est, change = _richardson(scheme, np.atleast_2d(x), h)
    if change > RICHARDSON_TOL:
        raise NumericalDifferentiationError(f"extrapolation unsettled (relative change {change:.2e})")
    return est


@dataclass
class GammaDiagnostics:
    asd_residual: float
    length_variance: float
    min_length: float
    lie_error: float
    lengths: np.ndarray


def gamma_field(points=None, h: float = 1e-2):
    """gamma = r^4 d d*(r^-2 omega) at sample points, with diagnostics.

    Returns (FlatFormField, values (N, 6), diagnostics).  The Lie-derivative
    cross-check compares against -L_{grad r^-2} omega computed through a
    single differentiation of the explicit 1-form i_X omega.
    """
    if points is None:
        points = np.random.default_rng(1).standard_normal((20, 4))
    x = np.atleast_2d(np.asarray(points, float))
    r2 = np.sum(x ** 2, axis=-1, keepdims=True)
    dd = dd_star(r_inv2_omega, x, h)
    gamma = r2 ** 2 * dd
    star = flat_star2()
    norms = np.linalg.norm(gamma, axis=1)
    asd = np.linalg.norm(gamma + gamma @ star.T, axis=1) / norms
    lengths = np.sqrt(pointwise_inner(gamma, gamma))
    var = float(np.std(lengths) / np.mean(lengths))
    lie = -lie_derivative_gradient(x, h)
    lie_err = float(np.max(np.linalg.norm(dd - lie, axis=1) / np.linalg.norm(dd, axis=1)))
    diag = GammaDiagnostics(float(asd.max()), var, float(lengths.min()), lie_err, lengths)
    return FlatFormField("gamma", lambda y: np.sum(y ** 2, -1, keepdims=True) ** 2 * dd_star(r_inv2_omega, y, h), -1), \
        gamma, diag


def gamma_closed_form(x) -> np.ndarray:
    """gamma = 4 omega - 8 r^-2 (x . dx) ^ (i_x omega), evaluated directly."""
    x = np.atleast_2d(np.asarray(x, float))
    r2 = np.sum(x ** 2, axis=-1, keepdims=True)
    Bw = pairs_to_antisym(kahler_form())
    ix = np.einsum("...a,ab->...b", x, Bw)
    wedge = np.stack([x[..., a] * ix[..., b] - x[..., b] * ix[..., a] for a, b in PAIRS], axis=-1)
    return 4.0 * kahler_form() - 8.0 * wedge / r2


def scaling_covariance(mu: float, points=None, h: float = 1e-2) -> float:
    """Relative defect of (x -> mu x)^* dd*(r^-2 omega) = mu^-2 dd*(r^-2 omega)."""
    if points is None:
        points = np.random.default_rng(2).standard_normal((10, 4))
    x = np.atleast_2d(np.asarray(points, float))
    base = dd_star(r_inv2_omega, x, h)
    # pullback of a 2-form by a dilation: mu^2 times the value at mu x
    pulled = mu ** 2 * dd_star(r_inv2_omega, mu * x, h)
    return float(np.max(np.linalg.norm(pulled - base / mu ** 2, axis=1) / np.linalg.norm(base / mu ** 2, axis=1)))


# ------------------------------------------------------------------ the blowup cap

COLLAR_START = 0.75      # fibre radius beyond which the cap metric is the flat-cone product
SMOOTH_END = 0.5         # the smoothing weight chi equals one below this radius


def smoothing_weight(rho) -> np.ndarray:
    """chi: 1 for rho <= 1/2, 0 for rho >= 3/4, quintic in between."""
    x = np.clip((np.asarray(rho, float) - SMOOTH_END) / (COLLAR_START - SMOOTH_END), 0.0, 1.0)
    return 1.0 - x ** 3 * (10 - 15 * x + 6 * x ** 2)


def base_scale(rho, epsilon: float) -> np.ndarray:
    """Squared size of the base S^2 at fibre radius rho: rho^2 + eps^2 chi(rho)."""
    rho = np.asarray(rho, float)
    return rho ** 2 + epsilon ** 2 * smoothing_weight(rho)


def _cap_cell_data(cap: CellComplex):
    """Per total degree: (base degree p, fibre degree q, base index, fibre index) arrays."""
    bn = cap.meta["base_counts"]
    fn = cap.meta["fiber_counts"]
    offsets = cap.meta["offsets"]
    out = {}
    for m in range(5):
        P, Q, B, F = [], [], [], []
        for p in range(3):
            q = m - p
            if not 0 <= q <= 2:
                continue
            bb, ff = np.meshgrid(np.arange(bn[p]), np.arange(fn[q]), indexing="ij")
            P.append(np.full(bb.size, p)); Q.append(np.full(bb.size, q)); B.append(bb.ravel()); F.append(ff.ravel())
        out[m] = tuple(np.concatenate(a) for a in (P, Q, B, F))
        assert len(out[m][0]) == offsets[m]
    return out


def _fiber_cell_radius(cap: CellComplex):
    """Mean fibre radius of each fibre-disc cell, per fibre degree."""
    m = cap.meta["fiber_segments"]
    rings = cap.meta["radial_layers"]
    radii = cap.meta["fiber_radii"]
    ring_r = np.arange(1, rings + 1) / rings
    r1 = np.r_[np.repeat(ring_r, m), np.repeat(ring_r - 0.5 / rings, m)]    # ring edges, radial edges
    r2 = np.repeat(ring_r - 0.5 / rings, m)
    return {0: radii, 1: r1, 2: r2}


def _fiber_measures(cap: CellComplex):
    """(primal, dual) measures of fibre-disc cells in the flat unit disc."""
    m = cap.meta["fiber_segments"]
    rings = cap.meta["radial_layers"]
    dr = 1.0 / rings
    ring_r = np.arange(1, rings + 1) * dr
    mid = ring_r - 0.5 * dr
    # vertices: centre disc of radius dr/2, ring vertices an annular sector
    outer = np.minimum(ring_r + 0.5 * dr, 1.0)
    v_dual = np.r_[np.pi * (0.5 * dr) ** 2, np.repeat(np.pi * (outer ** 2 - (ring_r - 0.5 * dr) ** 2) / m, m)]
    e_primal = np.r_[np.repeat(2 * np.pi * ring_r / m, m), np.full(rings * m, dr)]
    e_dual = np.r_[np.repeat(np.where(ring_r < 1.0, dr, 0.5 * dr), m), np.repeat(2 * np.pi * mid / m, m)]
    f_primal = np.repeat(np.pi * (ring_r ** 2 - (ring_r - dr) ** 2) / m, m)
    return {0: (np.ones(1 + rings * m), v_dual), 1: (e_primal, e_dual), 2: (f_primal, np.ones(rings * m))}


def _base_measures(cap: CellComplex):
    """(primal, dual) measures of cube-sphere cells on the unit round S^2."""
    R = cap.meta["base_resolution"]
    areas = cap.meta["base_areas"]
    bn = cap.meta["base_counts"]
    edge = np.full(bn[1], 0.5 * np.pi / R)
    return {0: (np.ones(bn[0]), np.full(bn[0], 4 * np.pi / bn[0])), 1: (edge, edge),
            2: (areas, np.ones(bn[2]))}


def burns_cap_metric(cap: CellComplex, epsilon: float) -> HodgeMetric:
    """Diagonal Hodge masses on the blowup cap for the smoothed Kahler potential.

    The base sphere at fibre radius rho has squared size a = rho^2 +
    eps^2 chi(rho), the classical potential r^2 + eps^2 chi log r^2 seen
    on the horizontal directions; the fibre is the flat unit disc.  The
    mass of a (base p-cell) x (fibre q-cell) is
    a^{1 - p} * (dual base / base) * (dual fibre / fibre).
    On the collar rho >= 3/4 the weight chi vanishes, so the masses there
    do not depend on eps at all.
    """
    if cap.kind != "blowup_cap":
        raise StructuralError("burns_cap_metric needs a blowup cap complex")
    if not 0.0 < epsilon <= 0.5:
        raise GeometryError("epsilon must lie in (0, 1/2] so the smoothing stays inside the collar")
    data = _cap_cell_data(cap)
    rad = _fiber_cell_radius(cap)
    fm = _fiber_measures(cap)
    bm = _base_measures(cap)
    masses = []
    for m in range(5):
        P, Q, B, F = data[m]
        w = np.empty(len(P))
        for p in range(3):
            for q in range(3):
                sel = (P == p) & (Q == q)
                if not np.any(sel):
                    continue
                rho = rad[q][F[sel]]
                a = base_scale(rho, epsilon)
                # the collapsed centre keeps a positive base size eps^2 chi(0)
                ratio_b = bm[p][1][B[sel]] / bm[p][0][B[sel]]
                ratio_f = fm[q][1][F[sel]] / fm[q][0][F[sel]]
                w[sel] = a ** (1 - p) * ratio_b * ratio_f
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise GeometryError("non-positive cap mass; refine the fibre disc")
        masses.append(sp.diags(w, format="csc"))
    return HodgeMetric(cap, "burns_cap", masses)


def kahler_cochain(cap: CellComplex, epsilon: float) -> np.ndarray:
    """The Kahler form of the cap on horizontal 2-cells (base face x fibre vertex).

    Its value on face x {rho} is a(rho) times the spherical area of the
    face; on the centre section C this is eps^2 chi(0) times the area.
    """
    P, Q, B, F = _cap_cell_data(cap)[2]
    rad = _fiber_cell_radius(cap)[0]
    areas = cap.meta["base_areas"]
    w = np.zeros(cap.n(2))
    sel = (P == 2) & (Q == 0)
    w[sel] = base_scale(rad[F[sel]], epsilon) * areas[B[sel]]
    return w


def cycle_integral(cap: CellComplex, cochain: np.ndarray) -> float:
    """Integral of a 2-cochain over the marked cycle C."""
    C = cap.meta.get("C")
    if C is None:
        raise StructuralError("complex carries no marked cycle C")
    return float(C @ np.asarray(cochain, float))


def exceptional_area(cap: CellComplex, epsilon: float) -> float:
    """Integral over C of the cap's Kahler form."""
    return cycle_integral(cap, kahler_cochain(cap, epsilon))


def exceptional_period(gm_or_cap, u) -> float:
    """Integral of u over the exceptional cycle.

    For a glued manifold, u is the neck profile of a glued form and the
    period is read by the blowup cap from the amplitudes entering it; for
    the cap complex itself, u is a 2-cochain summed over C.
    """
    if isinstance(gm_or_cap, CellComplex):
        return cycle_integral(gm_or_cap, u)
    from .gluing import period
    return period(gm_or_cap, u)
