"""Metric families on the cubical torus and the evaluation map at a point.

A family is a per-cube star field ``star_s = sign(star_0 (I + sum_j s_j h_j))``
with cube-local perturbations h_j that vanish near the marked cube p.
The evaluation map sends s to the pairings <omega, psi_is>_p of the
self-dual parts of the harmonic representatives of three fixed classes
with a reference Kahler form, read from the constant reconstruction of
each cochain on the cube p.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .blowup import gamma_closed_form, kahler_form, omega_basis
from .complex import CellComplex, StructuralError, build_torus4
from .harmonic import ConsistencyError, SolverError, constant_two_forms, _constant_one_forms
from .metric import PAIRS, DomainError, HodgeMetric, build_metric, flat_star2, star_to_gram, torus_mass

GAP_MIN = 0.5


class DegeneracyError(ValueError):
    """The forms are not independent on the chosen window."""


# ------------------------------------------------------------------ geometry of the marked cube

@dataclass
class EvaluationPoint:
    """Marked cube p of the torus and the reference Kahler form there."""

    cube: int
    omega: np.ndarray                       # (6,) coefficients in the dx_a ^ dx_b basis
    n: int

    @property
    def position(self) -> np.ndarray:
        return np.array(np.unravel_index(self.cube, (self.n,) * 4))


def cube_offsets(n: int, p: int) -> np.ndarray:
    """Displacement (N, 4) from the centre of cube p to each cube centre, wrapped to the nearest copy."""
    grid = np.indices((n,) * 4).reshape(4, -1).T
    d = grid - np.array(np.unravel_index(p, (n,) * 4))
    return (d + n // 2) % n - n // 2


def combinatorial_distance(n: int, p: int) -> np.ndarray:
    """Number of face crossings from cube p to every cube."""
    return np.abs(cube_offsets(n, p)).sum(axis=1)


def cube_reconstruction(cx: CellComplex, w: np.ndarray, cubes=None) -> np.ndarray:
    """Average over each cube of the Whitney 2-form of a cochain, as (.., 6) coefficients."""
    n = cx.meta["n"]
    shift = cx.meta["shift"]
    N = n ** 4
    cubes = np.arange(N) if cubes is None else np.atleast_1d(cubes)
    w = np.asarray(w, float)
    out = np.zeros((len(cubes), 6) + w.shape[1:])
    for i, (a, b) in enumerate(PAIRS):
        free = [c for c in range(4) if c not in (a, b)]
        acc = 0.0
        for o1, o2 in itertools.product((0, 1), repeat=2):
            idx = cubes.copy()
            if o1:
                idx = shift[free[0]][idx]
            if o2:
                idx = shift[free[1]][idx]
            acc = acc + w[i * N + idx]
        out[:, i] = acc / 4.0
    return out


# ------------------------------------------------------------------ stars

def star_sign(star0: np.ndarray, H: np.ndarray):
    """sign(star0 (I + H)) per cube together with the smallest |eigenvalue|.

    star0 (.., 6, 6) are involutions with Gram G0 = Q star0; H must be
    G0-self-adjoint so that G0 (I + H) is symmetric.  With that Gram
    positive, star0 (I + H) = Q G_s is diagonalized by eigh(Q, G_s) and its
    sign is again a metric star.
    """
    Q = flat_star2()
    star0 = np.asarray(star0, float)
    H = np.asarray(H, float)
    out = np.empty_like(star0)
    gap = np.full(star0.shape[0], 1.0)
    G0 = star_to_gram(star0)
    I6 = np.eye(6)
    for c in range(star0.shape[0]):
        if not np.any(H[c]):
            out[c] = star0[c]
            continue
        Gs = G0[c] @ (I6 + H[c])
        Gs = 0.5 * (Gs + Gs.T)
        try:
            nu, X = la.eigh(Q, Gs)
        except la.LinAlgError as exc:
            raise DomainError("perturbed star has no positive Gram") from exc
        mu = 1.0 / nu
        gap[c] = np.min(np.abs(mu))
        out[c] = (X * np.sign(nu)) @ X.T @ Gs
    return out, gap


def star_sign_derivative(star0: np.ndarray, h: np.ndarray) -> np.ndarray:
    """d/ds sign(star0 (I + s h)) at s = 0, for involutions star0: (E - star0 E star0) / 2, E = star0 h."""
    E = star0 @ h
    return 0.5 * (E - star0 @ E @ star0)


# ------------------------------------------------------------------ families

@dataclass
class MetricFamily:
    """Per-cube star field star_0 with perturbation fields h_1, h_2, h_3."""

    complex: CellComplex
    base_star: np.ndarray                   # (N, 6, 6)
    fields: np.ndarray                      # (3, N, 6, 6)
    point: EvaluationPoint
    s_bound: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.fields != 0, axis=(0, 2, 3)))

    def check_s(self, s) -> np.ndarray:
        s = np.asarray(s, float)
        if s.shape != (self.fields.shape[0],) or np.max(np.abs(s)) > self.s_bound:
            raise DomainError(f"s = {s} outside the box |s_j| <= {self.s_bound}")
        return s

    def star(self, s):
        s = self.check_s(s)
        H = np.einsum("j,jnab->nab", s, self.fields)
        S, gap = star_sign(self.base_star, H)
        if gap.min() < GAP_MIN:
            raise DomainError(f"spectral gap {gap.min():.3f} below {GAP_MIN} at s = {s}")
        return S

    def metric(self, s) -> HodgeMetric:
        key = tuple(np.asarray(s, float).round(15))
        if key not in self._cache:
            if len(self._cache) > 8:
                self._cache.clear()
            self._cache[key] = build_metric(self.complex, "flat_periodic", cell_star=self.star(s))
        return self._cache[key]

    def rebased(self, s, fields=None) -> "MetricFamily":
        """Family centred at s: its base star is star_s."""
        S = self.star(s)
        return MetricFamily(self.complex, S, self.fields if fields is None else fields, self.point, self.s_bound)


def flat_family(n: int, point_cube: int | None = None) -> MetricFamily:
    """Flat torus (R / nZ)^4, marked cube at the centre, no perturbation yet."""
    cx = build_torus4(n)
    N = n ** 4
    p = int(np.ravel_multi_index((n // 2,) * 4, (n,) * 4)) if point_cube is None else int(point_cube)
    base = np.broadcast_to(flat_star2(), (N, 6, 6)).copy()
    point = EvaluationPoint(p, kahler_form(), n)
    return MetricFamily(cx, base, np.zeros((3, N, 6, 6)), point)


# ------------------------------------------------------------------ harmonic data

@dataclass
class HarmonicData:
    metric: HodgeMetric
    reps: np.ndarray            # (n2, 6) harmonic representatives of the six constant classes
    gram: np.ndarray
    cup: np.ndarray
    projector: np.ndarray       # SD projector in class coordinates
    lu: object = field(repr=False, default=None)


def harmonic_data(metric: HodgeMetric) -> HarmonicData:
    """Harmonic representatives of H^2 and the SD projector acting on them."""
    cx = metric.complex
    d0, d1 = cx.d(0), cx.d(1)
    M2 = metric.masses[2]
    H1 = _constant_one_forms(cx)
    A = (d1.T @ M2 @ d1 + d0 @ d0.T).tocsc() + sp.csc_matrix(H1 @ H1.T)
    lu = sla.splu(sp.csc_matrix(A))
    C = constant_two_forms(cx)
    Y = lu.solve(np.asarray(d1.T @ (M2 @ C)))
    reps = C - d1 @ Y
    G = reps.T @ (M2 @ reps)
    G = 0.5 * (G + G.T)
    Q = reps.T @ (metric.wedge2 @ reps)
    Q = 0.5 * (Q + Q.T)
    mu, X = la.eigh(Q, G)
    P = 0.5 * (np.eye(6) + (X * np.sign(mu)) @ X.T @ G)
    return HarmonicData(metric, reps, G, Q, P, lu)


def class_coefficients(classes) -> np.ndarray:
    """Columns: the three classes in the constant basis dx_a ^ dx_b."""
    return np.asarray(classes, float).T


def sd_forms(data: HarmonicData, classes) -> np.ndarray:
    """SD parts psi_i of the harmonic representatives of the classes (columns)."""
    return data.reps @ (data.projector @ class_coefficients(classes))


def pi_eval(family: MetricFamily, s, classes=None) -> np.ndarray:
    """pi_i(s) = <omega, psi_is>_p."""
    classes = omega_basis() if classes is None else classes
    data = harmonic_data(family.metric(s))
    psi = sd_forms(data, classes)
    rec = cube_reconstruction(family.complex, psi, family.point.cube)[0]      # (6, 3)
    return family.point.omega @ rec


def evaluation_matrix(family: MetricFamily, s, classes=None) -> np.ndarray:
    """E[k, i] = omega_k-coefficient of psi_is at p (omega_k orthogonal, |omega_k|^2 = 2)."""
    classes = omega_basis() if classes is None else classes
    data = harmonic_data(family.metric(s))
    rec = cube_reconstruction(family.complex, sd_forms(data, classes), family.point.cube)[0]
    return 0.5 * omega_basis() @ rec


# ------------------------------------------------------------------ first-order variation

def _sign_derivative(G, Q, Gdot):
    """Derivative of sign(G^{-1} Q) for a variation Gdot of the Gram (Daleckii-Krein)."""
    mu, X = la.eigh(Q, G)                 # G^{-1} Q = X diag(mu) X^{-1}, X^{-1} = X^T G
    Xi = X.T @ G
    Adot = -np.linalg.solve(G, Gdot) @ np.linalg.solve(G, Q)
    B = Xi @ Adot @ X
    sg = np.sign(mu)
    diff = mu[:, None] - mu[None, :]
    same = sg[:, None] == sg[None, :]
    F = np.where(same, 0.0, (sg[:, None] - sg[None, :]) / np.where(same, 1.0, diff))
    return X @ (F * B) @ Xi


def mass_derivative(family: MetricFamily, j: int) -> sp.csc_matrix:
    """dM_2/ds_j at s = 0."""
    Sdot = np.zeros_like(family.base_star)
    supp = family.support
    for c in supp:
        Sdot[c] = star_sign_derivative(family.base_star[c], family.fields[j, c])
    Gdot = star_to_gram(Sdot)
    Gdot[np.setdiff1d(np.arange(len(Gdot)), supp)] = 0.0
    return torus_mass(family.complex, 2, Gdot)


def honda_derivative(family: MetricFamily, j: int, classes=None, data: HarmonicData | None = None) -> np.ndarray:
    """d psi_is / ds_j at s = 0 from the linearized harmonic solve.

    The harmonic representative h = c - d y moves by -d ydot with
    (d^T M_2 d) ydot = d^T Mdot_2 h, the exact-form analogue of
    Delta dpsi = d d* (h_j psi); the SD projector moves through the
    derivative of sign(G^{-1} Q) with Gdot = h^T Mdot_2 h.
    """
    classes = omega_basis() if classes is None else classes
    if data is None:
        data = harmonic_data(family.metric(np.zeros(family.fields.shape[0])))
    cx = family.complex
    d1 = cx.d(1)
    Mdot = mass_derivative(family, j)
    if Mdot.nnz == 0 or not np.any(Mdot.data):
        return np.zeros((cx.n(2), np.asarray(classes).shape[0]))
    rhs = np.asarray(d1.T @ (Mdot @ data.reps))
    ydot = data.lu.solve(rhs)
    resid = np.linalg.norm(d1.T @ (data.metric.masses[2] @ (d1 @ ydot)) - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if resid > 1e-8:
        raise ConsistencyError(f"linearized harmonic solve residual {resid:.2e}")
    reps_dot = -(d1 @ ydot)
    Gdot = data.reps.T @ (Mdot @ data.reps)
    Gdot = 0.5 * (Gdot + Gdot.T)
    Pdot = 0.5 * _sign_derivative(data.gram, data.cup, Gdot)
    K = class_coefficients(classes)
    return reps_dot @ (data.projector @ K) + data.reps @ (Pdot @ K)


def finite_difference_derivative(family: MetricFamily, j: int, step: float, classes=None) -> np.ndarray:
    """Centred difference of psi_is along s_j through the full nonlinear pipeline."""
    classes = omega_basis() if classes is None else classes
    e = np.zeros(family.fields.shape[0])
    e[j] = step
    plus = sd_forms(harmonic_data(family.metric(e)), classes)
    minus = sd_forms(harmonic_data(family.metric(-e)), classes)
    return (plus - minus) / (2 * step)


def jacobian(family: MetricFamily, classes=None) -> np.ndarray:
    """J[i, j] = d pi_i / d s_j at s = 0 from honda_derivative."""
    classes = omega_basis() if classes is None else classes
    data = harmonic_data(family.metric(np.zeros(family.fields.shape[0])))
    J = np.zeros((3, family.fields.shape[0]))
    for j in range(family.fields.shape[0]):
        dpsi = honda_derivative(family, j, classes, data)
        rec = cube_reconstruction(family.complex, dpsi, family.point.cube)[0]
        J[:, j] = family.point.omega @ rec
    return J


# ------------------------------------------------------------------ perturbation fields

@dataclass
class Window:
    """Cubes carrying the perturbation, chosen by combinatorial distance from p."""

    cubes: np.ndarray
    inner: int
    outer: int

    @classmethod
    def shell(cls, family: MetricFamily, inner: int, outer: int | None = None) -> "Window":
        outer = inner if outer is None else outer
        if inner < 1:
            raise DomainError("the window must not contain p")
        dist = combinatorial_distance(family.point.n, family.point.cube)
        return cls(np.flatnonzero((dist >= inner) & (dist <= outer)), inner, outer)


def _sd_frames(star: np.ndarray):
    """G-orthonormal eigenframe (6, 6) of each star, SD columns first, and the Gram."""
    Q = flat_star2()
    G = star_to_gram(star)
    frames = np.empty_like(star)
    for c in range(len(star)):
        nu, X = la.eigh(Q, G[c])
        frames[c] = X[:, np.argsort(-nu, kind="stable")]
    return frames, G


def construct_h(family: MetricFamily, window: Window, classes=None, amplitude: float = 0.1,
                min_singular: float = 1e-3) -> np.ndarray:
    """Fields h_j on the window whose star variation sends psi_i to amplitude * ghat delta_ij.

    psi_i are the SD parts of the base harmonic representatives, read on
    each window cube; ghat is the unit ASD form gamma / |gamma| at the cube
    centre relative to p.  In the cube's SD / ASD frame the stored field is
    the symmetric block map -[[0, B^T], [B, 0]] with B Psi = ghat e_j^T:
    with star_s = sign(star_0 (I + s h)) this gives d star_s / ds psi_i = B psi_i.
    """
    classes = omega_basis() if classes is None else classes
    data = harmonic_data(family.metric(np.zeros(family.fields.shape[0])))
    psi = cube_reconstruction(family.complex, sd_forms(data, classes), window.cubes)     # (W, 6, 3)
    offsets = cube_offsets(family.point.n, family.point.cube)[window.cubes].astype(float)
    gam = gamma_closed_form(offsets)
    gam /= np.linalg.norm(gam, axis=1, keepdims=True)
    frames, G = _sd_frames(family.base_star[window.cubes])
    fields = np.zeros((3,) + family.base_star.shape)
    for k, c in enumerate(window.cubes):
        X = frames[k]
        coords_psi = X.T @ G[k] @ psi[k]               # (6, 3), SD rows first
        coords_gam = X.T @ G[k] @ gam[k]
        Psi = coords_psi[:3]                            # cube averages are SD only up to discretization
        sv = np.linalg.svd(Psi, compute_uv=False)
        if sv[-1] < min_singular * sv[0]:
            raise DegeneracyError(f"psi degenerate on cube {c} (singular values {sv}); choose another window")
        Pinv = np.linalg.inv(Psi)
        for j in range(3):
            B = amplitude * np.outer(coords_gam[3:], Pinv[j])
            K = np.zeros((6, 6))
            K[3:, :3] = -B
            K[:3, 3:] = -B.T
            fields[j, c] = X @ K @ X.T @ G[k]
    return fields


def calibrated_family(family: MetricFamily, window: Window, classes=None, amplitude: float = 0.1) -> MetricFamily:
    return MetricFamily(family.complex, family.base_star, construct_h(family, window, classes, amplitude),
                        family.point, family.s_bound)


def background_family(n: int, seed: int, inner: int = 5, amplitude: float = 0.2) -> MetricFamily:
    """Flat torus with a seeded generic star on the cubes at distance >= inner from p."""
    fam = flat_family(n)
    dist = combinatorial_distance(n, fam.point.cube)
    cubes = np.flatnonzero(dist >= inner)
    if not len(cubes):
        raise DomainError(f"no cubes at distance >= {inner} on the {n}-torus")
    rng = np.random.default_rng(seed)
    K = rng.standard_normal((len(cubes), 6, 6))
    K = 0.5 * (K + np.swapaxes(K, 1, 2))
    K *= amplitude / np.linalg.norm(K, ord=2, axis=(1, 2))[:, None, None]
    H = np.zeros_like(fam.base_star)
    H[cubes] = K                                         # flat Gram is the identity
    star, gap = star_sign(fam.base_star, H)
    if gap.min() < GAP_MIN:
        raise DomainError("background amplitude too large")
    fam.base_star = star
    return fam


@dataclass
class CalibrationStep:
    step: int
    pi: np.ndarray
    jacobian_diag: np.ndarray
    damping: float


def calibrate(family: MetricFamily, window: Window, classes=None, amplitude: float = 0.3,
              tol: float = 1e-12, max_steps: int = 30):
    """Move the base metric until pi(0) = 0, by continuation along construct_h families.

    Each step builds fields on the window for the current base, takes a
    damped Newton step in s (|s_j| <= 1) and re-centres the base at the
    new point.  Returns (calibrated family without fields, steps).
    """
    steps = []
    fam = family
    for k in range(max_steps):
        fam = calibrated_family(fam, window, classes, amplitude)
        p = pi_eval(fam, np.zeros(3), classes)
        J = jacobian(fam, classes)
        if np.max(np.abs(p)) < tol:
            steps.append(CalibrationStep(k, p, np.diag(J).copy(), 0.0))
            return MetricFamily(fam.complex, fam.base_star, np.zeros_like(fam.fields), fam.point,
                                fam.s_bound), steps
        ds = -np.linalg.solve(J, p)
        damping = min(1.0, 1.0 / np.max(np.abs(ds)))
        steps.append(CalibrationStep(k, p, np.diag(J).copy(), damping))
        fam = fam.rebased(damping * ds, fields=np.zeros_like(fam.fields))
    raise SolverError(f"calibration did not reach |pi(0)| < {tol} in {max_steps} steps (last {steps[-1].pi})")


# ------------------------------------------------------------------ root finding on the glued manifold

@dataclass
class GluedPeriods:
    s: np.ndarray
    periods: np.ndarray           # integral over C of each glued SD harmonic form
    norms: np.ndarray             # full L^2 norm of each glued form
    pi: np.ndarray


@dataclass
class DemoResult:
    T: float
    s_star: np.ndarray
    periods: np.ndarray
    norms: np.ndarray
    pi_residual: float            # |pi(s*)|
    scaled_period: float          # max |int_C u_i| / (||u_i|| e^{-2T})
    iterations: list              # (step, method, |scaled residual|)
    converged: bool


def sd_gram(data: HarmonicData, classes=None) -> np.ndarray:
    """Gram of the SD parts psi_i over the torus."""
    classes = omega_basis() if classes is None else classes
    psi = sd_forms(data, classes)
    G = psi.T @ (data.metric.masses[2] @ psi)
    return 0.5 * (G + G.T)


def glued_periods(family: MetricFamily, s, space, blowup, T: float, layers_per_unit: int = 8,
                  seed: int = 1, higher: float = 1.0, classes=None) -> GluedPeriods:
    """Periods over C of the glued SD harmonic forms built from psi_is."""
    from .gluing import iterate, make_glued, period, torus_side_cap

    classes = omega_basis() if classes is None else classes
    s = family.check_s(s)
    data = harmonic_data(family.metric(s))
    rec = cube_reconstruction(family.complex, sd_forms(data, classes), family.point.cube)[0]
    E = 0.5 * omega_basis() @ rec
    cap1 = torus_side_cap(space, E, seed=seed, higher=higher, bulk_gram=sd_gram(data, classes))
    gm = make_glued(cap1, blowup, T, layers_per_unit)
    per, nrm = np.zeros(3), np.zeros(3)
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1.0
        u, _, _ = iterate(gm, e, min_steps=4)
        per[i] = period(gm, u)
        nrm[i] = np.sqrt(gm.norm(u) ** 2 + e @ cap1.bulk_gram @ e)
    return GluedPeriods(s, per, nrm, family.point.omega @ rec)


def theorem_demo(family: MetricFamily, space, blowup, T: float, layers_per_unit: int = 8, seed: int = 1,
                 higher: float = 1.0, tol: float = 1e-8, max_steps: int = 20, fd_step: float = 1e-4,
                 classes=None) -> DemoResult:
    """Find s* with int_C u_is* = 0 for the three glued forms.

    Damped Newton with a centred finite-difference Jacobian.  If halving
    the Newton step four times does not reduce the residual, one Broyden
    step with the secant-updated Jacobian is tried instead.  The residual
    is the period divided by the period of a unit omega_1 coefficient
    carried across the whole neck, so it approximates pi / 8 for any T.
    """
    from .gluing import ConvergenceError

    frame = space.omega_frame()
    lam_w = float(np.mean(space.lam[space.omega_modes()]))
    unit = float(blowup.period[:3] @ frame[:, 0])
    scale = np.exp(lam_w * (T + 2.0)) / unit

    def F(s):
        try:
            gp = glued_periods(family, s, space, blowup, T, layers_per_unit, seed, higher, classes)
        except DomainError:
            return None, None
        return gp, gp.periods * scale

    def size(r):
        return np.inf if r is None else float(np.max(np.abs(r)))

    s = np.zeros(3)
    gp, r = F(s)
    history = [(0, "start", size(r))]
    for k in range(1, max_steps + 1):
        if size(r) < tol:
            break
        J = np.zeros((3, 3))
        for j in range(3):
            e = np.zeros(3)
            e[j] = fd_step
            J[:, j] = (F(s + e)[1] - F(s - e)[1]) / (2 * fd_step)
        step = -np.linalg.solve(J, r)
        method = "newton"
        for halving in range(5):
            trial = s + step / 2 ** halving
            gp_t, r_t = F(trial)
            if size(r_t) < size(r):
                method = "newton" if halving == 0 else "damped"
                break
        else:
            last = trial - s
            J = J + np.outer(r_t - r - J @ last, last) / (last @ last) if r_t is not None else J
            trial = s - np.linalg.solve(J, r)
            gp_t, r_t = F(trial)
            method = "broyden"
            if size(r_t) >= size(r):
                raise ConvergenceError(f"root finding stalled at T = {T}", history)
        s, r, gp = trial, r_t, gp_t
        history.append((k, method, size(r)))
    converged = size(r) < tol
    if not converged:
        raise ConvergenceError(f"no root within {max_steps} steps at T = {T}", history)
    scaled = float(np.max(np.abs(gp.periods) / (gp.norms * np.exp(-2 * T))))
    return DemoResult(float(T), s, gp.periods, gp.norms, float(np.max(np.abs(gp.pi))), scaled, history, converged)
