"""Alternating gluing of two caps across a long neck, in sphere-mode space.

On the neck every self-dual form is a vector of sphere-mode amplitudes
f(t), one per closed mode alpha_k with signed rate lam_k, and the Hodge
operator acts mode by mode as f' + lam f.  A cap is summarized by how it
answers incoming waves at its entrance: outgoing amplitudes are
``reflection @ incoming`` plus any L^2 harmonic forms the cap carries.

The time grid runs from t_L = -1 - collar to t_R = T + 1 + collar with
the regions X1 = [t_L, -1], P1 = [-1, 0], N = [0, T], P2 = [T, T + 1],
X2 = [T + 1, t_R].  Residuals use the exponentially fitted difference
r_j = (f_{j+1} - exp(-lam h) f_j) / phi, phi = (1 - exp(-lam h)) / lam,
which vanishes on every exact mode profile, so the discrete iteration
keeps the translation invariance of the continuum neck.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .complex import CellComplex, Region, StructuralError
from .metric import DomainError
from .s3_spectral import ClosedModes, clusters, ritz_reference_forms

TERMINATION_TOL = 1e-10
MAX_STEPS = 50


class ConvergenceError(RuntimeError):
    """The alternating iteration failed to contract."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


# ------------------------------------------------------------------ modes

@dataclass
class ModeSpace:
    """Signed neck rates with the sphere forms that carry them."""

    lam: np.ndarray
    modes: ClosedModes | None = field(default=None, repr=False)
    cluster_ids: np.ndarray | None = None

    def __post_init__(self):
        self.lam = np.asarray(self.lam, float)
        if np.any(self.lam == 0):
            raise DomainError("zero rate in mode space")
        if self.cluster_ids is None:
            ids = np.zeros(len(self.lam), dtype=int)
            for g_id, g in enumerate(clusters(self.lam ** 2)):
                ids[g] = g_id
            self.cluster_ids = ids

    @property
    def size(self) -> int:
        return len(self.lam)

    @property
    def positive(self) -> np.ndarray:
        """Indices with lam > 0 ordered by rate (decay toward increasing t)."""
        idx = np.flatnonzero(self.lam > 0)
        return idx[np.argsort(self.lam[idx], kind="stable")]

    @property
    def negative(self) -> np.ndarray:
        idx = np.flatnonzero(self.lam < 0)
        return idx[np.argsort(-self.lam[idx], kind="stable")]

    def lowest(self) -> np.ndarray:
        """Mask of the lowest-rate cluster (both signs)."""
        return self.cluster_ids == self.cluster_ids[np.argmin(np.abs(self.lam))]

    @classmethod
    def from_modes(cls, modes: ClosedModes) -> "ModeSpace":
        return cls(modes.lam.copy(), modes, None if modes.cluster_ids is None else modes.cluster_ids.copy())

    def omega_frame(self) -> np.ndarray:
        """Coefficients (3 x 3) of the unit-sphere pullbacks of omega_1..omega_3 on the lowest positive modes.

        Column k holds the mode amplitudes of the k-th reference form
        (omega / 4, Re dz^dw, Im dz^dw restricted to the unit sphere).
        """
        if self.modes is None:
            raise StructuralError("mode space carries no sphere forms")
        ops = self.modes.ops
        sel = self.omega_modes()
        F = self.modes.forms[:, sel]
        refs = np.column_stack(ritz_reference_forms(ops.cx))
        return F.T @ (ops.M[2] @ refs)

    def omega_modes(self) -> np.ndarray:
        pos = self.positive
        return pos[:3]


# ------------------------------------------------------------------ caps

@dataclass
class CapModel:
    """Scattering data of a cap seen from its cylindrical entrance.

    ``reflection`` maps incoming amplitudes (modes decaying into the cap,
    ordered by rate) to outgoing ones; ``harmonic`` holds, per column, the
    outgoing amplitudes of an L^2 harmonic self-dual form of the cap with a
    cylindrical end.  ``period`` is the linear functional giving the
    integral over the cap's marked cycle of a closed form entering with
    the given incoming amplitudes, when the cap has one.
    """

    name: str
    space: ModeSpace = field(repr=False)
    reflection: np.ndarray
    harmonic: np.ndarray
    euler: int
    period: np.ndarray | None = None
    complex: CellComplex | None = field(default=None, repr=False)
    bulk_gram: np.ndarray | None = None     # Gram of the harmonic forms over the cap interior

    def __post_init__(self):
        if self.bulk_gram is None:
            self.bulk_gram = np.zeros((self.b_plus, self.b_plus))

    @property
    def b_plus(self) -> int:
        return self.harmonic.shape[1]


def _generic_matrix(rng, k, norm):
    """Seeded symmetric k x k matrix of the given spectral norm.

    Reflection matrices are symmetric for unit-normalized modes
    (reciprocity of the self-adjoint cap problem).
    """
    R = rng.standard_normal((k, k))
    R = R + R.T
    s = np.linalg.norm(R, 2)
    return R * (norm / s) if s > 0 else R


def disc_cap(space: ModeSpace) -> CapModel:
    """The flat ball: incoming waves pass to the centre without reflection."""
    k = len(space.positive)
    return CapModel("disc", space, np.zeros((k, k)), np.zeros((k, 0)), euler=1)


def reflecting_cap(space: ModeSpace, seed: int, norm: float = 0.5, harmonic: np.ndarray | None = None,
                   euler: int = 1, name: str = "reflecting") -> CapModel:
    """Generic cap: a seeded reflection matrix of the given spectral norm."""
    rng = np.random.default_rng(seed)
    k = len(space.positive)
    R = _generic_matrix(rng, k, norm)
    H = np.zeros((k, 0)) if harmonic is None else np.asarray(harmonic, float)
    return CapModel(name, space, R, H, euler=euler)


def blowup_cap(space: ModeSpace, seed: int, area: float, norm: float = 0.5,
               complex: CellComplex | None = None) -> CapModel:
    """Neighbourhood of a (-1)-sphere C with a Kahler metric near C.

    The three lowest incoming modes (the omega sector) are absorbed without
    reflection; the period functional is area / 4 times the omega_1
    coefficient of the incoming slice, where ``area`` is the integral of
    the cap's Kahler form over C.  Higher incoming modes pair trivially with
    C and reflect through a seeded matrix.
    """
    rng = np.random.default_rng(seed)
    k = len(space.positive)
    R = _generic_matrix(rng, k, norm)
    R[:, :3] = 0.0
    period = np.zeros(k)
    frame = space.omega_frame()
    # omega_1 coefficient of a slice whose lowest positive amplitudes are a: (frame^{-1} a)[0]
    period[:3] = 0.25 * area * np.linalg.inv(frame)[0]
    return CapModel("blowup", space, R, np.zeros((k, 0)), euler=2, period=period, complex=complex)


def torus_side_cap(space: ModeSpace, omega_coeffs: np.ndarray, seed: int, norm: float = 0.5,
                   higher: float = 0.0, bulk_gram: np.ndarray | None = None) -> CapModel:
    """T^4 minus a ball around p, carrying the three SD harmonic forms.

    ``omega_coeffs`` (3 x b) are the coefficients of each harmonic form at
    p in the basis omega_1, omega_2, omega_3; they feed the omega-sector
    amplitudes.  ``higher`` scales a seeded component on the faster modes,
    standing for the variation of the forms across the removed ball.
    ``bulk_gram`` is their Gram matrix over the torus minus the ball.
    """
    rng = np.random.default_rng(seed)
    k = len(space.positive)
    R = _generic_matrix(rng, k, norm)
    b = omega_coeffs.shape[1]
    H = np.zeros((k, b))
    H[:3] = space.omega_frame() @ omega_coeffs
    if higher:
        H[3:] = higher * rng.standard_normal((k - 3, b)) / np.sqrt(max(k - 3, 1))
    return CapModel("torus-minus-ball", space, R, H, euler=-1, bulk_gram=bulk_gram)


# ------------------------------------------------------------------ glued manifold

def smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (10 - 15 * x + 6 * x ** 2)


@dataclass
class GluedManifold:
    space: ModeSpace
    cap1: CapModel
    cap2: CapModel
    T: float
    layers_per_unit: int
    collar: float
    t: np.ndarray
    rho1: np.ndarray
    rho2: np.ndarray
    regions: dict
    euler: int

    @property
    def h(self) -> float:
        return 1.0 / self.layers_per_unit

    def node(self, t: float) -> int:
        return int(round((t - self.t[0]) / self.h))

    # --- metric pieces
    def time_mass(self) -> np.ndarray:
        """Tridiagonal linear-element mass along t (dense, nodes x nodes)."""
        n, h = len(self.t), self.h
        m = np.zeros((n, n))
        i = np.arange(n - 1)
        m[i, i] += h / 3; m[i + 1, i + 1] += h / 3
        m[i, i + 1] += h / 6; m[i + 1, i] += h / 6
        return m

    def norm(self, f: np.ndarray) -> float:
        """L^2 norm of a self-dual neck form: |psi|^2 = 2 |alpha|^2 per slice."""
        return float(np.sqrt(2.0 * np.einsum("ik,ij,jk->", f, self._m0, f)))

    def __post_init__(self):
        self._m0 = self.time_mass()
        lam = self.space.lam
        h = self.h
        self._decay = np.exp(-lam * h)
        self._phi = -np.expm1(-lam * h) / lam

    # --- the Hodge operator on mode profiles
    def residual(self, f: np.ndarray) -> np.ndarray:
        """Edgewise D f for node profiles f (nodes x K)."""
        return (f[1:] - self._decay * f[:-1]) / self._phi

    def residual_norm(self, r: np.ndarray) -> float:
        return float(np.sqrt(2.0 * self.h * np.sum(r ** 2)))

    def edge_support(self, r: np.ndarray) -> np.ndarray:
        return np.flatnonzero(np.abs(r).max(axis=1) > 0)

    def cutoff_residual(self, rho: np.ndarray, v: np.ndarray, s: np.ndarray | None) -> np.ndarray:
        """D (rho v) by the discrete product rule, given D v = s.

        rho_{j+1} s_j + (rho_{j+1} - rho_j) exp(-lam h) v_j / phi: equal to
        ``residual(rho v)`` up to rounding, but free of the cancellation
        that would otherwise smear rounding noise off the cuffs.
        """
        drho = np.diff(rho)[:, None]
        out = drho * self._decay * v[:-1] / self._phi
        if s is not None:
            out = out + rho[1:, None] * s
        return out


def make_glued(x1_cap: CapModel, x2_cap: CapModel, T: float, layers_per_unit: int,
               collar: float = 0.0) -> GluedManifold:
    """Neck of length T between the caps, with unit cuffs and quintic cutoffs."""
    space = x1_cap.space
    if x2_cap.space is not space and not np.array_equal(x2_cap.space.lam, space.lam):
        raise StructuralError("caps see different sphere-mode spaces at their entrances")
    if layers_per_unit < 2:
        raise DomainError("need at least two layers per unit length")
    if T <= 0:
        raise DomainError("neck length must be positive")
    per = layers_per_unit
    if abs(T * per - round(T * per)) > 1e-9 or abs(collar * per - round(collar * per)) > 1e-9:
        raise DomainError("T and collar must be multiples of the layer length")
    tL, tR = -1.0 - collar, T + 1.0 + collar
    n_edges = int(round((tR - tL) * per))
    t = tL + np.arange(n_edges + 1) / per
    rho2 = smoothstep(t + 1.0)            # 0 on X1 - P1, rises across P1, 1 off X1
    rho1 = 1.0 - smoothstep(t - T)        # 1 off X2, falls across P2, 0 on X2 - P2
    mid = 0.5 * (t[:-1] + t[1:])
    bounds = {"X1": (tL, -1.0), "P1": (-1.0, 0.0), "N": (0.0, T), "P2": (T, T + 1.0), "X2": (T + 1.0, tR)}
    regions = {}
    for name, (a, b) in bounds.items():
        edges = np.flatnonzero((mid > a) & (mid < b))
        nodes = np.flatnonzero((t >= a - 1e-12) & (t <= b + 1e-12))
        regions[name] = Region(name, {0: nodes, 1: edges})
    # chi(neck) = chi(S^3) = 0 and each interface is an S^3, so chi adds over the caps
    euler = x1_cap.euler + x2_cap.euler
    if x1_cap.complex is not None:
        euler = x1_cap.complex.euler_characteristic() + x2_cap.euler
    if x2_cap.complex is not None:
        euler = euler - x2_cap.euler + x2_cap.complex.euler_characteristic()
    return GluedManifold(space, x1_cap, x2_cap, float(T), int(per), float(collar), t, rho1, rho2,
                         regions, int(euler))


def check_partition(gm: GluedManifold) -> bool:
    edges = np.concatenate([gm.regions[k].cells[1] for k in ("X1", "P1", "N", "P2", "X2")])
    return len(edges) == len(gm.t) - 1 and len(np.unique(edges)) == len(edges)


# ------------------------------------------------------------------ half-line solves

def harmonic_on_x1(gm: GluedManifold, coeffs) -> np.ndarray:
    """Neck profile of the L^2 harmonic SD form of the X1 side with the given coefficients."""
    sp_ = gm.space
    f = np.zeros((len(gm.t), sp_.size))
    amp = gm.cap1.harmonic @ np.asarray(coeffs, float)
    pos = sp_.positive
    f[:, pos] = amp[None, :] * np.exp(-sp_.lam[pos][None, :] * (gm.t - gm.t[0])[:, None])
    return f


def _march(gm: GluedManifold, s: np.ndarray, idx: np.ndarray, start: np.ndarray, forward: bool,
           f: np.ndarray) -> None:
    decay, phi = gm._decay[idx], gm._phi[idx]
    n = len(gm.t)
    if forward:
        f[0, idx] = start
        for j in range(n - 1):
            f[j + 1, idx] = decay * f[j, idx] + phi * s[j, idx]
    else:
        f[-1, idx] = start
        for j in range(n - 2, -1, -1):
            f[j, idx] = (f[j + 1, idx] - phi * s[j, idx]) / decay


def solve_x2(gm: GluedManifold, s: np.ndarray) -> np.ndarray:
    """Bounded solution of D v = s on X2 with a half-infinite neck to the left."""
    sp_ = gm.space
    pos, neg = sp_.positive, sp_.negative
    f = np.zeros((len(gm.t), sp_.size))
    _march(gm, s, pos, np.zeros(len(pos)), True, f)
    _march(gm, s, neg, gm.cap2.reflection @ f[-1, pos], False, f)
    if gm.cap2.b_plus:
        f = _project_out(gm, f, _x2_harmonics(gm), side=2, bulk=gm.cap2.bulk_gram)
    return f


def solve_x1(gm: GluedManifold, s: np.ndarray) -> np.ndarray:
    """Bounded solution of D v = s on X1 with a half-infinite neck to the right,
    orthogonal to the L^2 harmonic forms of that elongation."""
    sp_ = gm.space
    pos, neg = sp_.positive, sp_.negative
    f = np.zeros((len(gm.t), sp_.size))
    _march(gm, s, neg, np.zeros(len(neg)), False, f)
    _march(gm, s, pos, gm.cap1.reflection @ f[0, neg], True, f)
    if gm.cap1.b_plus:
        f = _project_out(gm, f, [harmonic_on_x1(gm, e) for e in np.eye(gm.cap1.b_plus)], side=1,
                         bulk=gm.cap1.bulk_gram)
    return f


def _x2_harmonics(gm: GluedManifold):
    sp_ = gm.space
    neg = sp_.negative
    out = []
    for e in np.eye(gm.cap2.b_plus):
        f = np.zeros((len(gm.t), sp_.size))
        f[:, neg] = (gm.cap2.harmonic @ e)[None, :] * np.exp(-sp_.lam[neg][None, :] * (gm.t - gm.t[-1])[:, None])
        out.append(f)
    return out


def _elongated_inner(gm: GluedManifold, f: np.ndarray, g: np.ndarray, side: int) -> float:
    """Inner product on the grid plus the analytic tail of the half-infinite neck."""
    lam = np.abs(gm.space.lam)
    val = 2.0 * np.einsum("ik,ij,jk->", f, gm._m0, g)
    end = -1 if side == 1 else 0
    val += 2.0 * np.sum(f[end] * g[end] / (2 * lam))
    return float(val)


def _project_out(gm, f, basis, side, bulk):
    """Remove the harmonic span; forms solved on the neck have no cap-interior overlap."""
    G = np.array([[_elongated_inner(gm, a, b, side) for b in basis] for a in basis]) + bulk
    rhs = np.array([_elongated_inner(gm, a, f, side) for a in basis])
    c = np.linalg.solve(G, rhs)
    return f - sum(ci * b for ci, b in zip(c, basis))


# ------------------------------------------------------------------ iteration

@dataclass
class IterationTrace:
    steps: list = field(default_factory=list)        # (step, side, step_norm, cum_residual)
    u1_norm: float = 0.0
    dist_u1: float = 0.0                             # ||u - u1||
    dist_u12: float = 0.0                            # ||u - u1 - u2||
    residual: float = 0.0
    support_ok: bool = True
    telescoping: float = 0.0
    contraction: list = field(default_factory=list)  # C_i = ||u_i|| e^{2T} / ||u_{i-1}||

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "side", "step_norm", "cum_residual"])
            for s in self.steps:
                w.writerow([s[0], s[1], f"{s[2]:.12e}", f"{s[3]:.12e}"])


def cutoff_first(gm: GluedManifold, psi: np.ndarray) -> np.ndarray:
    return gm.rho1[:, None] * psi


def iterate(gm: GluedManifold, psi: np.ndarray, max_steps: int = MAX_STEPS, tol: float = TERMINATION_TOL,
            min_steps: int = 1):
    """u = sum u^(i): u1 = rho1 psi, then alternate bounded solves on X2 and X1.

    Step i >= 2 solves D v = -(residual of the partial sum), which lives on
    one cuff, and keeps u^(i) = rho v with rho the cutoff of that side.
    ``psi`` is either a neck profile or the coefficient vector of an X1
    harmonic form; in the latter case ||u^(1)|| includes the cap interior.
    Stops once a step falls below tol * ||u^(1)|| and at least
    ``min_steps`` steps were taken.  Returns (u, parts, trace).
    """
    allowed = np.concatenate([gm.regions["P1"].cells[1], gm.regions["P2"].cells[1]])
    bulk = 0.0
    psi = np.asarray(psi, float)
    if psi.ndim == 1:
        bulk = float(psi @ gm.cap1.bulk_gram @ psi)
        psi = harmonic_on_x1(gm, psi)
    parts = [cutoff_first(gm, psi)]
    trace = IterationTrace(u1_norm=float(np.sqrt(gm.norm(parts[0]) ** 2 + bulk)))
    cum = gm.cutoff_residual(gm.rho1, psi, None)
    trace.steps.append((1, "X1", trace.u1_norm, gm.residual_norm(cum)))
    ref = trace.u1_norm
    tele = 0.0
    converged = ref == 0.0
    for i in range(2, max_steps + 1):
        if converged:
            break
        if i % 2 == 0:
            v, rho, side = solve_x2(gm, -cum), gm.rho2, "X2"
        else:
            v, rho, side = solve_x1(gm, -cum), gm.rho1, "X1"
        u = rho[:, None] * v
        r = gm.cutoff_residual(rho, v, -cum)
        # D u^(i) cancels the previous residual on the cuff where rho = 1
        cuff = gm.regions["P2" if side == "X2" else "P1"].cells[1]
        prev = np.abs(cum[cuff]).max()
        if prev > 0:
            tele = max(tele, np.abs(r[cuff] + cum[cuff]).max() / prev)
        cum = cum + r
        if not np.all(np.isin(gm.edge_support(r), allowed)):
            trace.support_ok = False
        parts.append(u)
        nu = gm.norm(u)
        trace.steps.append((i, side, nu, gm.residual_norm(cum)))
        prev_norm = trace.steps[-2][2]
        trace.contraction.append(nu * np.exp(2 * gm.T) / prev_norm if prev_norm > 0 else 0.0)
        if nu < tol * ref and i >= min_steps:
            converged = True
    if not converged:
        raise ConvergenceError(f"no contraction after {max_steps} steps at T = {gm.T}", trace)
    total = sum(parts)
    trace.dist_u1 = gm.norm(total - parts[0])
    trace.dist_u12 = gm.norm(total - parts[0] - parts[1]) if len(parts) > 1 else 0.0
    trace.residual = gm.residual_norm(gm.residual(total))
    trace.telescoping = float(tele)
    return total, parts, trace


def second_term_mode2(gm: GluedManifold, psi: np.ndarray):
    """u^(2) driven by the lowest mode of psi alone, and the norm of the rest of u^(2)."""
    low = gm.space.lowest()
    psi = np.asarray(psi, float)
    if psi.ndim == 1:
        psi = harmonic_on_x1(gm, psi)
    r = gm.cutoff_residual(gm.rho1, psi, None)
    r_low = np.where(low[None, :], r, 0.0)
    u2 = gm.rho2[:, None] * solve_x2(gm, -r)
    u2_low = gm.rho2[:, None] * solve_x2(gm, -r_low)
    return u2_low, gm.norm(u2 - u2_low)


def period(gm: GluedManifold, u: np.ndarray) -> float:
    """Integral over the X2 cap's marked cycle of the form entering it."""
    if gm.cap2.period is None:
        raise StructuralError(f"cap {gm.cap2.name!r} carries no marked cycle")
    return float(gm.cap2.period @ u[-1, gm.space.positive])


# ------------------------------------------------------------------ fits

@dataclass
class Fit:
    quantity: str
    slope: float
    intercept: float
    r2: float

    def as_dict(self):
        return {"quantity": self.quantity, "slope": self.slope, "intercept": self.intercept, "r2": self.r2}


def loglinear_fit(quantity: str, x, y) -> Fit:
    x = np.asarray(x, float)
    ly = np.log(np.abs(np.asarray(y, float)))
    A = np.column_stack([x, np.ones_like(x)])
    sol, *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ sol
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum((ly - pred) ** 2) / ss if ss > 0 else 1.0
    return Fit(quantity, float(sol[0]), float(sol[1]), float(r2))


def write_fit_json(fits, path) -> None:
    with open(path, "w") as fh:
        json.dump([f.as_dict() for f in fits], fh, indent=2, sort_keys=True)
        fh.write("\n")
