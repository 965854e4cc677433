"""Oriented cell complexes in dimensions up to 4.

Every complex is stored as a list of signed boundary matrices; the
coboundary ``d_k`` is the transpose of ``boundary[k + 1]``.  Four
constructions are provided: a refined simplicial 3-sphere, the prism
product of a closed 3-complex with an interval, the periodic cubical
4-torus and a fiber-collapse model of the disc bundle of degree -1 over
the 2-sphere (the neighbourhood of an exceptional curve).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class StructuralError(ValueError):
    """Raised for inconsistent combinatorial input."""


class ResourceError(MemoryError):
    """Raised when a requested complex would exceed the memory budget."""


# cells of S^3 at refinement level L is 16 * 8**L tetrahedra
MAX_SPHERE_LEVEL = 4


@dataclass(frozen=True)
class Region:
    name: str
    cells: dict  # dim -> sorted int array

    def __post_init__(self):
        for k, idx in self.cells.items():
            object.__setattr__(self, "cells", dict(self.cells))
            self.cells[k] = np.unique(np.asarray(idx, dtype=np.int64))


@dataclass
class CellComplex:
    """Oriented cell complex with signed incidence matrices.

    ``boundary[k]`` maps k-chains to (k-1)-chains (shape ``(n_{k-1}, n_k)``);
    ``boundary[0]`` is an empty placeholder.
    """

    boundary: list
    kind: str
    vertices: np.ndarray | None = None
    cells: dict = field(default_factory=dict)
    volumes: dict = field(default_factory=dict)
    regions: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.boundary) - 1

    @property
    def counts(self) -> tuple:
        n0 = self.boundary[1].shape[0] if self.dim >= 1 else len(self.vertices)
        return (n0,) + tuple(b.shape[1] for b in self.boundary[1:])

    def n(self, k: int) -> int:
        return self.counts[k]

    def d(self, k: int) -> sp.csr_matrix:
        """Coboundary on k-cochains."""
        if k < 0 or k >= self.dim:
            return sp.csr_matrix((self.n(k + 1) if 0 <= k + 1 <= self.dim else 0,
                                  self.n(k) if 0 <= k <= self.dim else 0))
        return self.boundary[k + 1].T.tocsr()

    def euler_characteristic(self) -> int:
        return int(sum((-1) ** k * c for k, c in enumerate(self.counts)))

    def chain_defect(self) -> int:
        """Largest |entry| of boundary[k] @ boundary[k+1] over all k."""
        worst = 0
        for k in range(1, self.dim):
            prod = (self.boundary[k] @ self.boundary[k + 1]).tocoo()
            if prod.nnz:
                worst = max(worst, int(np.abs(prod.data).max()))
        return worst

    def betti(self, max_dense: int = 6000) -> tuple:
        """Real Betti numbers from dense ranks; small complexes only."""
        if max(self.counts) > max_dense:
            raise ResourceError("complex too large for dense rank computation")
        ranks = [0]
        for k in range(1, self.dim + 1):
            b = self.boundary[k].toarray().astype(float)
            ranks.append(int(np.linalg.matrix_rank(b)) if b.size else 0)
        ranks.append(0)
        return tuple(self.counts[k] - ranks[k] - ranks[k + 1] for k in range(self.dim + 1))

    def region(self, name: str) -> Region:
        try:
            return self.regions[name]
        except KeyError:
            raise StructuralError(f"unknown region {name!r}") from None

    def check_partition(self, names, k: int) -> bool:
        """True when the named regions partition the k-cells."""
        seen = np.zeros(self.n(k), dtype=int)
        for name in names:
            seen[self.region(name).cells.get(k, [])] += 1
        return bool(np.all(seen == 1))

    def checksum(self) -> str:
        import hashlib
        h = hashlib.sha256()
        for b in self.boundary[1:]:
            coo = b.tocoo()
            order = np.lexsort((coo.row, coo.col))
            h.update(np.asarray(coo.shape, dtype=np.int64).tobytes())
            for arr in (coo.row[order], coo.col[order], coo.data[order]):
                h.update(np.ascontiguousarray(arr, dtype=np.int64).tobytes())
        return h.hexdigest()[:16]


# ---------------------------------------------------------------- simplicial

def _faces_of(simplices: np.ndarray, k: int) -> np.ndarray:
    """All sorted k-faces (k+1 vertices) of sorted simplices, unique."""
    m = simplices.shape[1]
    combos = list(itertools.combinations(range(m), k + 1))
    faces = np.concatenate([simplices[:, list(c)] for c in combos], axis=0)
    return np.unique(faces, axis=0)


def _simplex_boundary(hi: np.ndarray, lo: np.ndarray) -> sp.csr_matrix:
    """Boundary matrix between sorted simplex lists (standard alternating signs)."""
    k = hi.shape[1]
    index = {tuple(f): i for i, f in enumerate(map(tuple, lo))}
    rows, cols, vals = [], [], []
    for i in range(k):
        sub = np.delete(hi, i, axis=1)
        rows.append(np.fromiter((index[tuple(f)] for f in sub), dtype=np.int64, count=len(sub)))
        cols.append(np.arange(len(hi)))
        vals.append(np.full(len(hi), (-1) ** i, dtype=np.int64))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(len(lo), len(hi)))


def simplicial_complex(top: np.ndarray, vertices: np.ndarray, orientation: np.ndarray | None = None,
                       kind: str = "simplicial") -> CellComplex:
    """Build a simplicial complex from its top simplices.

    Cells are stored with sorted vertex tuples; ``orientation`` gives the
    sign of each top simplex relative to its sorted order and is folded into
    the top boundary matrix so the sum of top cells is a cycle when closed.
    """
    top = np.sort(np.asarray(top, dtype=np.int64), axis=1)
    n = top.shape[1] - 1
    cells = {n: top}
    for k in range(n - 1, -1, -1):
        cells[k] = _faces_of(top, k)
    boundary = [sp.csr_matrix((0, len(cells[0])), dtype=np.int64)]
    for k in range(1, n + 1):
        boundary.append(_simplex_boundary(cells[k], cells[k - 1]))
    if orientation is not None:
        boundary[n] = (boundary[n] @ sp.diags(np.asarray(orientation, dtype=np.int64))).tocsr()
    cx = CellComplex(boundary=boundary, kind=kind, vertices=np.asarray(vertices, float), cells=cells)
    cx.meta["top_orientation"] = (np.ones(len(top), dtype=np.int64) if orientation is None
                                  else np.asarray(orientation, dtype=np.int64))
    cx.volumes = simplex_volumes(cx)
    return cx


def simplex_volumes(cx: CellComplex) -> dict:
    vols = {0: np.ones(cx.n(0))}
    for k in range(1, cx.dim + 1):
        s = cx.cells[k]
        e = cx.vertices[s[:, 1:]] - cx.vertices[s[:, :1]]
        g = np.einsum("nia,nja->nij", e, e)
        vols[k] = np.sqrt(np.abs(np.linalg.det(g))) / math.factorial(k)
    return vols


def _cross_polytope_boundary():
    verts = np.concatenate([np.eye(4), -np.eye(4)])
    tets = []
    for signs in itertools.product((0, 1), repeat=4):
        tets.append([i + 4 * s for i, s in enumerate(signs)])
    return verts, np.array(tets)


def _refine_tets(verts: np.ndarray, tets: np.ndarray):
    """Midpoint subdivision 1 -> 8; octahedra split along their shortest diagonal."""
    edges = _faces_of(np.sort(tets, axis=1), 1)
    mid_index = {tuple(e): len(verts) + i for i, e in enumerate(map(tuple, edges))}
    new_verts = np.concatenate([verts, 0.5 * (verts[edges[:, 0]] + verts[edges[:, 1]])])
    new_verts /= np.linalg.norm(new_verts, axis=1, keepdims=True)

    def m(a, b):
        return mid_index[(a, b) if a < b else (b, a)]

    out = []
    for t in tets:
        a, b, c, d = t
        ab, ac, ad, bc, bd, cd = m(a, b), m(a, c), m(a, d), m(b, c), m(b, d), m(c, d)
        out += [[a, ab, ac, ad], [b, ab, bc, bd], [c, ac, bc, cd], [d, ad, bd, cd]]
        diags = [(ab, cd), (ac, bd), (ad, bc)]
        lengths = [np.linalg.norm(new_verts[p] - new_verts[q]) for p, q in diags]
        p, q = diags[int(np.argmin(lengths))]
        ring = [x for x in (ab, ac, ad, bc, bd, cd) if x not in (p, q)]
        # the four ring vertices form a cycle around the diagonal p-q
        cyc = [ring[0]]
        rest = ring[1:]
        adjacent = {frozenset(e) for e in ([ab, ac], [ab, ad], [ac, ad], [ab, bc], [ab, bd], [bc, bd],
                                           [ac, bc], [ac, cd], [bc, cd], [ad, bd], [ad, cd], [bd, cd])}
        while rest:
            nxt = next(x for x in rest if frozenset((cyc[-1], x)) in adjacent)
            cyc.append(nxt)
            rest.remove(nxt)
        for i in range(4):
            out.append([p, q, cyc[i], cyc[(i + 1) % 4]])
    return new_verts, np.array(out)


def _orient_by_det(verts: np.ndarray, tets: np.ndarray) -> np.ndarray:
    sorted_t = np.sort(tets, axis=1)
    det = np.linalg.det(verts[sorted_t])
    return np.where(det > 0, 1, -1).astype(np.int64)


def build_sphere3(refinement_level: int) -> CellComplex:
    """Simplicial S^3: boundary of the 4-dim cross-polytope, refined and projected.

    Tetrahedra are oriented as the boundary of the unit ball in R^4.
    """
    if refinement_level < 0:
        raise ValueError("refinement_level must be >= 0")
    if refinement_level > MAX_SPHERE_LEVEL:
        raise ResourceError(f"refinement level {refinement_level} exceeds budget {MAX_SPHERE_LEVEL}")
    verts, tets = _cross_polytope_boundary()
    for _ in range(refinement_level):
        verts, tets = _refine_tets(verts, tets)
    orient = _orient_by_det(verts, tets)
    cx = simplicial_complex(tets, verts, orient, kind="sphere3")
    cx.meta["refinement_level"] = refinement_level
    return cx


# ------------------------------------------------------------------- product

def build_product(base: CellComplex, layers: int, layer_length: float) -> CellComplex:
    """Prism complex [0, T] x base with T = layers * layer_length.

    k-cells come in two blocks: (base k-cell) x (interval node), indexed
    ``node * n_k + cell``, then (base (k-1)-cell) x (interval edge), indexed
    ``n_k * (layers + 1) + edge * n_{k-1} + cell``.
    """
    if layers < 2:
        raise ValueError("layers must be >= 2")
    top = base.dim
    fundamental = np.asarray(base.boundary[top].sum(axis=1)).ravel() if top >= 1 else None
    if fundamental is None or np.any(fundamental != 0):
        raise StructuralError("base complex is not closed")
    nodes, edges = layers + 1, layers
    dI = sp.csr_matrix((np.r_[-np.ones(edges), np.ones(edges)],
                        (np.r_[np.arange(edges), np.arange(1, edges + 1)], np.r_[np.arange(edges), np.arange(edges)])),
                       shape=(nodes, edges), dtype=np.int64)
    nb = base.counts
    boundary = [sp.csr_matrix((0, nb[0] * nodes), dtype=np.int64)]
    for m in range(1, top + 2):
        n_m = nb[m] if m <= top else 0
        n_m1 = nb[m - 1]
        n_m2 = nb[m - 2] if m >= 2 else 0
        blocks = [[None, None], [None, None]]
        # A_m -> A_{m-1}
        bA = base.boundary[m] if m <= top else sp.csr_matrix((n_m1, 0), dtype=np.int64)
        blocks[0][0] = sp.kron(sp.identity(nodes, dtype=np.int64), bA)
        # B_m -> A_{m-1}: (-1)^{m-1} tau x de
        blocks[0][1] = (-1) ** (m - 1) * sp.kron(dI, sp.identity(n_m1, dtype=np.int64))
        # A_m -> B_{m-1}: zero
        blocks[1][0] = sp.csr_matrix((edges * n_m2, nodes * n_m), dtype=np.int64)
        bB = base.boundary[m - 1] if m >= 2 else sp.csr_matrix((0, n_m1), dtype=np.int64)
        blocks[1][1] = sp.kron(sp.identity(edges, dtype=np.int64), bB)
        boundary.append(sp.bmat(blocks, format="csr").astype(np.int64))
    length = layers * layer_length
    t_nodes = np.arange(nodes) * layer_length
    cx = CellComplex(boundary=boundary, kind="prism")
    cx.meta.update(base=base, layers=layers, layer_length=layer_length, T=length, t_nodes=t_nodes)
    per_unit = int(round(1.0 / layer_length))
    cx.regions["Q1"] = prism_slab(cx, 0, min(per_unit, layers), "Q1")
    cx.regions["Q2"] = prism_slab(cx, max(layers - per_unit, 0), layers, "Q2")
    # volumes: base volume times interval measure
    if base.volumes:
        for k in range(top + 2):
            va = np.tile(base.volumes[k], nodes) if k <= top else np.zeros(0)
            vb = np.tile(base.volumes[k - 1], edges) * layer_length if k >= 1 else np.zeros(0)
            cx.volumes[k] = np.concatenate([va, vb])
    return cx


def prism_slab(cx: CellComplex, first_edge: int, last_edge: int, name: str = "slab") -> Region:
    """Cells of the prism lying in t-layers [first_edge, last_edge)."""
    base = cx.meta["base"]
    nb = base.counts
    nodes = cx.meta["layers"] + 1
    cells = {}
    for k in range(base.dim + 2):
        idx = []
        if k <= base.dim:
            for j in range(first_edge, last_edge + 1):
                idx.append(j * nb[k] + np.arange(nb[k]))
        if k >= 1:
            off = nodes * nb[k] if k <= base.dim else 0
            for j in range(first_edge, last_edge):
                idx.append(off + j * nb[k - 1] + np.arange(nb[k - 1]))
        cells[k] = np.concatenate(idx) if idx else np.zeros(0, dtype=np.int64)
    return Region(name, cells)


def prism_translate(cx: CellComplex, k: int, shift: int) -> sp.csr_matrix:
    """Permutation-like operator moving k-cochains up by ``shift`` layers (zero fill)."""
    base = cx.meta["base"]
    nb = base.counts
    layers = cx.meta["layers"]
    nodes, edges = layers + 1, layers
    sA = sp.eye(nodes, k=-shift, dtype=float)
    sB = sp.eye(edges, k=-shift, dtype=float)
    blocks = []
    if k <= base.dim:
        blocks.append(sp.kron(sA, sp.identity(nb[k])))
    if k >= 1:
        blocks.append(sp.kron(sB, sp.identity(nb[k - 1])))
    return sp.block_diag(blocks, format="csr")


# ------------------------------------------------------------------- torus

def _subsets(k: int):
    return [tuple(c) for c in itertools.combinations(range(4), k)]


def build_torus4(n: int) -> CellComplex:
    """Periodic cubical complex for (R / nZ)^4 with unit cubes.

    The k-cell (x, I) with I a sorted direction subset has index
    ``subsets(k).index(I) * n**4 + ravel(x)``.
    """
    if n < 3:
        raise ValueError("n must be >= 3")
    N = n ** 4
    grid = np.indices((n,) * 4).reshape(4, -1).T

    def shifted(a):
        g = grid.copy()
        g[:, a] = (g[:, a] + 1) % n
        return np.ravel_multi_index(g.T, (n,) * 4)

    shift = [shifted(a) for a in range(4)]
    boundary = [sp.csr_matrix((0, N), dtype=np.int64)]
    for k in range(1, 5):
        hi, lo = _subsets(k), _subsets(k - 1)
        rows, cols, vals = [], [], []
        for ci, I in enumerate(hi):
            col = ci * N + np.arange(N)
            for pos, a in enumerate(I):
                J = tuple(x for x in I if x != a)
                cj = lo.index(J)
                sgn = (-1) ** pos
                rows += [cj * N + shift[a], cj * N + np.arange(N)]
                cols += [col, col]
                vals += [np.full(N, sgn), np.full(N, -sgn)]
        boundary.append(sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                      shape=(len(lo) * N, len(hi) * N), dtype=np.int64))
    cx = CellComplex(boundary=boundary, kind="torus4")
    cx.meta.update(n=n, grid=grid, shift=shift)
    cx.volumes = {k: np.ones(cx.n(k)) for k in range(5)}
    return cx


def torus_cell_index(n: int, x, I) -> int:
    k = len(I)
    return _subsets(k).index(tuple(sorted(I))) * n ** 4 + int(np.ravel_multi_index(tuple(np.mod(x, n)), (n,) * 4))


# --------------------------------------------------------------- blowup cap

def _cube_sphere(res: int):
    """Boundary of the cube [0, res]^3 as a cubical 2-complex, outward oriented."""
    pts = {}
    R = res
    for x in itertools.product(range(R + 1), repeat=3):
        if min(x) == 0 or max(x) == R:
            pts[x] = len(pts)
    edges, faces, fsign = {}, [], []
    for x in pts:
        for a in range(3):
            y = list(x)
            y[a] += 1
            y = tuple(y)
            if y in pts:
                # the edge lies on the surface iff some other coordinate is extremal
                others = [x[b] for b in range(3) if b != a]
                if min(others) == 0 or max(others) == R:
                    edges[(x, a)] = len(edges)
    for x in pts:
        for a, b in ((0, 1), (0, 2), (1, 2)):
            c = 3 - a - b
            if x[c] not in (0, R) or x[a] >= R or x[b] >= R:
                continue
            normal = -1 if x[c] == 0 else 1
            # orientation e_a ^ e_b vs outward normal: det(n e_c, e_a, e_b)
            perm_sign = {(0, 1, 2): 1, (1, 2, 0): 1, (2, 0, 1): 1}.get((c, a, b), -1)
            faces.append((x, a, b))
            fsign.append(normal * perm_sign)
    verts = np.array(list(pts.keys()), float)
    vpos = (verts - R / 2.0)
    vpos /= np.linalg.norm(vpos, axis=1, keepdims=True)
    d1 = sp.lil_matrix((len(pts), len(edges)), dtype=np.int64)
    for (x, a), i in edges.items():
        y = list(x)
        y[a] += 1
        d1[pts[x], i] -= 1
        d1[pts[tuple(y)], i] += 1
    d2 = sp.lil_matrix((len(edges), len(faces)), dtype=np.int64)
    for j, ((x, a, b), s) in enumerate(zip(faces, fsign)):
        xa = list(x); xa[a] += 1
        xb = list(x); xb[b] += 1
        d2[edges[(x, a)], j] += s
        d2[edges[(tuple(xa), b)], j] += s
        d2[edges[(tuple(xb), a)], j] -= s
        d2[edges[(x, b)], j] -= s
    # spherical areas of the projected quads
    areas = []
    for (x, a, b) in faces:
        corners = []
        for da, db in ((0, 0), (1, 0), (1, 1), (0, 1)):
            y = list(x); y[a] += da; y[b] += db
            corners.append(vpos[pts[tuple(y)]])
        areas.append(_spherical_triangle_area(corners[0], corners[1], corners[2])
                     + _spherical_triangle_area(corners[0], corners[2], corners[3]))
    first_vertex = [pts[f[0]] for f in faces]
    return vpos, d1.tocsr(), d2.tocsr(), np.array(areas), first_vertex


def _spherical_triangle_area(a, b, c) -> float:
    num = abs(np.dot(a, np.cross(b, c)))
    den = 1 + np.dot(a, b) + np.dot(b, c) + np.dot(c, a)
    return 2.0 * np.arctan2(num, den)


def _fiber_disc(m: int, rings: int):
    """Polar cell structure of the fibre disc: centre, ``rings`` rings of m vertices."""
    nv = 1 + rings * m
    vid = lambda k, j: 0 if k == 0 else 1 + (k - 1) * m + (j % m)
    ring_e = lambda k, j: (k - 1) * m + (j % m)               # r_{k,j} -> r_{k,j+1}
    rad_e = lambda k, j: rings * m + (k - 1) * m + (j % m)     # r_{k-1,j} -> r_{k,j}
    ne = 2 * rings * m
    face = lambda k, j: (k - 1) * m + (j % m)
    nf = rings * m
    d1 = sp.lil_matrix((nv, ne), dtype=np.int64)
    for k in range(1, rings + 1):
        for j in range(m):
            d1[vid(k, j), ring_e(k, j)] -= 1
            d1[vid(k, j + 1), ring_e(k, j)] += 1
            if k == 1:
                d1[0, rad_e(k, j)] -= 1
            else:
                d1[vid(k - 1, j), rad_e(k, j)] -= 1
            d1[vid(k, j), rad_e(k, j)] += 1
    d2 = sp.lil_matrix((ne, nf), dtype=np.int64)
    for k in range(1, rings + 1):
        for j in range(m):
            f = face(k, j)
            d2[rad_e(k, j), f] += 1
            d2[ring_e(k, j), f] += 1
            d2[rad_e(k, j + 1), f] -= 1
            if k > 1:
                d2[ring_e(k - 1, j), f] -= 1
    # full-turn sweep R: C_q -> C_{q+1}
    R0 = sp.lil_matrix((ne, nv), dtype=np.int64)
    for k in range(1, rings + 1):
        for j in range(m):
            for jj in range(m):
                R0[ring_e(k, jj), vid(k, j)] = 1
    R1 = sp.lil_matrix((nf, ne), dtype=np.int64)
    for k in range(1, rings + 1):
        for j in range(m):
            for jj in range(m):
                R1[face(k, jj), rad_e(k, j)] = -1
    R2 = sp.csr_matrix((0, nf), dtype=np.int64)
    outer = {0: np.array([vid(rings, j) for j in range(m)]),
             1: np.array([ring_e(rings, j) for j in range(m)]),
             2: np.zeros(0, dtype=np.int64)}
    radii = np.r_[0.0, np.repeat(np.arange(1, rings + 1) / rings, m)]
    return [d1.tocsr(), d2.tocsr()], [R0.tocsr(), R1.tocsr(), R2], (nv, ne, nf), outer, radii


def build_blowup_cap(base_resolution: int, fiber_segments: int, radial_layers: int,
                     twist: int = 1) -> CellComplex:
    """Disc bundle over a cube-sphere S^2 with one clutching twist.

    Cells are products (base cell) x (fibre-disc cell).  The bundle is
    trivial over every base face except one, over which the fibre is glued
    back after one full turn in the direction ``twist``.  The centre section
    is the marked 2-cycle ``C`` and the outer rings form the boundary S^3.
    The self-intersection of C is not imposed; it is computed by
    :func:`relative_self_intersection` and equals ``-twist``.
    """
    if twist not in (-1, 1):
        raise StructuralError("twist must be +1 or -1")
    if fiber_segments < 3:
        raise StructuralError("fiber_segments must be >= 3")
    if base_resolution < 1 or radial_layers < 1:
        raise StructuralError("base_resolution and radial_layers must be >= 1")
    vpos, bd1, bd2, areas, first_vertex = _cube_sphere(base_resolution)
    fd, R, fn, outer, radii = _fiber_disc(fiber_segments, radial_layers)
    bn = (bd1.shape[0], bd1.shape[1], bd2.shape[1])
    bbd = [None, bd1, bd2]
    fbd = [None, fd[0], fd[1]]
    twisted_face = 0
    v0 = first_vertex[twisted_face]

    # cells of total dimension m: blocks (p, q) with p + q = m
    blocks = {m: [(p, m - p) for p in range(3) if 0 <= m - p <= 2] for m in range(5)}
    offsets = {}
    for m in range(5):
        off = 0
        for (p, q) in blocks[m]:
            offsets[(p, q)] = off
            off += bn[p] * fn[q]
        offsets[m] = off

    def idx(p, q, b, f):
        return offsets[(p, q)] + b * fn[q] + f

    boundary = [sp.csr_matrix((0, offsets[0]), dtype=np.int64)]
    for m in range(1, 5):
        rows, cols, vals = [], [], []
        for (p, q) in blocks[m]:
            B = np.arange(bn[p])
            F = np.arange(fn[q])
            bb, ff = np.meshgrid(B, F, indexing="ij")
            col = idx(p, q, bb.ravel(), ff.ravel())
            # d(base) x fibre
            if p >= 1:
                coo = bbd[p].tocoo()
                for r, c, v in zip(coo.row, coo.col, coo.data):
                    rows.append(idx(p - 1, q, r, F)); cols.append(idx(p, q, c, F)); vals.append(np.full(len(F), v))
            # (-1)^p base x d(fibre)
            if q >= 1:
                coo = fbd[q].tocoo()
                for r, c, v in zip(coo.row, coo.col, coo.data):
                    rows.append(idx(p, q - 1, B, r)); cols.append(idx(p, q, B, c))
                    vals.append(np.full(len(B), v * (-1) ** p))
            # twist over the designated base face
            if p == 2:
                coo = R[q].tocoo()
                for r, c, v in zip(coo.row, coo.col, coo.data):
                    rows.append(np.array([idx(0, q + 1, v0, r)])); cols.append(np.array([idx(2, q, twisted_face, c)]))
                    vals.append(np.array([twist * v]))
            del col
        rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
        cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
        vals = np.concatenate(vals) if vals else np.zeros(0, dtype=np.int64)
        boundary.append(sp.csr_matrix((vals, (rows, cols)), shape=(offsets[m - 1], offsets[m]), dtype=np.int64))

    cx = CellComplex(boundary=boundary, kind="blowup_cap")
    # orientation of base faces folded in: C = sum over faces of sign * (face x centre)
    face_orient = np.asarray(np.sign(np.ones(bn[2])), dtype=np.int64)
    C = np.zeros(offsets[2], dtype=np.int64)
    C[idx(2, 0, np.arange(bn[2]), 0)] = face_orient
    cx.meta.update(C=C, base_areas=areas, base_vertices=vpos, fiber_radii=radii, twist=twist,
                   base_counts=bn, fiber_counts=fn, offsets=offsets, index=idx, fiber_segments=fiber_segments,
                   radial_layers=radial_layers, base_resolution=base_resolution)
    # marked regions
    cx.regions["C"] = Region("C", {2: np.flatnonzero(C)})
    bdry = {}
    for m in range(4):
        sel = []
        for (p, q) in blocks[m]:
            if q <= 1:
                bb, ff = np.meshgrid(np.arange(bn[p]), outer[q], indexing="ij")
                sel.append(idx(p, q, bb.ravel(), ff.ravel()))
        bdry[m] = np.concatenate(sel) if sel else np.zeros(0, dtype=np.int64)
    cx.regions["boundary"] = Region("boundary", bdry)
    # fibre disc over the vertex v0 with all its 2-cells, outward (counterclockwise) oriented
    F = np.zeros(offsets[2], dtype=np.int64)
    F[idx(0, 2, v0, np.arange(fn[2]))] = 1
    cx.meta["fiber_disc"] = F
    # volumes: base measure times fibre measure
    base_meas = {0: np.ones(bn[0]), 1: np.full(bn[1], 1.0 / base_resolution), 2: areas}
    fr = radial_layers
    fib_meas = {0: np.ones(fn[0]), 1: np.full(fn[1], 1.0 / fr), 2: np.full(fn[2], np.pi / (fr * fiber_segments))}
    for m in range(5):
        cx.volumes[m] = np.concatenate([np.outer(base_meas[p], fib_meas[q]).ravel() for (p, q) in blocks[m]])
    return cx


def relative_self_intersection(cap: CellComplex) -> float:
    """Self-intersection of the marked cycle C from the relative class of C.

    Solves ``C = e * F + boundary(B) + (chain on the boundary S^3)`` for the
    coefficient ``e`` of the fibre disc F; since F meets C once positively,
    ``C . C = e``.
    """
    C = cap.meta["C"].astype(float)
    F = cap.meta["fiber_disc"].astype(float)
    b3 = cap.boundary[3].toarray().astype(float)
    bd = cap.region("boundary").cells[2]
    E = np.zeros((cap.n(2), len(bd)))
    E[bd, np.arange(len(bd))] = 1.0
    A = np.hstack([F[:, None], b3, E])
    sol, *_ = np.linalg.lstsq(A, C, rcond=None)
    resid = np.linalg.norm(A @ sol - C)
    if resid > 1e-8:
        raise StructuralError(f"C is not relatively homologous to a multiple of F (residual {resid:.2e})")
    return float(sol[0])


# ------------------------------------------------------------------ export

def export_ascii(cx: CellComplex, path) -> None:
    """Write one record per cell: dim, sorted vertex ids, sign, volume."""
    lines = [f"# hodge-neck mesh kind={cx.kind} dim={cx.dim}",
             "# counts " + " ".join(str(c) for c in cx.counts),
             "# columns: dim vertex_ids... orientation volume"]
    closure = {0: [np.array([i]) for i in range(cx.n(0))]}
    for k in range(1, cx.dim + 1):
        b = cx.boundary[k].tocsc()
        closure[k] = []
        for j in range(cx.n(k)):
            rows = b.indices[b.indptr[j]:b.indptr[j + 1]]
            vs = np.unique(np.concatenate([closure[k - 1][r] for r in rows])) if len(rows) else np.zeros(0, int)
            closure[k].append(vs)
    top_sign = cx.meta.get("top_orientation")
    for k in range(cx.dim + 1):
        vol = cx.volumes.get(k, np.ones(cx.n(k)))
        for j in range(cx.n(k)):
            sign = int(top_sign[j]) if (k == cx.dim and top_sign is not None) else 1
            ids = " ".join(str(int(v)) for v in closure[k][j])
            lines.append(f"{k} {ids} {sign:+d} {vol[j]:.12e}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
