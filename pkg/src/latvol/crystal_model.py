"""Atomistic/continuum geometry for an FCC crystal with a vacancy.

Coordinate conventions
----------------------
Sites live on Z^3 in *lattice coordinates* x (the basis-coefficient space
the bond-volume algorithm requires).  The physical position is A @ x with
A the column matrix of the FCC lattice vectors

    a1 = (0, 1, 1)/sqrt(2),  a2 = (1, 0, 1)/sqrt(2),  a3 = (1, 1, 0)/sqrt(2).

The integer map u(x) = sqrt(2) * A @ x = (x2+x3, x1+x3, x1+x2) measures
physical cube geometry exactly: |u(x)|_inf <= c describes the physical cube
of half-side c/sqrt(2).  Its inverse is x = Psi @ u / 2 with the integer
matrix Psi below.

Regions (all in u-units, paper geometry):

    free sites      |u|_inf <= 2N - 1        (minus the vacancy at 0)
    Dirichlet shell 2N - 1 < |u|_inf <= 2N - 1 + w   (positions frozen)
    atomistic core  |u|_inf <  2K            (sites here keep their DoF)
    continuum       2K < |u|_inf < 2N        (meshed; spans all remaining
                                              free sites)

The shell width w exceeds the largest |u(r)| over the neighbor set, so
every bond that can touch a mesh element has both endpoints on known
sites; that is exactly what makes the effective-volume correction formula
exact.

The mesh is built on the half-grid u' = u/2: a tensor-product graded grid
over the cube annulus [-K, K]^3 .. [-N, N]^3, unit cells near the
interface and cell sizes doubling outward, every box split into six
Freudenthal (Kuhn) tetrahedra sharing the global diagonal.  Mapping a
vertex u' to lattice coordinates x = Psi @ u' keeps everything on Z^3,
and face-to-face conformity survives the linear map.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

import numpy as np

from .bond_volume import len_tetra
from .lattice_geometry import TetFrame, _segment_chi_from_affine

__all__ = [
    "CrystalBasis",
    "FCC_BASIS",
    "neighbor_set",
    "canonical_directions",
    "Mesh",
    "build_annulus_mesh",
    "CoupledModel",
    "build_vacancy_problem",
    "free_site_count",
    "classify_bonds",
    "effective_volumes",
    "cauchy_born_volumes",
    "consistency_defects",
    "model_to_dict",
    "save_model",
    "load_model",
]

MODEL_FORMAT_VERSION = "latvol-model/1"

U_MAT = np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]], dtype=np.int64)
PSI_MAT = np.array([[-1, 1, 1], [1, -1, 1], [1, 1, -1]], dtype=np.int64)

KUHN_PERMS = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))


@dataclass(frozen=True)
class CrystalBasis:
    """Physical lattice vectors as columns of a 3x3 matrix."""

    a: np.ndarray

    def __post_init__(self):
        if abs(np.linalg.det(self.a)) < 1e-12:
            raise ValueError("lattice vectors must be linearly independent")

    def physical(self, x):
        return np.asarray(x, dtype=float) @ self.a.T


FCC_BASIS = CrystalBasis(U_MAT.astype(float) / math.sqrt(2.0))


def neighbor_set(basis: CrystalBasis, cutoff: float) -> np.ndarray:
    """All r in Z^3 \\ {0} with |A r| <= cutoff, as an (n, 3) int array."""
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    inv = np.linalg.inv(basis.a)
    m = int(np.ceil(cutoff * np.abs(inv).sum(axis=1).max())) + 1
    rng = np.arange(-m, m + 1)
    grid = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
    grid = grid[np.any(grid != 0, axis=1)]
    d2 = (basis.physical(grid) ** 2).sum(axis=1)
    keep = grid[d2 <= cutoff * cutoff + 1e-12]
    order = np.lexsort((keep[:, 2], keep[:, 1], keep[:, 0]))
    return keep[order].astype(np.int64)


def canonical_directions(directions: np.ndarray) -> np.ndarray:
    """One representative per +-r pair: the lexicographically positive one."""
    out = []
    seen = set()
    for r in directions:
        t = tuple(int(c) for c in r)
        if t in seen or tuple(-c for c in t) in seen:
            continue
        if t < tuple(-c for c in t):
            t = tuple(-c for c in t)
        seen.add(t)
        out.append(t)
    out.sort()
    return np.array(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# graded tensor Kuhn mesh on the cube annulus, in u' = u/2 coordinates
# ---------------------------------------------------------------------------

@dataclass
class Mesh:
    """Conforming tetrahedral mesh of the continuum annulus.

    Vertices are stored both on the meshing half-grid (u') and in lattice
    coordinates x = Psi @ u'; all of them are crystal sites.
    """

    k_half: int
    n_half: int
    grading: list[int]
    verts_uprime: np.ndarray   # (nv, 3) int
    verts_x: np.ndarray        # (nv, 3) int
    tets: np.ndarray           # (nt, 4) int32, indices into the vertex arrays
    box_first_tet: dict        # (ix, iy, iz) cell -> index of its first tet

    @property
    def n_vertices(self) -> int:
        return len(self.verts_uprime)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    def tet_x_vertices(self, t: int) -> np.ndarray:
        return self.verts_x[self.tets[t]]

    # -- point location -----------------------------------------------------

    def _axis_cells(self, twice_val: int) -> list[int]:
        """Grid cells whose closed 1D interval contains twice_val/2."""
        g = self.grading
        cells = []
        for i in range(len(g) - 1):
            if 2 * g[i] <= twice_val <= 2 * g[i + 1]:
                cells.append(i)
            elif 2 * g[i] > twice_val:
                break
        return cells

    def locate(self, u) -> tuple | None:
        """Containing cell of the point u'/1 = u/2, or None if outside."""
        axes = [self._axis_cells(int(c)) for c in u]
        if any(not a for a in axes):
            return None
        for cell in product(*axes):
            if cell in self.box_first_tet:
                return cell
        return None

    def interpolation(self, u) -> tuple[list[int], list[Fraction]]:
        """Exact P1 interpolation of the site with u-coordinates ``u``.

        Returns parallel lists of vertex indices and rational weights.
        """
        cell = self.locate(u)
        if cell is None:
            raise ValueError(f"site u={tuple(u)} is outside the meshed region")
        g = self.grading
        lo = [g[c] for c in cell]
        dl = [g[c + 1] - g[c] for c in cell]
        t = [Fraction(int(u[i]) - 2 * lo[i], 2 * dl[i]) for i in range(3)]
        order = sorted(range(3), key=lambda i: (-t[i], i))
        perm = tuple(order)
        tet_id = self.box_first_tet[cell] + KUHN_PERMS.index(perm)
        ts = [t[i] for i in order]
        weights = [1 - ts[0], ts[0] - ts[1], ts[1] - ts[2], ts[2]]
        verts = [int(v) for v in self.tets[tet_id]]
        out_v, out_w = [], []
        for v, w in zip(verts, weights):
            if w != 0:
                out_v.append(v)
                out_w.append(w)
        return out_v, out_w


def _grading(k_half: int, n_half: int, fine_width: int = 2) -> list[int]:
    pts = list(range(0, min(k_half + fine_width, n_half) + 1))
    step = 1
    while pts[-1] < n_half:
        step *= 2
        pts.append(min(pts[-1] + step, n_half))
    return [-p for p in reversed(pts[1:])] + pts


def build_annulus_mesh(k_half: int, n_half: int) -> Mesh:
    """Graded Kuhn mesh of the region between the u'-cubes of radii K and N."""
    if not 1 <= k_half < n_half:
        raise ValueError("need 1 <= K < N for the annulus mesh")
    g = _grading(k_half, n_half)
    ncell = len(g) - 1
    vert_index: dict[tuple, int] = {}
    verts: list[tuple] = []

    def vid(p: tuple) -> int:
        i = vert_index.get(p)
        if i is None:
            i = len(verts)
            vert_index[p] = i
            verts.append(p)
        return i

    tets = []
    box_first_tet: dict[tuple, int] = {}
    for cell in product(range(ncell), repeat=3):
        lo = [g[c] for c in cell]
        hi = [g[c + 1] for c in cell]
        if all(-k_half <= lo[i] and hi[i] <= k_half for i in range(3)):
            continue  # inside the atomistic core
        box_first_tet[cell] = len(tets)
        for perm in KUHN_PERMS:
            chain = [tuple(lo)]
            p = list(lo)
            for ax in perm:
                p = p.copy()
                p[ax] = hi[ax]
                chain.append(tuple(p))
            tets.append([vid(q) for q in chain])
    verts_uprime = np.array(verts, dtype=np.int64)
    verts_x = verts_uprime @ PSI_MAT.T
    return Mesh(
        k_half=k_half,
        n_half=n_half,
        grading=g,
        verts_uprime=verts_uprime,
        verts_x=verts_x,
        tets=np.array(tets, dtype=np.int32),
        box_first_tet=box_first_tet,
    )


# ---------------------------------------------------------------------------
# the coupled model: sites, bonds, mesh, effective volumes
# ---------------------------------------------------------------------------

SITE_ATOM = 0       # free atomistic site (carries its own DoF)
SITE_DIRICHLET = 1  # frozen to the applied uniform deformation
SITE_SLAVED = 2     # value interpolated from the mesh


@dataclass
class CoupledModel:
    """Domain decomposition, bonds, mesh and effective volumes."""

    basis: CrystalBasis
    cutoff: float
    n_param: int
    k_param: int | None
    vacancy: bool

    r_full: np.ndarray          # (nr_full, 3)
    r_plus: np.ndarray          # (nr, 3) canonical half
    u_buf: int

    sites_x: np.ndarray         # (ns, 3) int
    sites_u: np.ndarray         # (ns, 3) int
    site_kind: np.ndarray       # (ns,) int8

    bonds_start: np.ndarray     # (nb,) int32 site index
    bonds_end: np.ndarray       # (nb,) int32 site index
    bonds_dir: np.ndarray       # (nb,) int16 index into r_plus
    bond_is_atom: np.ndarray    # (nb,) bool: True for B_a, False for B_c

    mesh: Mesh | None
    omega: np.ndarray | None    # (nt, nr) effective volumes
    bc_count_per_dir: np.ndarray

    # interpolation of every slaved site, CSR-style over mesh vertices
    slave_ptr: np.ndarray | None = None
    slave_vert: np.ndarray | None = None
    slave_wt: np.ndarray | None = None

    notes: dict = field(default_factory=dict)

    # -- bookkeeping ---------------------------------------------------------

    @property
    def n_sites(self) -> int:
        return len(self.sites_x)

    @property
    def free_u_bound(self) -> int:
        return 2 * self.n_param - 1

    def atom_bond_indices(self) -> np.ndarray:
        return np.nonzero(self.bond_is_atom)[0]

    def counts(self) -> dict:
        kinds = self.site_kind
        return {
            "sites": int(len(kinds)),
            "atomistic": int((kinds == SITE_ATOM).sum()),
            "dirichlet": int((kinds == SITE_DIRICHLET).sum()),
            "slaved": int((kinds == SITE_SLAVED).sum()),
            "bonds": int(len(self.bonds_start)),
            "atom_bonds": int(self.bond_is_atom.sum()),
            "mesh_vertices": 0 if self.mesh is None else self.mesh.n_vertices,
            "mesh_tets": 0 if self.mesh is None else self.mesh.n_tets,
        }


def free_site_count(n_param: int, vacancy: bool = True) -> int:
    """Number of unconstrained sites of the physical-cube sample."""
    c = 2 * n_param - 1
    n_even = len(range(-c + 1, c, 2))
    n_odd = len(range(-c, c + 1, 2))
    total = n_even**3 + 3 * n_even * n_odd**2
    return total - 1 if vacancy else total


def _enumerate_sites(bound: int) -> np.ndarray:
    """All u in [-bound, bound]^3 with even coordinate sum (FCC sites)."""
    rng = np.arange(-bound, bound + 1)
    grid = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
    return grid[(grid.sum(axis=1) & 1) == 0]


def build_vacancy_problem(
    n_param: int,
    k_param: int | None,
    basis: CrystalBasis = FCC_BASIS,
    cutoff: float = 3.2,
    vacancy: bool = True,
    with_volumes: bool = True,
) -> CoupledModel:
    """Construct the A/C model of the paper-style vacancy sample.

    ``k_param=None`` builds the fully atomistic problem on the same sites
    (no mesh, every bond treated atomistically); otherwise 2 <= K < N.
    """
    if n_param < 2:
        raise ValueError("need N >= 2")
    if k_param is not None and not (2 <= k_param < n_param):
        raise ValueError("need 2 <= K < N")
    if basis is not FCC_BASIS:
        raise ValueError("the coupled model geometry is built for the FCC basis")

    r_full = neighbor_set(basis, cutoff)
    if len(r_full) == 0:
        raise ValueError("empty neighbor set: cutoff below nearest-neighbor distance")
    r_plus = canonical_directions(r_full)
    r_u = r_plus @ U_MAT.T
    u_buf = int(np.abs(r_u).max())

    free_bound = 2 * n_param - 1
    shell = u_buf + 1
    bound = free_bound + shell
    sites_u = _enumerate_sites(bound)
    sites_u = sites_u[np.abs(sites_u).max(axis=1) <= bound]
    if vacancy:
        sites_u = sites_u[np.any(sites_u != 0, axis=1)]
    sites_x = (sites_u @ PSI_MAT.T) // 2

    unorm = np.abs(sites_u).max(axis=1)
    site_kind = np.full(len(sites_u), SITE_DIRICHLET, dtype=np.int8)
    if k_param is None:
        site_kind[unorm <= free_bound] = SITE_ATOM
        mesh = None
    else:
        core = 2 * k_param - 1
        site_kind[unorm <= core] = SITE_ATOM
        site_kind[(unorm >= core + 1) & (unorm <= free_bound)] = SITE_SLAVED
        mesh = build_annulus_mesh(k_param, n_param)

    # dense index over the u-box for endpoint lookup
    dim = 2 * bound + 1
    lookup = np.full((dim, dim, dim), -1, dtype=np.int32)
    idx = sites_u + bound
    lookup[idx[:, 0], idx[:, 1], idx[:, 2]] = np.arange(len(sites_u), dtype=np.int32)

    starts, ends, dirs = [], [], []
    for di, ru in enumerate(r_u):
        end_u = sites_u + ru
        ok = np.abs(end_u).max(axis=1) <= bound
        if vacancy:
            ok &= np.any(end_u != 0, axis=1)
        s_idx = np.nonzero(ok)[0]
        e_pos = end_u[ok] + bound
        e_idx = lookup[e_pos[:, 0], e_pos[:, 1], e_pos[:, 2]]
        assert (e_idx >= 0).all()
        starts.append(s_idx.astype(np.int32))
        ends.append(e_idx)
        dirs.append(np.full(len(s_idx), di, dtype=np.int16))
    bonds_start = np.concatenate(starts)
    bonds_end = np.concatenate(ends)
    bonds_dir = np.concatenate(dirs)

    if k_param is None:
        bond_is_atom = np.ones(len(bonds_start), dtype=bool)
    else:
        bond_is_atom = ~_bond_in_continuum(
            sites_u[bonds_start], r_u[bonds_dir], 2 * k_param, 2 * n_param
        )
    nbc = np.zeros(len(r_plus), dtype=np.int64)
    if k_param is not None:
        np.add.at(nbc, bonds_dir[~bond_is_atom], 1)

    model = CoupledModel(
        basis=basis,
        cutoff=cutoff,
        n_param=n_param,
        k_param=k_param,
        vacancy=vacancy,
        r_full=r_full,
        r_plus=r_plus,
        u_buf=u_buf,
        sites_x=sites_x,
        sites_u=sites_u,
        site_kind=site_kind,
        bonds_start=bonds_start,
        bonds_end=bonds_end,
        bonds_dir=bonds_dir,
        bond_is_atom=bond_is_atom,
        mesh=mesh,
        omega=None,
        bc_count_per_dir=nbc,
    )
    if mesh is not None:
        _build_slave_interpolation(model)
        if with_volumes:
            model.omega = effective_volumes(model)
    return model


def classify_bonds(model: CoupledModel) -> dict:
    """Recompute the bond partition of a model from its geometry.

    Returns the indices of atomistically treated bonds, the per-direction
    continuum-bond counts, and the boolean mask (True = atomistic); the
    partition is exhaustive and disjoint by construction.
    """
    if model.mesh is None:
        is_atom = np.ones(len(model.bonds_start), dtype=bool)
    else:
        r_u = model.r_plus @ U_MAT.T
        is_atom = ~_bond_in_continuum(
            model.sites_u[model.bonds_start],
            r_u[model.bonds_dir],
            2 * model.k_param,
            2 * model.n_param,
        )
    nbc = np.zeros(len(model.r_plus), dtype=np.int64)
    np.add.at(nbc, model.bonds_dir[~is_atom], 1)
    return {
        "atomistic_indices": np.nonzero(is_atom)[0],
        "continuum_count_per_dir": nbc,
        "is_atomistic": is_atom,
    }


def _bond_in_continuum(start_u, du, core: int, outer: int) -> np.ndarray:
    """Exact test: is the open bond contained in the open continuum annulus?

    Outer condition per axis: both endpoints within |u_i| <= outer and the
    segment not lying inside a boundary plane.  Inner condition: the open
    parameter interval must not meet the closed core cube; candidates from
    a cheap interval prefilter get the exact rational slab test.
    """
    a = start_u
    b = start_u + du
    inside_outer = np.ones(len(a), dtype=bool)
    for i in range(3):
        ai, bi = a[:, i], b[:, i]
        cond = (np.abs(ai) <= outer) & (np.abs(bi) <= outer)
        cond &= ~((ai == bi) & (np.abs(ai) == outer))
        inside_outer &= cond
    result = inside_outer.copy()
    # a segment with both endpoints in the closed core certainly meets it
    fully_inside = (np.abs(a).max(axis=1) <= core) & (np.abs(b).max(axis=1) <= core)
    result[fully_inside] = False
    # float slab prescreen; only near-miss candidates get the exact test
    lam_lo = np.zeros(len(a))
    lam_hi = np.ones(len(a))
    alive = np.ones(len(a), dtype=bool)
    for i in range(3):
        ai = a[:, i].astype(float)
        di = du[:, i].astype(float)
        has_d = di != 0
        alive &= np.where(has_d, True, np.abs(a[:, i]) <= core)
        with np.errstate(divide="ignore", invalid="ignore"):
            l1 = (-core - ai) / di
            l2 = (core - ai) / di
        llo = np.minimum(l1, l2)
        lhi = np.maximum(l1, l2)
        lam_lo = np.where(has_d, np.maximum(lam_lo, llo), lam_lo)
        lam_hi = np.where(has_d, np.minimum(lam_hi, lhi), lam_hi)
    maybe = alive & (np.maximum(lam_lo, 0.0) <= np.minimum(lam_hi, 1.0) + 1e-6)
    near_core = maybe & inside_outer & ~fully_inside
    for j in np.nonzero(near_core)[0]:
        if _segment_meets_cube(a[j], du[j], core):
            result[j] = False
    return result


def _segment_meets_cube(a, d, c: int) -> bool:
    """Does {a + t d : 0 < t < 1} meet the closed cube [-c, c]^3?  Exact."""
    lo = Fraction(0)
    hi = Fraction(1)
    for i in range(3):
        ai, di = int(a[i]), int(d[i])
        if di == 0:
            if abs(ai) > c:
                return False
            continue
        t1 = Fraction(-c - ai, di)
        t2 = Fraction(c - ai, di)
        if t1 > t2:
            t1, t2 = t2, t1
        lo = max(lo, t1)
        hi = min(hi, t2)
        if lo > hi:
            return False
    return lo <= hi and hi > 0 and lo < 1


def _build_slave_interpolation(model: CoupledModel) -> None:
    mesh = model.mesh
    ptr = [0]
    verts: list[int] = []
    wts: list[float] = []
    slaved = np.nonzero(model.site_kind == SITE_SLAVED)[0]
    model.notes["slaved_sites"] = slaved
    for s in slaved:
        vs, ws = mesh.interpolation(model.sites_u[s])
        verts.extend(vs)
        wts.extend(float(w) for w in ws)
        ptr.append(len(verts))
    model.slave_ptr = np.array(ptr, dtype=np.int64)
    model.slave_vert = np.array(verts, dtype=np.int32)
    model.slave_wt = np.array(wts, dtype=np.float64)


# ---------------------------------------------------------------------------
# effective volumes
# ---------------------------------------------------------------------------

def _canonical_tet_key(xverts) -> tuple:
    vs = sorted(tuple(int(c) for c in v) for v in xverts)
    base = vs[0]
    return tuple(tuple(c - b for c, b in zip(v, base)) for v in vs[1:])


_len_cache: dict = {}


def _len_tetra_cached(xverts, r) -> float:
    key = (_canonical_tet_key(xverts), tuple(int(c) for c in r))
    val = _len_cache.get(key)
    if val is None:
        val = len_tetra([tuple(int(c) for c in v) for v in xverts], key[1])
        _len_cache[key] = val
    return val


def effective_volumes(model: CoupledModel, cauchy_born: bool = False) -> np.ndarray:
    """Omega[tet, dir] = Len(T, r) minus the chi-averages of all bonds of
    direction r that are treated atomistically and intersect T.

    With ``cauchy_born=True`` every weight is replaced by the plain element
    volume |T| instead (the uncorrected continuum model, for comparison).
    """
    mesh = model.mesh
    if mesh is None:
        raise ValueError("model has no continuum region")
    nt, nr = mesh.n_tets, len(model.r_plus)
    omega = np.empty((nt, nr), dtype=np.float64)
    if cauchy_born:
        for t in range(nt):
            xv = mesh.tet_x_vertices(t).astype(np.int64)
            vol = abs(round(float(np.linalg.det((xv[1:] - xv[0]).astype(float))))) / 6.0
            omega[t, :] = vol
        return omega

    rkeys = [tuple(int(c) for c in r) for r in model.r_plus]
    for t in range(nt):
        shape = _canonical_tet_key(mesh.tet_x_vertices(t))
        verts = None
        for di, rk in enumerate(rkeys):
            key = (shape, rk)
            val = _len_cache.get(key)
            if val is None:
                if verts is None:
                    verts = [tuple(int(c) for c in v) for v in mesh.tet_x_vertices(t)]
                val = len_tetra(verts, rk)
                _len_cache[key] = val
            omega[t, di] = val

    r_u = model.r_plus @ U_MAT.T
    atom_idx = model.atom_bond_indices()
    start_u = model.sites_u[model.bonds_start[atom_idx]]
    dirs = model.bonds_dir[atom_idx]
    du = r_u[dirs]
    end_u = start_u + du
    outer = 2 * model.n_param
    core = 2 * model.k_param
    # bonds strictly inside the open core never meet a mesh element
    cand = np.abs(np.stack([start_u, end_u])).max(axis=0).max(axis=1) >= core
    # require a positive-length parameter overlap with the outer cube;
    # nonzero lengths are bounded below by 1/|du_i|, so the float slack of
    # the slab test is safe
    lam_lo = np.zeros(len(start_u))
    lam_hi = np.ones(len(start_u))
    for i in range(3):
        a = start_u[:, i].astype(float)
        d = du[:, i].astype(float)
        still = d != 0
        cand &= np.where(still, True, np.abs(start_u[:, i]) <= outer)
        with np.errstate(divide="ignore", invalid="ignore"):
            l1 = (-outer - a) / d
            l2 = (outer - a) / d
        llo = np.minimum(l1, l2)
        lhi = np.maximum(l1, l2)
        lam_lo = np.where(still, np.maximum(lam_lo, llo), lam_lo)
        lam_hi = np.where(still, np.minimum(lam_hi, lhi), lam_hi)
    cand &= np.minimum(lam_hi, 1.0) - np.maximum(lam_lo, 0.0) > 1e-6
    start_x = model.sites_x[model.bonds_start[atom_idx[cand]]]
    _apply_corrections(model, omega, start_x.tolist(), dirs[cand].tolist())
    return omega


def _apply_corrections(model, omega, starts_x, dir_idx) -> None:
    """Subtract the chi-averages of candidate atomistic bonds from omega.

    Pure-integer quick rejects in the inner loop; the exact segment kernel
    runs only for bonds that actually meet a tetrahedron.
    """
    mesh = model.mesh
    g2 = [2 * v for v in mesh.grading]
    ncell = len(g2) - 1
    box_first = mesh.box_first_tet
    frames: list[TetFrame | None] = [None] * mesh.n_tets
    r_list = [tuple(int(c) for c in r) for r in model.r_plus]
    tet_xv = mesh.verts_x[mesh.tets].tolist()  # (nt, 4, 3)

    for xs, di in zip(starts_x, dir_idx):
        x0, x1, x2 = xs
        r = r_list[di]
        r0, r1, r2 = r
        u0 = (x1 + x2, x0 + x2, x0 + x1)
        ur = (r1 + r2, r0 + r2, r0 + r1)
        ranges = []
        for i in range(3):
            lo2, hi2 = u0[i], u0[i] + ur[i]
            if lo2 > hi2:
                lo2, hi2 = hi2, lo2
            # cells [g[j], g[j+1]] with 2 g[j] <= hi2 and 2 g[j+1] >= lo2;
            # bisect_left on the lower end keeps both cells of a shared face
            jlo = max(bisect_left(g2, lo2) - 1, 0)
            jhi = bisect_right(g2, hi2) - 1
            jhi = min(max(jhi, jlo), ncell - 1)
            ranges.append(range(jlo, jhi + 1))
        # distinct cells own distinct tets, so no visited set is needed
        for cell in product(*ranges):
            first = box_first.get(cell)
            if first is None:
                continue
            for t in range(first, first + 6):
                frame = frames[t]
                if frame is None:
                    frame = TetFrame.build([tuple(v) for v in tet_xv[t]])
                    frames[t] = frame
                alphas = []
                betas = []
                skip = False
                for n, off in zip(frame.normals, frame.offsets):
                    a = n[0] * x0 + n[1] * x1 + n[2] * x2 - off
                    b = n[0] * r0 + n[1] * r1 + n[2] * r2
                    v1 = a + b
                    if a <= 0 and v1 <= 0 and (a < 0 or v1 < 0):
                        skip = True
                        break
                    alphas.append(a)
                    betas.append(b)
                if skip:
                    continue
                val = _segment_chi_from_affine(frame, alphas, betas)
                if val != 0.0:
                    omega[t, di] -= val


def cauchy_born_volumes(model: CoupledModel) -> np.ndarray:
    return effective_volumes(model, cauchy_born=True)


def consistency_defects(model: CoupledModel) -> np.ndarray:
    """Per direction: sum_T Omega[T, r] - #(continuum bonds of direction r).

    Every continuum bond has total chi-average 1 over the mesh, so these
    vanish up to float accumulation for a correct geometry.
    """
    if model.omega is None:
        raise ValueError("model has no effective volumes")
    sums = model.omega.sum(axis=0)
    return sums - model.bc_count_per_dir.astype(float)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def model_to_dict(model: CoupledModel) -> dict:
    d = {
        "format": MODEL_FORMAT_VERSION,
        "n": model.n_param,
        "k": model.k_param,
        "cutoff": model.cutoff,
        "vacancy": model.vacancy,
        "neighbor_directions": model.r_plus.tolist(),
        "sites_x": model.sites_x.tolist(),
        "site_kind": model.site_kind.tolist(),
        "bonds_start": model.bonds_start.tolist(),
        "bonds_end": model.bonds_end.tolist(),
        "bonds_dir": model.bonds_dir.tolist(),
        "bond_is_atom": model.bond_is_atom.astype(int).tolist(),
    }
    if model.mesh is not None:
        d["mesh_vertices_x"] = model.mesh.verts_x.tolist()
        d["mesh_tets"] = model.mesh.tets.tolist()
        if model.omega is not None:
            d["omega"] = [[float(v) for v in row] for row in model.omega]
    return d


def save_model(model: CoupledModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path) -> dict:
    with open(path) as fh:
        d = json.load(fh)
    if d.get("format") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format: {d.get('format')!r}")
    return d
