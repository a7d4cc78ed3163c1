"""Potentials and energy assembly for the atomistic and coupled models.

Conventions: sites are lattice coordinates x; the physical reference
position is A @ x; a deformation maps lattice coordinates to physical
space, with the applied uniform deformation acting as y_F(x) = F @ (A @ x).
On each mesh element the deformation is affine; its directional finite
difference along a bond direction r is W_T @ r with W_T the element's
deformation gradient with respect to lattice coordinates, so a uniform
state reproduces F @ A @ r exactly and the coupled energy

    E_h(y) = sum_{atomistic bonds} phi(y(x+r) - y(x))
           + sum_{T} sum_{r} Omega[T, r] * phi(W_T @ r)

is patch-test consistent by construction.  Bonds are undirected and
enumerated once (canonical direction); phi is radial so the convention is
orientation-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .crystal_model import SITE_ATOM, SITE_DIRICHLET, SITE_SLAVED, CoupledModel

__all__ = [
    "LennardJones",
    "lj",
    "DeformationState",
    "ModelDof",
    "get_dof",
    "uniform_state",
    "EnergyAssembly",
    "atomistic_energy",
    "coupled_energy",
    "patch_test",
    "mean_bond_force",
]


# ---------------------------------------------------------------------------
# pair potentials
# ---------------------------------------------------------------------------

class LennardJones:
    """phi(z) = -2 |z|^-6 + |z|^-12; minimum -1 at |z| = 1."""

    min_separation = 1e-8

    def __init__(self, cutoff: float = 3.2):
        self.cutoff = cutoff

    def radial(self, s):
        s6 = s**-6
        return s6 * (s6 - 2.0)

    def radial_d1(self, s):
        return 12.0 * (s**-7 - s**-13)

    def radial_d2(self, s):
        return 156.0 * s**-14 - 84.0 * s**-8

    def _norm(self, z):
        z = np.asarray(z, dtype=float)
        s = np.sqrt((z * z).sum(axis=-1))
        if np.any(s < self.min_separation):
            raise ValueError("atoms too close: potential is singular")
        return z, s

    def value(self, z):
        _, s = self._norm(z)
        return self.radial(s)

    def gradient(self, z):
        z, s = self._norm(z)
        return (self.radial_d1(s) / s)[..., None] * z

    def hessian(self, z):
        z, s = self._norm(z)
        zh = z / s[..., None]
        outer = zh[..., :, None] * zh[..., None, :]
        eye = np.eye(3)
        t = (self.radial_d1(s) / s)[..., None, None]
        return self.radial_d2(s)[..., None, None] * outer + t * (eye - outer)


def lj(z) -> float:
    """Lennard-Jones pair energy of a relative position vector."""
    return float(LennardJones().value(np.asarray(z, dtype=float)))


# ---------------------------------------------------------------------------
# degrees of freedom
# ---------------------------------------------------------------------------

@dataclass
class ModelDof:
    """Variable numbering: free atomistic sites first, then free vertices."""

    nvars: int
    var_of_site: np.ndarray      # (ns,) int32, -1 where not a variable
    var_of_vertex: np.ndarray    # (nv,) int32, -1 where fixed (or empty)
    site_pos: np.ndarray         # (ns, 3) physical reference positions
    vert_pos: np.ndarray         # (nv, 3)
    var_pos: np.ndarray          # (nvars, 3)
    slaved_sites: np.ndarray     # indices of slaved sites
    slave_matrix: sp.csr_matrix | None   # (n_slaved, nv)
    # per-site parent expansion (variables with weights), CSR layout
    par_ptr: np.ndarray
    par_var: np.ndarray
    par_wt: np.ndarray


def get_dof(model: CoupledModel) -> ModelDof:
    dof = model.notes.get("dof")
    if dof is not None:
        return dof
    a = model.basis.a
    kinds = model.site_kind
    ns = model.n_sites
    site_pos = model.sites_x.astype(float) @ a.T

    var_of_site = np.full(ns, -1, dtype=np.int32)
    atom_sites = np.nonzero(kinds == SITE_ATOM)[0]
    var_of_site[atom_sites] = np.arange(len(atom_sites), dtype=np.int32)
    nvars = len(atom_sites)

    if model.mesh is not None:
        nv = model.mesh.n_vertices
        vert_pos = model.mesh.verts_x.astype(float) @ a.T
        fixed = np.abs(model.mesh.verts_uprime).max(axis=1) >= model.mesh.n_half
        var_of_vertex = np.full(nv, -1, dtype=np.int32)
        free = np.nonzero(~fixed)[0]
        var_of_vertex[free] = nvars + np.arange(len(free), dtype=np.int32)
        nvars += len(free)
        slaved = model.notes["slaved_sites"]
        nsl = len(slaved)
        indptr = model.slave_ptr
        slave_matrix = sp.csr_matrix(
            (model.slave_wt, model.slave_vert, indptr), shape=(nsl, nv)
        )
    else:
        vert_pos = np.zeros((0, 3))
        var_of_vertex = np.zeros(0, dtype=np.int32)
        slaved = np.zeros(0, dtype=np.int64)
        slave_matrix = None

    var_pos = np.empty((nvars, 3))
    var_pos[var_of_site[atom_sites]] = site_pos[atom_sites]
    if model.mesh is not None:
        sel = var_of_vertex >= 0
        var_pos[var_of_vertex[sel]] = vert_pos[sel]

    # parent lists: which variables carry each site, with what weight
    rows_ptr = [0]
    pv: list[int] = []
    pw: list[float] = []
    slave_row = {int(s): i for i, s in enumerate(slaved)}
    for s in range(ns):
        k = kinds[s]
        if k == SITE_ATOM:
            pv.append(int(var_of_site[s]))
            pw.append(1.0)
        elif k == SITE_SLAVED:
            i = slave_row[s]
            lo, hi = model.slave_ptr[i], model.slave_ptr[i + 1]
            for v, w in zip(model.slave_vert[lo:hi], model.slave_wt[lo:hi]):
                var = var_of_vertex[v]
                if var >= 0:
                    pv.append(int(var))
                    pw.append(float(w))
        rows_ptr.append(len(pv))
    dof = ModelDof(
        nvars=nvars,
        var_of_site=var_of_site,
        var_of_vertex=var_of_vertex,
        site_pos=site_pos,
        vert_pos=vert_pos,
        var_pos=var_pos,
        slaved_sites=np.asarray(slaved, dtype=np.int64),
        slave_matrix=slave_matrix,
        par_ptr=np.array(rows_ptr, dtype=np.int64),
        par_var=np.array(pv, dtype=np.int32),
        par_wt=np.array(pw, dtype=np.float64),
    )
    model.notes["dof"] = dof
    return dof


@dataclass
class DeformationState:
    """Applied uniform gradient F plus the values of all free variables."""

    f_matrix: np.ndarray
    y: np.ndarray  # (nvars, 3)


def uniform_state(model: CoupledModel, f_matrix) -> DeformationState:
    dof = get_dof(model)
    f = np.asarray(f_matrix, dtype=float)
    return DeformationState(f_matrix=f, y=dof.var_pos @ f.T)


def site_values(model: CoupledModel, state: DeformationState) -> np.ndarray:
    """Physical positions of every site under the deformation state."""
    dof = get_dof(model)
    f = state.f_matrix
    kinds = model.site_kind
    out = np.empty((model.n_sites, 3))
    atom = kinds == SITE_ATOM
    out[atom] = state.y[dof.var_of_site[atom]]
    dirich = kinds == SITE_DIRICHLET
    out[dirich] = dof.site_pos[dirich] @ f.T
    if model.mesh is not None:
        vv = vertex_values(model, state)
        out[dof.slaved_sites] = dof.slave_matrix @ vv
    return out


def vertex_values(model: CoupledModel, state: DeformationState) -> np.ndarray:
    dof = get_dof(model)
    vv = np.empty((len(dof.var_of_vertex), 3))
    free = dof.var_of_vertex >= 0
    vv[free] = state.y[dof.var_of_vertex[free]]
    vv[~free] = dof.vert_pos[~free] @ state.f_matrix.T
    return vv


def scatter_site_forces(model: CoupledModel, site_forces: np.ndarray) -> np.ndarray:
    """Adjoint of site_values: push per-site forces back onto variables."""
    dof = get_dof(model)
    grad = np.zeros((dof.nvars, 3))
    kinds = model.site_kind
    atom = kinds == SITE_ATOM
    grad[dof.var_of_site[atom]] += site_forces[atom]
    if model.mesh is not None and len(dof.slaved_sites):
        vf = dof.slave_matrix.T @ site_forces[dof.slaved_sites]
        free = dof.var_of_vertex >= 0
        grad[dof.var_of_vertex[free]] += vf[free]
    return grad


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

@dataclass
class EnergyAssembly:
    value: float
    gradient: np.ndarray            # (nvars, 3)
    hessian: sp.csc_matrix | None   # (3 nvars, 3 nvars), symmetric


def _bond_block_structure(model: CoupledModel, bond_idx: np.ndarray):
    """Expansion of bond endpoint pairs into variable pairs with weights.

    Cached per (model, bond subset); returns flat arrays (bond, row, col, w)
    for the Hessian scatter, where w = w_row * w_col * sign_row * sign_col.
    Without slaved sites every site has at most one parent variable and the
    expansion is pure numpy; slaved endpoints go through a python loop.
    """
    key = ("bond_struct", len(bond_idx), hash(bond_idx.tobytes()))
    cached = model.notes.get(key)
    if cached is not None:
        return cached
    dof = get_dof(model)
    if model.mesh is None:
        vi = dof.var_of_site[model.bonds_start[bond_idx]].astype(np.int64)
        vj = dof.var_of_site[model.bonds_end[bond_idx]].astype(np.int64)
        n = np.arange(len(bond_idx), dtype=np.int64)
        eb, er, ec, ew = [], [], [], []
        for r, c, w in ((vi, vi, 1.0), (vj, vj, 1.0), (vi, vj, -1.0), (vj, vi, -1.0)):
            m = (r >= 0) & (c >= 0)
            eb.append(n[m])
            er.append(r[m])
            ec.append(c[m])
            ew.append(np.full(int(m.sum()), w))
        cached = tuple(np.concatenate(a) for a in (eb, er, ec, ew))
    else:
        ptr, pvar, pwt = dof.par_ptr, dof.par_var, dof.par_wt
        has_parent = ptr[1:] > ptr[:-1]
        parented = np.nonzero(
            has_parent[model.bonds_start[bond_idx]]
            | has_parent[model.bonds_end[bond_idx]]
        )[0]
        eb, er, ec, ew = [], [], [], []
        for n in parented:
            b = bond_idx[n]
            i = model.bonds_start[b]
            j = model.bonds_end[b]
            plist = []
            for site, sign in ((i, -1.0), (j, 1.0)):
                lo, hi = ptr[site], ptr[site + 1]
                for v, w in zip(pvar[lo:hi], pwt[lo:hi]):
                    plist.append((v, sign * w))
            for v1, w1 in plist:
                for v2, w2 in plist:
                    eb.append(n)
                    er.append(v1)
                    ec.append(v2)
                    ew.append(w1 * w2)
        cached = (
            np.array(eb, dtype=np.int64),
            np.array(er, dtype=np.int64),
            np.array(ec, dtype=np.int64),
            np.array(ew, dtype=np.float64),
        )
    model.notes[key] = cached
    return cached


def _bond_terms(model, potential, values, bond_idx):
    z = values[model.bonds_end[bond_idx]] - values[model.bonds_start[bond_idx]]
    s = np.sqrt((z * z).sum(axis=1))
    if np.any(s < potential.min_separation):
        raise ValueError("coincident atoms in bond evaluation")
    return z, s


def _bond_gradient(model, site_count, bond_idx, fvec):
    g = np.zeros((site_count, 3))
    start = model.bonds_start[bond_idx]
    end = model.bonds_end[bond_idx]
    for c in range(3):
        g[:, c] = np.bincount(end, weights=fvec[:, c], minlength=site_count)
        g[:, c] -= np.bincount(start, weights=fvec[:, c], minlength=site_count)
    return g


def _continuum_setup(model: CoupledModel):
    """Per-element node variables and exact inverse edge matrices."""
    cached = model.notes.get("continuum")
    if cached is not None:
        return cached
    dof = get_dof(model)
    mesh = model.mesh
    xv = mesh.verts_x
    nt = mesh.n_tets
    einv = np.empty((nt, 3, 3))
    for t in range(nt):
        vs = mesh.tets[t]
        e_cols = [[int(xv[vs[m + 1]][i] - xv[vs[0]][i]) for m in range(3)] for i in range(3)]
        det = _det3_int(e_cols)
        adj = _adjugate3_int(e_cols)
        einv[t] = np.array(
            [[Fraction(adj[i][j], det) for j in range(3)] for i in range(3)],
            dtype=float,
        )
    node_vars = dof.var_of_vertex[mesh.tets]          # (nt, 4)
    cached = (einv, node_vars)
    model.notes["continuum"] = cached
    return cached


def _det3_int(c):
    return (
        c[0][0] * (c[1][1] * c[2][2] - c[1][2] * c[2][1])
        - c[0][1] * (c[1][0] * c[2][2] - c[1][2] * c[2][0])
        + c[0][2] * (c[1][0] * c[2][1] - c[1][1] * c[2][0])
    )


def _adjugate3_int(c):
    return [
        [
            c[1][1] * c[2][2] - c[1][2] * c[2][1],
            c[0][2] * c[2][1] - c[0][1] * c[2][2],
            c[0][1] * c[1][2] - c[0][2] * c[1][1],
        ],
        [
            c[1][2] * c[2][0] - c[1][0] * c[2][2],
            c[0][0] * c[2][2] - c[0][2] * c[2][0],
            c[0][2] * c[1][0] - c[0][0] * c[1][2],
        ],
        [
            c[1][0] * c[2][1] - c[1][1] * c[2][0],
            c[0][1] * c[2][0] - c[0][0] * c[2][1],
            c[0][0] * c[1][1] - c[0][1] * c[1][0],
        ],
    ]


def atomistic_energy(model: CoupledModel, potential, state: DeformationState,
                     with_hessian: bool = False,
                     precise_value: bool = False) -> EnergyAssembly:
    """Exact pair energy over every bond of the sample.

    ``precise_value`` sums the per-bond energies with math.fsum (exactly
    rounded); useful when the value feeds finite differences.
    """
    dof = get_dof(model)
    values = site_values(model, state)
    bond_idx = np.arange(len(model.bonds_start))
    z, s = _bond_terms(model, potential, values, bond_idx)
    terms = potential.radial(s)
    value = math.fsum(terms) if precise_value else float(np.sum(terms))
    fvec = (potential.radial_d1(s) / s)[:, None] * z
    grad = scatter_site_forces(model, _bond_gradient(model, model.n_sites, bond_idx, fvec))
    hess = None
    if with_hessian:
        hess = _assemble_bond_hessian(model, potential, values, bond_idx, dof.nvars)
    return EnergyAssembly(value=value, gradient=grad, hessian=hess)


def coupled_energy(model: CoupledModel, potential, state: DeformationState,
                   with_hessian: bool = False,
                   precise_value: bool = False) -> EnergyAssembly:
    """Atomistic sum over interface/core bonds plus the weighted continuum
    element sum; equals the atomistic energy when no mesh is present."""
    dof = get_dof(model)
    values = site_values(model, state)
    bond_idx = model.atom_bond_indices()
    z, s = _bond_terms(model, potential, values, bond_idx)
    terms = potential.radial(s)
    value = math.fsum(terms) if precise_value else float(np.sum(terms))
    fvec = (potential.radial_d1(s) / s)[:, None] * z
    grad = scatter_site_forces(model, _bond_gradient(model, model.n_sites, bond_idx, fvec))

    hess_blocks = None
    if model.mesh is not None:
        if model.omega is None:
            raise ValueError("model has no effective-volume table")
        einv, node_vars = _continuum_setup(model)
        vv = vertex_values(model, state)
        tets = model.mesh.tets
        d_mat = np.stack([vv[tets[:, m + 1]] - vv[tets[:, 0]] for m in range(3)], axis=2)
        w_full = d_mat @ einv  # (nt, 3, 3): deformation gradient per element
        nt = len(tets)
        gvert = np.zeros((len(vv), 3))
        if with_hessian:
            hess_blocks = np.zeros((nt, 4, 3, 4, 3))
        rmat = model.r_plus.astype(float)
        cont_parts = []
        for di in range(len(rmat)):
            r = rmat[di]
            zt = w_full @ r
            st = np.sqrt((zt * zt).sum(axis=1))
            if np.any(st < potential.min_separation):
                raise ValueError("collapsed element in continuum evaluation")
            om = model.omega[:, di]
            if precise_value:
                cont_parts.append(math.fsum(om * potential.radial(st)))
            else:
                value += float(np.dot(om, potential.radial(st)))
            cw = einv @ r                       # (nt, 3) node weights 1..3
            w4 = np.concatenate([-cw.sum(axis=1, keepdims=True), cw], axis=1)
            gt = (om * potential.radial_d1(st) / st)[:, None] * zt  # (nt, 3)
            for m in range(4):
                contrib = w4[:, m:m + 1] * gt
                for c in range(3):
                    gvert[:, c] += np.bincount(
                        tets[:, m], weights=contrib[:, c], minlength=len(vv)
                    )
            if with_hessian:
                zh = zt / st[:, None]
                outer = zh[:, :, None] * zh[:, None, :]
                t1 = (potential.radial_d1(st) / st)[:, None, None]
                blk = potential.radial_d2(st)[:, None, None] * outer \
                    + t1 * (np.eye(3) - outer)
                blk = om[:, None, None] * blk
                hess_blocks += np.einsum("ti,tj,tab->tiajb", w4, w4, blk)
        free = dof.var_of_vertex >= 0
        grad[dof.var_of_vertex[free]] += gvert[free]
        if precise_value:
            value = math.fsum([value] + cont_parts)

    hess = None
    if with_hessian:
        hess = _assemble_bond_hessian(model, potential, values, bond_idx, dof.nvars)
        if hess_blocks is not None:
            einv, node_vars = _continuum_setup(model)
            hess = hess + _scatter_element_blocks(hess_blocks, node_vars, dof.nvars)
            hess = hess.tocsc()
    return EnergyAssembly(value=value, gradient=grad, hessian=hess)


def _assemble_bond_hessian(model, potential, values, bond_idx, nvars):
    z, s = _bond_terms(model, potential, values, bond_idx)
    zh = z / s[:, None]
    outer = zh[:, :, None] * zh[:, None, :]
    t1 = (potential.radial_d1(s) / s)[:, None, None]
    blocks = potential.radial_d2(s)[:, None, None] * outer + t1 * (np.eye(3) - outer)
    eb, er, ec, ew = _bond_block_structure(model, bond_idx)
    data = ew[:, None, None] * blocks[eb]
    ne = len(eb)
    rows = np.broadcast_to((3 * er)[:, None, None] + np.arange(3)[None, :, None], (ne, 3, 3))
    cols = np.broadcast_to((3 * ec)[:, None, None] + np.arange(3)[None, None, :], (ne, 3, 3))
    h = sp.coo_matrix(
        (data.ravel(), (rows.ravel(), cols.ravel())),
        shape=(3 * nvars, 3 * nvars),
    )
    return h.tocsc()


def _scatter_element_blocks(blocks, node_vars, nvars):
    nt = blocks.shape[0]
    rows = np.repeat(node_vars, 3, axis=1)          # (nt, 12)
    comp = np.tile(np.arange(3), 4)
    rows3 = 3 * rows + comp[None, :]
    mask = np.repeat(node_vars >= 0, 3, axis=1)
    r_idx = np.broadcast_to(rows3[:, :, None], (nt, 12, 12))
    c_idx = np.broadcast_to(rows3[:, None, :], (nt, 12, 12))
    m2 = np.broadcast_to(mask[:, :, None], (nt, 12, 12)) & \
        np.broadcast_to(mask[:, None, :], (nt, 12, 12))
    data = blocks.reshape(nt, 12, 12)
    h = sp.coo_matrix(
        (data[m2], (r_idx[m2], c_idx[m2])), shape=(3 * nvars, 3 * nvars)
    )
    return h.tocsc()


# ---------------------------------------------------------------------------
# patch test
# ---------------------------------------------------------------------------

def mean_bond_force(model: CoupledModel, potential, f_matrix) -> float:
    """Mean |phi'(F A r)| over the neighbor directions: the force scale."""
    f = np.asarray(f_matrix, dtype=float)
    zr = model.r_plus.astype(float) @ model.basis.a.T @ f.T
    s = np.sqrt((zr * zr).sum(axis=1))
    return float(np.abs(potential.radial_d1(s)).mean())


def patch_test(model: CoupledModel, potential, f_matrix) -> float:
    """Max-norm of the coupled gradient at the uniform deformation y_F.

    This is the ghost-force magnitude; a consistent coupling returns zero
    up to float accumulation.
    """
    state = uniform_state(model, f_matrix)
    asm = coupled_energy(model, potential, state)
    return float(np.abs(asm.gradient).max())
