"""Equilibrium solves, stability determination and the convergence study.

Newton's method solves the equilibrium equations of either energy with the
uniform deformation as the initial guess.  Stability of a finite model is
read off the factorization pivots of its reduced Hessian; stability of the
infinite homogeneous lattice comes from the lattice-dynamics symbol

    H(k) = sum_{r in R} 4 sin^2(k . r / 2) * phi''(F A r),

positive definite for every nonzero k in the Brillouin zone of the
lattice-coordinate grid.  The symbol is cross-validated against dense
Hessians of periodic tori, which it diagonalizes exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .crystal_model import CoupledModel, build_vacancy_problem
from .energy import (
    DeformationState,
    atomistic_energy,
    coupled_energy,
    get_dof,
    site_values,
    uniform_state,
)

__all__ = [
    "NewtonConfig",
    "NewtonReport",
    "newton_solve",
    "make_objective",
    "is_stable",
    "atomistic_stability_fourier",
    "lattice_symbol_min_eig",
    "torus_hessian",
    "torus_stability",
    "StabilityScan",
    "stability_f_template",
    "stability_scan",
    "marching_squares",
    "w1inf_error",
    "convergence_study",
    "fit_loglog_slope",
]

_SPLU_LIMIT = 30000  # direct factorization below this many scalar unknowns


# ---------------------------------------------------------------------------
# Newton
# ---------------------------------------------------------------------------

@dataclass
class NewtonConfig:
    max_iterations: int = 50
    gradient_tolerance: float = 1e-10
    step_damping: str = "halving"
    max_halvings: int = 40


@dataclass
class NewtonReport:
    converged: bool
    iterations: int
    residuals: list = field(default_factory=list)
    message: str = ""


class Objective:
    """Energy functional over the free variables of a model."""

    def __init__(self, model: CoupledModel, potential, f_matrix, coupled: bool):
        self.model = model
        self.potential = potential
        self.f = np.asarray(f_matrix, dtype=float)
        self.coupled = coupled
        self.nvars = get_dof(model).nvars

    def state(self, y: np.ndarray) -> DeformationState:
        return DeformationState(f_matrix=self.f, y=y)

    def value_grad(self, y):
        fn = coupled_energy if self.coupled else atomistic_energy
        asm = fn(self.model, self.potential, self.state(y))
        return asm.value, asm.gradient

    def newton_step(self, y, grad):
        """Solve H d = -g at y; direct factorization or preconditioned CG."""
        rhs = -grad.ravel()
        if 3 * self.nvars <= _SPLU_LIMIT or self.coupled:
            fn = coupled_energy if self.coupled else atomistic_energy
            asm = fn(self.model, self.potential, self.state(y), with_hessian=True)
            try:
                lu = spla.splu(asm.hessian.tocsc())
            except RuntimeError as exc:
                raise ArithmeticError(f"singular Hessian: {exc}") from exc
            return lu.solve(rhs).reshape(-1, 3)
        op, precond = _atomistic_hessian_operator(self.model, self.potential, self.state(y))
        sol, info = spla.cg(op, rhs, rtol=1e-12, atol=0.0, maxiter=4000, M=precond)
        if info != 0:
            raise ArithmeticError(f"conjugate gradient failed to converge (info={info})")
        return sol.reshape(-1, 3)


def make_objective(model, potential, f_matrix, coupled: bool | None = None) -> Objective:
    if coupled is None:
        coupled = model.mesh is not None
    return Objective(model, potential, f_matrix, coupled)


def _atomistic_hessian_operator(model, potential, state):
    """Matrix-free Hessian of the pure atomistic energy plus a block-Jacobi
    preconditioner; used for large reference solves."""
    dof = get_dof(model)
    values = site_values(model, state)
    vi = dof.var_of_site[model.bonds_start].astype(np.int64)
    vj = dof.var_of_site[model.bonds_end].astype(np.int64)
    keep = (vi >= 0) | (vj >= 0)
    vi, vj = vi[keep], vj[keep]
    z = values[model.bonds_end[keep]] - values[model.bonds_start[keep]]
    s = np.sqrt((z * z).sum(axis=1))
    zh = z / s[:, None]
    d2 = potential.radial_d2(s)
    t1 = potential.radial_d1(s) / s
    n = dof.nvars
    mi = (vi >= 0).astype(float)[:, None]
    mj = (vj >= 0).astype(float)[:, None]
    gi = np.maximum(vi, 0)
    gj = np.maximum(vj, 0)

    def matvec(x):
        v = x.reshape(n, 3)
        dv = v[gj] * mj - v[gi] * mi
        proj = (zh * dv).sum(axis=1)
        bdv = d2[:, None] * proj[:, None] * zh + t1[:, None] * (dv - proj[:, None] * zh)
        out = np.zeros((n, 3))
        for c in range(3):
            out[:, c] += np.bincount(gj, weights=(bdv[:, c] * mj[:, 0]), minlength=n)
            out[:, c] -= np.bincount(gi, weights=(bdv[:, c] * mi[:, 0]), minlength=n)
        return out.ravel()

    op = spla.LinearOperator((3 * n, 3 * n), matvec=matvec)
    # block-diagonal preconditioner
    outer = zh[:, :, None] * zh[:, None, :]
    blocks = d2[:, None, None] * outer + t1[:, None, None] * (np.eye(3) - outer)
    diag = np.zeros((n, 3, 3))
    for a in range(3):
        for b in range(3):
            w = blocks[:, a, b]
            diag[:, a, b] += np.bincount(gj, weights=w * mj[:, 0], minlength=n)
            diag[:, a, b] += np.bincount(gi, weights=w * mi[:, 0], minlength=n)
    dinv = np.linalg.inv(diag)

    def precond(x):
        v = x.reshape(n, 3)
        return np.einsum("nab,nb->na", dinv, v).ravel()

    return op, spla.LinearOperator((3 * n, 3 * n), matvec=precond)


def newton_solve(objective: Objective, y0: np.ndarray, cfg: NewtonConfig | None = None):
    """Newton iteration with energy-decrease step halving.

    Returns (y, NewtonReport); raises ArithmeticError on singular systems.
    """
    cfg = cfg or NewtonConfig()
    y = np.array(y0, dtype=float)
    value, grad = objective.value_grad(y)
    residuals = [float(np.abs(grad).max())]
    if residuals[-1] <= cfg.gradient_tolerance:
        return y, NewtonReport(True, 0, residuals, "already at equilibrium")
    for it in range(1, cfg.max_iterations + 1):
        step = objective.newton_step(y, grad)
        t = 1.0
        for _ in range(cfg.max_halvings):
            y_new = y + t * step
            try:
                v_new, g_new = objective.value_grad(y_new)
            except ValueError:
                t *= 0.5
                continue
            if v_new <= value + 1e-12 * max(1.0, abs(value)) or t < 1e-6:
                break
            t *= 0.5
        else:
            return y, NewtonReport(False, it, residuals, "line search failed")
        y, value, grad = y_new, v_new, g_new
        residuals.append(float(np.abs(grad).max()))
        if residuals[-1] <= cfg.gradient_tolerance:
            return y, NewtonReport(True, it, residuals)
    return y, NewtonReport(False, cfg.max_iterations, residuals, "max iterations")


# ---------------------------------------------------------------------------
# stability
# ---------------------------------------------------------------------------

def is_stable(hessian, pivot_tol: float = 1e-10) -> bool:
    """Positive definiteness via factorization pivots.

    Symmetric-mode LU without diagonal threshold pivoting computes the
    LDL^T pivots of the (symmetrically permuted) matrix; all pivots
    strictly above pivot_tol times the diagonal scale certify stability,
    and near-zero or negative pivots count as unstable.
    """
    h = sp.csc_matrix(hessian)
    scale = float(np.abs(h.diagonal()).max())
    if scale == 0.0:
        return False
    try:
        lu = spla.splu(
            h,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options=dict(SymmetricMode=True),
        )
    except RuntimeError:
        return False
    pivots = lu.U.diagonal()
    return bool(pivots.min() > pivot_tol * scale)


def _k_grid(n: int) -> np.ndarray:
    k1 = -math.pi + 2.0 * math.pi * np.arange(n) / n
    kk = np.stack(np.meshgrid(k1, k1, k1, indexing="ij"), axis=-1).reshape(-1, 3)
    return kk[np.abs(kk).max(axis=1) > 1e-12]


def lattice_symbol_min_eig(f_matrix, basis, directions, potential, kpoints) -> float:
    """Smallest eigenvalue of H(k) over the given k-points (full R sum)."""
    f = np.asarray(f_matrix, dtype=float)
    z = directions.astype(float) @ (f @ basis.a).T
    blocks = potential.hessian(z)                      # (nr, 3, 3)
    phase = kpoints @ directions.T.astype(float)       # (nk, nr)
    s2 = 4.0 * np.sin(phase / 2.0) ** 2
    h = np.einsum("kr,rab->kab", s2, blocks)
    eigs = np.linalg.eigvalsh(h)
    scale = float(np.abs(eigs).max())
    return float(eigs[:, 0].min()), scale


def atomistic_stability_fourier(f_matrix, basis, directions, potential,
                                grid: int = 32, tol: float = 1e-9) -> bool:
    """Infinite-lattice stability of the uniform deformation F."""
    mn, scale = lattice_symbol_min_eig(f_matrix, basis, directions, potential, _k_grid(grid))
    return mn > -tol * max(scale, 1e-30)


def torus_hessian(length: int, basis, r_plus, potential, f_matrix) -> np.ndarray:
    """Dense Hessian of the uniform state on a periodic L^3 torus."""
    f = np.asarray(f_matrix, dtype=float)
    n = length**3
    h = np.zeros((3 * n, 3 * n))

    def site_id(p):
        return (p[0] % length) * length * length + (p[1] % length) * length + p[2] % length

    z = r_plus.astype(float) @ (f @ basis.a).T
    blocks = potential.hessian(z)
    coords = [(i, j, k) for i in range(length) for j in range(length) for k in range(length)]
    for ri, r in enumerate(r_plus):
        b = blocks[ri]
        for p in coords:
            s = site_id(p)
            e = site_id((p[0] + r[0], p[1] + r[1], p[2] + r[2]))
            for u, v in ((s, s), (e, e)):
                h[3 * u:3 * u + 3, 3 * v:3 * v + 3] += b
            for u, v in ((s, e), (e, s)):
                h[3 * u:3 * u + 3, 3 * v:3 * v + 3] -= b
    return h


def torus_stability(length: int, basis, r_plus, potential, f_matrix,
                    tol: float = 1e-9) -> bool:
    h = torus_hessian(length, basis, r_plus, potential, f_matrix)
    w = np.linalg.eigvalsh(h)
    scale = float(np.abs(w).max())
    return bool(w.min() > -tol * max(scale, 1e-30))


# ---------------------------------------------------------------------------
# stability scan over the (t, s) deformation family
# ---------------------------------------------------------------------------

def stability_f_template(t: float, s: float) -> np.ndarray:
    return np.array([[1.0 + t, 0.05, 0.02], [0.0, 1.0 + s, 0.01], [0.0, 0.0, 1.0]])


@dataclass
class StabilityScan:
    t_values: np.ndarray
    s_values: np.ndarray
    fourier_grid: int = 32

    @staticmethod
    def default(step: float = 0.02, lo: float = -0.2, hi: float = 0.2) -> "StabilityScan":
        n = int(round((hi - lo) / step)) + 1
        vals = np.linspace(lo, hi, n)
        return StabilityScan(t_values=vals, s_values=vals)


def stability_scan(model: CoupledModel, potential, scan: StabilityScan,
                   with_coupled: bool = True, threads: int = 1) -> dict:
    """Stable/unstable grids for the coupled Hessian and the exact lattice."""
    nt, ns = len(scan.t_values), len(scan.s_values)
    fourier = np.zeros((nt, ns), dtype=bool)
    kpts = _k_grid(scan.fourier_grid)
    for i, t in enumerate(scan.t_values):
        for j, s in enumerate(scan.s_values):
            mn, scale = lattice_symbol_min_eig(
                stability_f_template(t, s), model.basis, model.r_full, potential, kpts
            )
            fourier[i, j] = mn > -1e-9 * max(scale, 1e-30)
    coupled = None
    if with_coupled:
        coupled = np.zeros((nt, ns), dtype=bool)
        points = [(i, j) for i in range(nt) for j in range(ns)]

        def job(ij):
            i, j = ij
            f = stability_f_template(scan.t_values[i], scan.s_values[j])
            asm = coupled_energy(model, potential, uniform_state(model, f),
                                 with_hessian=True)
            return i, j, is_stable(asm.hessian)

        if threads > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=threads) as ex:
                for i, j, ok in ex.map(job, points):
                    coupled[i, j] = ok
        else:
            for ij in points:
                i, j, ok = job(ij)
                coupled[i, j] = ok
    out = {"t_values": scan.t_values, "s_values": scan.s_values, "fourier": fourier}
    if coupled is not None:
        out["coupled"] = coupled
        out["boundary_coupled"] = marching_squares(coupled, scan.t_values, scan.s_values)
    out["boundary_fourier"] = marching_squares(fourier, scan.t_values, scan.s_values)
    return out


_MS_EDGES = {  # case index -> pairs of cell-edge ids to connect
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)], 5: [(3, 0), (1, 2)],
    6: [(0, 2)], 7: [(3, 2)], 8: [(2, 3)], 9: [(2, 0)], 10: [(0, 1), (2, 3)],
    11: [(2, 1)], 12: [(1, 3)], 13: [(1, 0)], 14: [(0, 3)],
}


def marching_squares(grid: np.ndarray, xs, ys) -> list:
    """Boundary polyline segments of a boolean grid (edge midpoints)."""
    segs = []
    for i in range(grid.shape[0] - 1):
        for j in range(grid.shape[1] - 1):
            code = (
                (1 if grid[i, j] else 0)
                | (2 if grid[i + 1, j] else 0)
                | (4 if grid[i + 1, j + 1] else 0)
                | (8 if grid[i, j + 1] else 0)
            )
            if code in (0, 15):
                continue
            mid = {
                0: (0.5 * (xs[i] + xs[i + 1]), ys[j]),
                1: (xs[i + 1], 0.5 * (ys[j] + ys[j + 1])),
                2: (0.5 * (xs[i] + xs[i + 1]), ys[j + 1]),
                3: (xs[i], 0.5 * (ys[j] + ys[j + 1])),
            }
            for e1, e2 in _MS_EDGES[code]:
                segs.append((mid[e1], mid[e2]))
    return segs


# ---------------------------------------------------------------------------
# error metrics and the convergence study
# ---------------------------------------------------------------------------

def w1inf_from_values(model: CoupledModel, values_exact: np.ndarray,
                      values_h: np.ndarray) -> float:
    """max over bonds of |D_b(y_h - y)| / |A r_b| for per-site value arrays."""
    diff = values_h - values_exact
    d = diff[model.bonds_end] - diff[model.bonds_start]
    norms = np.sqrt((d * d).sum(axis=1))
    rlen = np.linalg.norm(model.r_plus.astype(float) @ model.basis.a.T, axis=1)
    return float((norms / rlen[model.bonds_dir]).max())


def w1inf_error(atom_model: CoupledModel, coupled_model: CoupledModel,
                exact_state: DeformationState, coupled_state: DeformationState) -> float:
    """max over bonds of |D_b(y_h - y)| / |A r_b|."""
    if not np.array_equal(atom_model.sites_u, coupled_model.sites_u):
        raise ValueError("models must share the same site enumeration")
    ve = site_values(atom_model, exact_state)
    vh = site_values(coupled_model, coupled_state)
    return w1inf_from_values(atom_model, ve, vh)


def convergence_study(rows, potential, f_matrix, cfg: NewtonConfig | None = None,
                      progress=None) -> list[dict]:
    """Solve the vacancy problem atomistically and coupled for each (N, K).

    Returns one record per row with the coupled DoF count, the W^{1,inf}
    error against the exact solution and the energy error.
    """
    cfg = cfg or NewtonConfig()
    out = []
    for n, k in rows:
        atom = build_vacancy_problem(n, None)
        obj_a = make_objective(atom, potential, f_matrix, coupled=False)
        ya, rep_a = newton_solve(obj_a, uniform_state(atom, f_matrix).y, cfg)
        if not rep_a.converged:
            raise ArithmeticError(f"atomistic solve failed for N={n}: {rep_a.message}")
        coup = build_vacancy_problem(n, k)
        obj_c = make_objective(coup, potential, f_matrix, coupled=True)
        yc, rep_c = newton_solve(obj_c, uniform_state(coup, f_matrix).y, cfg)
        if not rep_c.converged:
            raise ArithmeticError(f"coupled solve failed for N={n}, K={k}: {rep_c.message}")
        st_a = DeformationState(np.asarray(f_matrix, float), ya)
        st_c = DeformationState(np.asarray(f_matrix, float), yc)
        e_atom = atomistic_energy(atom, potential, st_a).value
        e_coup = coupled_energy(coup, potential, st_c).value
        rec = {
            "n": n,
            "k": k,
            "dof": 3 * get_dof(coup).nvars,
            "dof_atomistic": 3 * get_dof(atom).nvars,
            "w1inf_error": w1inf_error(atom, coup, st_a, st_c),
            "energy_error": abs(e_coup - e_atom),
            "newton_iterations_atomistic": rep_a.iterations,
            "newton_iterations_coupled": rep_c.iterations,
        }
        out.append(rec)
        if progress is not None:
            progress(rec)
    return out


def fit_loglog_slope(xs, ys) -> float:
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    a = np.vstack([np.ones_like(lx), lx]).T
    coef, *_ = np.linalg.lstsq(a, ly, rcond=None)
    return float(coef[1])
