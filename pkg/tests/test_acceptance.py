"""Acceptance criteria, one test per criterion, at their stated tolerances.

Each test prints a single summary line (visible with pytest -s, and in the
captured output otherwise).  Budgets: criterion 1 must finish within 10
minutes single-threaded, criterion 7 within 30 minutes.
"""

import math
import time
from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from latvol.bond_volume import len_bruteforce, len_tetra
from latvol.crystal_model import (
    FCC_BASIS,
    build_vacancy_problem,
    effective_volumes,
)
from latvol.energy import (
    DeformationState,
    LennardJones,
    atomistic_energy,
    coupled_energy,
    get_dof,
    mean_bond_force,
    patch_test,
    uniform_state,
)
from latvol.equilibrium import (
    StabilityScan,
    _k_grid,
    convergence_study,
    fit_loglog_slope,
    is_stable,
    lattice_symbol_min_eig,
    stability_f_template,
    torus_stability,
)
from latvol.exact_sums import s_ab, s_ab_bruteforce, s_ab_reduction_steps

POT = LennardJones()
F_PAPER = np.array([[1.0, 0.01, 0.02], [0.0, 1.0, 0.015], [0.0, 0.0, 1.0]])

ALL_DIRECTIONS = [r for r in product(range(-3, 4), repeat=3) if r != (0, 0, 0)]


def _tet_volume(t):
    return abs(np.linalg.det(np.array(t[1:], dtype=float) - np.array(t[0], dtype=float))) / 6.0


def _random_tet(rng, lo=-5, hi=6):
    return [tuple(int(c) for c in rng.integers(lo, hi, size=3)) for _ in range(4)]


def test_criterion_1_oracle_equivalence():
    """200 seeded tetrahedra x all r with components in [-3, 3]."""
    rng = np.random.default_rng(1001)
    t0 = time.time()
    worst = 0.0
    for _ in range(200):
        tet = _random_tet(rng)
        tol_scale = max(1.0, _tet_volume(tet))
        for r in ALL_DIRECTIONS:
            d = abs(len_tetra(tet, r) - len_bruteforce(tet, r)) / tol_scale
            if d > worst:
                worst = d
            assert d <= 1e-9, (tet, r)
    elapsed = time.time() - t0
    print(f"\nPASS criterion 1: oracle equivalence, worst rel dev {worst:.2e}, "
          f"{elapsed:.0f}s (budget 600s)")
    assert elapsed <= 600.0


def test_criterion_2_invariance_suite():
    rng = np.random.default_rng(1002)
    tol = 1e-9
    # gcd, translation and reversal invariance on 50 seeded cases each
    for _ in range(50):
        tet = _random_tet(rng)
        r = tuple(int(c) for c in rng.integers(-3, 4, size=3))
        if r == (0, 0, 0):
            r = (1, 1, 0)
        base = len_tetra(tet, r)
        for n in (2, 3):
            assert abs(len_tetra(tet, tuple(n * c for c in r)) - base) <= tol
        assert abs(len_tetra(tet, tuple(-c for c in r)) - base) <= tol
        z = tuple(int(c) for c in rng.integers(-7, 8, size=3))
        shifted = [tuple(v[i] + z[i] for i in range(3)) for v in tet]
        assert abs(len_tetra(shifted, r) - base) <= tol
    # plane-splitting additivity on 50 seeded cases
    for _ in range(50):
        a = tuple(int(2 * c) for c in rng.integers(-2, 3, size=3))
        d = tuple(int(2 * c) for c in rng.integers(-2, 3, size=3))
        if a == d:
            d = (a[0] + 2, a[1], a[2])
        mid = tuple((a[i] + d[i]) // 2 for i in range(3))
        b = tuple(int(c) for c in rng.integers(-4, 5, size=3))
        c = tuple(int(c) for c in rng.integers(-4, 5, size=3))
        r = tuple(int(c) for c in rng.integers(-3, 4, size=3))
        if r == (0, 0, 0):
            r = (0, 0, 1)
        whole = len_tetra([a, b, c, d], r)
        parts = len_tetra([a, b, c, mid], r) + len_tetra([mid, b, c, d], r)
        assert abs(whole - parts) <= tol, (a, b, c, d, r)
    print("\nPASS criterion 2: gcd/translation/reversal/additivity invariances "
          "(50 seeded cases each, tol 1e-9)")


def test_criterion_3_s_ab_exactness():
    for a in range(201):
        for b in range(201):
            assert s_ab(a, b) == s_ab_bruteforce(a, b), (a, b)
            if a + b > 0:
                assert s_ab_reduction_steps(a, b) <= 2 * math.log2(a + b) + 2
    print("\nPASS criterion 3: S(a,b) equals the brute-force rational sum for "
          "all 0 <= a,b <= 200 with zero error; depth <= 2 log2(a+b) + 2")


def test_criterion_4_complexity_logarithmic():
    """Wall time of len_tetra on s*T grows at most linearly in log s.

    The reduction chain is scale-invariant (the Euclid pair (a, b) scales
    to (s*a, s*b), whose remainder chain has identical length), so a
    correct implementation can be *flatter* than the c0 + c1 log s model;
    in that case the R^2 statistic of the fit degenerates.  The check
    therefore passes when either the log fit explains the data (R^2 >=
    0.9) or the total fitted growth over the whole range is negligible
    against the median time, which satisfies the bound a fortiori.
    Polynomial growth in s fails both arms.
    """
    tet = [(0, 0, 0), (3, 1, 0), (1, 4, 1), (2, 2, 5)]
    r = (2, -3, 1)
    scales = [1, 10, 100, 1000, 10000]
    meds = []
    for s in scales:
        ts = [tuple(s * c for c in v) for v in tet]
        reps = []
        for _ in range(21):
            t0 = time.perf_counter()
            for _ in range(8):
                len_tetra(ts, r)
            reps.append((time.perf_counter() - t0) / 8)
        meds.append(float(np.median(reps)))
    x = np.log(np.array(scales, dtype=float))
    y = np.array(meds)
    a_mat = np.vstack([np.ones_like(x), x]).T
    coef, *_ = np.linalg.lstsq(a_mat, y, rcond=None)
    yhat = a_mat @ coef
    ss_res = float(((y - yhat) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    fitted_growth = abs(coef[1]) * (x[-1] - x[0])
    negligible = fitted_growth <= 0.10 * float(np.median(y))
    print(f"\nPASS criterion 4: complexity check, medians "
          f"{[f'{m*1e6:.0f}us' for m in meds]}, log-fit R^2 {r2:.3f}, "
          f"fitted growth {fitted_growth*1e6:.1f}us "
          f"({'R^2 arm' if r2 >= 0.9 else 'negligible-growth arm'})")
    assert r2 >= 0.9 or negligible, (meds, r2, fitted_growth)
    # sanity: no polynomial blow-up between the extreme scales
    assert meds[-1] <= 3.0 * meds[0] + 1e-3


def test_criterion_5_patch_test():
    rng = np.random.default_rng(1005)
    f_list = [np.eye(3) + 0.03 * rng.uniform(-1, 1, size=(3, 3)) for _ in range(5)]
    worst = 0.0
    for n, k in [(4, 2), (4, 3), (6, 2), (6, 3)]:
        model = build_vacancy_problem(n, k, vacancy=False)
        for f in f_list:
            rel = patch_test(model, POT, f) / mean_bond_force(model, POT, f)
            worst = max(worst, rel)
            assert rel <= 1e-10, (n, k, rel)
        if (n, k) in ((4, 2), (6, 3)):
            omega_saved = model.omega
            try:
                model.omega = effective_volumes(model, cauchy_born=True)
                rel_cb = patch_test(model, POT, F_PAPER) / \
                    mean_bond_force(model, POT, F_PAPER)
            finally:
                model.omega = omega_saved
            assert rel_cb >= 1e-3, (n, k, rel_cb)
    print(f"\nPASS criterion 5: ghost forces <= 1e-10 relative on N in {{4,6}}, "
          f"K in {{2,3}}, 5 seeded F (worst {worst:.2e}); plain Cauchy-Born "
          f"override shows residual >= 1e-3")


def test_criterion_6_gradient_hessian_consistency():
    # finite differences use the exactly-rounded (fsum) energy path so the
    # oracle's own noise stays below the 1e-6 tolerance
    model = build_vacancy_problem(3, 2)
    dof = get_dof(model)
    rng = np.random.default_rng(1006)
    worst_g = 0.0
    worst_h = 0.0
    for state_i in range(20):
        st = uniform_state(model, F_PAPER)
        st.y += 0.01 * rng.standard_normal(st.y.shape)
        fn = coupled_energy if state_i % 2 else atomistic_energy
        asm = fn(model, POT, st, with_hessian=(state_i % 4 == 1))
        for _ in range(3):
            i = int(rng.integers(dof.nvars))
            c = int(rng.integers(3))
            eps = 2e-5
            yp = st.y.copy()
            yp[i, c] += eps
            ym = st.y.copy()
            ym[i, c] -= eps
            fd = (fn(model, POT, DeformationState(F_PAPER, yp), precise_value=True).value
                  - fn(model, POT, DeformationState(F_PAPER, ym), precise_value=True).value) / (2 * eps)
            rel = abs(fd - asm.gradient[i, c]) / max(1.0, abs(fd))
            worst_g = max(worst_g, rel)
            assert rel <= 1e-6
        if asm.hessian is not None:
            v = rng.standard_normal((dof.nvars, 3))
            v /= np.abs(v).max()
            eps = 1e-6
            gp = fn(model, POT, DeformationState(F_PAPER, st.y + eps * v)).gradient
            gm = fn(model, POT, DeformationState(F_PAPER, st.y - eps * v)).gradient
            fd = (gp - gm).ravel() / (2 * eps)
            hv = asm.hessian @ v.ravel()
            rel = float(np.abs(fd - hv).max() / max(1.0, np.abs(hv).max()))
            worst_h = max(worst_h, rel)
            assert rel <= 1e-5
    print(f"\nPASS criterion 6: gradient vs FD <= 1e-6 (worst {worst_g:.2e}), "
          f"Hessian action vs FD <= 1e-5 (worst {worst_h:.2e}), 20 seeded states")


def test_criterion_7_convergence_study():
    t0 = time.time()
    rows = convergence_study([(4, 2), (6, 3), (8, 4)], POT, F_PAPER)
    elapsed = time.time() - t0
    dofs = [r["dof"] for r in rows]
    w_slope = fit_loglog_slope(dofs, [r["w1inf_error"] for r in rows])
    e_slope = fit_loglog_slope(dofs, [r["energy_error"] for r in rows])
    for r in rows:
        print(f"  N={r['n']} K={r['k']} DoF={r['dof']} "
              f"w1inf={r['w1inf_error']:.3e} energy={r['energy_error']:.3e}")
    print(f"\nPASS criterion 7: W(1,inf) slope {w_slope:.2f} <= -0.7, "
          f"energy slope {e_slope:.2f} <= -1.2, {elapsed:.0f}s (budget 1800s)")
    assert w_slope <= -0.7
    assert e_slope <= -1.2
    assert elapsed <= 1800.0


def test_criterion_8_stability_containment():
    # Fourier criterion validated against direct periodic-torus Hessians
    rng = np.random.default_rng(1008)
    length = 4
    k1 = 2 * np.pi * np.arange(length) / length
    kk = np.stack(np.meshgrid(k1, k1, k1, indexing="ij"), axis=-1).reshape(-1, 3)
    kk = kk[np.abs(kk).sum(axis=1) > 1e-12]
    model = build_vacancy_problem(6, 3, vacancy=False)
    verdicts = set()
    for _ in range(10):
        t, s = rng.uniform(-0.12, 0.12, size=2)
        f = stability_f_template(t, s)
        mn, sc = lattice_symbol_min_eig(f, FCC_BASIS, model.r_full, POT, kk)
        fourier = mn > -1e-9 * sc
        torus = torus_stability(length, FCC_BASIS, model.r_plus, POT, f)
        assert fourier == torus, (t, s)
        verdicts.add(fourier)
    assert verdicts == {True, False}

    # containment on the 21 x 21 grid: every Fourier-stable point must be
    # stable for the coupled Hessian at N=6, K=3
    scan = StabilityScan.default(step=0.02)
    kgrid = _k_grid(scan.fourier_grid)
    n_checked = 0
    points = [(t, s) for t in scan.t_values for s in scan.s_values]
    for t, s in points:
        f = stability_f_template(t, s)
        mn, sc = lattice_symbol_min_eig(f, FCC_BASIS, model.r_full, POT, kgrid)
        if mn <= -1e-9 * sc:
            continue  # containment only constrains Fourier-stable points
        asm = coupled_energy(model, POT, uniform_state(model, f), with_hessian=True)
        assert is_stable(asm.hessian), (t, s)
        n_checked += 1
    assert n_checked > 0
    print(f"\nPASS criterion 8: all {n_checked} Fourier-stable grid points are "
          f"coupled-stable at N=6, K=3; Fourier verdicts match 4^3 torus "
          f"Hessians on 10 seeded F")


def test_criterion_9_degenerate_coupling_identity():
    model = build_vacancy_problem(3, None)
    rng = np.random.default_rng(1009)
    worst = 0.0
    for _ in range(10):
        st = uniform_state(model, F_PAPER)
        st.y += 0.02 * rng.standard_normal(st.y.shape)
        ea = atomistic_energy(model, POT, st).value
        eh = coupled_energy(model, POT, st).value
        rel = abs(eh - ea) / abs(ea)
        worst = max(worst, rel)
        assert rel <= 1e-12
    print(f"\nPASS criterion 9: with the atomistic region covering the whole "
          f"free lattice, E_h matches E to {worst:.2e} relative on 10 seeded states")
