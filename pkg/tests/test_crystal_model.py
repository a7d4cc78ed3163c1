import json
from fractions import Fraction

import numpy as np
import pytest

from latvol.bond_volume import len_tetra
from latvol.crystal_model import (
    FCC_BASIS,
    PSI_MAT,
    SITE_ATOM,
    SITE_DIRICHLET,
    SITE_SLAVED,
    U_MAT,
    build_annulus_mesh,
    build_vacancy_problem,
    cauchy_born_volumes,
    consistency_defects,
    free_site_count,
    load_model,
    model_to_dict,
    neighbor_set,
    save_model,
)
from latvol.lattice_geometry import chi_point


@pytest.fixture(scope="module")
def model42():
    return build_vacancy_problem(4, 2)


@pytest.fixture(scope="module")
def model42_perfect():
    return build_vacancy_problem(4, 2, vacancy=False)


def test_u_psi_inverse_pair():
    assert np.array_equal(U_MAT @ PSI_MAT, 2 * np.eye(3, dtype=int))


def test_neighbor_set_counts():
    assert len(neighbor_set(FCC_BASIS, 0.5)) == 0
    near = neighbor_set(FCC_BASIS, 1.01)
    assert len(near) == 12
    d = np.linalg.norm(FCC_BASIS.physical(near), axis=1)
    assert np.allclose(d, 1.0)
    # brute-force oracle over a wide box
    full = neighbor_set(FCC_BASIS, 3.2)
    count = 0
    for i in range(-8, 9):
        for j in range(-8, 9):
            for k in range(-8, 9):
                if (i, j, k) == (0, 0, 0):
                    continue
                p = FCC_BASIS.physical(np.array([i, j, k]))
                if float(p @ p) <= 3.2**2 + 1e-12:
                    count += 1
    assert len(full) == count
    # symmetric: r in R => -r in R
    s = {tuple(r) for r in full}
    assert all(tuple(-c for c in r) in s for r in s)


def test_free_site_count_paper_value():
    assert free_site_count(16) == 125022
    assert free_site_count(16, vacancy=False) == 125023


def test_site_partition(model42):
    m = model42
    kinds = m.site_kind
    unorm = np.abs(m.sites_u).max(axis=1)
    assert ((kinds == SITE_ATOM) == (unorm <= 2 * m.k_param - 1)).all()
    assert ((kinds == SITE_DIRICHLET) == (unorm > 2 * m.n_param - 1)).all()
    assert ((kinds == SITE_SLAVED) == (
        (unorm >= 2 * m.k_param) & (unorm <= 2 * m.n_param - 1))).all()
    # vacancy removed
    assert not (m.sites_u == 0).all(axis=1).any()


def test_mesh_is_conforming(model42):
    mesh = model42.mesh
    faces = {}
    for tet in mesh.tets:
        vs = sorted(int(v) for v in tet)
        for skip in range(4):
            face = tuple(v for i, v in enumerate(vs) if i != skip)
            faces[face] = faces.get(face, 0) + 1
    assert set(faces.values()) <= {1, 2}
    k, n = mesh.k_half, mesh.n_half
    for face, cnt in faces.items():
        if cnt == 1:
            for v in face:
                up = np.abs(mesh.verts_uprime[v]).max()
                assert up >= n or np.abs(mesh.verts_uprime[v]).max() <= k + 1
                # boundary faces sit on the inner or outer cube surface
            planes = mesh.verts_uprime[list(face)]
            same = [
                len(set(planes[:, i])) == 1 and abs(planes[0, i]) in (k, n)
                for i in range(3)
            ]
            assert any(same), face


def test_mesh_tiling_chi_sum(model42):
    m = model42
    mesh = m.mesh
    rng = np.random.default_rng(11)
    tets = [tuple(tuple(int(c) for c in v) for v in mesh.tet_x_vertices(t))
            for t in range(mesh.n_tets)]
    checked = 0
    while checked < 40:
        x = tuple(Fraction(int(c), 97) for c in rng.integers(-900, 900, size=3))
        u = tuple(U_MAT @ np.array([float(c) for c in x]))
        ux = [Fraction(x[1] + x[2]), Fraction(x[0] + x[2]), Fraction(x[0] + x[1])]
        unorm = max(abs(v) for v in ux)
        if abs(unorm - 2 * m.k_param) < Fraction(1, 10) or \
           abs(unorm - 2 * m.n_param) < Fraction(1, 10):
            continue
        expected = 1.0 if 2 * m.k_param < unorm < 2 * m.n_param else 0.0
        total = sum(chi_point(t, x) for t in tets)
        assert total == pytest.approx(expected, abs=1e-12)
        checked += 1


def test_slave_interpolation_reproduces_positions(model42):
    m = model42
    slaved = m.notes["slaved_sites"]
    for i in range(0, len(slaved), max(1, len(slaved) // 25)):
        s = slaved[i]
        lo, hi = m.slave_ptr[i], m.slave_ptr[i + 1]
        verts = m.slave_vert[lo:hi]
        wts = m.slave_wt[lo:hi]
        assert wts.sum() == pytest.approx(1.0, abs=1e-14)
        pos = (wts[:, None] * m.mesh.verts_x[verts]).sum(axis=0)
        assert np.abs(pos - m.sites_x[s]).max() < 1e-12


def test_bond_classification_examples(model42):
    m = model42
    lookup = {tuple(u): i for i, u in enumerate(m.sites_u.tolist())}
    rdir = {tuple(r): i for i, r in enumerate(m.r_plus.tolist())}

    def bond_flag(u_start, r):
        s = lookup[tuple(u_start)]
        di = rdir[tuple(r)]
        mask = (m.bonds_start == s) & (m.bonds_dir == di)
        assert mask.sum() == 1
        return bool(m.bond_is_atom[mask][0])

    # deep inside the continuum annulus: u around (6,0,0), r = (0,0,1) has
    # u(r) = (1,1,0): stays well between the cubes of radius 4 and 8
    assert bond_flag((6, 0, 0), (0, 0, 1)) is False
    # endpoint in the atomistic core
    assert bond_flag((0, 0, 2), (0, 0, 1)) is True
    # bond sliding along the interface plane u1 = 4: start (4,1,1), direction
    # with u(r) = (0, *, *): r = (1,0,0) gives u(r) = (0,1,1)
    assert bond_flag((4, 1, 1), (1, 0, 0)) is True


def test_bond_partition_counts(model42):
    m = model42
    nba = np.zeros(len(m.r_plus), dtype=np.int64)
    np.add.at(nba, m.bonds_dir[m.bond_is_atom], 1)
    ntot = np.zeros(len(m.r_plus), dtype=np.int64)
    np.add.at(ntot, m.bonds_dir, 1)
    assert np.array_equal(nba + m.bc_count_per_dir, ntot)


def test_classify_bonds_matches_stored_partition(model42):
    from latvol.crystal_model import classify_bonds

    res = classify_bonds(model42)
    assert np.array_equal(res["is_atomistic"], model42.bond_is_atom)
    assert np.array_equal(res["continuum_count_per_dir"], model42.bc_count_per_dir)


def test_consistency_identity(model42, model42_perfect):
    for m in (model42, model42_perfect):
        assert np.abs(consistency_defects(m)).max() <= 1e-8


def test_omega_bounds(model42):
    m = model42
    assert m.omega.min() >= -1e-9
    # corrections only ever subtract, so omega <= Len
    rng = np.random.default_rng(5)
    for _ in range(10):
        t = int(rng.integers(m.mesh.n_tets))
        di = int(rng.integers(len(m.r_plus)))
        full = len_tetra([tuple(int(c) for c in v) for v in m.mesh.tet_x_vertices(t)],
                         tuple(int(c) for c in m.r_plus[di]))
        assert m.omega[t, di] <= full + 1e-12


def test_cauchy_born_volumes(model42):
    cb = cauchy_born_volumes(model42)
    mesh = model42.mesh
    for t in range(0, mesh.n_tets, max(1, mesh.n_tets // 17)):
        xv = mesh.tet_x_vertices(t).astype(float)
        vol = abs(np.linalg.det(xv[1:] - xv[0])) / 6.0
        assert cb[t, 0] == pytest.approx(vol, abs=1e-12)
        assert (cb[t] == cb[t, 0]).all()


def test_annulus_mesh_rejects_bad_sizes():
    with pytest.raises(ValueError):
        build_annulus_mesh(4, 4)
    with pytest.raises(ValueError):
        build_vacancy_problem(4, 5)
    with pytest.raises(ValueError):
        build_vacancy_problem(4, 1)


def test_model_serialization_roundtrip(tmp_path, model42):
    path = tmp_path / "model.json"
    save_model(model42, path)
    d = load_model(path)
    assert d["n"] == 4 and d["k"] == 2
    assert d["sites_x"] == model42.sites_x.tolist()
    assert d["mesh_tets"] == model42.mesh.tets.tolist()
    assert np.allclose(np.array(d["omega"]), model42.omega)
    with open(path) as fh:
        raw = json.load(fh)
    assert raw["format"] == "latvol-model/1"
