import numpy as np
import pytest

from cgc.mesh import (build_bolza, refine, homology_basis,
                      homology_intersection_matrix, SurfaceMesh,
                      REFINEMENT_CAP, coarsen_face_field)
from cgc.mobius import hyperbolic_distance


def test_euler_characteristic_all_levels(meshes):
    for L, m in meshes.items():
        assert m.n_qverts - m.n_edges + m.face_count == -2


def test_refinement_cap_documented():
    assert REFINEMENT_CAP >= 6
    with pytest.raises(ValueError):
        build_bolza(REFINEMENT_CAP + 1)


def test_side_pairing_involution(meshes):
    m = meshes[2]
    for s in range(8):
        assert m.side_partner[m.side_partner[s]] == s
        assert m.side_partner[s] != s


def test_side_maps_carry_sides(meshes):
    m = meshes[2]
    n = len(m.side_vertices[0]) - 1
    for i in range(4):
        s, p = i + 4, i
        img = m.side_maps[s].apply(m.verts_c[m.side_vertices[s]])
        tgt = m.verts_c[m.side_vertices[p]][::-1]
        assert np.max(np.abs(img - tgt)) < 1e-12


def test_face_split_and_chi_under_refine():
    m0 = build_bolza(1)
    m1 = refine(m0)
    assert m1.face_count == 4 * m0.face_count
    assert m1.n_qverts - m1.n_edges + m1.face_count == -2


def test_exact_quadrature_total_area(meshes):
    for L, m in meshes.items():
        assert abs(np.sum(m.quadrature) - 4 * np.pi) < 1e-11


def test_integrate_gauss_bonnet_and_scaling(meshes):
    m = meshes[3]
    one = np.ones(m.face_count)
    a1 = m.integrate(one, m.sigma)
    assert abs(a1 - 4 * np.pi) < 0.1
    assert m.integrate(np.zeros(m.face_count), m.sigma) == 0.0
    a4 = m.integrate(one, 4 * m.sigma)
    assert abs(a4 - 4 * a1) < 1e-12
    with pytest.raises(ValueError):
        m.integrate(one, -m.sigma)


def test_integrate_area_error_decreases_monotonically():
    errs = []
    for L in range(1, 5):
        m = build_bolza(L)
        errs.append(abs(m.integrate(np.ones(m.face_count), m.sigma) - 4 * np.pi))
    for a, b in zip(errs, errs[1:]):
        assert b < a


def test_corner_angle_sum_is_2pi():
    m = build_bolza(3)
    # accumulate hyperbolic angles at the corner orbit via the quadrature
    # construction: total angle defect must vanish at every quotient vertex
    from cgc.mobius import corner_angle
    zc = m.verts_c[m.faces]
    angles = np.stack([corner_angle(zc[:, i], zc[:, (i + 1) % 3], zc[:, (i + 2) % 3])
                       for i in range(3)], axis=1)
    sums = np.zeros(m.n_qverts)
    np.add.at(sums, m.qvert[m.faces], angles)
    assert np.max(np.abs(sums - 2 * np.pi)) < 1e-12


def test_serialization_roundtrip_bitexact(tmp_path, meshes):
    m = meshes[2]
    path = tmp_path / "m.mesh"
    m.save(path)
    m2 = SurfaceMesh.load(path)
    assert np.array_equal(m.vertices, m2.vertices)
    assert np.array_equal(m.faces, m2.faces)
    for s in range(8):
        assert m.side_maps[s].a == m2.side_maps[s].a
        assert m.side_maps[s].b == m2.side_maps[s].b
    for l1, l2 in zip(m.homology_loops, m2.homology_loops):
        assert np.array_equal(l1, l2)
    assert np.array_equal(m.qvert, m2.qvert)
    # second round trip is byte-identical
    path2 = tmp_path / "m2.mesh"
    m2.save(path2)
    assert path.read_bytes() == path2.read_bytes()


def test_homology_basis_four_closing_loops(meshes):
    m = meshes[2]
    loops = homology_basis(m)
    assert len(loops) == 4
    for loop in loops:
        heads = m.qvert[m.edge_v[loop]]
        tails = m.qvert[m.edge_u[np.roll(loop, -1)]]
        assert np.array_equal(heads, tails)


def test_homology_intersection_unimodular(meshes):
    for L in (1, 2, 3):
        M = homology_intersection_matrix(meshes[L])
        assert np.array_equal(M, -M.T)
        assert round(float(np.linalg.det(M.astype(float)))) == 1


def test_mesh_refinement_midpoints_on_geodesics(meshes):
    # boundary subdivision points stay on the side geodesics: the pairing
    # maps keep identifying them exactly
    m = meshes[3]
    n = len(m.side_vertices[0]) - 1
    for i in range(4):
        s = i + 4
        img = m.side_maps[s].apply(m.verts_c[m.side_vertices[s]])
        tgt = m.verts_c[m.side_vertices[i]][::-1]
        assert np.max(np.abs(img - tgt)) < 1e-12


def test_coarsen_face_field_roundtrip(meshes):
    m3, m4 = meshes[3], meshes[4]
    vals = np.arange(m4.face_count, dtype=float)
    c = coarsen_face_field(vals)
    assert len(c) == m3.face_count
    assert c[0] == np.mean(vals[:4])


def test_mesh_size_halves(meshes):
    assert meshes[3].mesh_size < 0.6 * meshes[2].mesh_size
