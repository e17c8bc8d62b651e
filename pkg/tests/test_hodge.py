import numpy as np
import pytest

from cgc import hodge, tensor as tz
from cgc.mesh import build_bolza


def test_harmonic_basis_count_and_closedness(meshes):
    m = meshes[3]
    forms, info = hodge.harmonic_one_forms(m)
    assert len(forms) == 4
    for f in forms:
        sums = hodge.face_boundary_sums(f.values, m)
        assert np.max(np.abs(sums)) < 1e-10
    assert info["coclosedness"] < 1e-10


def test_period_matrix_integer_invertible(meshes):
    m = meshes[3]
    _, info = hodge.harmonic_one_forms(m)
    P = info["period_matrix"]
    assert np.max(np.abs(P - np.round(P))) < 1e-9
    assert abs(np.linalg.det(P)) > 0.5


def test_star_squares_to_minus_one(meshes):
    m = meshes[4]
    forms, _ = hodge.harmonic_one_forms(m)
    f = forms[0]
    ss = hodge.star_one_form(hodge.star_one_form(f, m), m)
    dev = np.max(np.abs(ss.values + f.values)) / np.max(np.abs(f.values))
    assert dev < 0.2
    # and the deviation shrinks under refinement
    m2 = meshes[3]
    f2 = hodge.harmonic_one_forms(m2)[0][0]
    ss2 = hodge.star_one_form(hodge.star_one_form(f2, m2), m2)
    dev2 = np.max(np.abs(ss2.values + f2.values)) / np.max(np.abs(f2.values))
    assert dev < dev2


def test_qd_basis_size_and_gram(meshes, bases):
    basis = bases[3]
    assert len(basis) == 3
    G = np.array([[hodge.qd_l2_product(a, b) for b in basis] for a in basis])
    assert np.max(np.abs(G - np.eye(3))) < 1e-12
    _, info = hodge.holomorphic_qd_basis(meshes[3])
    evs = np.linalg.eigvalsh(info["gram"])
    assert evs.min() > 1e-3 * evs.max()


def test_holomorphy_residual_zero_and_decay(meshes, bases):
    m = meshes[3]
    q0 = hodge.QuadraticDifferential(np.zeros(m.face_count, complex), m)
    assert hodge.holomorphy_residual(q0) == 0.0
    res = {}
    for L in (2, 3, 4):
        _, info = hodge.holomorphic_qd_basis(meshes[L])
        res[L] = info["holomorphy"]
    for j in range(3):
        assert res[3][j] < res[2][j] / 1.8
        assert res[4][j] < res[3][j] / 1.8


def test_antiholomorphic_rejection(meshes, bases):
    m = meshes[4]
    for q in bases[4]:
        qc = hodge.QuadraticDifferential(np.conj(q.phi), m)
        assert hodge.holomorphy_residual(qc) > 10 * hodge.holomorphy_residual(q)


def test_basis_equivariance_cocycle(meshes, bases):
    r3 = [hodge.equivariance_residual(q) for q in bases[3]]
    r4 = [hodge.equivariance_residual(q) for q in bases[4]]
    assert max(r4) < 0.05
    assert max(r4) < max(r3)


def test_basis_re_im_traceless(meshes, bases):
    m = meshes[3]
    sig = tz.TensorField(m.sigma)
    for q in bases[3]:
        for phi in (q.phi, 1j * q.phi):
            T = tz.TensorField(tz.real_part_tensor(phi))
            tr = tz.tensor_inner(T, sig, sig).values
            assert np.max(np.abs(tr)) < 1e-12


def test_rotation_alignment_eigenvalues(meshes):
    _, info = hodge.holomorphic_qd_basis(meshes[3])
    evs = sorted(np.round(np.mod(np.angle(info["rotation_eigenvalues"]),
                                 2 * np.pi) / np.pi, 3))
    assert evs == [0.5, 1.0, 1.5]


def test_restrict_qdiff_requires_chain(meshes, bases):
    with pytest.raises(ValueError):
        hodge.restrict_qdiff(bases[3][0], meshes[4])


def test_combine_basis_linearity(meshes, bases):
    basis = bases[2]
    q = hodge.combine_basis([1.0, 2.0j, -0.5], basis)
    ref = basis[0].phi + 2j * basis[1].phi - 0.5 * basis[2].phi
    assert np.max(np.abs(q.phi - ref)) == 0.0
