import numpy as np
import pytest

from cgc import hodge, wolf, tensor as tz
from cgc.mesh import build_bolza
from cgc.hyper3d import fuchsian_ksurface


def _zero_q(mesh):
    return hodge.QuadraticDifferential(np.zeros(mesh.face_count, complex), mesh)


def test_fuchsian_solve_returns_background(meshes):
    m = meshes[3]
    h, info = wolf.solve_conformal_factor(m, _zero_q(m))
    assert info.residual < 1e-8
    assert np.max(np.abs(info.e - 1.0)) < 0.25
    # e -> 1 under refinement
    h4, info4 = wolf.solve_conformal_factor(meshes[4], _zero_q(meshes[4]))
    assert np.max(np.abs(info4.e - 1.0)) < 0.5 * np.max(np.abs(info.e - 1.0))
    K = tz.gaussian_curvature(h, m).values
    assert np.sqrt(np.sum((K + 1) ** 2 * m.quadrature)) < 1e-7


def test_small_q_converges_quickly(meshes, bases):
    m = meshes[3]
    q = 0.05 * bases[3][0]
    h, info = wolf.solve_conformal_factor(m, q)
    assert info.iterations <= 12
    assert info.residual < 1e-6


def test_uniqueness_two_initializations(meshes, bases):
    m = meshes[3]
    q = 0.05 * bases[3][1]
    h1, _ = wolf.solve_conformal_factor(m, q, tol=1e-11)
    e2 = 1.0 + 4.0 * q.sigma_norm()
    h2, _ = wolf.solve_conformal_factor(m, q, e0=e2, tol=1e-11)
    assert np.max(np.abs(h1.values - h2.values)) < 1e-8


def test_opposite_hopf_gives_opposite_traceless(meshes, bases):
    m = meshes[3]
    sig = tz.TensorField(m.sigma)
    q = 0.08 * bases[3][2]
    hp = wolf.solve_hyperbolic(m, q)
    hm = wolf.solve_hyperbolic(m, hodge.QuadraticDifferential(-q.phi, m))
    tp = tz.traceless_part(hp, sig).values
    tm = tz.traceless_part(hm, sig).values
    scale = np.max(np.abs(tp))
    assert np.max(np.abs(tp + tm)) < 1e-12 * max(scale, 1.0)


def test_positivity_guard():
    m = build_bolza(1)
    basis, _ = hodge.holomorphic_qd_basis(m)
    q = 0.05 * basis[0]
    with pytest.raises(wolf.PositivityLossError):
        wolf.solve_conformal_factor(m, q, e0=np.zeros(m.face_count))


def test_labourie_identity_and_roundtrip(meshes):
    m = meshes[2]
    rng = np.random.default_rng(17)
    h = tz.TensorField(m.sigma, metric_candidate=True)
    assert np.max(np.abs(wolf.labourie_operator(h, h).values - np.eye(2))) < 1e-13
    # synthetic h-self-adjoint positive det-1 operator
    S = rng.normal(size=(m.face_count, 2, 2)) * 0.2
    S = 0.5 * (S + np.swapaxes(S, 1, 2))
    S[:, 0, 0] += 1.5
    S[:, 1, 1] += 1.5
    W = tz.inv2(h.values) @ S
    b = W / np.sqrt(tz.det2(W))[:, None, None]
    hstar = tz.TensorField(np.einsum("fji,fjk,fkl->fil", b, h.values, b))
    b2 = wolf.labourie_operator(h, hstar)
    assert np.max(np.abs(b2.values - b)) < 1e-12
    assert np.max(np.abs(tz.det2(b2.values) - 1.0)) < 1e-10
    # hStar = h(b., b.) is reproduced exactly by construction
    back = np.einsum("fji,fjk,fkl->fil", b2.values, h.values, b2.values)
    assert np.max(np.abs(back - hstar.values)) < 1e-12


def test_labourie_rejects_indefinite(meshes):
    m = meshes[2]
    h = tz.TensorField(m.sigma)
    with pytest.raises(tz.NotPositiveDefiniteError):
        wolf.labourie_operator(h, tz.TensorField(-m.sigma))


def test_reconstruct_fuchsian_closed_form(meshes):
    m = meshes[3]
    k = -0.75
    point = wolf.ConfCotangentPoint(m, _zero_q(m), k)
    surf = wolf.reconstruct_ksurface(point)
    ref = fuchsian_ksurface(k, m)
    rel = np.max(np.abs(surf.I.values - ref.I.values)) / np.max(np.abs(ref.I.values))
    assert rel < 0.25  # conformal-factor discretization, decreasing with level
    assert np.max(np.abs(surf.B.values - 0.5 * np.eye(2))) < 1e-9
    assert np.max(np.abs(tz.det2(surf.pair.b.values) - 1.0)) < 1e-12


def test_reconstruct_rejects_bad_k(meshes, bases):
    with pytest.raises(ValueError):
        wolf.ConfCotangentPoint(meshes[2], bases[2][0], 0.5)


def test_reconstruct_postconditions(end_cache):
    rep = end_cache(3, 0.1, 0, -0.5)
    assert rep["curvatureResidual"] < 1e-6
    assert rep["gaussResidual"] < 1e-6
    assert rep["conformalityResidual"] < 1e-3
    surf = rep["surface"]
    assert surf.cayley_hamilton_defect() < 1e-12
    assert tz.is_positive_definite(surf.II.values)


def test_area_forms_ratio(end_cache):
    # area of II equals sqrt(k+1) times area of I
    rep = end_cache(3, 0.1, 0, -0.5)
    surf = rep["surface"]
    k = rep["k"]
    m = surf.mesh
    aI = m.integrate_exact(np.ones(m.face_count), surf.I.values)
    aII = m.integrate_exact(np.ones(m.face_count), surf.II.values)
    assert abs(aII - np.sqrt(k + 1.0) * aI) / aII < 1e-3


def test_gauss_codazzi_residuals_decrease(end_cache):
    r2 = end_cache(2, 0.05, 0, -0.5)
    r3 = end_cache(3, 0.05, 0, -0.5)
    r4 = end_cache(4, 0.05, 0, -0.5)
    assert r4["codazziResidual"] < r3["codazziResidual"]
    assert r3["codazziResidual"] < r2["codazziResidual"]
    assert r4["eq21Residual"] < r3["eq21Residual"] / 1.8
    assert r3["eq21Residual"] < r2["eq21Residual"] / 1.8


def test_divergence_identity_on_reconstruction(end_cache):
    r3 = end_cache(3, 0.05, 0, -0.5)
    r4 = end_cache(4, 0.05, 0, -0.5)
    m3, m4 = r3["surface"].mesh, r4["surface"].mesh
    d3 = tz.divergence_identity_residual(r3["surface"].I, r3["surface"].II, m3)
    d4 = tz.divergence_identity_residual(r4["surface"].I, r4["surface"].II, m4)
    assert d4 < d3


def test_j_functional_identities(meshes, end_cache):
    m = meshes[3]
    # j(h, h) = 2 Area(h) = 8 pi for the Fuchsian solve
    h, info = wolf.solve_conformal_factor(m, _zero_q(m))
    ident = tz.OperatorField(np.broadcast_to(np.eye(2), (m.face_count, 2, 2)).copy())
    pair = wolf.NormalizedPair(h, h, ident)
    j = wolf.j_functional(pair, m)
    assert abs(j - 8 * np.pi) / (8 * np.pi) < 0.02
    # symmetry and the mean-curvature identity on a solved end
    rep = end_cache(3, 0.1, 0, -0.5)
    surf, k = rep["surface"], rep["k"]
    binv = tz.OperatorField(tz.inv2(surf.pair.b.values))
    swapped = wolf.NormalizedPair(surf.pair.hStar, surf.pair.h, binv)
    j1 = wolf.j_functional(surf.pair, m)
    j2 = wolf.j_functional(swapped, m)
    assert abs(j1 - j2) / j1 < 1e-6
    assert abs(j1 + k / np.sqrt(k + 1.0) * rep["mk"]) / j1 < 1e-4


def test_psi_point_fuchsian_and_pairing(meshes):
    m = meshes[3]
    k = -0.5
    point = wolf.ConfCotangentPoint(m, _zero_q(m), k)
    surf = wolf.reconstruct_ksurface(point)
    hp = wolf.psi_point_from_surface(surf, k)
    # b = Id makes the density proportional to h itself
    pref = -np.sqrt(k + 1.0) / (2.0 * k)
    assert np.max(np.abs(hp.p.values - pref * surf.pair.h.values)) < 1e-10
    j = wolf.j_functional(surf.pair, m)
    paired = wolf.covector_pairing(hp.p, surf.pair.h, surf.pair.h, m)
    assert abs(paired - pref * j) / abs(j) < 1e-12


def test_psi_covector_finite_difference_oracle(end_cache, bases):
    rep = end_cache(3, 0.1, 0, -0.5)
    surf, k = rep["surface"], rep["k"]
    m = surf.mesh
    hp = wolf.psi_point_from_surface(surf, k)
    dh = tz.TensorField(2 * tz.real_part_tensor(bases[3][1].phi))
    lhs = wolf.covector_pairing(hp.p, dh, surf.pair.h, m)
    t = 1e-5
    Fp = wolf.length_function_value(
        tz.TensorField(surf.pair.h.values + t * dh.values), surf.pair.hStar, m)
    Fm = wolf.length_function_value(
        tz.TensorField(surf.pair.h.values - t * dh.values), surf.pair.hStar, m)
    rhs = -(np.sqrt(k + 1.0) / k) * (Fp - Fm) / (2 * t)
    assert abs(lhs - rhs) / max(abs(rhs), 1e-12) < 1e-3
