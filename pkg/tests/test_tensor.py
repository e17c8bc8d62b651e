import numpy as np
import pytest

from cgc import tensor as tz
from cgc.mesh import build_bolza
from cgc import hodge
from cgc.hyper3d import fuchsian_ksurface, totally_geodesic, parallel_flow


def _rng_sym(rng, n, scale=1.0):
    A = rng.normal(size=(n, 2, 2)) * scale
    return 0.5 * (A + np.swapaxes(A, 1, 2))


def test_tensor_inner_metric_trace_identities(meshes):
    m = meshes[2]
    g = tz.TensorField(m.sigma, metric_candidate=True)
    two = tz.tensor_inner(g, g, g).values
    assert np.max(np.abs(two - 2.0)) < 1e-14
    rng = np.random.default_rng(3)
    T = tz.TensorField(_rng_sym(rng, m.face_count))
    tr = tz.tensor_inner(T, g, g).values
    direct = tz.tr2(tz.inv2(g.values) @ T.values)
    assert np.max(np.abs(tr - direct)) < 1e-13


def test_tensor_inner_bilinear_symmetric(meshes):
    m = meshes[2]
    rng = np.random.default_rng(5)
    g = tz.TensorField(m.sigma)
    A = tz.TensorField(_rng_sym(rng, m.face_count))
    B = tz.TensorField(_rng_sym(rng, m.face_count))
    ab = tz.tensor_inner(A, B, g).values
    ba = tz.tensor_inner(B, A, g).values
    assert np.max(np.abs(ab - ba)) < 1e-13
    lin = tz.tensor_inner(tz.TensorField(2.0 * A.values + B.values), B, g).values
    assert np.max(np.abs(lin - (2 * ab + tz.tensor_inner(B, B, g).values))) < 1e-12


def test_traceless_part_idempotent_and_orthogonal(meshes):
    m = meshes[2]
    g = tz.TensorField(m.sigma)
    rng = np.random.default_rng(11)
    T = tz.TensorField(_rng_sym(rng, m.face_count))
    tl = tz.traceless_part(T, g)
    tl2 = tz.traceless_part(tl, g)
    assert np.max(np.abs(tl2.values - tl.values)) < 1e-13
    inner = tz.tensor_inner(tl, g, g).values
    assert np.max(np.abs(inner)) < 1e-13
    zero = tz.traceless_part(g, g).values
    assert np.max(np.abs(zero)) < 1e-14


def test_re_q_is_sigma_traceless(meshes, bases):
    m = meshes[2]
    g = tz.TensorField(m.sigma)
    for q in bases[2]:
        for part in (q.phi, 1j * q.phi):
            T = tz.TensorField(tz.real_part_tensor(part))
            assert np.max(np.abs(tz.tensor_inner(T, g, g).values)) < 1e-12


def test_shape_operator_roundtrip_and_selfadjoint(meshes):
    m = meshes[2]
    rng = np.random.default_rng(23)
    I = tz.TensorField(m.sigma, metric_candidate=True)
    S = _rng_sym(rng, m.face_count, 0.3)
    S[:, 0, 0] += 2.0
    S[:, 1, 1] += 2.0
    B = tz.OperatorField(tz.inv2(I.values) @ S)
    II = tz.TensorField(I.values @ B.values)
    B2 = tz.shape_operator(I, II)
    assert np.max(np.abs(B2.values - B.values)) < 1e-12
    gb = I.values @ B2.values
    assert np.max(np.abs(gb - np.swapaxes(gb, 1, 2))) < 1e-12
    with pytest.raises(tz.NotPositiveDefiniteError):
        tz.shape_operator(tz.TensorField(-m.sigma), II)


def test_shape_operator_proportional_forms(meshes):
    m = meshes[2]
    h = tz.TensorField(m.sigma)
    lam = 0.7
    B = tz.shape_operator(h, tz.TensorField(lam * h.values))
    assert np.max(np.abs(B.values - lam * np.eye(2))) < 1e-13


def test_gaussian_curvature_background(meshes):
    m = meshes[3]
    K = tz.gaussian_curvature(tz.TensorField(m.sigma), m).values
    l2 = np.sqrt(np.sum((K + 1) ** 2 * m.quadrature))
    assert l2 < 0.2
    assert np.max(np.abs(K + 1)) < 0.06


def test_gaussian_curvature_scaling(meshes):
    m = meshes[2]
    K1 = tz.gaussian_curvature(tz.TensorField(m.sigma), m).values
    for lam in (0.25, 4.0):
        K = tz.gaussian_curvature(tz.TensorField(lam * m.sigma), m).values
        assert np.max(np.abs(K - K1 / lam)) < 1e-12


def test_gaussian_curvature_convergence():
    errs = []
    for L in (2, 3, 4):
        m = build_bolza(L)
        K = tz.gaussian_curvature(tz.TensorField(m.sigma), m).values
        errs.append(np.sqrt(np.sum((K + 1) ** 2 * m.quadrature)))
    assert errs[1] < errs[0] / 1.8
    assert errs[2] < errs[1] / 1.8


def test_curvature_rejects_indefinite(meshes):
    m = meshes[2]
    with pytest.raises(tz.NotPositiveDefiniteError):
        tz.gaussian_curvature(tz.TensorField(-m.sigma), m)


def test_codazzi_residual_trivial_cases(meshes):
    m = meshes[2]
    sig = tz.TensorField(m.sigma)
    lam_id = tz.OperatorField(0.5 * np.broadcast_to(np.eye(2), (m.face_count, 2, 2)).copy())
    assert tz.codazzi_residual(sig, lam_id, m) < 1e-10
    fk = fuchsian_ksurface(-0.75, m)
    assert tz.codazzi_residual(fk.I, fk.B, m) < 1e-10


def test_codazzi_residual_decreases_on_holomorphic_data(bases, meshes):
    vals = []
    for L in (3, 4):
        m = meshes[L]
        q = hodge.restrict_qdiff(bases[4][0], m) if L < 4 else bases[4][0]
        B = tz.OperatorField(tz.inv2(m.sigma) @ tz.real_part_tensor(q.phi))
        vals.append(tz.codazzi_residual(tz.TensorField(m.sigma), B, m))
    assert vals[1] < vals[0] / 1.5


def test_divergence_identity_homogeneous(meshes):
    m = meshes[3]
    fk = fuchsian_ksurface(-0.5, m)
    assert tz.divergence_identity_residual(fk.I, fk.II, m) < 1e-12
    for rho in (0.2, 0.5, 1.0):
        fl = parallel_flow(totally_geodesic(m), rho)
        assert tz.divergence_identity_residual(fl.I, fl.II, m) < 1e-12


def test_divergence_identity_rejects_bad_curvature(meshes):
    m = meshes[2]
    I = tz.TensorField(m.sigma)
    II = tz.TensorField(tz.real_part_tensor(np.full(m.face_count, 0.1 + 0j)))
    with pytest.raises((ValueError, tz.NotPositiveDefiniteError)):
        tz.divergence_identity_residual(I, II, m)


def test_scalar_field_rejects_nan():
    with pytest.raises(ValueError):
        tz.ScalarField(np.array([1.0, np.nan]))
