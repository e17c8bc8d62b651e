"""Equidistant flow, volumes, variation integrands, and duality.

All per-face integrations in this module use the exact-area calibrated
measure of the mesh, so on the homogeneous (Fuchsian) family every formula
here reproduces its closed form to roundoff.  The normal-flow volume element
det(cosh(rho) Id + sinh(rho) B) is integrated in rho in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import SurfaceMesh
from .wolf import ImmersionData
from . import tensor as tz


class FocalPointError(Exception):
    """The equidistant flow hits a focal point (singular flow factor)."""


def epsilon_of_k(k: float) -> float:
    """Distance from the totally geodesic surface to the k-leaf."""
    return float(np.arctanh(np.sqrt(k + 1.0)))


def _area_weights(mesh: SurfaceMesh, gvals: np.ndarray) -> np.ndarray:
    det = tz.det2(gvals)
    if np.any(det <= 0):
        raise tz.NotPositiveDefiniteError("area metric not positive definite")
    return np.sqrt(det) * mesh.coord_area * mesh.calibration


def integrate_exact(mesh: SurfaceMesh, f, gvals: np.ndarray) -> float:
    fv = np.broadcast_to(np.asarray(f, dtype=float), (mesh.face_count,))
    return float(np.sum(fv * _area_weights(mesh, gvals)))


# ----------------------------------------------------------------------
# flow and volumes
# ----------------------------------------------------------------------

def totally_geodesic(mesh: SurfaceMesh) -> ImmersionData:
    """The B = 0 surface over the background hyperbolic metric."""
    return ImmersionData(mesh, tz.TensorField(mesh.sigma.copy()),
                         tz.OperatorField(np.zeros((mesh.face_count, 2, 2))),
                         convex=False)


def fuchsian_ksurface(k: float, mesh: SurfaceMesh) -> ImmersionData:
    """Closed-form leaf of the Fuchsian end: I = -sigma/k, B = sqrt(k+1) Id."""
    if not (-1.0 < k < 0.0):
        raise ValueError("k must lie in (-1, 0)")
    I = tz.TensorField(mesh.sigma / (-k), metric_candidate=True)
    B = tz.OperatorField(np.sqrt(k + 1.0)
                         * np.broadcast_to(np.eye(2), (mesh.face_count, 2, 2)).copy())
    return ImmersionData(mesh, I, B)


def parallel_flow(surf: ImmersionData, rho: float) -> ImmersionData:
    """Equidistant surface at signed distance rho along the normal flow."""
    c, s = np.cosh(rho), np.sinh(rho)
    Bv = surf.B.values
    M = c * np.eye(2) + s * Bv
    if np.any(tz.det2(M) <= 1e-14):
        raise FocalPointError(f"flow factor singular at rho={rho}")
    I = np.einsum("fji,fjk,fkl->fil", M, surf.I.values, M)
    B = (c * Bv + s * np.eye(2)) @ tz.inv2(M)
    convex = bool(tz.is_positive_definite(
        0.5 * (I @ B + np.swapaxes(I @ B, -1, -2))))
    return ImmersionData(surf.mesh, tz.TensorField(I, metric_candidate=True),
                         tz.OperatorField(B), convex=convex)


def _slab_antiderivative(rho, H, Ke):
    # integral of cosh^2 + cosh sinh H + sinh^2 Ke
    return (0.5 * rho + 0.25 * np.sinh(2 * rho)) \
        + H * 0.25 * np.cosh(2 * rho) \
        + Ke * (0.25 * np.sinh(2 * rho) - 0.5 * rho)


def slab_volume(surf: ImmersionData, rho0: float, rho1: float) -> float:
    """Volume swept by the normal flow of surf between rho0 and rho1."""
    lo, hi = min(rho0, rho1), max(rho0, rho1)
    for r in np.linspace(lo, hi, 17):
        c, s = np.cosh(r), np.sinh(r)
        if np.any(tz.det2(c * np.eye(2) + s * surf.B.values) <= 1e-14):
            raise FocalPointError(f"flow factor singular inside [{lo}, {hi}]")
    H, Ke = surf.H.values, surf.Ke.values
    per_face = _slab_antiderivative(rho1, H, Ke) - _slab_antiderivative(rho0, H, Ke)
    return float(np.sum(per_face * _area_weights(surf.mesh, surf.I.values)))


@dataclass
class VolumeReport:
    k: float
    epsilon: float
    V: float
    meanH: float
    W: float
    Vstar: float
    Wtilde: float
    mk: float
    cross_check: dict | None = None


def closed_form_report(k: float, chi: int) -> VolumeReport:
    """Fuchsian region between the two k-leaves, |chi(boundary)| = chi."""
    if not (-1.0 < k < 0.0):
        raise ValueError("k must lie in (-1, 0)")
    eps = epsilon_of_k(k)
    V = np.pi * chi * (0.5 * np.sinh(2 * eps) + eps)
    meanH = 2.0 * np.pi * chi * np.sinh(2 * eps)
    W = V - 0.25 * meanH
    Vstar = V - 0.5 * meanH
    Wtilde = W - np.pi * chi * eps
    return VolumeReport(k=k, epsilon=eps, V=float(V), meanH=float(meanH),
                        W=float(W), Vstar=float(Vstar), Wtilde=float(Wtilde),
                        mk=float(0.5 * meanH))


def volume_report(k: float, chi: int, mesh: SurfaceMesh | None = None) -> VolumeReport:
    """Closed-form Fuchsian volumes, cross-checked against the mesh slab
    integration when a mesh is supplied (one mesh copy covers chi = 4)."""
    rep = closed_form_report(k, chi)
    if mesh is not None:
        eps = rep.epsilon
        base = totally_geodesic(mesh)
        scale = chi / 4.0
        V_num = slab_volume(base, -eps, eps) * scale
        leaf = parallel_flow(base, eps)
        meanH_num = 2.0 * scale * integrate_exact(mesh, leaf.H.values, leaf.I.values)
        W_num = V_num - 0.25 * meanH_num
        Vstar_num = V_num - 0.5 * meanH_num
        rep.cross_check = {
            "V": V_num,
            "meanH": meanH_num,
            "W": W_num,
            "Vstar": Vstar_num,
            "Wtilde": W_num - np.pi * chi * eps,
            "V_relerr": abs(V_num - rep.V) / abs(rep.V),
            "meanH_relerr": abs(meanH_num - rep.meanH) / abs(rep.meanH),
            "W_relerr": abs(W_num - rep.W) / abs(rep.W),
            "Vstar_relerr": abs(Vstar_num - rep.Vstar) / max(abs(rep.Vstar), 1e-300),
        }
    return rep


# ----------------------------------------------------------------------
# variation integrands
# ----------------------------------------------------------------------

def schlafli_integrand(I: tz.TensorField, II: tz.TensorField,
                       dI: tz.TensorField, dH: tz.ScalarField,
                       mesh: SurfaceMesh) -> float:
    """First variation of the volume: 1/2 int (dH + 1/2 <dI, II>_I) da_I."""
    inner = tz.tensor_inner(dI, II, I).values
    return 0.5 * integrate_exact(mesh, dH.values + 0.5 * inner, I.values)


def dW_integrand(surf: ImmersionData, dII: tz.TensorField,
                 dKe: tz.ScalarField) -> float:
    """1/4 int (<dII, III - (H/2) II>_II + dKe H / (2 Ke)) da_I."""
    if np.any(surf.Ke.values <= 0):
        raise ValueError("extrinsic curvature must be positive")
    target = tz.TensorField(surf.III.values
                            - 0.5 * surf.H.values[:, None, None] * surf.II.values)
    inner = tz.tensor_inner(dII, target, surf.II).values
    dens = inner + dKe.values * surf.H.values / (2.0 * surf.Ke.values)
    return 0.25 * integrate_exact(surf.mesh, dens, surf.I.values)


def dVstar_integrand(surf: ImmersionData, dI: tz.TensorField) -> float:
    """1/4 int <dI, II - H I>_I da_I."""
    target = tz.TensorField(surf.II.values
                            - surf.H.values[:, None, None] * surf.I.values)
    inner = tz.tensor_inner(dI, target, surf.I).values
    return 0.25 * integrate_exact(surf.mesh, inner, surf.I.values)


# ----------------------------------------------------------------------
# de Sitter duality and the renormalized-volume limit
# ----------------------------------------------------------------------

def desitter_dual(surf: ImmersionData) -> ImmersionData:
    """Polar-dual surface data: I* = III, B* = B^{-1}."""
    if np.any(np.abs(tz.det2(surf.B.values)) < 1e-14):
        raise ValueError("shape operator is singular; no polar dual")
    return ImmersionData(surf.mesh,
                         tz.TensorField(surf.III.values.copy(), metric_candidate=True),
                         tz.OperatorField(tz.inv2(surf.B.values)))


def renormalized_limit(k_grid, chi: int) -> float:
    """Neville extrapolation of the corrected volumes W_k - pi |chi| eps(k)
    to k -> 0^- using the last three grid points (Fuchsian: identically 0)."""
    k_grid = list(k_grid)
    if len(k_grid) < 3:
        raise ValueError("need at least 3 grid points for extrapolation")
    if not all(-1.0 < k < 0.0 for k in k_grid):
        raise ValueError("grid must lie in (-1, 0)")
    if not all(a < b for a, b in zip(k_grid, k_grid[1:])):
        raise ValueError("grid must increase toward 0")
    ks = np.array(k_grid[-3:])
    ws = np.array([closed_form_report(k, chi).Wtilde for k in ks])
    # quadratic Neville at k = 0
    for m in range(1, 3):
        for i in range(3 - m):
            ws[i] = ((0.0 - ks[i + m]) * ws[i] - (0.0 - ks[i]) * ws[i + 1]) \
                / (ks[i] - ks[i + m])
    return float(ws[0])
