"""Numerical laboratory for constant-curvature foliations of hyperbolic ends
over the genus-2 Bolza surface."""

from .mesh import (SurfaceMesh, build_bolza, refine, homology_basis,
                   homology_intersection_matrix, coarsen_face_field)
from .tensor import (TensorField, OperatorField, ScalarField, shape_operator,
                     tensor_inner, traceless_part, gaussian_curvature,
                     codazzi_residual, divergence_identity_residual)
from .hodge import (OneFormField, QuadraticDifferential, harmonic_one_forms,
                    holomorphic_qd_basis, holomorphy_residual)
from .wolf import (NormalizedPair, ConfCotangentPoint, HypCotangentPoint,
                   ImmersionData, solve_hyperbolic, labourie_operator,
                   reconstruct_ksurface, psi_point, j_functional, end_report)
from .hyper3d import (VolumeReport, parallel_flow, fuchsian_ksurface,
                      slab_volume, volume_report, schlafli_integrand,
                      dW_integrand, dVstar_integrand, desitter_dual,
                      renormalized_limit)
from .symplectic import (BeltramiField, beltrami_from_variation,
                         pairing_beltrami, pairing_tensor, liouville_phi,
                         liouville_psi, mk, exactness_check,
                         hamiltonian_check_fuchsian)

__version__ = "0.1.0"
