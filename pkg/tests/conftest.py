import numpy as np
import pytest

from cgc.mesh import build_bolza
from cgc import hodge, wolf


@pytest.fixture(scope="session")
def meshes():
    return {L: build_bolza(L) for L in (1, 2, 3, 4)}


@pytest.fixture(scope="session")
def bases(meshes):
    return {L: hodge.holomorphic_qd_basis(meshes[L])[0] for L in (2, 3, 4)}


@pytest.fixture(scope="session")
def fine_basis_on(meshes, bases):
    """Restriction of the refinement-4 basis to coarser levels, so that
    refinement studies compare solves of the same continuum data."""
    def get(L, j):
        if L == 4:
            return bases[4][j]
        return hodge.restrict_qdiff(bases[4][j], meshes[L])
    return get


@pytest.fixture(scope="session")
def end_cache(meshes, fine_basis_on):
    """Memoized end reconstructions keyed by (level, t, basis index, k)."""
    cache = {}

    def get(L, t, j, k):
        key = (L, round(t, 12), j, round(k, 12))
        if key not in cache:
            q = t * fine_basis_on(L, j)
            point = wolf.ConfCotangentPoint(meshes[L], q, k)
            cache[key] = wolf.end_report(point)
        return cache[key]

    return get


def l2_area_norm(mesh, values):
    return float(np.sqrt(np.sum(np.asarray(values) ** 2 * mesh.quadrature)))
