"""Discrete harmonic 1-forms and holomorphic quadratic differentials.

Harmonic representatives are built tree-cotree style: integer cocycles dual
to the homology basis are harmonized by subtracting the differential of a
cotangent-Laplacian potential.  Holomorphic 1-forms are assembled per face
as w dz from the reconstructed covector of alpha + i * alpha, and the
quadratic-differential basis consists of the three products of the two
holomorphic 1-forms, orthonormalized in L^2(sigma) and aligned with the
order-8 rotation of the octagon so that the basis is reproducible even
where the Gram spectrum is degenerate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import SurfaceMesh, face_permutation_under
from .mobius import DiskMobius
from . import tensor as tz


@dataclass
class OneFormField:
    """Integrated values along the positively-oriented quotient edges."""
    values: np.ndarray  # (E,)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)


@dataclass
class QuadraticDifferential:
    """Per-face dz^2 coefficient in the disk chart."""
    phi: np.ndarray  # (F,) complex
    mesh: SurfaceMesh

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=complex)

    def __add__(self, other):
        return QuadraticDifferential(self.phi + other.phi, self.mesh)

    def __sub__(self, other):
        return QuadraticDifferential(self.phi - other.phi, self.mesh)

    def __mul__(self, s):
        return QuadraticDifferential(s * self.phi, self.mesh)

    __rmul__ = __mul__

    def real_tensor(self) -> tz.TensorField:
        """Re q as a symmetric tensor field (sigma-traceless)."""
        return tz.TensorField(tz.real_part_tensor(self.phi))

    def sigma_norm(self) -> np.ndarray:
        """Pointwise |q|_sigma."""
        return np.abs(self.phi) / self.mesh.sigma[:, 0, 0]


def qd_l2_product(q1: QuadraticDifferential, q2: QuadraticDifferential) -> complex:
    """Hermitian L^2(sigma) pairing of quadratic differentials."""
    lam2 = q1.mesh.sigma[:, 0, 0]
    return complex(np.sum(q1.phi * np.conj(q2.phi) * q1.mesh.coord_area / lam2))


# ----------------------------------------------------------------------
# tree-cotree cocycles
# ----------------------------------------------------------------------

def _tree_cotree(mesh: SurfaceMesh):
    if "tree_cotree" in mesh._cache:
        return mesh._cache["tree_cotree"]
    nV, nE, nF = mesh.n_qverts, mesh.n_edges, mesh.face_count
    qv_u = mesh.qvert[mesh.edge_u]
    qv_v = mesh.qvert[mesh.edge_v]

    adj = [[] for _ in range(nV)]
    for e in range(nE):
        adj[qv_u[e]].append((qv_v[e], e))
        adj[qv_v[e]].append((qv_u[e], e))
    in_tree = np.zeros(nE, dtype=bool)
    seen = np.zeros(nV, dtype=bool)
    seen[0] = True
    queue = [0]
    while queue:
        v = queue.pop(0)
        for w, e in adj[v]:
            if not seen[w]:
                seen[w] = True
                in_tree[e] = True
                queue.append(w)
    if not seen.all():
        raise RuntimeError("vertex graph is disconnected")

    parent = np.full(nF, -1, dtype=np.int64)
    parent_edge = np.full(nF, -1, dtype=np.int64)
    used_dual = np.zeros(nE, dtype=bool)
    visited = np.zeros(nF, dtype=bool)
    visited[0] = True
    queue = [0]
    while queue:
        f = queue.pop(0)
        for slot in range(3):
            e = int(mesh.face_edges[f, slot])
            if in_tree[e] or used_dual[e]:
                continue
            g = int(mesh.face_nbr[f, slot])
            if not visited[g]:
                visited[g] = True
                parent[g] = f
                parent_edge[g] = e
                used_dual[e] = True
                queue.append(g)
    if not visited.all():
        raise RuntimeError("dual graph is disconnected")

    leftover = np.where(~in_tree & ~used_dual)[0]
    if len(leftover) != 2 * mesh.genus:
        raise RuntimeError(f"expected {2 * mesh.genus} leftover edges, "
                           f"got {len(leftover)}")
    out = dict(in_tree=in_tree, parent=parent, parent_edge=parent_edge,
               leftover=leftover)
    mesh._cache["tree_cotree"] = out
    return out


def _dual_path_to_root(mesh, tc, f, acc, sgn):
    parent, parent_edge = tc["parent"], tc["parent_edge"]
    while parent[f] != -1:
        e = int(parent_edge[f])
        p = int(parent[f])
        # crossing from f to p over edge e
        step = 1 if mesh.edge_faceL[e] == f else -1
        acc[e] += sgn * step
        f = p


def integer_cocycles(mesh: SurfaceMesh) -> np.ndarray:
    """(2g, E) closed integer cochains spanning H^1, one per leftover edge."""
    tc = _tree_cotree(mesh)
    out = np.zeros((len(tc["leftover"]), mesh.n_edges), dtype=np.int64)
    for j, e0 in enumerate(tc["leftover"]):
        z = np.zeros(mesh.n_edges, dtype=np.int64)
        z[e0] += 1  # dual step faceL -> faceR
        _dual_path_to_root(mesh, tc, int(mesh.edge_faceR[e0]), z, +1)
        _dual_path_to_root(mesh, tc, int(mesh.edge_faceL[e0]), z, -1)
        out[j] = z
    sums = face_boundary_sums(out.T.astype(float), mesh)
    if np.max(np.abs(sums)) > 1e-9:
        raise RuntimeError("cocycle is not closed")
    return out


def face_boundary_sums(values: np.ndarray, mesh: SurfaceMesh) -> np.ndarray:
    """Sum of an edge field around each face boundary (signed)."""
    v = np.asarray(values)
    return np.sum(v[mesh.face_edges] * mesh.face_edge_sign[(...,) + (None,) * (v.ndim - 1)], axis=1) \
        if v.ndim > 1 else np.sum(v[mesh.face_edges] * mesh.face_edge_sign, axis=1)


def _cotan_weights(mesh: SurfaceMesh) -> np.ndarray:
    """Cotangent weights of the coordinate triangles, each face in its own
    chart.  Harmonicity only sees the conformal structure, and the disk
    charts are conformal for it, so no metric averaging across faces (or
    pairings) is involved; this keeps the weights exactly smooth."""
    verts = mesh.vertices[mesh.faces]  # (F,3,2)
    w = np.zeros(mesh.n_edges)
    for slot in range(3):
        a = verts[:, slot]
        b = verts[:, (slot + 1) % 3]
        c = verts[:, (slot + 2) % 3]
        u = b - a
        v = c - a
        cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
        cot = np.einsum("fi,fi->f", u, v) / cross
        np.add.at(w, mesh.face_edges[:, slot], cot)
    return 0.5 * w


def _incidence(mesh: SurfaceMesh) -> sp.csr_matrix:
    rows = np.concatenate([np.arange(mesh.n_edges)] * 2)
    cols = np.concatenate([mesh.qvert[mesh.edge_u], mesh.qvert[mesh.edge_v]])
    data = np.concatenate([-np.ones(mesh.n_edges), np.ones(mesh.n_edges)])
    return sp.coo_matrix((data, (rows, cols)),
                         shape=(mesh.n_edges, mesh.n_qverts)).tocsr()


def harmonic_one_forms(mesh: SurfaceMesh):
    """Basis of 2g discrete harmonic 1-forms with integer periods.

    Returns (forms, info) where info carries the integer period matrix on
    the homology loops and the residual diagnostics.
    """
    if "harmonic_forms" in mesh._cache:
        return mesh._cache["harmonic_forms"]
    Z = integer_cocycles(mesh).astype(float)
    D = _incidence(mesh)
    w = _cotan_weights(mesh)
    W = sp.diags(w)
    L = (D.T @ W @ D).tocsc()
    # pin vertex 0 to fix the constant mode
    n = mesh.n_qverts
    keep = np.arange(1, n)
    Lred = L[keep][:, keep]
    solver = spla.splu(Lred)
    forms = []
    for z in Z:
        rhs = (D.T @ (w * z))[keep]
        u = np.zeros(n)
        u[keep] = solver.solve(rhs)
        alpha = z - D @ u
        forms.append(OneFormField(alpha))
    periods = np.array([[loop_period(f, loop) for loop in mesh.homology_loops]
                        for f in forms])
    closed = max(float(np.max(np.abs(face_boundary_sums(f.values, mesh))))
                 for f in forms)
    coclosed = max(float(np.max(np.abs(D.T @ (w * f.values)))) for f in forms)
    info = dict(period_matrix=periods, closedness=closed, coclosedness=coclosed)
    mesh._cache["harmonic_forms"] = (forms, info)
    return forms, info


def loop_period(form: OneFormField, loop: np.ndarray) -> float:
    return float(np.sum(form.values[loop]))


# ----------------------------------------------------------------------
# per-face covector reconstruction and the Hodge star
# ----------------------------------------------------------------------

def _recon_matrices(mesh: SurfaceMesh):
    if "oneform_recon" not in mesh._cache:
        F = mesh.face_count
        vecs = np.empty((F, 3, 2))
        for slot in range(3):
            a = mesh.faces[:, (slot + 1) % 3]
            b = mesh.faces[:, (slot + 2) % 3]
            vecs[:, slot] = mesh.vertices[b] - mesh.vertices[a]
        P = np.linalg.pinv(vecs)  # (F, 2, 3)
        mesh._cache["oneform_recon"] = (vecs, P)
    return mesh._cache["oneform_recon"]


def _patch_recon(mesh: SurfaceMesh):
    """Per-face affine covector fit over the edges of the face and its three
    neighbors (edge integrals transported through the pairings).  Exact on
    affine 1-forms, which kills the shape-alternation noise of the plain
    3-edge solve."""
    if "oneform_patch" in mesh._cache:
        return mesh._cache["oneform_patch"]
    from .mobius import DiskMobius

    zmid = 0.5 * (mesh.verts_c[mesh.edge_u] + mesh.verts_c[mesh.edge_v])
    zvec = mesh.verts_c[mesh.edge_v] - mesh.verts_c[mesh.edge_u]

    rows_e, rows_f, mats = [], [], []
    for f in range(mesh.face_count):
        items = {}

        def add_face(g, m):
            for slot in range(3):
                e = int(mesh.face_edges[g, slot])
                pos = zmid[e]
                vec = zvec[e]
                if m is not None:
                    pos = complex(m.inverse().apply(pos))
                    vec = vec / complex(m.deriv(pos))
                key = (e, round(pos.real, 10), round(pos.imag, 10))
                if key not in items:
                    items[key] = (e, pos, vec)

        add_face(f, None)
        for slot in range(3):
            g = int(mesh.face_nbr[f, slot])
            s = int(mesh.face_nbr_pull[f, slot])
            add_face(g, None if s < 0 else mesh.side_maps[s])
        ids = [it[0] for it in items.values()]
        pos = np.array([it[1] for it in items.values()]) - mesh.centroid[f]
        vec = np.array([it[2] for it in items.values()])
        scale = np.sqrt(np.mean(np.abs(pos) ** 2))
        pos = pos / scale
        n = len(ids)
        X = np.zeros((n, 6))
        X[:, 0] = vec.real
        X[:, 1] = vec.real * pos.real
        X[:, 2] = vec.real * pos.imag
        X[:, 3] = vec.imag
        X[:, 4] = vec.imag * pos.real
        X[:, 5] = vec.imag * pos.imag
        rows_e.append(np.array(ids, dtype=np.int64))
        rows_f.append(f)
        # unknowns are (a0, ax, ay, b0, bx, by); keep the centroid values
        mats.append(np.linalg.pinv(X, rcond=1e-10)[[0, 3]])
    maxn = max(len(r) for r in rows_e)
    E = np.zeros((mesh.face_count, maxn), dtype=np.int64)
    P = np.zeros((mesh.face_count, 2, maxn))
    for f in range(mesh.face_count):
        n = len(rows_e[f])
        E[f, :n] = rows_e[f]
        P[f, :, :n] = mats[f]
    mesh._cache["oneform_patch"] = (E, P)
    return E, P


def face_covector(form_values: np.ndarray, mesh: SurfaceMesh) -> np.ndarray:
    """(F,2) covector value at each centroid from the patch-affine fit."""
    E, P = _patch_recon(mesh)
    return np.einsum("fin,fn->fi", P, form_values[E])


def star_one_form(form: OneFormField, mesh: SurfaceMesh) -> OneFormField:
    """Conformal Hodge star, averaged back to edge integrals."""
    cov = face_covector(form.values, mesh)
    rot = np.stack([-cov[:, 1], cov[:, 0]], axis=1)
    vecs, _ = _recon_matrices(mesh)
    contrib = np.einsum("fsi,fi->fs", vecs, rot) * mesh.face_edge_sign
    out = np.zeros(mesh.n_edges)
    cnt = np.zeros(mesh.n_edges)
    np.add.at(out, mesh.face_edges, contrib)
    np.add.at(cnt, mesh.face_edges, np.ones_like(contrib))
    return OneFormField(out / cnt)


# ----------------------------------------------------------------------
# holomorphic quadratic differentials
# ----------------------------------------------------------------------

def _domain_edge_signs(mesh: SurfaceMesh):
    """dict (u,v) domain directed edge -> (quotient edge, sign)."""
    if "domain_edges" in mesh._cache:
        return mesh._cache["domain_edges"]
    out = {}
    for f in range(mesh.face_count):
        tri = mesh.faces[f]
        for slot in range(3):
            a, b = int(tri[(slot + 1) % 3]), int(tri[(slot + 2) % 3])
            e, s = int(mesh.face_edges[f, slot]), int(mesh.face_edge_sign[f, slot])
            out[(a, b)] = (e, s)
            out[(b, a)] = (e, -s)
    mesh._cache["domain_edges"] = out
    return out


def _domain_potential(mesh: SurfaceMesh, alpha: np.ndarray) -> np.ndarray:
    """Primitive of a closed 1-form on the simply-connected fundamental
    domain (vertex values; defined up to a constant)."""
    de = _domain_edge_signs(mesh)
    nv = len(mesh.vertices)
    u = np.zeros(nv)
    seen = np.zeros(nv, dtype=bool)
    adj = [[] for _ in range(nv)]
    for (a, b), (e, s) in de.items():
        adj[a].append((b, e, s))
    seen[0] = True
    queue = [0]
    while queue:
        v = queue.pop(0)
        for w, e, s in adj[v]:
            if not seen[w]:
                seen[w] = True
                u[w] = u[v] + s * alpha[e]
                queue.append(w)
    if not seen.all():
        raise RuntimeError("fundamental domain is disconnected")
    return u


def _p1_gradient(mesh: SurfaceMesh, u: np.ndarray) -> np.ndarray:
    """(F,2) exact gradient of the piecewise-linear interpolant."""
    tri = mesh.faces
    p = mesh.vertices
    g = np.zeros((mesh.face_count, 2))
    for slot in range(3):
        a = p[tri[:, (slot + 1) % 3]]
        b = p[tri[:, (slot + 2) % 3]]
        # gradient of the hat function of corner `slot`
        edge = b - a
        grad = np.stack([-edge[:, 1], edge[:, 0]], axis=1) / (2.0 * mesh.coord_area[:, None])
        g += u[tri[:, slot]][:, None] * grad
    return g


def _holomorphic_one_forms(mesh: SurfaceMesh) -> np.ndarray:
    """(2, F) complex coefficients w of the two holomorphic 1-forms w dz.

    Each harmonic form is integrated to a primitive on the (simply
    connected) fundamental domain and differentiated exactly as a P1 field,
    which is superconvergent at centroids and avoids fit noise."""
    forms, _ = harmonic_one_forms(mesh)
    W = []
    for f in forms:
        u = _domain_potential(mesh, f.values)
        cov = _p1_gradient(mesh, u)
        W.append(cov[:, 0] - 1j * cov[:, 1])
    W = np.array(W)  # (4, F)
    gram = np.einsum("af,bf,f->ab", W, np.conj(W), mesh.coord_area)
    vals, vecs = np.linalg.eigh(gram)
    order = np.argsort(vals)[::-1]
    top = vecs[:, order[:2]]
    out = np.einsum("ja,jf->af", np.conj(top), W)
    for i in range(2):
        out[i] /= np.sqrt(np.sum(np.abs(out[i]) ** 2 * mesh.coord_area))
    return out


def smooth_qdiff_field(phi: np.ndarray, mesh: SurfaceMesh) -> np.ndarray:
    """One pass of local quadratic-fit recovery (value of the transported
    two-ring fit at the centroid); removes the rough component of FEM-grade
    fields without touching the smooth part beyond O(h^3)."""
    st = tz._build_stencil(mesh)
    pulled = phi[st["face"]] * st["w"] ** 2
    coeff = np.einsum("fkn,fn->fk", st["P"], pulled)
    # the fit lives in the per-face normal chart; undo the chart factor
    return coeff[:, 0] / st["w"][:, 0] ** 2


def holomorphic_qd_basis(mesh: SurfaceMesh):
    """Three L^2(sigma)-orthonormal holomorphic quadratic differentials.

    Returns (basis, info); info reports the Gram condition number, the
    rotation eigenvalues used for alignment, and holomorphy residuals.
    """
    if "qd_basis" in mesh._cache:
        return mesh._cache["qd_basis"]
    from .mesh import REFINEMENT_CAP, coarsen_face_field, refine

    # solve the harmonic problem one level finer and restrict the smoothed
    # products: the restriction averages out the first-order FEM gradient
    # noise and roughly squares the holomorphy quality of the basis
    if mesh.refinement < REFINEMENT_CAP:
        src = refine(mesh)
        w = _holomorphic_one_forms(src)
        prods = np.array([
            coarsen_face_field(smooth_qdiff_field(w[0] * w[0], src)),
            coarsen_face_field(smooth_qdiff_field(w[0] * w[1], src)),
            coarsen_face_field(smooth_qdiff_field(w[1] * w[1], src)),
        ])
    else:
        w = _holomorphic_one_forms(mesh)
        prods = np.array([smooth_qdiff_field(w[0] * w[0], mesh),
                          smooth_qdiff_field(w[0] * w[1], mesh),
                          smooth_qdiff_field(w[1] * w[1], mesh)])  # (3, F)
    lam2 = mesh.sigma[:, 0, 0]
    wt = mesh.coord_area / lam2
    gram = np.einsum("af,bf,f->ab", prods, np.conj(prods), wt)
    vals, vecs = np.linalg.eigh(gram)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    if vals[-1] <= 1e-12 * vals[0]:
        raise RuntimeError("quadratic-differential products are rank deficient")
    ortho = np.einsum("ja,jf->af", np.conj(vecs), prods)
    ortho /= np.sqrt(vals)[:, None]

    # align with the order-8 rotation so the basis is canonical even where
    # the Gram spectrum is symmetric-degenerate; each aligned element picks
    # up a -1 under a power of the rotation, which later symmetric-point
    # checks rely on
    perm = face_permutation_under(mesh, DiskMobius.rotation(np.pi / 4.0))
    om2 = np.exp(1j * np.pi / 2.0)
    rot = ortho[:, perm] * om2
    U = np.einsum("af,bf,f->ab", rot, np.conj(ortho), wt)
    evals, evecs = np.linalg.eig(U.T)
    # eigenvalues sit near {+i, -1, -i}; order by angle in (0, 2 pi) so the
    # branch cut at -1 cannot flip the ordering between refinement levels
    order = np.argsort(np.mod(np.angle(evals), 2.0 * np.pi))
    evals, evecs = evals[order], evecs[:, order]
    aligned = np.einsum("ja,jf->af", evecs, ortho)
    basis = []
    for i in range(3):
        phi = aligned[i]
        nrm = np.sqrt(np.sum(np.abs(phi) ** 2 * wt).real)
        phi = phi / nrm
        jmax = int(np.argmax(np.abs(evecs[:, i])))
        ph = evecs[jmax, i] / abs(evecs[jmax, i])
        basis.append(QuadraticDifferential(phi / ph, mesh))
    info = dict(
        gram=gram,
        gram_condition=float(vals[0] / vals[-1]),
        rotation_eigenvalues=evals,
        holomorphy=[holomorphy_residual(q) for q in basis],
    )
    mesh._cache["qd_basis"] = (basis, info)
    return basis, info


def combine_basis(coeffs, basis) -> QuadraticDifferential:
    """q = sum_j coeffs[j] * basis[j] (complex coefficients)."""
    phi = sum(c * q.phi for c, q in zip(coeffs, basis))
    return QuadraticDifferential(phi, basis[0].mesh)


def holomorphy_residual(q: QuadraticDifferential) -> float:
    """L^2 norm of the discrete dbar, measured invariantly.

    The least-squares complex derivative is taken in the per-face normal
    chart, where the hyperbolic conformal factor at the fit center is
    exactly 2, so |dbar q|^2_sigma = |dbar phi_loc|^2 / 2^6 against the
    exact area weights.
    """
    mesh = q.mesh
    d = tz.grad_qdiff(q.phi, mesh)
    dbar = 0.5 * (d[:, 0] + 1j * d[:, 1])
    return float(np.sqrt(np.sum(np.abs(dbar) ** 2 / 64.0 * mesh.quadrature)))


def equivariance_residual(q: QuadraticDifferential) -> float:
    """Relative mismatch of phi across the side pairings (cocycle check)."""
    mesh = q.mesh
    sel = np.where(mesh.edge_pullR >= 0)[0]
    zm = 0.5 * (mesh.verts_c[mesh.edge_u] + mesh.verts_c[mesh.edge_v])
    num, den = 0.0, 0.0
    for s in range(8):
        ss = sel[mesh.edge_pullR[sel] == s]
        if not len(ss):
            continue
        m = mesh.side_maps[s]
        w = m.deriv(zm[ss])
        left = q.phi[mesh.edge_faceL[ss]]
        right = q.phi[mesh.edge_faceR[ss]] * w ** 2
        num += float(np.sum(np.abs(left - right) ** 2))
        den += float(np.sum(np.abs(left) ** 2 + np.abs(right) ** 2))
    return float(np.sqrt(num / den)) if den > 0 else 0.0


def restrict_qdiff(q: QuadraticDifferential, coarse: SurfaceMesh) -> QuadraticDifferential:
    """Restrict to a coarser mesh in the same refinement chain by averaging
    the four children of each face."""
    from .mesh import coarsen_face_field
    levels = q.mesh.refinement - coarse.refinement
    if levels < 0 or q.mesh.face_count != coarse.face_count * 4 ** levels:
        raise ValueError("meshes are not in a common refinement chain")
    return QuadraticDifferential(coarsen_face_field(q.phi, levels), coarse)
