"""Triangulated fundamental octagon of the genus-2 Bolza surface.

The fundamental domain is the regular hyperbolic octagon centered at the
origin of the Poincaré disk, with corner angle 2*pi/8 so that the eight
corners project to a single smooth point of the quotient.  Opposite sides are
identified (side s with side s+4) by orientation-preserving isometries that
reverse the side direction; the eight corners then fall into one class and
the quotient complex has Euler characteristic -2.

Faces are Euclidean triangles in the global disk coordinate; every field in
this package is sampled per face in that one chart, and data crossing a side
pairing is transported with the pairing map (tensors by the real Jacobian,
quadratic differentials by the squared complex derivative).

Per-face quadrature weights are the *exact* hyperbolic areas of the geodesic
triangles (angle defect), so Gauss-Bonnet holds to roundoff at every
refinement level.  The stored background metric is the pointwise Poincaré
factor at the face centroid; `integrate` uses it with the coordinate face
area, which converges under refinement but is not exact.

Text format CGC-MESH v1 (all floats %.17g):

    CGC-MESH 1 genus=2
    V <count>          x y per line
    F <count>          i j k per line (ccw)
    P 8                sideA sideB m00 m01 m10 m11
    H 4                n e1 e2 ... (1-based edge ids, sign = direction)

A pairing line stores the SU(1,1) matrix of the map carrying sideA onto
sideB as m00+i*m01 = a, m10+i*m11 = b.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .mobius import DiskMobius, geodesic_midpoint, corner_angle, triangle_area

REFINEMENT_CAP = 8  # 8 * 4^8 faces; spec requires support for at least 6


class MeshError(Exception):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        p = self.parent
        while p[i] != i:
            p[i] = p[p[i]]
            i = p[i]
        return i

    def unite(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


class SurfaceMesh:
    """Fundamental-domain triangulation plus its quotient structure."""

    genus = 2

    def __init__(self, vertices, faces, side_vertices, side_maps, refinement,
                 homology_loops=None):
        self.vertices = np.asarray(vertices, dtype=float)
        self.faces = np.asarray(faces, dtype=np.int64)
        self.side_vertices = [np.asarray(s, dtype=np.int64) for s in side_vertices]
        self.side_maps = list(side_maps)
        self.side_partner = np.array([(s + 4) % 8 for s in range(8)], dtype=np.int64)
        self.refinement = int(refinement)
        self._cache = {}
        self._build_quotient()
        if homology_loops is None:
            self.homology_loops = [self._side_loop(i) for i in range(4)]
        else:
            self.homology_loops = [np.asarray(l, dtype=np.int64) for l in homology_loops]

    # ------------------------------------------------------------------
    # construction of the quotient structure
    # ------------------------------------------------------------------

    def _build_quotient(self):
        V = self.vertices
        F = self.faces
        nf = len(F)
        self.verts_c = V[:, 0] + 1j * V[:, 1]
        zc = self.verts_c[F]
        self.centroid = zc.mean(axis=1)
        e1 = V[F[:, 1]] - V[F[:, 0]]
        e2 = V[F[:, 2]] - V[F[:, 0]]
        self.coord_area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        if np.any(self.coord_area <= 0):
            raise MeshError("non-positively-oriented face")

        # exact hyperbolic areas and centroid-sampled Poincaré metric
        self.quadrature = triangle_area(zc[:, 0], zc[:, 1], zc[:, 2])
        lam2 = (2.0 / (1.0 - np.abs(self.centroid) ** 2)) ** 2
        self.sigma = np.zeros((nf, 2, 2))
        self.sigma[:, 0, 0] = lam2
        self.sigma[:, 1, 1] = lam2
        # ratio between exact areas and the piecewise-constant measure
        self.calibration = self.quadrature / (lam2 * self.coord_area)

        # quotient vertices: union-find over the side identifications
        uf = _UnionFind(len(V))
        n = len(self.side_vertices[0]) - 1
        for i in range(4):
            s, p = i + 4, i
            sv_s, sv_p = self.side_vertices[s], self.side_vertices[p]
            for j in range(n + 1):
                uf.unite(int(sv_s[j]), int(sv_p[n - j]))
        roots = {}
        qvert = np.empty(len(V), dtype=np.int64)
        for v in range(len(V)):
            r = uf.find(v)
            qvert[v] = roots.setdefault(r, len(roots))
        self.qvert = qvert
        self.n_qverts = len(roots)

        # edges: scan faces, then merge boundary pairs
        edge_id = {}
        eu, ev, efL, efR, epR = [], [], [], [], []
        face_edges = np.full((nf, 3), -1, dtype=np.int64)
        face_edge_sign = np.zeros((nf, 3), dtype=np.int64)
        for f in range(nf):
            a, b, c = F[f]
            for slot, (u, v) in enumerate(((b, c), (c, a), (a, b))):
                # slot m holds the edge opposite corner m
                key = (min(u, v), max(u, v))
                if key in edge_id:
                    e = edge_id[key]
                    if efR[e] != -1:
                        raise MeshError("edge with more than two faces")
                    efR[e] = f
                    face_edges[f, slot] = e
                    face_edge_sign[f, slot] = 1 if (eu[e], ev[e]) == (u, v) else -1
                else:
                    e = len(eu)
                    edge_id[key] = e
                    eu.append(int(u))
                    ev.append(int(v))
                    efL.append(f)
                    efR.append(-1)
                    epR.append(-1)
                    face_edges[f, slot] = e
                    face_edge_sign[f, slot] = 1

        # merge each side-(i) boundary edge into its side-(i+4) partner; the
        # partner face traverses the surviving edge in the reversed direction
        drop = {}
        for i in range(4):
            s, p = i + 4, i
            sv_s, sv_p = self.side_vertices[s], self.side_vertices[p]
            for j in range(n):
                ks = (min(sv_s[j], sv_s[j + 1]), max(sv_s[j], sv_s[j + 1]))
                kp = (min(sv_p[n - 1 - j], sv_p[n - j]),
                      max(sv_p[n - 1 - j], sv_p[n - j]))
                es, ep = edge_id[ks], edge_id[kp]
                if efR[es] != -1 or efR[ep] != -1:
                    raise MeshError("boundary edge is not single-faced")
                efR[es] = efL[ep]
                epR[es] = s  # pull data of the partner face through side_maps[s]
                drop[ep] = es
                fp = efL[ep]
                slots = np.where(face_edges[fp] == ep)[0]
                if len(slots) != 1:
                    raise MeshError("boundary edge slot lookup failed")
                face_edge_sign[fp, slots[0]] = -1
        keep = [e for e in range(len(eu)) if e not in drop]
        remap = np.full(len(eu), -1, dtype=np.int64)
        for new, old in enumerate(keep):
            remap[old] = new
        for old, tgt in drop.items():
            remap[old] = remap[tgt]
        self.edge_u = np.array([eu[e] for e in keep], dtype=np.int64)
        self.edge_v = np.array([ev[e] for e in keep], dtype=np.int64)
        self.edge_faceL = np.array([efL[e] for e in keep], dtype=np.int64)
        self.edge_faceR = np.array([efR[e] for e in keep], dtype=np.int64)
        self.edge_pullR = np.array([epR[e] for e in keep], dtype=np.int64)
        self.n_edges = len(keep)
        # faces on the dropped side keep sign -1: their directed edge reverses
        # under the pairing, which is exactly the stored orientation flip
        self.face_edges = remap[face_edges]
        self.face_edge_sign = face_edge_sign
        if np.any(self.edge_faceR < 0):
            raise MeshError("unmatched boundary edge")

        chi = self.n_qverts - self.n_edges + nf
        if chi != 2 - 2 * self.genus:
            raise MeshError(f"Euler characteristic {chi} != -2")

        # face adjacency with chart-transport tags
        self.face_nbr = np.full((nf, 3), -1, dtype=np.int64)
        self.face_nbr_pull = np.full((nf, 3), -1, dtype=np.int64)
        for f in range(nf):
            for slot in range(3):
                e = self.face_edges[f, slot]
                if self.edge_faceL[e] == f and self.face_edge_sign[f, slot] == 1:
                    self.face_nbr[f, slot] = self.edge_faceR[e]
                    self.face_nbr_pull[f, slot] = self.edge_pullR[e]
                else:
                    self.face_nbr[f, slot] = self.edge_faceL[e]
                    s = self.edge_pullR[e]
                    self.face_nbr_pull[f, slot] = -1 if s == -1 else self.side_partner[s]

        self._build_halfedges()

    def _build_halfedges(self):
        """Half-edge table and vertex rotation orbits (used for angles at
        identified vertices and for intersection numbers)."""
        nf = len(self.faces)
        he_edge = np.empty(3 * nf, dtype=np.int64)
        he_sign = np.empty(3 * nf, dtype=np.int64)
        for f in range(nf):
            for i in range(3):
                he_edge[3 * f + i] = self.face_edges[f, (i + 2) % 3]
                he_sign[3 * f + i] = self.face_edge_sign[f, (i + 2) % 3]
        h_plus = np.full(self.n_edges, -1, dtype=np.int64)
        h_minus = np.full(self.n_edges, -1, dtype=np.int64)
        for h in range(3 * nf):
            if he_sign[h] == 1:
                if h_plus[he_edge[h]] != -1:
                    raise MeshError("duplicate positive half-edge")
                h_plus[he_edge[h]] = h
            else:
                if h_minus[he_edge[h]] != -1:
                    raise MeshError("duplicate negative half-edge")
                h_minus[he_edge[h]] = h
        if np.any(h_plus < 0) or np.any(h_minus < 0):
            raise MeshError("incomplete half-edge pairing")
        opp = np.where(he_sign == 1, h_minus[he_edge], h_plus[he_edge])
        self.he_edge, self.he_sign, self.he_opposite = he_edge, he_sign, opp
        self.edge_h_plus, self.edge_h_minus = h_plus, h_minus

        # ccw rotation about the origin vertex of each half-edge
        nxt = np.empty(3 * nf, dtype=np.int64)
        for f in range(nf):
            for i in range(3):
                nxt[3 * f + i] = opp[3 * f + (i + 2) % 3]
        self.he_next_out = nxt
        orbit = np.full(3 * nf, -1, dtype=np.int64)
        slot = np.zeros(3 * nf, dtype=np.int64)
        orbits = []
        for h0 in range(3 * nf):
            if orbit[h0] != -1:
                continue
            cyc = []
            h = h0
            while orbit[h] == -1:
                orbit[h] = len(orbits)
                slot[h] = len(cyc)
                cyc.append(h)
                h = nxt[h]
            if h != h0:
                raise MeshError("broken vertex rotation")
            orbits.append(cyc)
        self.he_orbit, self.he_slot, self.vertex_orbits = orbit, slot, orbits
        if len(orbits) != self.n_qverts:
            raise MeshError("rotation orbits disagree with vertex identification")
        # origin corner of half-edge 3f+i is corner i of face f
        origins = self.qvert[self.faces.reshape(-1)]
        for cyc in orbits:
            if np.unique(origins[cyc]).size != 1:
                raise MeshError("orbit mixes quotient vertices")
        self.orbit_qvert = np.array([origins[c[0]] for c in orbits], dtype=np.int64)

    def _side_loop(self, i):
        """Quotient edge chain of side 4+i, positively oriented."""
        s = i + 4
        sv = self.side_vertices[s]
        key = {}
        for e in range(self.n_edges):
            key[(self.edge_u[e], self.edge_v[e])] = e
        return np.array([key[(sv[j], sv[j + 1])] for j in range(len(sv) - 1)],
                        dtype=np.int64)

    # ------------------------------------------------------------------
    # basic queries
    # ------------------------------------------------------------------

    @property
    def face_count(self) -> int:
        return len(self.faces)

    @property
    def mesh_size(self) -> float:
        """Max hyperbolic edge length of the background geometry."""
        zu = self.verts_c[self.edge_u]
        zv = self.verts_c[self.edge_v]
        t = np.abs((zu - zv) / (1.0 - np.conj(zu) * zv))
        return float(np.max(2.0 * np.arctanh(t)))

    def integrate(self, f, area_metric) -> float:
        """Sum of f * sqrt(det metric) * coordinate face area."""
        g = np.asarray(area_metric, dtype=float)
        det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] * g[:, 1, 0]
        if np.any(det <= 0) or np.any(g[:, 0, 0] <= 0):
            raise ValueError("area metric is not positive definite")
        fv = np.broadcast_to(np.asarray(f, dtype=float), (self.face_count,))
        return float(np.sum(fv * np.sqrt(det) * self.coord_area))

    def integrate_exact(self, f, area_metric) -> float:
        """Like `integrate`, but weighted so that conformal multiples of the
        background metric integrate with the exact hyperbolic face areas."""
        g = np.asarray(area_metric, dtype=float)
        det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] * g[:, 1, 0]
        if np.any(det <= 0):
            raise ValueError("area metric is not positive definite")
        fv = np.broadcast_to(np.asarray(f, dtype=float), (self.face_count,))
        return float(np.sum(fv * np.sqrt(det) * self.coord_area * self.calibration))

    def pull_map(self, side: int) -> DiskMobius:
        """Map from the chart of side `side` onto its partner side's chart."""
        return self.side_maps[side]

    # ------------------------------------------------------------------
    # serialization
    # ------------------------------------------------------------------

    def save(self, path) -> None:
        lines = [f"CGC-MESH 1 genus={self.genus}"]
        lines.append(f"V {len(self.vertices)}")
        for x, y in self.vertices:
            lines.append(f"{_fmt(x)} {_fmt(y)}")
        lines.append(f"F {len(self.faces)}")
        for i, j, k in self.faces:
            lines.append(f"{i} {j} {k}")
        lines.append("P 8")
        for s in range(8):
            m = self.side_maps[s]
            lines.append(" ".join([str(s), str(int(self.side_partner[s])),
                                   _fmt(m.a.real), _fmt(m.a.imag),
                                   _fmt(m.b.real), _fmt(m.b.imag)]))
        lines.append(f"H {len(self.homology_loops)}")
        for loop in self.homology_loops:
            lines.append(" ".join([str(len(loop))] + [str(int(e) + 1) for e in loop]))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "SurfaceMesh":
        tokens = Path(path).read_text().split("\n")
        it = iter([t for t in tokens if t.strip()])
        head = next(it).split()
        if head[0] != "CGC-MESH" or head[1] != "1":
            raise MeshError("not a CGC-MESH v1 file")
        nv = int(next(it).split()[1])
        verts = np.array([[float(w) for w in next(it).split()] for _ in range(nv)])
        nf = int(next(it).split()[1])
        faces = np.array([[int(w) for w in next(it).split()] for _ in range(nf)],
                         dtype=np.int64)
        np_ = int(next(it).split()[1])
        maps = {}
        for _ in range(np_):
            w = next(it).split()
            s = int(w[0])
            maps[s] = DiskMobius(float(w[2]) + 1j * float(w[3]),
                                 float(w[4]) + 1j * float(w[5]))
        nh = int(next(it).split()[1])
        loops = []
        for _ in range(nh):
            w = [int(x) for x in next(it).split()]
            loops.append(np.array([abs(e) - 1 for e in w[1:1 + w[0]]], dtype=np.int64))
        refinement = round(math.log(nf / 8.0, 4.0))
        side_vertices = _detect_sides(verts, faces)
        side_maps = [maps[s] for s in range(8)]
        return cls(verts, faces, side_vertices, side_maps, refinement, loops)


def _detect_sides(vertices, faces):
    """Recover the eight ordered side vertex lists from raw V/F data."""
    edge_faces = {}
    directed = {}
    for f, (a, b, c) in enumerate(faces):
        for u, v in ((a, b), (b, c), (c, a)):
            key = (min(u, v), max(u, v))
            edge_faces[key] = edge_faces.get(key, 0) + 1
            directed[(u, v)] = f
    succ = {}
    for (u, v), f in directed.items():
        if edge_faces[(min(u, v), max(u, v))] == 1:
            succ[u] = v
    if not succ:
        raise MeshError("mesh has no boundary; cannot recover sides")
    start = min(succ)
    walk = [start]
    v = succ[start]
    while v != start:
        walk.append(v)
        v = succ[v]
    zs = vertices[:, 0] + 1j * vertices[:, 1]
    m = len(walk)
    corners = []
    for idx, v in enumerate(walk):
        prv = walk[(idx - 1) % m]
        nxt = walk[(idx + 1) % m]
        ang = corner_angle(zs[v], zs[prv], zs[nxt])
        if ang < 2.0:
            corners.append(idx)
    if len(corners) != 8:
        raise MeshError(f"expected 8 octagon corners, found {len(corners)}")
    runs = []
    for a_i in range(8):
        i0, i1 = corners[a_i], corners[(a_i + 1) % 8]
        if i1 > i0:
            runs.append(walk[i0:i1 + 1])
        else:
            runs.append(walk[i0:] + walk[:i1 + 1])
    sides = [None] * 8
    for run in runs:
        zm = geodesic_midpoint(zs[run[0]], zs[run[-1]])
        s = int(round(np.angle(zm) / (math.pi / 4.0) - 0.5)) % 8
        if sides[s] is not None:
            raise MeshError("ambiguous side indexing")
        sides[s] = np.array(run, dtype=np.int64)
    return sides


# ----------------------------------------------------------------------
# construction and refinement
# ----------------------------------------------------------------------

def _bolza_level0():
    # corner radius of the regular octagon with corner angle pi/4
    rv = 2.0 ** (-0.25)
    verts = [(0.0, 0.0)]
    for j in range(8):
        th = j * math.pi / 4.0
        verts.append((rv * math.cos(th), rv * math.sin(th)))
    faces = [(0, 1 + j, 1 + (j + 1) % 8) for j in range(8)]
    sides = [np.array([1 + j, 1 + (j + 1) % 8], dtype=np.int64) for j in range(8)]
    zc = [complex(x, y) for x, y in verts]
    maps = [None] * 8
    for i in range(4):
        p = DiskMobius.from_segment(zc[1 + (i + 4) % 8], zc[1 + (i + 5) % 8],
                                    zc[1 + (i + 1) % 8], zc[1 + i])
        maps[i + 4] = p
        maps[i] = p.inverse()
    return np.array(verts), np.array(faces, dtype=np.int64), sides, maps


def build_bolza(refinement_level: int) -> SurfaceMesh:
    """Regular-octagon Bolza mesh after `refinement_level` 1->4 subdivisions."""
    if refinement_level < 0 or refinement_level > REFINEMENT_CAP:
        raise ValueError(f"refinement level must be in [0, {REFINEMENT_CAP}]")
    verts, faces, sides, maps = _bolza_level0()
    mesh = SurfaceMesh(verts, faces, sides, maps, 0)
    for _ in range(refinement_level):
        mesh = refine(mesh)
    return mesh


def refine(mesh: SurfaceMesh) -> SurfaceMesh:
    """Split each face 1->4 with geodesic midpoints; identifications kept."""
    if mesh.refinement + 1 > REFINEMENT_CAP:
        raise ValueError(f"refinement cap {REFINEMENT_CAP} exceeded")
    verts = list(map(tuple, mesh.vertices))
    zs = list(mesh.verts_c)
    midpoint = {}

    def mid(u, v):
        key = (min(u, v), max(u, v))
        if key not in midpoint:
            zm = complex(geodesic_midpoint(zs[u], zs[v]))
            midpoint[key] = len(verts)
            verts.append((zm.real, zm.imag))
            zs.append(zm)
        return midpoint[key]

    new_faces = []
    for a, b, c in mesh.faces:
        m1, m2, m3 = mid(a, b), mid(b, c), mid(c, a)
        new_faces.extend([(a, m1, m3), (m1, b, m2), (m3, m2, c), (m1, m2, m3)])

    new_sides = []
    for s in range(8):
        sv = mesh.side_vertices[s]
        out = [int(sv[0])]
        for j in range(len(sv) - 1):
            out.append(mid(int(sv[j]), int(sv[j + 1])))
            out.append(int(sv[j + 1]))
        new_sides.append(np.array(out, dtype=np.int64))

    return SurfaceMesh(np.array(verts), np.array(new_faces, dtype=np.int64),
                       new_sides, mesh.side_maps, mesh.refinement + 1)


def coarsen_face_field(values: np.ndarray, levels: int = 1) -> np.ndarray:
    """Restrict a per-face field to the parent mesh by averaging the four
    children of each face (children of face f sit at 4f..4f+3)."""
    out = np.asarray(values)
    for _ in range(levels):
        out = out.reshape((out.shape[0] // 4, 4) + out.shape[1:]).mean(axis=1)
    return out


# ----------------------------------------------------------------------
# homology
# ----------------------------------------------------------------------

def homology_basis(mesh: SurfaceMesh):
    """Quotient-edge chains of the four identified octagon sides."""
    return [np.array(l, dtype=np.int64) for l in mesh.homology_loops]


def _loop_passages(mesh, loop):
    """(in_slot_halfedge, out_slot_halfedge) at each quotient vertex visited."""
    hs = [int(mesh.edge_h_plus[e]) for e in loop]
    passages = []
    for j, h_out in enumerate(hs):
        h_in = hs[(j - 1) % len(hs)]
        arrive = int(mesh.he_opposite[h_in])  # outgoing slot at the vertex
        if arrive == h_out:
            continue  # backtracking step, no transversal passage
        passages.append((arrive, h_out))
    return passages


def homology_intersection_matrix(mesh: SurfaceMesh) -> np.ndarray:
    """Integer algebraic intersection numbers of the homology loops."""
    loops = mesh.homology_loops
    pas = [_loop_passages(mesh, l) for l in loops]
    n = len(loops)
    M = np.zeros((n, n), dtype=np.int64)
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            tot = 0
            for (x1, y1) in pas[a]:
                for (x2, y2) in pas[b]:
                    if mesh.he_orbit[x1] != mesh.he_orbit[x2]:
                        continue
                    m = len(mesh.vertex_orbits[mesh.he_orbit[x1]])
                    p = mesh.he_slot[x1]
                    q = (mesh.he_slot[y1] - p) % m
                    c = (mesh.he_slot[x2] - p) % m
                    d = (mesh.he_slot[y2] - p) % m
                    if 0 in (q, c, d) or len({q, c, d}) != 3:
                        raise MeshError("non-transversal loop passage")
                    if (c < q) != (d < q):
                        tot += 1 if c < q else -1
            M[a, b] = tot
    if not np.array_equal(M, -M.T):
        raise MeshError("intersection matrix is not antisymmetric")
    return M


def face_permutation_under(mesh: SurfaceMesh, phi: DiskMobius) -> np.ndarray:
    """Face permutation induced by an automorphism of the tiling (matched on
    centroids; raises if phi does not permute the faces)."""
    from scipy.spatial import cKDTree

    pts = np.stack([mesh.centroid.real, mesh.centroid.imag], axis=1)
    img = phi.apply(mesh.centroid)
    d, out = cKDTree(pts).query(np.stack([img.real, img.imag], axis=1))
    if np.max(d) > 1e-9:
        raise MeshError("map does not permute mesh faces")
    if len(set(out.tolist())) != mesh.face_count:
        raise MeshError("face matching is not a bijection")
    return out.astype(np.int64)
