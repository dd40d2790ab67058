"""Low-level geometric kernels: exact point-triangle distance and an exact
point-to-mesh nearest query with a voxel-certified broad phase.

The broad phase only ever prunes faces that provably cannot be the nearest
one, so query results equal the brute-force all-faces minimum; that equality
is what the tests pin down.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .mesh import TriangleMesh


def point_triangle_distance(
    points: np.ndarray, tris: np.ndarray, with_closest: bool = False
):
    """Exact distance from points[i] to the (possibly degenerate) triangle tris[i].

    points: (N, 3); tris: (N, 3, 3). Interior case is the projection onto the
    supporting plane when the projection's barycentrics are nonnegative,
    otherwise the minimum over the three edge segments (which also covers
    degenerate triangles).
    """
    points = np.asarray(points, dtype=np.float64)
    tris = np.asarray(tris, dtype=np.float64)
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ab = b - a
    ac = c - a
    ap = points - a
    n = np.cross(ab, ac)
    nn = np.einsum("ij,ij->i", n, n)
    ok = nn > 0.0
    t = np.where(ok, np.einsum("ij,ij->i", ap, n) / np.where(ok, nn, 1.0), 0.0)
    proj = points - t[:, None] * n
    d00 = np.einsum("ij,ij->i", ab, ab)
    d01 = np.einsum("ij,ij->i", ab, ac)
    d11 = np.einsum("ij,ij->i", ac, ac)
    aproj = proj - a
    d20 = np.einsum("ij,ij->i", aproj, ab)
    d21 = np.einsum("ij,ij->i", aproj, ac)
    denom = d00 * d11 - d01 * d01
    # require sin^2(angle) > 1e-12: below that the supporting plane is fp
    # noise and the edge fallback is exact to within the sliver's width
    good = ok & (denom > 1e-12 * d00 * d11)
    denom_safe = np.where(good, denom, 1.0)
    v = (d11 * d20 - d01 * d21) / denom_safe
    w = (d00 * d21 - d01 * d20) / denom_safe
    inside = good & (v >= 0.0) & (w >= 0.0) & (v + w <= 1.0)

    best = np.full(len(points), np.inf)
    if with_closest:
        closest = np.zeros_like(points)
    plane_dist = np.abs(t) * np.sqrt(np.where(ok, nn, 0.0))
    best = np.where(inside, plane_dist, best)
    if with_closest:
        closest = np.where(inside[:, None], proj, closest)

    for p0, p1 in ((a, b), (b, c), (a, c)):
        d = p1 - p0
        dd = np.einsum("ij,ij->i", d, d)
        s = np.einsum("ij,ij->i", points - p0, d) / np.where(dd > 0.0, dd, 1.0)
        s = np.clip(np.where(dd > 0.0, s, 0.0), 0.0, 1.0)
        q = p0 + s[:, None] * d
        dist = np.linalg.norm(points - q, axis=1)
        better = dist < best
        best = np.where(better, dist, best)
        if with_closest:
            closest = np.where(better[:, None], q, closest)

    if with_closest:
        return best, closest
    return best


class _FaceTable:
    """Per-face constants for the squared point-triangle distance kernel.

    The plane projection never has to be formed explicitly: with a unit
    normal n̂ ⟂ ab, ac, the barycentric dots of the projected point equal
    ap·ab and ap·ac directly, so one pair evaluation needs only four fresh
    dot products (ap·ab, ap·ac, ap·n̂, ap·ap); everything else is a gather
    of face constants. Degenerate faces disable the interior case and fall
    back to the (clamped) edge segments, which handle zero-length edges.
    """

    def __init__(self, tris: np.ndarray):
        tris = np.asarray(tris, dtype=np.float64)
        a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
        ab = b - a
        ac = c - a
        n = np.cross(ab, ac)
        nn = np.einsum("ij,ij->i", n, n)
        d00 = np.einsum("ij,ij->i", ab, ab)
        d01 = np.einsum("ij,ij->i", ab, ac)
        d11 = np.einsum("ij,ij->i", ac, ac)
        denom = d00 * d11 - d01 * d01
        # same conditioning rule as point_triangle_distance
        valid = (nn > 0.0) & (denom > 1e-12 * d00 * d11)
        tiny = np.finfo(np.float64).tiny
        nhat = n / np.sqrt(np.maximum(nn, tiny))[:, None]
        nhat[~valid] = 0.0
        self.ax, self.ay, self.az = a[:, 0].copy(), a[:, 1].copy(), a[:, 2].copy()
        self.abx, self.aby, self.abz = ab[:, 0].copy(), ab[:, 1].copy(), ab[:, 2].copy()
        self.acx, self.acy, self.acz = ac[:, 0].copy(), ac[:, 1].copy(), ac[:, 2].copy()
        self.nx, self.ny, self.nz = nhat[:, 0].copy(), nhat[:, 1].copy(), nhat[:, 2].copy()
        self.d00 = np.maximum(d00, tiny)
        self.d01 = d01
        self.d11 = np.maximum(d11, tiny)
        self.inv_den = np.where(valid, 1.0 / np.where(valid, denom, 1.0), 0.0)
        self.ee = np.maximum(d00 - 2.0 * d01 + d11, tiny)  # |ac-ab|^2
        self.eab = d01 - d00  # ab·(ac-ab)
        self.valid = valid

    def d2(self, px, py, pz, fi):
        """Exact squared distances from points to faces fi (elementwise)."""
        apx = px - self.ax[fi]
        apy = py - self.ay[fi]
        apz = pz - self.az[fi]
        d20 = apx * self.abx[fi] + apy * self.aby[fi] + apz * self.abz[fi]
        d21 = apx * self.acx[fi] + apy * self.acy[fi] + apz * self.acz[fi]
        t = apx * self.nx[fi] + apy * self.ny[fi] + apz * self.nz[fi]
        app = apx * apx + apy * apy + apz * apz
        inv = self.inv_den[fi]
        v = (self.d11[fi] * d20 - self.d01[fi] * d21) * inv
        w = (self.d00[fi] * d21 - self.d01[fi] * d20) * inv
        inside = (v >= 0.0) & (w >= 0.0) & (v + w <= 1.0) & self.valid[fi]
        d00 = self.d00[fi]
        d11 = self.d11[fi]
        s0 = np.clip(d20 / d00, 0.0, 1.0)
        e0 = app - s0 * (2.0 * d20 - s0 * d00)
        s1 = np.clip(d21 / d11, 0.0, 1.0)
        e1 = app - s1 * (2.0 * d21 - s1 * d11)
        ee = self.ee[fi]
        be = (d21 - d20) - self.eab[fi]  # bp·(ac-ab) with bp = ap - ab
        bpp = app - 2.0 * d20 + d00
        s2 = np.clip(be / ee, 0.0, 1.0)
        e2 = bpp - s2 * (2.0 * be - s2 * ee)
        edge = np.minimum(e0, np.minimum(e1, e2))
        return np.where(inside, t * t, np.maximum(edge, 0.0))

    def d2_block(self, px, py, pz, faces: np.ndarray):
        """d2 for every (point, face) pair as an (m, s) matrix.

        Bit-identical to d2; face constants are gathered once per call as
        (s,) rows and broadcast, so per-pair work is pure elementwise flops.
        """
        col = (slice(None), None)
        apx = px[col] - self.ax[faces]
        apy = py[col] - self.ay[faces]
        apz = pz[col] - self.az[faces]
        d20 = apx * self.abx[faces] + apy * self.aby[faces] + apz * self.abz[faces]
        d21 = apx * self.acx[faces] + apy * self.acy[faces] + apz * self.acz[faces]
        t = apx * self.nx[faces] + apy * self.ny[faces] + apz * self.nz[faces]
        app = apx * apx + apy * apy + apz * apz
        inv = self.inv_den[faces]
        v = (self.d11[faces] * d20 - self.d01[faces] * d21) * inv
        w = (self.d00[faces] * d21 - self.d01[faces] * d20) * inv
        inside = (v >= 0.0) & (w >= 0.0) & (v + w <= 1.0) & self.valid[faces]
        d00 = self.d00[faces]
        d11 = self.d11[faces]
        s0 = np.clip(d20 / d00, 0.0, 1.0)
        e0 = app - s0 * (2.0 * d20 - s0 * d00)
        s1 = np.clip(d21 / d11, 0.0, 1.0)
        e1 = app - s1 * (2.0 * d21 - s1 * d11)
        ee = self.ee[faces]
        be = (d21 - d20) - self.eab[faces]
        bpp = app - 2.0 * d20 + d00
        s2 = np.clip(be / ee, 0.0, 1.0)
        e2 = bpp - s2 * (2.0 * be - s2 * ee)
        edge = np.minimum(e0, np.minimum(e1, e2))
        return np.where(inside, t * t, np.maximum(edge, 0.0))

    def d2_one(self, px, py, pz, f: int):
        """Same kernel against the single face f, constants as scalars.

        Bit-identical to d2 (same IEEE operations in the same order) but with
        no gathers; meant for batch-of-points x few-faces loops.
        """
        apx = px - self.ax[f]
        apy = py - self.ay[f]
        apz = pz - self.az[f]
        d20 = apx * self.abx[f] + apy * self.aby[f] + apz * self.abz[f]
        d21 = apx * self.acx[f] + apy * self.acy[f] + apz * self.acz[f]
        app = apx * apx + apy * apy + apz * apz
        d00 = self.d00[f]
        d11 = self.d11[f]
        s0 = np.clip(d20 / d00, 0.0, 1.0)
        e0 = app - s0 * (2.0 * d20 - s0 * d00)
        s1 = np.clip(d21 / d11, 0.0, 1.0)
        e1 = app - s1 * (2.0 * d21 - s1 * d11)
        ee = self.ee[f]
        be = (d21 - d20) - self.eab[f]
        bpp = app - 2.0 * d20 + d00
        s2 = np.clip(be / ee, 0.0, 1.0)
        e2 = bpp - s2 * (2.0 * be - s2 * ee)
        out = np.minimum(e0, np.minimum(e1, e2))
        np.maximum(out, 0.0, out=out)
        if self.valid[f]:
            t = apx * self.nx[f] + apy * self.ny[f] + apz * self.nz[f]
            inv = self.inv_den[f]
            v = (d11 * d20 - self.d01[f] * d21) * inv
            w = (d00 * d21 - self.d01[f] * d20) * inv
            inside = (v >= 0.0) & (w >= 0.0) & (v + w <= 1.0)
            out[inside] = (t * t)[inside]
        return out


def brute_force_nearest(points: np.ndarray, mesh: TriangleMesh):
    """All-faces minimum; the oracle the accelerated query must match.

    Shares the squared-distance kernel with MeshDistanceField so the equality
    is exact; the kernel itself is validated separately against
    point_triangle_distance.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    table = _FaceTable(mesh.face_corners())
    px, py, pz = points[:, 0].copy(), points[:, 1].copy(), points[:, 2].copy()
    best = np.full(len(points), np.inf)
    arg = np.zeros(len(points), dtype=np.int64)
    for f in range(mesh.n_faces):
        d = table.d2_one(px, py, pz, f)
        better = d < best
        best = np.where(better, d, best)
        arg = np.where(better, f, arg)
    return np.sqrt(best), arg


def _barycentric_lattice(depth: int) -> np.ndarray:
    """All (i/d, j/d, k/d) with i+j+k=d, as (m, 3) barycentric weights."""
    pts = []
    for i in range(depth + 1):
        for j in range(depth + 1 - i):
            pts.append((i, j, depth - i - j))
    return np.asarray(pts, dtype=np.float64) / depth


# elements per pattern-major distance block; bounds transient memory
_BLOCK_CAP = 1 << 23


class MeshDistanceField:
    """Exact nearest-triangle queries against a fixed mesh.

    Each face carries the depth-4 barycentric lattice (15 surface points) as
    representatives with covering radius longest_edge / (4*sqrt(3)): the
    lattice splits a face into scaled copies whose own longest edge is a
    quarter of the parent's, and any triangle point is within
    longest/sqrt(3) of a corner. Queries are bucketed into voxels; per
    occupied voxel a face shortlist is gathered whose certified radius
    guarantees it contains the true nearest face for every query in the
    voxel.
    """

    _LATTICE_DEPTH = 4

    def __init__(self, mesh: TriangleMesh, voxel: float | None = None):
        if mesh.n_faces == 0:
            raise ValueError("distance field needs a mesh with faces")
        self.mesh = mesh
        tris = mesh.face_corners()
        edges = np.stack(
            [
                np.linalg.norm(tris[:, 1] - tris[:, 0], axis=1),
                np.linalg.norm(tris[:, 2] - tris[:, 1], axis=1),
                np.linalg.norm(tris[:, 0] - tris[:, 2], axis=1),
            ],
            axis=1,
        )
        longest = edges.max(axis=1)
        depth = self._LATTICE_DEPTH
        self._cover_max = float(longest.max()) / (depth * np.sqrt(3.0))
        lattice = _barycentric_lattice(depth)
        reps = np.einsum("lk,fkx->flx", lattice, tris).reshape(-1, 3)
        self._rep_face = np.repeat(np.arange(mesh.n_faces), len(lattice))
        self._tree = cKDTree(reps)
        self._tris = tris
        self._table = _FaceTable(tris)
        if voxel is None:
            voxel = max(float(np.median(longest)) / 4.0, mesh.bbox_diagonal() / 1024.0)
        self._h = float(voxel)
        self._lo = mesh.vertices.min(axis=0)
        self._shortlists: dict[int, np.ndarray] = {}

    _PACK = 1 << 21

    def _voxel_keys(self, points):
        ids = np.floor((points - self._lo) / self._h).astype(np.int64) + (
            self._PACK // 2
        )
        return (ids[:, 0] * self._PACK + ids[:, 1]) * self._PACK + ids[:, 2]

    def _ensure_shortlists(self, ukeys: np.ndarray) -> None:
        missing = np.asarray(
            [k for k in ukeys.tolist() if k not in self._shortlists], dtype=np.int64
        )
        if not len(missing):
            return
        z = missing % self._PACK
        rest = missing // self._PACK
        y = rest % self._PACK
        x = rest // self._PACK
        half = self._PACK // 2
        ids = np.stack([x, y, z], axis=1) - half
        centers = self._lo + (ids + 0.5) * self._h
        half_diag = 0.5 * np.sqrt(3.0) * self._h
        min_rep = self._tree.query(centers, k=1)[0]
        radii = min_rep + 2.0 * half_diag + self._cover_max + 1e-12
        balls = self._tree.query_ball_point(centers, radii)
        for key, ids in zip(missing.tolist(), balls):
            self._shortlists[key] = np.unique(self._rep_face[ids])

    def _group_by_pattern(self, points: np.ndarray):
        """Bucket points by the face-shortlist pattern of their voxel.

        Neighbouring voxels usually share the exact same shortlist, so the
        patterns are few and the per-pattern point batches are large enough
        to amortize the scalar-constant kernel. Returns (final, bounds,
        patterns, px, py, pz): final[bounds[p]:bounds[p+1]] are the original
        indices of the points owned by patterns[p], and px/py/pz are their
        coordinates in that same grouped order.
        """
        n = len(points)
        vox = self._voxel_keys(points)
        order = np.argsort(vox, kind="stable")
        sv = vox[order]
        starts = np.empty(n, dtype=bool)
        starts[0] = True
        starts[1:] = sv[1:] != sv[:-1]
        ukeys = sv[starts]
        grp_sorted = np.cumsum(starts) - 1
        self._ensure_shortlists(ukeys)
        pat_index: dict[bytes, int] = {}
        patterns: list[np.ndarray] = []
        pat_of_group = np.empty(len(ukeys), dtype=np.int64)
        for i, key in enumerate(ukeys.tolist()):
            sl = self._shortlists[key]
            pid = pat_index.setdefault(sl.tobytes(), len(patterns))
            if pid == len(patterns):
                patterns.append(sl)
            pat_of_group[i] = pid
        pp = pat_of_group[grp_sorted]
        by_pat = np.argsort(pp, kind="stable")
        final = order[by_pat]
        bounds = np.searchsorted(pp[by_pat], np.arange(len(patterns) + 1))
        px = points[final, 0]
        py = points[final, 1]
        pz = points[final, 2]
        return final, bounds, patterns, px, py, pz

    def query(self, points: np.ndarray, with_closest: bool = False):
        """Exact (distance, face_id[, closest_point]) for each query point."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        n = len(points)
        dist = np.empty(n)
        face = np.empty(n, dtype=np.int64)
        if n == 0:
            if with_closest:
                return dist, face, np.empty((0, 3))
            return dist, face
        final, bounds, patterns, px, py, pz = self._group_by_pattern(points)
        tab = self._table
        for pid, faces in enumerate(patterns):
            lo, hi = bounds[pid], bounds[pid + 1]
            step = max(1, _BLOCK_CAP // len(faces))
            for s in range(lo, hi, step):
                e = min(hi, s + step)
                d2 = tab.d2_block(px[s:e], py[s:e], pz[s:e], faces)
                sel = final[s:e]
                # argmin keeps the first (lowest face id) minimizer, like brute
                win = np.argmin(d2, axis=1)
                dist[sel] = d2[np.arange(e - s), win]
                face[sel] = faces[win]
        np.sqrt(dist, out=dist)
        if with_closest:
            _, closest = point_triangle_distance(
                points, self._tris[face], with_closest=True
            )
            return dist, face, closest
        return dist, face

    def distances(self, points: np.ndarray) -> np.ndarray:
        """Exact nearest-surface distances only (skips face bookkeeping)."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        n = len(points)
        dist = np.empty(n)
        if n == 0:
            return dist
        final, bounds, patterns, px, py, pz = self._group_by_pattern(points)
        tab = self._table
        for pid, faces in enumerate(patterns):
            lo, hi = bounds[pid], bounds[pid + 1]
            step = max(1, _BLOCK_CAP // len(faces))
            for s in range(lo, hi, step):
                e = min(hi, s + step)
                d2 = tab.d2_block(px[s:e], py[s:e], pz[s:e], faces)
                dist[final[s:e]] = d2.min(axis=1)
        np.sqrt(dist, out=dist)
        return dist


def barycentric_coordinates(points: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of points[i] with respect to tris[i] (planar)."""
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ab, ac, ap = b - a, c - a, points - a
    d00 = np.einsum("ij,ij->i", ab, ab)
    d01 = np.einsum("ij,ij->i", ab, ac)
    d11 = np.einsum("ij,ij->i", ac, ac)
    d20 = np.einsum("ij,ij->i", ap, ab)
    d21 = np.einsum("ij,ij->i", ap, ac)
    denom = d00 * d11 - d01 * d01
    denom = np.where(denom != 0.0, denom, 1.0)
    v = (d11 * d20 - d01 * d21) / denom
    w = (d00 * d21 - d01 * d20) / denom
    return np.stack([1.0 - v - w, v, w], axis=1)


def sample_in_triangles(tris: np.ndarray, n_each: int, rng: np.random.Generator):
    """Uniform points inside each triangle: (M, n_each, 3)."""
    m = len(tris)
    r1 = np.sqrt(rng.random((m, n_each)))
    r2 = rng.random((m, n_each))
    a = tris[:, None, 0]
    b = tris[:, None, 1]
    c = tris[:, None, 2]
    return (
        (1.0 - r1)[..., None] * a
        + (r1 * (1.0 - r2))[..., None] * b
        + (r1 * r2)[..., None] * c
    )
