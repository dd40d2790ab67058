"""Greedy mesh assembly from labeled candidate triangles.

Surviving candidates are ordered by (bin, longest edge, vertex triple) and
visited once; each is accepted unless it intersects an already-accepted face
or would push an edge past two incident faces. The intersection predicate is
shared-simplex aware: triangles may touch along a common vertex or edge, any
other contact counts as intersecting (closed sets, so exact touching is
conservatively rejected).
"""

from __future__ import annotations

import csv
import math
from array import array
from dataclasses import dataclass

import numpy as np

from .candidates import CandidateSet
from .mesh import TriangleMesh

# relative tolerance: predicates run at 1e-9 x bounding-box diagonal
EPS_SCALE = 1e-9

# Plane-separation quick rejects in merge() run at _QUICK_SCALE x eps. The
# margin keeps them conservative against the eps-fattened exact predicates:
# reported contact implies a point within ~2.5 eps of both triangles, which
# cannot happen across a plane cleared by 1e3 eps on one side.
_QUICK_SCALE = 1e3


# -- scalar 3-vector helpers (plain tuples: the inner loop runs per face pair,
#    where numpy's per-call overhead dominates the actual arithmetic) --------


def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _cross(a, b):
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _norm(a):
    return math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])


def _unit_normal(tri, eps):
    """Unit normal of a triangle given as three tuples; None if degenerate.

    Degenerate means the apex height over the longest edge is at most eps:
    below that the plane orientation is numerically meaningless.
    """
    e1 = _sub(tri[1], tri[0])
    e2 = _sub(tri[2], tri[0])
    n = _cross(e1, e2)
    ln = _norm(n)
    longest = max(_norm(e1), _norm(e2), _norm(_sub(tri[2], tri[1])))
    if ln <= eps * longest or longest == 0.0:
        return None
    return (n[0] / ln, n[1] / ln, n[2] / ln)


def _seg_tri_interval(p, q, tri, n, eps, clip_eps):
    """Intersection of segment [p, q] with a closed triangle.

    Returns the parameter interval (t_lo, t_hi) on the segment, or None when
    they miss. A segment lying within eps of the triangle plane is clipped
    against the three edge half-planes; otherwise the single plane-crossing
    point is tested. ``clip_eps`` widens the in-plane half-planes: the
    existence test passes eps (conservative touching), the shared-vertex
    "beyond" measurement passes a machine-noise sliver so that eps-widening
    cannot manufacture contact away from the vertex.
    """
    hp = _dot(n, _sub(p, tri[0]))
    hq = _dot(n, _sub(q, tri[0]))
    if hp > eps and hq > eps:
        return None
    if hp < -eps and hq < -eps:
        return None

    if abs(hp) <= eps and abs(hq) <= eps:
        lo, hi = 0.0, 1.0
        for i in range(3):
            a = tri[i]
            b = tri[(i + 1) % 3]
            e = _sub(b, a)
            le = _norm(e)
            # signed in-plane distance from the edge line, interior positive
            fp = _dot(n, _cross(e, _sub(p, a))) / le
            fq = _dot(n, _cross(e, _sub(q, a))) / le
            if fp < -clip_eps and fq < -clip_eps:
                return None
            if fp >= -clip_eps and fq >= -clip_eps:
                continue
            t = (fp + clip_eps) / (fp - fq)
            if fp < -clip_eps:
                lo = max(lo, t)
            else:
                hi = min(hi, t)
            if lo > hi:
                return None
        return (lo, hi)

    t = hp / (hp - hq)
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    x = (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]), p[2] + t * (q[2] - p[2]))
    for i in range(3):
        a = tri[i]
        b = tri[(i + 1) % 3]
        e = _sub(b, a)
        if _dot(n, _cross(e, _sub(x, a))) / _norm(e) < -clip_eps:
            return None
    return (t, t)


def _edges_cross(src, tri, n, edata, eps, h0, h1, h2):
    """Does any edge of ``src`` meet triangle ``tri``? Existence only.

    Bit-identical to running _seg_tri_interval over the three edges: same
    expressions in the same order, with the per-vertex plane heights (h0..h2)
    and per-edge (vector, length) constants hoisted out. Near-coplanar edges
    fall back to the generic clipped interval.
    """
    nx, ny, nz = n
    a0 = tri[0]
    a1 = tri[1]
    a2 = tri[2]
    (e0x, e0y, e0z, l0), (e1x, e1y, e1z, l1), (e2x, e2y, e2z, l2) = edata
    for p, hp, q, hq in (
        (src[0], h0, src[1], h1),
        (src[1], h1, src[2], h2),
        (src[2], h2, src[0], h0),
    ):
        if hp > eps and hq > eps:
            continue
        if hp < -eps and hq < -eps:
            continue
        if -eps <= hp <= eps and -eps <= hq <= eps:
            if _seg_tri_interval(p, q, tri, n, eps, eps) is not None:
                return True
            continue
        t = hp / (hp - hq)
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        px, py, pz = p
        x = px + t * (q[0] - px)
        y = py + t * (q[1] - py)
        z = pz + t * (q[2] - pz)
        dx = x - a0[0]
        dy = y - a0[1]
        dz = z - a0[2]
        if (
            nx * (e0y * dz - e0z * dy)
            + ny * (e0z * dx - e0x * dz)
            + nz * (e0x * dy - e0y * dx)
        ) / l0 < -eps:
            continue
        dx = x - a1[0]
        dy = y - a1[1]
        dz = z - a1[2]
        if (
            nx * (e1y * dz - e1z * dy)
            + ny * (e1z * dx - e1x * dz)
            + nz * (e1x * dy - e1y * dx)
        ) / l1 < -eps:
            continue
        dx = x - a2[0]
        dy = y - a2[1]
        dz = z - a2[2]
        if (
            nx * (e2y * dz - e2z * dy)
            + ny * (e2z * dx - e2x * dz)
            + nz * (e2x * dy - e2y * dx)
        ) / l2 < -eps:
            continue
        return True
    return False


def _tri_edges(tri):
    """(edge vector, length) per edge i: tri[i] -> tri[i+1 mod 3]."""
    out = []
    for i in range(3):
        a = tri[i]
        b = tri[(i + 1) % 3]
        ex = b[0] - a[0]
        ey = b[1] - a[1]
        ez = b[2] - a[2]
        out.append((ex, ey, ez, math.sqrt(ex * ex + ey * ey + ez * ez)))
    return tuple(out)


def _edge_contact_beyond(pa, na, pb, nb, v, eps):
    """True if any edge of one triangle meets the other farther than eps
    from the shared vertex v."""
    tight = 1e-4 * eps
    for tri, n, other in ((pa, na, pb), (pb, nb, pa)):
        for i in range(3):
            p = other[i]
            q = other[(i + 1) % 3]
            iv = _seg_tri_interval(p, q, tri, n, eps, tight)
            if iv is None:
                continue
            d = _sub(q, p)
            for t in iv:
                x = (p[0] + t * d[0], p[1] + t * d[1], p[2] + t * d[2])
                if _norm(_sub(x, v)) > eps:
                    return True
    return False


def _tri_pair_test(pa, na, pb, nb, shared, eps):
    """Shared-simplex intersection core over triangles as tuple triples.

    ``shared`` lists (i, j) local index pairs of coincident vertices. Contact
    exactly on the shared simplex does not count; anything beyond does.
    """
    s = len(shared)
    if s >= 3:
        return True

    if s == 2:
        (i0, j0), (i1, j1) = shared
        p_shared = pa[i0]
        q_shared = pa[i1]
        apex_a = pa[3 - i0 - i1]
        apex_b = pb[3 - j0 - j1]
        # non-coplanar folds only touch along the shared edge itself; check
        # against both planes so the predicate stays symmetric under eps
        if (
            abs(_dot(na, _sub(apex_b, p_shared))) > eps
            and abs(_dot(nb, _sub(apex_a, p_shared))) > eps
        ):
            return False
        e = _sub(q_shared, p_shared)
        le = _norm(e)
        wa = _dot(na, _cross(e, _sub(apex_a, p_shared))) / le
        wb = _dot(na, _cross(e, _sub(apex_b, p_shared))) / le
        if abs(wa) <= eps or abs(wb) <= eps:
            return True
        return (wa > 0.0) == (wb > 0.0)

    if s == 1:
        i0, j0 = shared[0]
        return _edge_contact_beyond(pa, na, pb, nb, pa[i0], eps)

    for tri, n, other in ((pa, na, pb), (pb, nb, pa)):
        for i in range(3):
            iv = _seg_tri_interval(other[i], other[(i + 1) % 3], tri, n, eps, eps)
            if iv is not None:
                return True
    return False


def triangles_intersect(a, b, eps: float | None = None) -> bool:
    """Do two triangles have contact not explained by shared vertices?

    Triangles sharing an edge may fold at any dihedral angle; only a coplanar
    same-side overlap intersects. Triangles sharing one vertex intersect iff
    contact extends beyond that vertex. Disjoint triangles use the standard
    closed-set test, so exact touching counts as intersecting. Vertices are
    "shared" on exact coordinate equality. eps defaults to 1e-9 x the
    combined bounding-box diagonal; near-degenerate contacts resolve toward
    intersecting.
    """
    a = np.asarray(a, dtype=float).reshape(3, 3)
    b = np.asarray(b, dtype=float).reshape(3, 3)
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("triangle vertices must be finite")
    if eps is None:
        both = np.concatenate([a, b], axis=0)
        diag = float(np.linalg.norm(both.max(axis=0) - both.min(axis=0)))
        eps = EPS_SCALE * diag
    if eps <= 0.0:
        raise ValueError("degenerate input: triangles span a zero-size box")

    pa = tuple(tuple(map(float, r)) for r in a)
    pb = tuple(tuple(map(float, r)) for r in b)
    na = _unit_normal(pa, eps)
    nb = _unit_normal(pb, eps)
    if na is None or nb is None:
        raise ValueError("degenerate triangle (zero or near-zero area)")

    shared = []
    used = set()
    for i in range(3):
        for j in range(3):
            if j not in used and pa[i] == pb[j]:
                shared.append((i, j))
                used.add(j)
                break
    return _tri_pair_test(pa, na, pb, nb, shared, eps)


# -- ordering -----------------------------------------------------------------


def sort_candidates(cands: CandidateSet, bins: np.ndarray | None = None) -> CandidateSet:
    """Total order: bin ascending, longest edge ascending, vertex triple.

    Default bins come from labels (1 -> bin 0, 2 -> bin 1); label 0 must be
    filtered out first. Pass explicit ``bins`` to order by another source
    (the unfiltered ablation bins every candidate by its reference distance).
    """
    if bins is None:
        lab = cands.label
        if len(lab) and not np.isin(lab, (1, 2)).all():
            raise ValueError(
                "default ordering needs labels in {1, 2}; filter label 0 "
                "first or pass explicit bins"
            )
        bins = (lab != 1).astype(np.int64)
    else:
        bins = np.asarray(bins, dtype=np.int64).reshape(-1)
        if len(bins) != len(cands):
            raise ValueError("bins length must match candidate count")
    order = np.lexsort(
        (
            cands.verts[:, 2],
            cands.verts[:, 1],
            cands.verts[:, 0],
            cands.longest_edge,
            bins,
        )
    )
    return cands.subset(order)


# -- greedy merge -------------------------------------------------------------


@dataclass(frozen=True)
class Rejection:
    verts: tuple[int, int, int]
    reason: str  # "intersection" | "non-manifold"


_REASONS = {1: "intersection", 2: "non-manifold"}


class MergeReport:
    """Accepted mesh plus everything the greedy pass turned away.

    The mesh keeps the full input point set (unreferenced vertices listed in
    ``unreferenced``). Rejected rows are held as flat arrays; ``rejections``
    materializes Rejection records in visiting order on access, since at full
    pipeline scale the log runs to millions of rows.
    """

    def __init__(
        self,
        mesh: TriangleMesh,
        rej_verts: np.ndarray,
        rej_codes: np.ndarray,
        unreferenced: np.ndarray,
    ):
        self.mesh = mesh
        self.unreferenced = unreferenced
        self._rej_verts = rej_verts
        self._rej_codes = rej_codes

    @property
    def n_rejections(self) -> int:
        return len(self._rej_codes)

    @property
    def rejections(self) -> list[Rejection]:
        return [
            Rejection((u, v, w), _REASONS[c])
            for (u, v, w), c in zip(
                self._rej_verts.tolist(), self._rej_codes.tolist()
            )
        ]


def merge(
    cands: CandidateSet, points: np.ndarray, eps: float | None = None
) -> MergeReport:
    """Visit sorted candidates once, keeping each face that stays legal.

    A face is accepted iff none of its three edges already has two incident
    faces and it intersects no previously accepted face. Accepted faces are
    indexed by a uniform grid; candidates screen against them through an AABB
    overlap filter and plane-separation quick rejects before the exact
    shared-simplex test. Rejections are logged with their reason instead of
    raised. The output mesh always carries the complete input point set.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    npts = len(points)
    if npts:
        diag = float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))
    else:
        diag = 0.0
    if eps is None:
        eps = EPS_SCALE * diag if diag > 0.0 else EPS_SCALE
    qeps = _QUICK_SCALE * eps
    nqeps = -qeps

    verts = np.asarray(cands.verts, dtype=np.int64).reshape(-1, 3)
    m = len(verts)
    if m and (verts.min() < 0 or verts.max() >= npts):
        raise ValueError("candidate vertex index out of range")

    cell = float(np.median(cands.longest_edge)) if m else 1.0
    if not math.isfinite(cell) or cell <= 0.0:
        cell = 1.0
    inv_cell = 1.0 / cell

    # manifold bookkeeping runs on integer edge ids: unordered pair keys are
    # uniqued up front so the hot loop indexes a flat counter list
    if m:
        packed = np.empty(3 * m, dtype=np.int64)
        for c, (i, j) in enumerate(((0, 1), (0, 2), (1, 2))):
            lo = np.minimum(verts[:, i], verts[:, j])
            hi = np.maximum(verts[:, i], verts[:, j])
            packed[c * m : (c + 1) * m] = lo * npts + hi
        uniq, inv = np.unique(packed, return_inverse=True)
        edge_cnt = [0] * len(uniq)
        rows = np.column_stack(
            [verts, inv[:m], inv[m : 2 * m], inv[2 * m :]]
        )
        del packed, uniq, inv
    else:
        edge_cnt = []
        rows = np.empty((0, 6), dtype=np.int64)

    pts = [tuple(p) for p in points.tolist()]
    codes = [0] * m  # 0 accepted / 1 intersection / 2 non-manifold
    face_tri: list[tuple[int, int, int]] = []
    face_pts: list[tuple] = []
    face_n: list[tuple] = []
    face_e: list[tuple] = []
    cells: dict[int, list[int]] = {}
    cap = 4096
    boxes = np.empty((cap, 6), dtype=np.float64)  # lox loy loz hix hiy hiz
    n_acc = 0

    cells_get = cells.get
    tri_pair = _tri_pair_test
    KEY = 1 << 21

    # accepted fids incident to each point: the scan can then treat every
    # partner it meets as disjoint and test the fans separately
    vfan: dict[int, list[int]] = {}
    vfan_get = vfan.get

    row = -1
    CHUNK = 1 << 17
    for base in range(0, m, CHUNK):
        # per-chunk vectorized geometry, expression-for-expression the same
        # arithmetic as _unit_normal so borderline degeneracy calls match
        A = points[verts[base : base + CHUNK]]
        e1 = A[:, 1] - A[:, 0]
        e2 = A[:, 2] - A[:, 0]
        cr = np.cross(e1, e2)
        ln = np.sqrt((cr * cr).sum(axis=1))
        lg = np.sqrt((e1 * e1).sum(axis=1))
        np.maximum(lg, np.sqrt((e2 * e2).sum(axis=1)), out=lg)
        e3 = A[:, 2] - A[:, 1]
        np.maximum(lg, np.sqrt((e3 * e3).sum(axis=1)), out=lg)
        good = (ln > eps * lg) & (lg > 0.0)
        ln[~good] = 1.0
        nrm = (cr / ln[:, None]).tolist()
        good_l = good.tolist()
        blo = A.min(axis=1) - eps
        bhi = A.max(axis=1) + eps
        lo_l = blo.tolist()
        hi_l = bhi.tolist()
        cl_l = np.floor(blo * inv_cell).astype(np.int64).tolist()
        ch_l = np.floor(bhi * inv_cell).astype(np.int64).tolist()
        del A, e1, e2, e3, cr, ln, lg, good, blo, bhi
        i = -1
        for u, v, w, ke0, ke1, ke2 in rows[base : base + CHUNK].tolist():
            row += 1
            i += 1
            if edge_cnt[ke0] >= 2 or edge_cnt[ke1] >= 2 or edge_cnt[ke2] >= 2:
                codes[row] = 2
                continue
            if not good_l[i]:
                raise ValueError(f"degenerate candidate triangle {(u, v, w)}")

            a0 = pts[u]
            a1 = pts[v]
            a2 = pts[w]
            pa = (a0, a1, a2)
            na = nrm[i]
            a0x, a0y, a0z = a0
            a1x, a1y, a1z = a1
            a2x, a2y, a2z = a2
            lox, loy, loz = lo_l[i]
            hix, hiy, hiz = hi_l[i]
            cx0, cy0, cz0 = cl_l[i]
            cx1, cy1, cz1 = ch_l[i]

            near: list[int] = []
            for cx in range(cx0, cx1 + 1):
                kx = cx * KEY
                for cy in range(cy0, cy1 + 1):
                    kxy = (kx + cy) * KEY
                    for cz in range(cz0, cz1 + 1):
                        lst = cells_get(kxy + cz)
                        if lst is not None:
                            near.extend(lst)

            hit = False
            ea = None
            if near:
                # every accepted face sharing a vertex with this row lives in
                # the fan lists, so the grid scan only ever sees disjoint
                # pairs plus fan members it can skip by membership
                fanset = set()
                fl = vfan_get(u)
                if fl is not None:
                    fanset.update(fl)
                fl = vfan_get(v)
                if fl is not None:
                    fanset.update(fl)
                fl = vfan_get(w)
                if fl is not None:
                    fanset.update(fl)

                nr = np.unique(np.frombuffer(array("q", near), dtype=np.int64))
                bb = boxes[nr]
                ok = (
                    (bb[:, 0] <= hix)
                    & (bb[:, 3] >= lox)
                    & (bb[:, 1] <= hiy)
                    & (bb[:, 4] >= loy)
                    & (bb[:, 2] <= hiz)
                    & (bb[:, 5] >= loz)
                )
                nax, nay, naz = na
                # disjoint scan, plane first: one-sided clearance beyond qeps
                # proves separation, and the typical blocker (a nested face)
                # is found long before any fan legality work
                for fid in nr[ok].tolist():
                    if fid in fanset:
                        continue
                    pb = face_pts[fid]
                    b0 = pb[0]
                    b1 = pb[1]
                    b2 = pb[2]
                    h0 = nax * (b0[0] - a0x) + nay * (b0[1] - a0y) + naz * (b0[2] - a0z)
                    if h0 > qeps:
                        if (
                            nax * (b1[0] - a0x) + nay * (b1[1] - a0y) + naz * (b1[2] - a0z) > qeps
                            and nax * (b2[0] - a0x) + nay * (b2[1] - a0y) + naz * (b2[2] - a0z) > qeps
                        ):
                            continue
                    elif h0 < nqeps:
                        if (
                            nax * (b1[0] - a0x) + nay * (b1[1] - a0y) + naz * (b1[2] - a0z) < nqeps
                            and nax * (b2[0] - a0x) + nay * (b2[1] - a0y) + naz * (b2[2] - a0z) < nqeps
                        ):
                            continue
                    nb = face_n[fid]
                    nbx, nby, nbz = nb
                    b0x, b0y, b0z = b0
                    g0 = nbx * (a0x - b0x) + nby * (a0y - b0y) + nbz * (a0z - b0z)
                    if g0 > qeps:
                        if (
                            nbx * (a1x - b0x) + nby * (a1y - b0y) + nbz * (a1z - b0z) > qeps
                            and nbx * (a2x - b0x) + nby * (a2y - b0y) + nbz * (a2z - b0z) > qeps
                        ):
                            continue
                    elif g0 < nqeps:
                        if (
                            nbx * (a1x - b0x) + nby * (a1y - b0y) + nbz * (a1z - b0z) < nqeps
                            and nbx * (a2x - b0x) + nby * (a2y - b0y) + nbz * (a2z - b0z) < nqeps
                        ):
                            continue
                    h1 = nax * (b1[0] - a0x) + nay * (b1[1] - a0y) + naz * (b1[2] - a0z)
                    h2 = nax * (b2[0] - a0x) + nay * (b2[1] - a0y) + naz * (b2[2] - a0z)
                    g1 = nbx * (a1x - b0x) + nby * (a1y - b0y) + nbz * (a1z - b0z)
                    g2 = nbx * (a2x - b0x) + nby * (a2y - b0y) + nbz * (a2z - b0z)
                    if ea is None:
                        ea = _tri_edges(pa)
                    if _edges_cross(pb, pa, na, ea, eps, h0, h1, h2) or _edges_cross(
                        pa, pb, nb, face_e[fid], eps, g0, g1, g2
                    ):
                        hit = True
                        break
                if not hit and fanset:
                    for fid in fanset:
                        ou, ov, ow = face_tri[fid]
                        sh = []
                        if u == ou:
                            sh.append((0, 0))
                        elif u == ov:
                            sh.append((0, 1))
                        elif u == ow:
                            sh.append((0, 2))
                        if v == ou:
                            sh.append((1, 0))
                        elif v == ov:
                            sh.append((1, 1))
                        elif v == ow:
                            sh.append((1, 2))
                        if w == ou:
                            sh.append((2, 0))
                        elif w == ov:
                            sh.append((2, 1))
                        elif w == ow:
                            sh.append((2, 2))
                        pb = face_pts[fid]
                        if len(sh) == 1:
                            # sharing a vertex: both far-vertex pairs must
                            # clear the other's plane; one side alone still
                            # allows an eps-coplanar contact sliding past the
                            # shared vertex
                            i0, j0 = sh[0]
                            if j0 == 0:
                                q1 = pb[1]
                                q2 = pb[2]
                            elif j0 == 1:
                                q1 = pb[0]
                                q2 = pb[2]
                            else:
                                q1 = pb[0]
                                q2 = pb[1]
                            h1 = nax * (q1[0] - a0x) + nay * (q1[1] - a0y) + naz * (q1[2] - a0z)
                            h2 = nax * (q2[0] - a0x) + nay * (q2[1] - a0y) + naz * (q2[2] - a0z)
                            if (h1 > qeps and h2 > qeps) or (h1 < nqeps and h2 < nqeps):
                                if i0 == 0:
                                    p1 = a1
                                    p2 = a2
                                elif i0 == 1:
                                    p1 = a0
                                    p2 = a2
                                else:
                                    p1 = a0
                                    p2 = a1
                                nbx, nby, nbz = face_n[fid]
                                b0x, b0y, b0z = pb[0]
                                g1 = nbx * (p1[0] - b0x) + nby * (p1[1] - b0y) + nbz * (p1[2] - b0z)
                                g2 = nbx * (p2[0] - b0x) + nby * (p2[1] - b0y) + nbz * (p2[2] - b0z)
                                if (g1 > qeps and g2 > qeps) or (
                                    g1 < nqeps and g2 < nqeps
                                ):
                                    continue
                        if tri_pair(pa, na, pb, face_n[fid], sh, eps):
                            hit = True
                            break

            if hit:
                codes[row] = 1
                continue

            fid = n_acc
            if fid == cap:
                cap *= 2
                grown = np.empty((cap, 6), dtype=np.float64)
                grown[:fid] = boxes[:fid]
                boxes = grown
            boxes[fid, 0] = lox
            boxes[fid, 1] = loy
            boxes[fid, 2] = loz
            boxes[fid, 3] = hix
            boxes[fid, 4] = hiy
            boxes[fid, 5] = hiz
            n_acc += 1
            face_tri.append((u, v, w))
            face_pts.append(pa)
            face_n.append(na)
            face_e.append(ea if ea is not None else _tri_edges(pa))
            edge_cnt[ke0] += 1
            edge_cnt[ke1] += 1
            edge_cnt[ke2] += 1
            fl = vfan_get(u)
            if fl is None:
                vfan[u] = [fid]
            else:
                fl.append(fid)
            fl = vfan_get(v)
            if fl is None:
                vfan[v] = [fid]
            else:
                fl.append(fid)
            fl = vfan_get(w)
            if fl is None:
                vfan[w] = [fid]
            else:
                fl.append(fid)
            for cx in range(cx0, cx1 + 1):
                kx = cx * KEY
                for cy in range(cy0, cy1 + 1):
                    kxy = (kx + cy) * KEY
                    for cz in range(cz0, cz1 + 1):
                        key = kxy + cz
                        lst = cells_get(key)
                        if lst is None:
                            cells[key] = [fid]
                        else:
                            lst.append(fid)

    faces = (
        np.asarray(face_tri, dtype=np.int64)
        if face_tri
        else np.empty((0, 3), dtype=np.int64)
    )
    mesh = TriangleMesh(points, faces)
    unreferenced = np.setdiff1d(
        np.arange(npts, dtype=np.int64), faces.ravel()
    )
    codes_np = np.asarray(codes, dtype=np.uint8)
    rej = codes_np != 0
    return MergeReport(mesh, verts[rej], codes_np[rej], unreferenced)


def write_rejection_log(path, rejections) -> None:
    """CSV dump of greedy rejections: one (u, v, w, reason) row per candidate.

    Accepts a MergeReport (streamed from its internal arrays) or any iterable
    of Rejection.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["u", "v", "w", "reason"])
        if isinstance(rejections, MergeReport):
            for (u, v, w), c in zip(
                rejections._rej_verts.tolist(), rejections._rej_codes.tolist()
            ):
                writer.writerow([u, v, w, _REASONS[c]])
            return
        for r in rejections:
            writer.writerow([r.verts[0], r.verts[1], r.verts[2], r.reason])
