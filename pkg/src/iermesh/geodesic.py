"""Geodesic distances on triangle mesh surfaces.

Two independent routes compute the same quantity:

* ``exact_geodesics`` runs continuous Dijkstra. Distance windows propagate
  across faces through planar unfoldings, so straight unfolded segments give
  exact polyhedral geodesics. Vertices whose incident angle exceeds 2*pi
  (saddles), boundary vertices, and vertices on non-manifold edges
  re-radiate as pseudo-sources; exactly-flat interior vertices do not need
  to, because straight continuations through them are boundary rays of the
  adjacent window cones.
* ``oracle_geodesics`` runs ordinary Dijkstra over a dense lattice graph laid
  on the mesh edges. Every graph path is a genuine surface path, so it
  reports an upper bound that tightens monotonically as the lattice refines.

The two routes share no propagation code; tests play them against each other.
Distances between vertices in different connected components are ``inf``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra as _graph_dijkstra

from .mesh import TriangleMesh


@dataclass(frozen=True)
class GeodesicResult:
    """Distances from one source vertex.

    ``distances`` maps target vertex id to on-surface distance; targets beyond
    the query cutoff or in a different connected component map to ``inf``.
    """

    source: int
    distances: dict[int, float] = field(default_factory=dict)

    def __getitem__(self, target: int) -> float:
        return self.distances[target]

# a vertex re-radiates only when its incident angle strictly exceeds 2*pi;
# the slack keeps fp-flat vertices (angle == 2*pi up to arccos rounding) out.
# A missed saddle with excess below the slack misprices bent paths by at most
# excess * path length, far inside the oracle comparison tolerance.
_SADDLE_EXCESS = 1e-9

_POP_LIMIT = 20_000_000


class _GeoTables:
    """Flattened propagation tables for one mesh, cached on the mesh.

    Everything the inner loop touches is converted to plain Python lists:
    scalar indexing into numpy arrays is several times slower than list
    indexing and the propagation loop is pure Python.
    """

    def __init__(self, mesh: TriangleMesh):
        verts = mesh.vertices
        faces = mesh.faces
        V = mesh.n_vertices
        E_arrays = mesh._edge_arrays()
        edges, face_of, edge_of_corner = E_arrays
        E = len(edges)

        self.V = V
        if V:
            lo = verts.min(axis=0)
            hi = verts.max(axis=0)
            self.tiny = 1e-12 * max(float(np.linalg.norm(hi - lo)), 1.0e-300)
        else:
            self.tiny = 1e-12

        elen = np.linalg.norm(verts[edges[:, 1]] - verts[edges[:, 0]], axis=1)
        self.eu = edges[:, 0].tolist()
        self.ev = edges[:, 1].tolist()
        self.elen = elen.tolist()

        # incidences (edge, face) grouped by edge
        order = np.argsort(edge_of_corner, kind="stable")
        counts = np.bincount(edge_of_corner, minlength=E)
        estart = np.zeros(E + 1, dtype=np.int64)
        np.cumsum(counts, out=estart[1:])
        self.estart = estart.tolist()

        inc_edge = edge_of_corner[order]
        inc_face = face_of[order]
        slot = order % 3
        # edge slots per face: 0 -> (a,b), 1 -> (b,c), 2 -> (c,a); the corner
        # opposite slot s is (s + 2) % 3
        apex = faces[inc_face, (slot + 2) % 3]

        u = edges[inc_edge, 0]
        v = edges[inc_edge, 1]
        L = elen[inc_edge]
        Lsafe = np.where(L > 0.0, L, 1.0)
        WU = verts[apex] - verts[u]
        D = verts[v] - verts[u]
        ax = np.einsum("ij,ij->i", WU, D) / Lsafe
        ay = np.sqrt(np.maximum(np.einsum("ij,ij->i", WU, WU) - ax * ax, 0.0))

        # the other two edges of the face; exactly one passes through u
        base = 3 * inc_face
        e1 = edge_of_corner[base + (slot + 1) % 3]
        e2 = edge_of_corner[base + (slot + 2) % 3]
        e1_has_u = (edges[e1, 0] == u) | (edges[e1, 1] == u)
        far_u = np.where(e1_has_u, e1, e2)
        far_v = np.where(e1_has_u, e2, e1)

        self.inc_edge = inc_edge.tolist()
        self.inc_face = inc_face.tolist()
        self.inc_apex = apex.tolist()
        self.inc_ax = ax.tolist()
        self.inc_ay = ay.tolist()
        self.inc_far_u = far_u.tolist()
        self.inc_far_v = far_v.tolist()

        # incidences grouped by apex vertex, for pseudo-source emission
        aorder = np.argsort(apex, kind="stable")
        acounts = np.bincount(apex, minlength=V)
        vstart = np.zeros(V + 1, dtype=np.int64)
        np.cumsum(acounts, out=vstart[1:])
        self.vstart = vstart.tolist()
        self.vinc = aorder.tolist()

        self.pseudo = self._classify_pseudo(verts, faces, edges, counts).tolist()

    @staticmethod
    def _classify_pseudo(verts, faces, edges, edge_face_counts):
        V = len(verts)
        angle = np.zeros(V)
        if len(faces):
            P = [verts[faces[:, i]] for i in range(3)]
            for i in range(3):
                a = P[(i + 1) % 3] - P[i]
                b = P[(i + 2) % 3] - P[i]
                na = np.linalg.norm(a, axis=1)
                nb = np.linalg.norm(b, axis=1)
                denom = na * nb
                cosv = np.einsum("ij,ij->i", a, b) / np.where(denom > 0.0, denom, 1.0)
                ang = np.arccos(np.clip(cosv, -1.0, 1.0))
                np.add.at(angle, faces[:, i], np.where(denom > 0.0, ang, 0.0))
        pseudo = angle > 2.0 * math.pi + _SADDLE_EXCESS
        # geodesics may bend at the rim or cross non-manifold gluings only
        # through vertices, so those vertices must re-radiate too
        irregular = edges[(edge_face_counts == 1) | (edge_face_counts > 2)]
        if len(irregular):
            pseudo[irregular.reshape(-1)] = True
        return pseudo


def _geo_tables(mesh: TriangleMesh) -> _GeoTables:
    if "geo_tables" not in mesh._cache:
        mesh._cache["geo_tables"] = _GeoTables(mesh)
    return mesh._cache["geo_tables"]


def _window_dominated(b0, b1, sx, sy, sigma, du, dv, L, tiny):
    """True when paths through vertices beat the window everywhere on it.

    The competitor through u costs du + p at edge parameter p, through v
    costs dv + (L - p); the window costs f(p) = sigma + |(p, 0) - S|. Since
    |f'| < 1, f - (du + p) is strictly decreasing and f - (dv + L - p)
    strictly increasing, so each side needs one endpoint check, split at the
    crossover p* where the two competitors tie.
    """
    if du == math.inf and dv == math.inf:
        return False
    p_star = 0.5 * (dv - du + L)
    if b0 < p_star:
        p = b1 if b1 < p_star else p_star
        if sigma + math.hypot(p - sx, sy) < du + p + tiny:
            return False
    if b1 > p_star:
        p = b0 if b0 > p_star else p_star
        if sigma + math.hypot(p - sx, sy) < dv + (L - p) + tiny:
            return False
    return True


def exact_geodesics(mesh, source, targets=None, cutoffs=None):
    """Exact geodesic distances from one source vertex.

    Parameters
    ----------
    mesh : TriangleMesh
    source : int
        Source vertex id.
    targets : sequence of int, optional
        Vertex ids to resolve. Omitted means all vertices, which forces the
        propagation to run to exhaustion.
    cutoffs : sequence of float, optional
        Per-target upper bounds (requires ``targets``). A target whose
        geodesic distance exceeds its cutoff is reported as ``inf`` and the
        search never expands past the largest still-unresolved cutoff, which
        is what keeps batched short-range queries cheap.

    Returns
    -------
    (len(targets),) or (V,) float array; unreachable entries are ``inf``.
    """
    gm = _geo_tables(mesh)
    V = gm.V
    source = int(source)
    if not 0 <= source < V:
        raise ValueError(f"source vertex {source} out of range")

    eu = gm.eu
    ev = gm.ev
    elen = gm.elen
    estart = gm.estart
    inc_edge = gm.inc_edge
    inc_face = gm.inc_face
    inc_apex = gm.inc_apex
    inc_ax = gm.inc_ax
    inc_ay = gm.inc_ay
    inc_far_u = gm.inc_far_u
    inc_far_v = gm.inc_far_v
    vstart = gm.vstart
    vinc = gm.vinc
    pseudo = gm.pseudo
    tiny = gm.tiny
    INF = math.inf
    hypot = math.hypot
    heappush = heapq.heappush
    heappop = heapq.heappop

    d = [INF] * V
    d[source] = 0.0
    emitted = [False] * V
    heap = []
    seq = 0

    if targets is None:
        if cutoffs is not None:
            raise ValueError("cutoffs require explicit targets")
        pending = None
        active_cutoff = INF
        settle_heap = abandon_heap = cut_heap = None
        tlist = cuts = None
    else:
        tlist = [int(t) for t in targets]
        for t in tlist:
            if not 0 <= t < V:
                raise ValueError(f"target vertex {t} out of range")
        if cutoffs is None:
            cuts = [INF] * len(tlist)
        else:
            cuts = [float(c) for c in cutoffs]
            if len(cuts) != len(tlist):
                raise ValueError("cutoffs must align with targets")
        pending = {}
        for t, c in zip(tlist, cuts):
            prev = pending.get(t)
            pending[t] = c if prev is None or c > prev else prev
        settle_heap = [(0.0, source)] if source in pending else []
        abandon_heap = [(c, t) for t, c in pending.items()]
        heapq.heapify(abandon_heap)
        cut_heap = [(-c, t) for t, c in pending.items()]
        heapq.heapify(cut_heap)
        active_cutoff = -cut_heap[0][0]

    def relax(vid, cand):
        nonlocal seq
        if cand < d[vid]:
            d[vid] = cand
            if pending is not None and vid in pending:
                heappush(settle_heap, (cand, vid))
            if pseudo[vid] and not emitted[vid] and cand <= active_cutoff:
                seq += 1
                heappush(heap, (cand, seq, 0, vid))

    def push_window(eid, from_face, b0, b1, sx, sy, sigma, floor):
        nonlocal seq
        L = elen[eid]
        # reaching an edge point through the window and walking the rest of
        # the edge is a real surface path; relax both endpoints with it
        relax(eu[eid], sigma + hypot(b0 - sx, sy) + b0)
        relax(ev[eid], sigma + hypot(b1 - sx, sy) + (L - b1))
        if sy <= tiny or b1 - b0 <= tiny:
            # source image on the edge line: the continuation is a straight
            # line through vertices, which pseudo-source chains already carry
            return
        if sx < b0:
            key = sigma + hypot(b0 - sx, sy)
        elif sx > b1:
            key = sigma + hypot(sx - b1, sy)
        else:
            key = sigma + sy
        if key < floor:
            key = floor
        if key > active_cutoff:
            return
        if _window_dominated(b0, b1, sx, sy, sigma, d[eu[eid]], d[ev[eid]], L, tiny):
            return
        seq += 1
        heappush(heap, (key, seq, 1, eid, from_face, b0, b1, sx, sy, sigma))

    def emit_vertex(vid, dist, floor):
        emitted[vid] = True
        for k in range(vstart[vid], vstart[vid + 1]):
            ii = vinc[k]
            eid = inc_edge[ii]
            if elen[eid] <= tiny:
                continue
            push_window(
                eid, inc_face[ii], 0.0, elen[eid],
                inc_ax[ii], inc_ay[ii], dist, floor,
            )

    def propagate(ii, b0, b1, sx, sy, sigma, floor):
        ay = inc_ay[ii]
        if ay <= tiny:
            return
        eid = inc_edge[ii]
        L = elen[eid]
        ax = inc_ax[ii]
        aydown = -ay
        d0x = b0 - sx
        d1x = b1 - sx
        dy = -sy
        fface = inc_face[ii]
        apex = inc_apex[ii]
        # both far sides of the unfolded face; clip the source cone against
        # each segment, then re-express surviving pieces in the child frame
        for p0x, p0y, id0, p1x, p1y, id1, child in (
            (0.0, 0.0, eu[eid], ax, aydown, apex, inc_far_u[ii]),
            (ax, aydown, apex, L, 0.0, ev[eid], inc_far_v[ii]),
        ):
            q0x = p0x - sx
            q0y = p0y - sy
            dqx = p1x - p0x
            dqy = p1y - p0y
            # inside the cone: cross(d0, q) >= 0 and cross(d1, q) <= 0,
            # both affine in the segment parameter t
            g0 = d0x * q0y - dy * q0x
            h0 = d0x * dqy - dy * dqx
            g1 = d1x * q0y - dy * q0x
            h1 = d1x * dqy - dy * dqx
            lo = 0.0
            hi = 1.0
            if h0 > 0.0:
                t = -g0 / h0
                if t > lo:
                    lo = t
            elif h0 < 0.0:
                t = -g0 / h0
                if t < hi:
                    hi = t
            elif g0 < 0.0:
                continue
            if h1 > 0.0:
                t = -g1 / h1
                if t < hi:
                    hi = t
            elif h1 < 0.0:
                t = -g1 / h1
                if t > lo:
                    lo = t
            elif g1 > 0.0:
                continue
            if lo < 1e-12:
                lo = 0.0
            if hi > 1.0 - 1e-12:
                hi = 1.0
            if hi <= lo:
                continue
            Lc = elen[child]
            if Lc <= tiny:
                continue
            nrm = hypot(dqx, dqy)
            if id0 < id1:
                exx = dqx / nrm
                exy = dqy / nrm
                ox = p0x
                oy = p0y
                cb0 = lo * Lc
                cb1 = hi * Lc
            else:
                exx = -dqx / nrm
                exy = -dqy / nrm
                ox = p1x
                oy = p1y
                cb0 = (1.0 - hi) * Lc
                cb1 = (1.0 - lo) * Lc
            rx = sx - ox
            ry = sy - oy
            csx = rx * exx + ry * exy
            csy = exx * ry - exy * rx
            if csy < 0.0:
                csy = -csy
            if cb1 > Lc:
                cb1 = Lc
            if cb0 < 0.0:
                cb0 = 0.0
            push_window(child, fface, cb0, cb1, csx, csy, sigma, floor)

    emit_vertex(source, 0.0, 0.0)
    if pending is not None and settle_heap:
        # the source may itself be a target; resolve it against an empty
        # frontier bound of 0
        while settle_heap and settle_heap[0][0] <= 0.0:
            _, t = heapq.heappop(settle_heap)
            pending.pop(t, None)

    pops = 0
    while heap and (pending is None or pending):
        item = heappop(heap)
        key = item[0]
        if pending is not None:
            while settle_heap and settle_heap[0][0] <= key:
                val, t = heappop(settle_heap)
                if t in pending and d[t] <= key:
                    del pending[t]
            while abandon_heap and key > abandon_heap[0][0]:
                _, t = heappop(abandon_heap)
                pending.pop(t, None)
            if not pending:
                break
            while cut_heap and cut_heap[0][1] not in pending:
                heappop(cut_heap)
            if cut_heap:
                active_cutoff = -cut_heap[0][0]
        pops += 1
        if pops > _POP_LIMIT:
            raise RuntimeError("geodesic propagation exceeded the event budget")
        if item[2] == 0:
            vid = item[3]
            if key > d[vid] or emitted[vid]:
                continue
            emit_vertex(vid, d[vid], key)
        else:
            eid = item[3]
            from_face = item[4]
            b0, b1, sx, sy, sigma = item[5], item[6], item[7], item[8], item[9]
            if key > active_cutoff:
                continue
            if _window_dominated(
                b0, b1, sx, sy, sigma, d[eu[eid]], d[ev[eid]], elen[eid], tiny
            ):
                continue
            for ii in range(estart[eid], estart[eid + 1]):
                if inc_face[ii] != from_face:
                    propagate(ii, b0, b1, sx, sy, sigma, key)

    if targets is None:
        return np.asarray(d, dtype=np.float64)
    out = np.empty(len(tlist), dtype=np.float64)
    for i, (t, c) in enumerate(zip(tlist, cuts)):
        dt = d[t]
        out[i] = dt if dt <= c else INF
    return out


def local_geodesics(mesh, source, targets, cutoff=math.inf):
    """Exact geodesics from ``source`` to ``targets``, truncated at ``cutoff``.

    Thin contract-facing form of :func:`exact_geodesics`: a single shared
    cutoff (must be > 0) and a :class:`GeodesicResult` with a target->distance
    map. Targets whose distance exceeds the cutoff, or that live in a
    different connected component, map to ``inf``.
    """
    cutoff = float(cutoff)
    if not cutoff > 0.0:
        raise ValueError("cutoff must be > 0")
    tlist = [int(t) for t in targets]
    dist = exact_geodesics(mesh, source, tlist, [cutoff] * len(tlist))
    return GeodesicResult(int(source), dict(zip(tlist, dist.tolist())))


def geodesic_matrix(mesh, vertices):
    """All-pairs exact geodesic distances between the given vertex ids."""
    vids = [int(v) for v in vertices]
    out = np.empty((len(vids), len(vids)), dtype=np.float64)
    for i, s in enumerate(vids):
        out[i] = exact_geodesics(mesh, s, vids)
    return out


def crop_patch(mesh, center, radius):
    """Submesh guaranteed to contain every geodesic of length <= radius.

    A surface path of length r stays inside the Euclidean ball of radius r
    around its start point, and any face touching that ball has a vertex
    within radius + (its longest edge) of the center. Keeping exactly those
    faces therefore preserves all geodesics up to ``radius`` while shrinking
    the propagation domain.

    Returns (patch, orig_ids) where patch vertex i is mesh vertex
    ``orig_ids[i]``.
    """
    center = np.asarray(center, dtype=np.float64).reshape(3)
    vd = np.linalg.norm(mesh.vertices - center, axis=1)
    tri = mesh.face_corners()
    longest = np.maximum(
        np.linalg.norm(tri[:, 1] - tri[:, 0], axis=1),
        np.maximum(
            np.linalg.norm(tri[:, 2] - tri[:, 1], axis=1),
            np.linalg.norm(tri[:, 0] - tri[:, 2], axis=1),
        ),
    )
    keep = vd[mesh.faces].min(axis=1) <= radius + longest
    faces = mesh.faces[keep]
    orig_ids = np.unique(faces)
    remap = np.zeros(mesh.n_vertices, dtype=np.int64)
    remap[orig_ids] = np.arange(len(orig_ids))
    return TriangleMesh(mesh.vertices[orig_ids], remap[faces]), orig_ids


def oracle_geodesics(mesh, source, targets=None, subdivision=3):
    """Single-source oracle distances as a :class:`GeodesicResult`.

    See :func:`oracle_geodesic_matrix` for the construction; this wrapper is
    the validation counterpart of :func:`local_geodesics` (no cutoff — the
    oracle always resolves every requested target). Requires
    ``subdivision >= 1``.
    """
    if subdivision < 1:
        raise ValueError("subdivision must be >= 1")
    if targets is None:
        tlist = list(range(mesh.n_vertices))
    else:
        tlist = [int(t) for t in targets]
    row = oracle_geodesic_matrix(mesh, [int(source)], tlist, subdivision)[0]
    return GeodesicResult(int(source), dict(zip(tlist, row.tolist())))


def oracle_geodesic_matrix(mesh, sources, targets=None, subdivision=3):
    """Upper-bound geodesic distances via Dijkstra on an edge-lattice graph.

    Every mesh edge carries ``2**subdivision - 1`` evenly spaced interior
    nodes (midpoint refinement, so the level-s lattice is a subset of level
    s+1) and all node pairs sharing a face are connected by straight
    segments. Graph paths are genuine surface paths, so returned values can
    only overestimate the true geodesic, and they shrink monotonically as
    ``subdivision`` grows. Independent of the window propagation in
    ``exact_geodesics``; used to cross-check it.

    Returns a (len(sources), len(targets)) array; ``targets=None`` means all
    mesh vertices.
    """
    if subdivision < 0:
        raise ValueError("subdivision must be >= 0")
    verts = mesh.vertices
    faces = mesh.faces
    V = mesh.n_vertices
    edges, _, edge_of_corner = mesh._edge_arrays()
    E = len(edges)
    k = 2**subdivision - 1

    if k:
        t = (np.arange(k, dtype=np.float64) + 1.0) / (k + 1.0)
        a = verts[edges[:, 0]][:, None, :]
        b = verts[edges[:, 1]][:, None, :]
        lattice = a * (1.0 - t)[None, :, None] + b * t[None, :, None]
        pos = np.vstack([verts, lattice.reshape(-1, 3)])
    else:
        pos = verts
    N = V + E * k

    F = len(faces)
    m = 3 + 3 * k
    ids = np.empty((F, m), dtype=np.int64)
    ids[:, :3] = faces
    if k:
        eoc = edge_of_corner.reshape(F, 3)
        ids[:, 3:] = (V + eoc[:, :, None] * k + np.arange(k)).reshape(F, 3 * k)
    iu, iv = np.triu_indices(m, 1)
    rows = ids[:, iu].reshape(-1)
    cols = ids[:, iv].reshape(-1)
    lo = np.minimum(rows, cols)
    hi = np.maximum(rows, cols)
    # node pairs on a shared edge appear once per incident face; same weight,
    # but duplicate entries would sum in CSR form, so deduplicate
    _, first = np.unique(lo * N + hi, return_index=True)
    lo = lo[first]
    hi = hi[first]
    w = np.linalg.norm(pos[lo] - pos[hi], axis=1)
    graph = coo_matrix((w, (lo, hi)), shape=(N, N)).tocsr()

    src = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    dist = _graph_dijkstra(graph, directed=False, indices=src)
    if targets is None:
        return dist[:, :V]
    tgt = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    return dist[:, tgt]
