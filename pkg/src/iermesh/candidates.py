"""Candidate triangles from a k-NN graph, scored by intrinsic-extrinsic ratio.

Pipeline slice owned here: exact k-NN over the deduplicated cloud, candidate
proposal (every point with every unordered pair of its neighbors), the IER
rule for pairs and triangles, distance-to-reference measurement, the 3-class
ground-truth labeling rule, and the labeled-candidate dump (binary and CSV).

Geodesic pair distances come from the geodesics module; this module only
consumes them as a (sorted pair key -> distance) table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geom import MeshDistanceField, sample_in_triangles
from .mesh import PointCloud, TriangleMesh

# candidates with less than this triangle area are dropped as collinear
DEGENERATE_AREA = 1e-12

_IERC_MAGIC = b"IERC"
_IERC_VERSION = 1
_IERC_RECORD = np.dtype(
    [("verts", "<u4", (3,)), ("ier", "<f4"), ("dist", "<f4"), ("label", "u1")]
)


# -- k-NN graph ---------------------------------------------------------------


@dataclass(frozen=True)
class KnnGraph:
    """Exact k nearest neighbors over the deduplicated point cloud.

    Neighbor entries are *original* point indices, remapped so that every
    duplicate cluster is represented by its first occurrence. ``rep`` and
    ``row`` translate any original index to its representative id and to its
    row in ``neighbors``/``distances``.
    """

    k: int
    unique_ids: np.ndarray  # (U,) first-occurrence original ids
    rep: np.ndarray  # (N,) original id -> representative original id
    row: np.ndarray  # (N,) original id -> row index below
    neighbors: np.ndarray  # (U, k) representative ids, ascending (distance, id)
    distances: np.ndarray  # (U, k) Euclidean distances

    @property
    def n_unique(self) -> int:
        return len(self.unique_ids)

    def radius_of(self, point_id) -> np.ndarray:
        """Max k-NN distance of the given original point id(s)."""
        return self.distances[self.row[point_id], -1]


def dedup_points(points: np.ndarray):
    """First-occurrence representative map for value-coincident points.

    Returns (unique_ids, rep, row): ``unique_ids`` lists one original index
    per distinct position, ``rep[i]`` is the representative original index of
    point i, and ``row[i]`` indexes the unique array.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    # rows are compared bytewise; +0.0 normalizes the sign bit of -0.0 so
    # zero-distance pairs always collapse
    _, first, inverse = np.unique(
        points + 0.0, axis=0, return_index=True, return_inverse=True
    )
    inverse = inverse.reshape(-1)
    return first, first[inverse], inverse


def build_knn(pc: PointCloud, k: int) -> KnnGraph:
    """Exact k-NN graph, equal to a brute-force scan on every input.

    The tree only nominates candidate indices; distances are recomputed with
    the plain ``sqrt(sum((a-b)^2))`` formula and rows are re-sorted by
    (distance, representative id). Whenever the nomination radius cannot be
    certified to cover the k-th distance (ties or float noise at the
    boundary), the row falls back to an exhaustive ball query.
    """
    k = int(k)
    if k < 1:
        raise ValueError("k must be >= 1")
    pts = pc.points
    if not np.isfinite(pts).all():
        raise ValueError("point cloud contains non-finite coordinates")
    unique_ids, rep, row = dedup_points(pts)
    upts = pts[unique_ids]
    U = len(upts)
    if U <= k:
        raise ValueError(f"need more than k={k} unique points, have {U}")

    tree = cKDTree(upts)
    m = min(U, k + 9)
    tree_dist, tree_idx = tree.query(upts, k=m)

    d = np.sqrt(((upts[:, None, :] - upts[tree_idx]) ** 2).sum(axis=-1))
    ids = unique_ids[tree_idx]
    self_mask = tree_idx == np.arange(U)[:, None]
    d[self_mask] = np.inf
    ids[self_mask] = np.iinfo(np.int64).max

    order = np.lexsort((ids, d), axis=-1)
    d_sorted = np.take_along_axis(d, order, axis=-1)[:, :k]
    ids_sorted = np.take_along_axis(ids, order, axis=-1)[:, :k]

    if m < U:
        # non-nominated points sit at tree distance >= the m-th nominee; the
        # recomputed metric can differ by ULPs, so demand a real margin
        uncertain = d_sorted[:, -1] >= tree_dist[:, -1] * (1.0 - 1e-12)
        for r in np.flatnonzero(uncertain):
            radius = d_sorted[r, -1] * (1.0 + 1e-9)
            cand = np.asarray(tree.query_ball_point(upts[r], radius), dtype=np.int64)
            cand = cand[cand != r]
            dr = np.sqrt(((upts[r] - upts[cand]) ** 2).sum(axis=-1))
            idr = unique_ids[cand]
            o = np.lexsort((idr, dr))[:k]
            d_sorted[r] = dr[o]
            ids_sorted[r] = idr[o]

    return KnnGraph(
        k=k,
        unique_ids=unique_ids,
        rep=rep,
        row=row,
        neighbors=ids_sorted,
        distances=d_sorted,
    )


# -- candidate proposal -------------------------------------------------------


@dataclass
class CandidateSet:
    """Columnar candidate store; rows are canonical ascending index triples.

    ``ier``/``dist_to_ref`` hold NaN and ``label`` holds -1 until the
    corresponding stage fills them in.
    """

    verts: np.ndarray  # (M, 3) int64, each row strictly ascending
    longest_edge: np.ndarray  # (M,) float64
    ier: np.ndarray  # (M,) float64, NaN = not yet computed
    dist_to_ref: np.ndarray  # (M,) float64, NaN = not computed
    label: np.ndarray  # (M,) int8, -1 = unset

    def __len__(self):
        return len(self.verts)

    def subset(self, idx) -> "CandidateSet":
        return CandidateSet(
            self.verts[idx],
            self.longest_edge[idx],
            self.ier[idx],
            self.dist_to_ref[idx],
            self.label[idx],
        )

    @staticmethod
    def from_verts(verts: np.ndarray, points: np.ndarray) -> "CandidateSet":
        verts = np.asarray(verts, dtype=np.int64).reshape(-1, 3)
        m = len(verts)
        tri = points[verts]
        e = np.stack(
            [
                np.linalg.norm(tri[:, 1] - tri[:, 0], axis=1),
                np.linalg.norm(tri[:, 2] - tri[:, 1], axis=1),
                np.linalg.norm(tri[:, 0] - tri[:, 2], axis=1),
            ],
            axis=1,
        )
        return CandidateSet(
            verts=verts,
            longest_edge=e.max(axis=1),
            ier=np.full(m, np.nan),
            dist_to_ref=np.full(m, np.nan),
            label=np.full(m, -1, dtype=np.int8),
        )


def _pack_triples(verts: np.ndarray, n: int) -> np.ndarray:
    if n**3 >= 2**63:
        raise ValueError("point count too large for packed triple keys")
    return (verts[:, 0] * n + verts[:, 1]) * n + verts[:, 2]


def propose_candidates(knn: KnnGraph, pc: PointCloud) -> CandidateSet:
    """Every (point, neighbor pair) triple, canonicalized and deduplicated.

    Output order is lexicographic by ascending vertex triple, which makes the
    set independent of which vertices proposed each triple. Triples with
    triangle area below DEGENERATE_AREA are dropped.
    """
    pts = pc.points
    n = len(pts)
    k = knn.k
    iu, iv = np.triu_indices(k, 1)
    a = np.repeat(knn.unique_ids, len(iu))
    b = knn.neighbors[:, iu].reshape(-1)
    c = knn.neighbors[:, iv].reshape(-1)
    triples = np.sort(np.stack([a, b, c], axis=1), axis=1)

    # unique sorted packed keys = canonical lexicographic candidate order
    keys = _pack_triples(triples, n)
    _, first = np.unique(keys, return_index=True)
    triples = triples[first]

    tri = pts[triples]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    area = 0.5 * np.linalg.norm(cross, axis=1)
    triples = triples[area >= DEGENERATE_AREA]
    return CandidateSet.from_verts(triples, pts)


def candidate_edges(verts: np.ndarray) -> np.ndarray:
    """Unique undirected vertex pairs over all candidate edges, (P, 2) sorted."""
    verts = np.asarray(verts, dtype=np.int64).reshape(-1, 3)
    pairs = np.concatenate(
        [verts[:, [0, 1]], verts[:, [0, 2]], verts[:, [1, 2]]], axis=0
    )
    lo = pairs.min(axis=1)
    hi = pairs.max(axis=1)
    n = int(verts.max()) + 1 if len(verts) else 1
    keys = lo * n + hi
    uniq = np.unique(keys)
    return np.stack([uniq // n, uniq % n], axis=1)


# -- the IER rule -------------------------------------------------------------


def ier_pair(d_g: float, d_e: float) -> float:
    """Intrinsic-extrinsic ratio of one vertex pair: d_G / d_E."""
    if not d_e > 0.0:
        raise ValueError("ier_pair requires d_e > 0 (coincident points?)")
    return d_g / d_e


def ier_triangle(geodesics, euclideans) -> float:
    """Triangle IER: sum of the three geodesics over the sum of Euclideans.

    Any infinite geodesic (cross-component pair) makes the ratio +infinity.
    """
    d_e = [float(x) for x in euclideans]
    d_g = [float(x) for x in geodesics]
    if len(d_e) != 3 or len(d_g) != 3:
        raise ValueError("ier_triangle expects three distances per side")
    for x in d_e:
        if not x > 0.0:
            raise ValueError("ier_triangle requires all Euclidean distances > 0")
    if any(math.isinf(x) for x in d_g):
        return math.inf
    return sum(d_g) / sum(d_e)


def triangle_iers(
    cands: CandidateSet,
    points: np.ndarray,
    pair_keys: np.ndarray,
    pair_dists: np.ndarray,
    n_points: int,
) -> np.ndarray:
    """Vectorized triangle IER for every candidate.

    ``pair_keys`` are sorted ``lo * n_points + hi`` keys with geodesic
    distances in ``pair_dists``; pairs absent from the table count as
    +infinity (beyond every cutoff).
    """
    verts = cands.verts
    tri = points[verts]
    e01 = np.linalg.norm(tri[:, 1] - tri[:, 0], axis=1)
    e02 = np.linalg.norm(tri[:, 2] - tri[:, 0], axis=1)
    e12 = np.linalg.norm(tri[:, 2] - tri[:, 1], axis=1)
    if len(verts) and min(e01.min(), e02.min(), e12.min()) <= 0.0:
        raise ValueError("candidate with coincident vertices")

    geo_sum = np.zeros(len(verts))
    for i, j in ((0, 1), (0, 2), (1, 2)):
        keys = verts[:, i] * n_points + verts[:, j]
        if len(pair_keys):
            pos = np.minimum(np.searchsorted(pair_keys, keys), len(pair_keys) - 1)
            d = np.where(pair_keys[pos] == keys, pair_dists[pos], np.inf)
        else:
            d = np.full(len(keys), np.inf)
        geo_sum = geo_sum + d
    return geo_sum / (e01 + e02 + e12)


# -- labeling -----------------------------------------------------------------


@dataclass(frozen=True)
class LabelingParams:
    """Thresholds of the 3-class ground-truth rule."""

    tau: float = 1.3
    dist_thresh: float = 0.005
    l: int = 2
    n_face_samples: int = 10

    def __post_init__(self):
        if not self.tau > 1.0:
            raise ValueError("tau must be > 1")
        if not self.dist_thresh > 0.0:
            raise ValueError("dist_thresh must be > 0")
        if self.l != 2:
            raise ValueError("the label rule is fixed at l = 2 correct bins")
        if self.n_face_samples < 1:
            raise ValueError("n_face_samples must be >= 1")


def candidate_dist_to_mesh(
    cands: CandidateSet,
    points: np.ndarray,
    ref_mesh: TriangleMesh,
    n_face_samples: int = 10,
    seed=0,
    mask=None,
) -> np.ndarray:
    """Mean distance from uniform candidate-face samples to the reference mesh.

    Returns one value per selected candidate (all of them when ``mask`` is
    None). Exact point-to-nearest-triangle distances underneath.
    """
    if ref_mesh.n_faces == 0:
        raise ValueError("reference mesh has no faces")
    verts = cands.verts if mask is None else cands.verts[mask]
    if len(verts) == 0:
        return np.zeros(0)
    rng = np.random.default_rng(seed)
    field = MeshDistanceField(ref_mesh)
    k = int(n_face_samples)
    out = np.empty(len(verts))
    # row blocks cap the transient sample/query buffers at ~2M points
    step = max(1, 2_000_000 // k)
    for s in range(0, len(verts), step):
        e = min(len(verts), s + step)
        samples = sample_in_triangles(points[verts[s:e]], k, rng)
        out[s:e] = field.distances(samples.reshape(-1, 3)).reshape(e - s, k).mean(axis=1)
    return out


def label_rule(ier: np.ndarray, dist_to_ref: np.ndarray, params: LabelingParams):
    """Pure 3-class rule: 0 iff IER >= tau, else 1 iff dist <= thresh, else 2."""
    ier = np.asarray(ier, dtype=np.float64)
    dist = np.asarray(dist_to_ref, dtype=np.float64)
    out = np.full(ier.shape, 2, dtype=np.int8)
    near = dist <= params.dist_thresh
    out[near] = 1
    out[ier >= params.tau] = 0
    return out


def label_candidates(
    cands: CandidateSet,
    ref_mesh: TriangleMesh = None,
    params: LabelingParams = LabelingParams(),
    seed=0,
    points: np.ndarray = None,
) -> CandidateSet:
    """Assign ground-truth labels; fills dist_to_ref where still needed.

    ``cands.ier`` must already be populated. dist_to_ref is only measured for
    candidates the IER rule does not already reject (label 0 never reads it);
    rejected candidates keep NaN in that column.
    """
    ier = cands.ier
    if np.isnan(ier).any():
        raise ValueError("candidate IER must be computed before labeling")
    dist = cands.dist_to_ref.copy()
    need = (ier < params.tau) & np.isnan(dist)
    if need.any():
        if ref_mesh is None or points is None:
            raise ValueError(
                "dist_to_ref missing and no reference mesh/points to measure it"
            )
        dist[need] = candidate_dist_to_mesh(
            cands, points, ref_mesh, params.n_face_samples, seed, mask=need
        )
    label = label_rule(ier, np.where(np.isnan(dist), np.inf, dist), params)
    return CandidateSet(cands.verts, cands.longest_edge, ier.copy(), dist, label)


# -- labeled-candidate dump (IERC) ---------------------------------------------


def save_candidates(path, cands: CandidateSet, fmt: str = "bin") -> None:
    """Write the candidate dump: 16-byte header + 21-byte records, or CSV."""
    if fmt == "csv":
        lines = ["u,v,w,ier,dist_to_ref,label"]
        ier32 = cands.ier.astype(np.float32)
        dist32 = cands.dist_to_ref.astype(np.float32)
        for row, i, d, lab in zip(cands.verts, ier32, dist32, cands.label):
            lines.append(
                f"{row[0]},{row[1]},{row[2]},{float(i)!r},{float(d)!r},{int(lab)}"
            )
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        return
    if fmt != "bin":
        raise ValueError(f"unknown candidate dump format {fmt!r}")
    rec = np.empty(len(cands), dtype=_IERC_RECORD)
    rec["verts"] = cands.verts
    rec["ier"] = cands.ier
    rec["dist"] = cands.dist_to_ref
    # u8 storage: unset (-1) rides as 255
    rec["label"] = cands.label.astype(np.int16) & 0xFF
    with open(path, "wb") as fh:
        fh.write(_IERC_MAGIC)
        fh.write(np.uint32(_IERC_VERSION).tobytes())
        fh.write(np.uint64(len(cands)).tobytes())
        fh.write(rec.tobytes())


def load_candidates(path) -> CandidateSet:
    """Read a candidate dump written by :func:`save_candidates` (either mode)."""
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head == _IERC_MAGIC:
            version = np.frombuffer(fh.read(4), dtype="<u4")[0]
            if version != _IERC_VERSION:
                raise ValueError(f"unsupported IERC version {version}")
            count = int(np.frombuffer(fh.read(8), dtype="<u8")[0])
            body = fh.read()
            if len(body) != count * _IERC_RECORD.itemsize:
                raise ValueError(
                    f"IERC file truncated: expected {count} records, "
                    f"got {len(body)} payload bytes"
                )
            rec = np.frombuffer(body, dtype=_IERC_RECORD)
            label = rec["label"].astype(np.int16)
            label[label == 255] = -1
            return CandidateSet(
                verts=rec["verts"].astype(np.int64),
                longest_edge=np.full(count, np.nan),
                ier=rec["ier"].astype(np.float64),
                dist_to_ref=rec["dist"].astype(np.float64),
                label=label.astype(np.int8),
            )
    # not the binary magic: try CSV
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "u,v,w,ier,dist_to_ref,label":
            raise ValueError(
                "unrecognized candidate dump: expected magic 'IERC' or the "
                "CSV header 'u,v,w,ier,dist_to_ref,label'"
            )
        rows = [line.strip().split(",") for line in fh if line.strip()]
    verts = np.array([[int(r[0]), int(r[1]), int(r[2])] for r in rows], np.int64)
    ier = np.array([float(r[3]) for r in rows])
    dist = np.array([float(r[4]) for r in rows])
    label = np.array([int(r[5]) for r in rows], np.int8)
    return CandidateSet(
        verts=verts.reshape(-1, 3),
        longest_edge=np.full(len(rows), np.nan),
        ier=ier,
        dist_to_ref=dist,
        label=label,
    )
