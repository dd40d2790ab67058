"""End-to-end meshing: point cloud -> candidates -> labels -> merged mesh.

Two entry points share the candidate machinery. :func:`remesh` runs the
oracle route against a reference mesh (surface geodesics + distance labels)
and is the ground-truth generator; :func:`reconstruct` runs the learned route
(features + classifier weights) on a bare cloud.

Geodesic sources follow the per-source cutoff rule: every unique candidate
pair is assigned to the endpoint with the larger k-NN radius (ties to the
lower index) and resolved in that source's single run with
cutoff = multiplier * radius. Pairs beyond the cutoff or across connected
components come back +inf, so their triangles get IER = +inf and label 0.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from .assembler import MergeReport, merge, sort_candidates
from .candidates import (
    CandidateSet,
    KnnGraph,
    LabelingParams,
    build_knn,
    candidate_edges,
    label_candidates,
    propose_candidates,
    triangle_iers,
)
from .classifier import ClassifierWeights, extract_features, predict
from .geodesic import local_geodesics
from .geom import MeshDistanceField, point_triangle_distance
from .mesh import PointCloud, TriangleMesh
from .sampling import SampleSet, poisson_disk_sample


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs of both pipeline routes; defaults follow the reference setup."""

    k: int = 50
    tau: float = 1.3
    dist_thresh: float = 0.005
    n_points: int = 12800
    n_face_samples: int = 10
    n_eval_samples: int = 1_000_000
    cutoff_multiplier: float = 2.0
    threads: int = 0  # 0 = IER_MESH_THREADS env var, else 1
    seed: int = 0

    def __post_init__(self):
        if self.k < 3:
            raise ValueError("k must be >= 3")
        if not self.tau > 1.0:
            raise ValueError("tau must be > 1")
        if not self.dist_thresh > 0.0:
            raise ValueError("dist_thresh must be > 0")
        if self.n_points < 4:
            raise ValueError("n_points must be >= 4")
        if self.n_face_samples < 1:
            raise ValueError("n_face_samples must be >= 1")
        if self.n_eval_samples < 1:
            raise ValueError("n_eval_samples must be >= 1")
        if not self.cutoff_multiplier > 0.0:
            raise ValueError("cutoff_multiplier must be > 0")
        if self.threads < 0:
            raise ValueError("threads must be >= 0")

    @property
    def labeling(self) -> LabelingParams:
        return LabelingParams(
            tau=self.tau,
            dist_thresh=self.dist_thresh,
            n_face_samples=self.n_face_samples,
        )

    def resolve_threads(self) -> int:
        if self.threads:
            return self.threads
        env = os.environ.get("IER_MESH_THREADS", "")
        return max(1, int(env)) if env.isdigit() else 1


# -- projecting a cloud onto the reference surface ------------------------------


def snap_to_mesh(points: np.ndarray, mesh: TriangleMesh):
    """Closest surface point and host face id for every input point."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    _, face, closest = MeshDistanceField(mesh).query(points, with_closest=True)
    return closest, face


def steiner_insert(
    mesh: TriangleMesh, points: np.ndarray, face_hints=None, tol: float = None
):
    """Insert on-surface points as mesh vertices; returns (mesh, vertex ids).

    Every point must lie on (or within ``tol`` of) the face given by its hint.
    Points within ``tol`` of an existing vertex reuse it; points on an edge
    split both incident faces; interior points split their face in three.
    Face windings are preserved. Default tol is 1e-9 * bbox diagonal.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if face_hints is None:
        raise ValueError("face_hints required (use snap_to_mesh for raw clouds)")
    hints = np.asarray(face_hints, dtype=np.int64).reshape(-1)
    if len(hints) != len(points):
        raise ValueError("face_hints length differs from points")
    if len(points) and (hints.min() < 0 or hints.max() >= mesh.n_faces):
        raise ValueError("face hint out of range")
    if tol is None:
        tol = 1e-9 * mesh.bbox_diagonal()

    verts = [tuple(map(float, v)) for v in mesh.vertices.tolist()]
    faces = [tuple(f) for f in mesh.faces.tolist()]
    alive = [True] * len(faces)
    slot_orig = list(range(len(faces)))
    orig_slots = {i: {i} for i in range(len(faces))}
    edge_map = {}

    def edge_key(u, v):
        return (u, v) if u < v else (v, u)

    def register(slot):
        f = faces[slot]
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            edge_map.setdefault(edge_key(a, b), set()).add(slot)
        orig_slots.setdefault(slot_orig[slot], set()).add(slot)

    def kill(slot):
        f = faces[slot]
        alive[slot] = False
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            edge_map[edge_key(a, b)].discard(slot)
        orig_slots[slot_orig[slot]].discard(slot)

    def spawn(tri, orig):
        faces.append(tri)
        alive.append(True)
        slot_orig.append(orig)
        register(len(faces) - 1)

    for i in range(len(faces)):
        register(i)

    vids = np.empty(len(points), dtype=np.int64)
    for pi, (p, hint) in enumerate(zip(points, hints)):
        slots = sorted(orig_slots[int(hint)])
        if not slots:
            raise RuntimeError("original face lost all fragments")
        tris = np.array([[verts[v] for v in faces[s]] for s in slots])
        d = point_triangle_distance(np.broadcast_to(p, (len(slots), 3)), tris)
        slot = slots[int(np.argmin(d))]
        if d.min() > max(tol, 1e-12 * max(1.0, float(np.abs(p).max()))):
            raise ValueError(
                f"point {pi} lies {d.min():.3e} off its hinted face (tol {tol:.3e})"
            )
        f = faces[slot]
        corner_d = [math.dist(p, verts[v]) for v in f]
        if min(corner_d) <= tol:
            vids[pi] = f[corner_d.index(min(corner_d))]
            continue
        edge_d = []
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            pa, pb = np.asarray(verts[a]), np.asarray(verts[b])
            t = np.clip(np.dot(p - pa, pb - pa) / max(np.dot(pb - pa, pb - pa), 1e-300), 0, 1)
            edge_d.append((float(np.linalg.norm(p - (pa + t * (pb - pa)))), a, b))
        vid = len(verts)
        verts.append(tuple(map(float, p)))
        vids[pi] = vid
        best = min(edge_d)
        if best[0] <= tol:
            u, v = best[1], best[2]
            for s in sorted(edge_map.get(edge_key(u, v), ())):
                x, y, z = faces[s]
                orig = slot_orig[s]
                kill(s)
                # replace the split edge while preserving winding
                if edge_key(x, y) == edge_key(u, v):
                    spawn((x, vid, z), orig)
                    spawn((vid, y, z), orig)
                elif edge_key(y, z) == edge_key(u, v):
                    spawn((x, y, vid), orig)
                    spawn((x, vid, z), orig)
                else:
                    spawn((x, y, vid), orig)
                    spawn((vid, y, z), orig)
        else:
            x, y, z = f
            orig = slot_orig[slot]
            kill(slot)
            spawn((x, y, vid), orig)
            spawn((y, z, vid), orig)
            spawn((z, x, vid), orig)

    out_faces = np.array(
        [f for f, ok in zip(faces, alive) if ok], dtype=np.int64
    ).reshape(-1, 3)
    return TriangleMesh(np.asarray(verts, dtype=np.float64), out_faces), vids


# -- per-source geodesic resolution ---------------------------------------------

_WORKER = {}


def _geo_init(mesh, vids):
    _WORKER["mesh"] = mesh
    _WORKER["vids"] = vids


def _geo_run(task):
    src, others, cutoff = task
    vids = _WORKER["vids"]
    res = local_geodesics(_WORKER["mesh"], int(vids[src]), vids[others], cutoff)
    return src, [res.distances[int(vids[o])] for o in others]


def pair_geodesics(
    aug_mesh: TriangleMesh,
    vids: np.ndarray,
    pairs: np.ndarray,
    radius: np.ndarray,
    multiplier: float = 2.0,
    threads: int = 1,
):
    """Surface distance per unique (lo, hi) cloud pair, (keys, dists) sorted.

    Each source's cutoff is ``multiplier * max(radius[source], farthest
    assigned pair)``, so +inf always means the surface ratio exceeds
    ``multiplier``. Keys are packed ``lo * n + hi`` with ``n = len(radius)``;
    run order is deterministic and independent of the thread count.
    """
    n = len(radius)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    src_is_hi = radius[pairs[:, 1]] > radius[pairs[:, 0]]
    source = np.where(src_is_hi, pairs[:, 1], pairs[:, 0])
    other = np.where(src_is_hi, pairs[:, 0], pairs[:, 1])

    tasks = []
    order = np.lexsort((other, source))
    src_sorted, oth_sorted = source[order], other[order]
    starts = np.flatnonzero(np.r_[True, src_sorted[1:] != src_sorted[:-1]])
    pos = aug_mesh.vertices[vids]
    for a, b in zip(starts, np.r_[starts[1:], len(src_sorted)]):
        s = int(src_sorted[a])
        tgt = oth_sorted[a:b]
        # pairs between two far-apart neighbours of a shared hub can be longer
        # than the source's own knn radius; the radius alone would clip them
        # to +inf even on a flat surface
        span = float(np.sqrt(((pos[tgt] - pos[s]) ** 2).sum(axis=1).max()))
        tasks.append((s, tgt, float(multiplier * max(float(radius[s]), span))))

    if threads > 1 and len(tasks) > 1:
        import multiprocessing as mp

        ctx = mp.get_context("fork")
        with ctx.Pool(threads, initializer=_geo_init, initargs=(aug_mesh, vids)) as pool:
            results = pool.map(_geo_run, tasks, chunksize=max(1, len(tasks) // (8 * threads)))
    else:
        _geo_init(aug_mesh, vids)
        results = [_geo_run(t) for t in tasks]

    keys = np.concatenate(
        [np.minimum(s, o) * n + np.maximum(s, o) for (s, o, _), _r in zip(tasks, results)]
    ) if tasks else np.empty(0, dtype=np.int64)
    dists = np.concatenate([r for _, r in results]) if tasks else np.empty(0)
    korder = np.argsort(keys)
    return keys[korder], dists[korder]


# -- the two routes ---------------------------------------------------------------


@dataclass(frozen=True)
class RemeshResult:
    mesh: TriangleMesh
    report: MergeReport
    candidates: CandidateSet  # fully labeled, including label 0
    samples: SampleSet
    knn: KnnGraph


@dataclass(frozen=True)
class ReconstructResult:
    mesh: TriangleMesh
    report: MergeReport
    candidates: CandidateSet  # labels are classifier predictions
    scores: np.ndarray  # (M, 3) class scores
    knn: KnnGraph


def label_cloud(
    points: np.ndarray,
    ref_mesh: TriangleMesh,
    config: PipelineConfig = PipelineConfig(),
    face_hints=None,
    seed=None,
):
    """Oracle route up to labels: candidates with IER, dist and label filled.

    Points with no ``face_hints`` are snapped to the reference surface first;
    hinted points are trusted to lie on their faces (as sampler output does).
    Returns ``(labeled CandidateSet, KnnGraph)``.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    pc = PointCloud(points)
    knn = build_knn(pc, config.k)
    cands = propose_candidates(knn, pc)

    if face_hints is None:
        on_surface, face_hints = snap_to_mesh(points, ref_mesh)
    else:
        on_surface = points
    aug, vids = steiner_insert(ref_mesh, on_surface, face_hints)

    pairs = candidate_edges(cands.verts)
    radius = knn.radius_of(np.arange(len(points)))
    keys, dists = pair_geodesics(
        aug, vids, pairs, radius, config.cutoff_multiplier, config.resolve_threads()
    )
    cands.ier[:] = triangle_iers(cands, points, keys, dists, len(points))
    labeled = label_candidates(
        cands, ref_mesh=ref_mesh, params=config.labeling, seed=seed, points=points
    )
    return labeled, knn


def remesh(ref_mesh: TriangleMesh, config: PipelineConfig = PipelineConfig()):
    """Oracle remesh: sample, label against the reference, filter, merge."""
    ss = np.random.SeedSequence(config.seed)
    seed_sample, seed_label = ss.spawn(2)
    samples = poisson_disk_sample(
        ref_mesh, config.n_points, seed=np.random.default_rng(seed_sample)
    )
    labeled, knn = label_cloud(
        samples.positions,
        ref_mesh,
        config,
        face_hints=samples.face_ids,
        seed=np.random.default_rng(seed_label),
    )
    keep = labeled.subset(labeled.label != 0)
    report = merge(sort_candidates(keep), samples.positions)
    return RemeshResult(report.mesh, report, labeled, samples, knn)


def reconstruct(
    points: np.ndarray,
    weights: ClassifierWeights,
    config: PipelineConfig = PipelineConfig(),
):
    """Learned route: candidates, features, classifier labels, merge."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    pc = PointCloud(points)
    knn = build_knn(pc, config.k)
    cands = propose_candidates(knn, pc)
    feats = extract_features(pc, cands, knn)
    labels, scores = predict(weights, feats)
    cands.label[:] = labels
    keep = cands.subset(labels != 0)
    report = merge(sort_candidates(keep), points)
    return ReconstructResult(report.mesh, report, cands, scores, knn)
