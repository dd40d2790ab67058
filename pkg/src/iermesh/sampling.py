"""Surface sampling: area-uniform, Poisson-disk, replication padding, noise."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from .mesh import PointCloud, TriangleMesh


class SampledPoint(NamedTuple):
    position: np.ndarray
    normal: np.ndarray
    face_id: int


@dataclass
class SampleSet:
    """Columnar batch of surface samples; indexable as SampledPoint records."""

    positions: np.ndarray  # (N, 3)
    normals: np.ndarray  # (N, 3) unit, from the host face plane
    face_ids: np.ndarray  # (N,)

    def __len__(self):
        return len(self.positions)

    def __getitem__(self, i: int) -> SampledPoint:
        return SampledPoint(self.positions[i], self.normals[i], int(self.face_ids[i]))

    def subset(self, idx) -> "SampleSet":
        return SampleSet(self.positions[idx], self.normals[idx], self.face_ids[idx])

    def to_point_cloud(self) -> PointCloud:
        return PointCloud(self.positions.copy(), self.normals.copy())


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def area_uniform_sample(mesh: TriangleMesh, n: int, seed=0) -> SampleSet:
    """n points distributed uniformly by area, with host-face plane normals."""
    if n < 0:
        raise ValueError("sample count must be nonnegative")
    areas = mesh.face_areas()
    total = areas.sum()
    if total <= 0.0:
        raise ValueError("mesh has zero surface area")
    rng = _as_rng(seed)
    face_ids = rng.choice(mesh.n_faces, size=n, p=areas / total)
    tri = mesh.face_corners()[face_ids]
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    pos = (
        (1.0 - r1)[:, None] * tri[:, 0]
        + (r1 * (1.0 - r2))[:, None] * tri[:, 1]
        + (r1 * r2)[:, None] * tri[:, 2]
    )
    return SampleSet(pos, mesh.face_normals()[face_ids], face_ids)


def poisson_radius_estimate(surface_area: float, n_target: int) -> float:
    """Hexagonal-packing radius estimate sqrt(S / (2*sqrt(3)*n))."""
    return float(np.sqrt(surface_area / (2.0 * np.sqrt(3.0) * n_target)))


class _SpatialGrid:
    """Uniform hash grid for dart-throwing conflict checks (cell size = r)."""

    def __init__(self, r: float):
        self.r = r
        self.r2 = r * r
        self.cells: dict[tuple[int, int, int], list[int]] = {}
        self.points: list[np.ndarray] = []

    def _cell(self, p):
        return (int(p[0] // self.r), int(p[1] // self.r), int(p[2] // self.r))

    def conflicts(self, p, r2=None) -> bool:
        r2 = self.r2 if r2 is None else r2
        cx, cy, cz = self._cell(p)
        px, py, pz = p
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    bucket = self.cells.get((cx + dx, cy + dy, cz + dz))
                    if not bucket:
                        continue
                    for j in bucket:
                        q = self.points[j]
                        ddx = q[0] - px
                        ddy = q[1] - py
                        ddz = q[2] - pz
                        if ddx * ddx + ddy * ddy + ddz * ddz < r2:
                            return True
        return False

    def insert(self, p) -> int:
        idx = len(self.points)
        self.points.append(p)
        self.cells.setdefault(self._cell(p), []).append(idx)
        return idx


def _eliminate_to_count(samples: SampleSet, n_keep: int, r: float) -> SampleSet:
    """Weighted sample elimination: drop the most crowded points first."""
    import heapq

    pts = samples.positions
    n = len(pts)
    radius = 2.0 * r
    pairs = cKDTree(pts).query_pairs(radius, output_type="ndarray")
    neighbors: list[list[int]] = [[] for _ in range(n)]
    weights = np.zeros(n)
    if len(pairs):
        d = np.linalg.norm(pts[pairs[:, 0]] - pts[pairs[:, 1]], axis=1)
        w = (1.0 - d / radius) ** 8
        for (i, j), wij in zip(pairs, w):
            neighbors[i].append(j)
            neighbors[j].append(i)
            weights[i] += wij
            weights[j] += wij
    alive = np.ones(n, dtype=bool)
    heap = [(-weights[i], i) for i in range(n)]
    heapq.heapify(heap)
    remaining = n
    while remaining > n_keep and heap:
        negw, i = heapq.heappop(heap)
        if not alive[i] or -negw != weights[i]:
            continue
        alive[i] = False
        remaining -= 1
        for j in neighbors[i]:
            if alive[j]:
                d = np.linalg.norm(pts[i] - pts[j])
                weights[j] -= (1.0 - d / radius) ** 8
                heapq.heappush(heap, (-weights[j], j))
    return samples.subset(np.flatnonzero(alive))


def poisson_disk_sample(mesh: TriangleMesh, n_target: int, seed=0) -> SampleSet:
    """Blue-noise surface samples.

    Dart throwing against a spatial grid at the hex-packing radius estimate,
    run to saturation, then weighted sample elimination down to n_target.
    Guarantees: the realized minimum spacing is at least half the radius
    estimate, and the count lands within [0.9, 1.1] * n_target (exactly
    n_target unless the surface saturates early).
    """
    if n_target <= 0:
        raise ValueError("n_target must be positive")
    rng = _as_rng(seed)
    r = poisson_radius_estimate(mesh.area(), n_target)
    grid = _SpatialGrid(r)
    kept: list[int] = []

    batch = max(1024, n_target)
    pool_order = []
    misses = 0
    total_thrown = 0
    max_throws = 200 * n_target
    while total_thrown < max_throws:
        darts = area_uniform_sample(mesh, batch, rng)
        accepted_in_batch = 0
        for i in range(len(darts)):
            p = darts.positions[i]
            total_thrown += 1
            if grid.conflicts(p):
                continue
            grid.insert(p)
            pool_order.append((darts, i))
            accepted_in_batch += 1
        kept_count = len(pool_order)
        if accepted_in_batch == 0:
            misses += 1
        else:
            misses = 0
        saturated = misses >= 2
        if kept_count >= int(1.2 * n_target) or (saturated and kept_count >= n_target):
            break
        if saturated:
            # relax to half radius; spacing stays >= 0.5 * r as promised
            relax_r2 = (0.5 * r) ** 2
            while kept_count < n_target and total_thrown < max_throws:
                darts = area_uniform_sample(mesh, batch, rng)
                hit = False
                for i in range(len(darts)):
                    p = darts.positions[i]
                    total_thrown += 1
                    if grid.conflicts(p, relax_r2):
                        continue
                    grid.insert(p)
                    pool_order.append((darts, i))
                    kept_count += 1
                    hit = True
                if not hit:
                    break
            break

    pos = np.array([d.positions[i] for d, i in pool_order])
    nrm = np.array([d.normals[i] for d, i in pool_order])
    fid = np.array([int(d.face_ids[i]) for d, i in pool_order], dtype=np.int64)
    out = SampleSet(pos.reshape(-1, 3), nrm.reshape(-1, 3), fid)
    if len(out) > n_target:
        out = _eliminate_to_count(out, n_target, r)
    if len(out) < int(np.ceil(0.9 * n_target)):
        raise RuntimeError(
            f"poisson sampling saturated at {len(out)} points "
            f"(target {n_target}); surface too small for the request"
        )
    return out


def replicate_to_size(samples: SampleSet, n: int, seed=0) -> SampleSet:
    """Pad to exactly n records by duplicating uniformly chosen existing ones.

    Never discards: asking for fewer records than present is an error.
    """
    if len(samples) == 0:
        raise ValueError("cannot replicate an empty sample set")
    if n < len(samples):
        raise ValueError("replicate_to_size never discards points")
    if n == len(samples):
        return samples.subset(np.arange(len(samples)))
    rng = _as_rng(seed)
    extra = rng.integers(0, len(samples), size=n - len(samples))
    idx = np.concatenate([np.arange(len(samples)), extra])
    return samples.subset(idx)


def add_noise(samples: SampleSet, t: float, seed=0) -> SampleSet:
    """Isotropic Gaussian jitter with sigma = 0.001 * t; t = 0 is the identity.

    Positions no longer lie on the source faces afterwards; normals and face
    ids are carried through unchanged.
    """
    if t < 0:
        raise ValueError("noise level must be nonnegative")
    if t == 0.0:
        return samples.subset(np.arange(len(samples)))
    rng = _as_rng(seed)
    jitter = rng.normal(0.0, 0.001 * t, size=samples.positions.shape)
    return SampleSet(
        samples.positions + jitter, samples.normals.copy(), samples.face_ids.copy()
    )
