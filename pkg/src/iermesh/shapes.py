"""Parametric test shapes.

Everything returns a TriangleMesh in a roughly unit-diameter frame. The
two-sphere and two-box generators build the disjoint nested configurations
used to exercise cross-component candidate filtering.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh, clean_mesh


def icosphere(subdivisions: int = 3, radius: float = 0.5, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Icosahedron subdivided ``subdivisions`` times, projected to a sphere."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
            (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
            (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
        ],
        dtype=np.float64,
    )
    faces = np.array(
        [
            (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
            (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
            (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
            (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
        ],
        dtype=np.int64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    for _ in range(subdivisions):
        midpoint: dict[tuple[int, int], int] = {}
        new_faces = []
        verts_list = list(verts)

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                m = verts_list[a] + verts_list[b]
                m /= np.linalg.norm(m)
                midpoint[key] = len(verts_list)
                verts_list.append(m)
            return midpoint[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        verts = np.asarray(verts_list)
        faces = np.asarray(new_faces, dtype=np.int64)
    return TriangleMesh(verts * radius + np.asarray(center, float), faces)


def box(extents=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned box, two triangles per side, outward winding."""
    e = 0.5 * np.asarray(extents, dtype=np.float64)
    c = np.asarray(center, dtype=np.float64)
    corners = np.array(
        [
            (-1, -1, -1), (1, -1, -1), (1, 1, -1), (-1, 1, -1),
            (-1, -1, 1), (1, -1, 1), (1, 1, 1), (-1, 1, 1),
        ],
        dtype=np.float64,
    )
    quads = [
        (0, 3, 2, 1), (4, 5, 6, 7), (0, 1, 5, 4),
        (2, 3, 7, 6), (1, 2, 6, 5), (3, 0, 4, 7),
    ]
    faces = []
    for a, b, cc, d in quads:
        faces += [(a, b, cc), (a, cc, d)]
    return TriangleMesh(corners * e + c, np.asarray(faces, dtype=np.int64))


def torus(
    major_radius: float = 0.35,
    minor_radius: float = 0.15,
    n_major: int = 48,
    n_minor: int = 24,
) -> TriangleMesh:
    u = 2.0 * np.pi * np.arange(n_major) / n_major
    v = 2.0 * np.pi * np.arange(n_minor) / n_minor
    uu, vv = np.meshgrid(u, v, indexing="ij")
    r = major_radius + minor_radius * np.cos(vv)
    verts = np.stack(
        [r * np.cos(uu), r * np.sin(uu), minor_radius * np.sin(vv)], axis=-1
    ).reshape(-1, 3)
    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            a = i * n_minor + j
            b = ((i + 1) % n_major) * n_minor + j
            c = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            d = i * n_minor + (j + 1) % n_minor
            faces += [(a, b, c), (a, c, d)]
    return TriangleMesh(verts, np.asarray(faces, dtype=np.int64))


def plane_grid(nx: int = 10, ny: int = 10, size: float = 1.0, z: float = 0.0) -> TriangleMesh:
    """Flat triangulated rectangle in the z = const plane."""
    xs = np.linspace(-0.5 * size, 0.5 * size, nx + 1)
    ys = np.linspace(-0.5 * size, 0.5 * size, ny + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.stack([xx, yy, np.full_like(xx, z)], axis=-1).reshape(-1, 3)
    faces = []
    for i in range(nx):
        for j in range(ny):
            a = i * (ny + 1) + j
            b = (i + 1) * (ny + 1) + j
            c = (i + 1) * (ny + 1) + j + 1
            d = i * (ny + 1) + j + 1
            faces += [(a, b, c), (a, c, d)]
    return TriangleMesh(verts, np.asarray(faces, dtype=np.int64))


def _concat(a: TriangleMesh, b: TriangleMesh) -> TriangleMesh:
    verts = np.vstack([a.vertices, b.vertices])
    faces = np.vstack([a.faces, b.faces + a.n_vertices])
    return TriangleMesh(verts, faces)


def dual_spheres(
    inner_diameter: float = 0.933, outer_diameter: float = 1.0, subdivisions: int = 3
) -> TriangleMesh:
    """Two concentric spheres; the gap between the shells stays unmeshed."""
    inner = icosphere(subdivisions, radius=0.5 * inner_diameter)
    outer = icosphere(subdivisions, radius=0.5 * outer_diameter)
    return _concat(inner, outer)


def dual_boxes(inner_extent: float = 0.5, outer_extent: float = 0.57735) -> TriangleMesh:
    inner = box((inner_extent,) * 3)
    outer = box((outer_extent,) * 3)
    return _concat(inner, outer)


def random_convex(n_points: int = 30, seed: int = 0) -> TriangleMesh:
    """Convex hull of random points on a jittered sphere, unit-ish diameter."""
    from scipy.spatial import ConvexHull

    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n_points, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    pts = d * (0.5 + 0.15 * rng.random((n_points, 1)))
    hull = ConvexHull(pts)
    # hull vertices come back unreferenced-compacted by reindexing below
    used = np.unique(hull.simplices)
    remap = -np.ones(len(pts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriangleMesh(pts[used], remap[hull.simplices])


def bumpy_sphere(subdivisions: int = 2, amplitude: float = 0.1, seed: int = 0) -> TriangleMesh:
    """Icosphere with smooth radial perturbation; has saddle regions."""
    rng = np.random.default_rng(seed)
    base = icosphere(subdivisions, radius=0.5)
    freq = rng.uniform(2.0, 5.0, size=3)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=3)
    v = base.vertices
    bump = (
        np.sin(freq[0] * v[:, 0] * 2 * np.pi + phase[0])
        + np.sin(freq[1] * v[:, 1] * 2 * np.pi + phase[1])
        + np.sin(freq[2] * v[:, 2] * 2 * np.pi + phase[2])
    )
    radial = v / np.linalg.norm(v, axis=1, keepdims=True)
    return TriangleMesh(v + radial * (amplitude * bump[:, None] / 3.0), base.faces)


def random_test_mesh(seed: int = 0, max_faces: int = 500) -> TriangleMesh:
    """Small random closed mesh for geodesic validation (convex or bumpy)."""
    rng = np.random.default_rng(seed)
    if rng.random() < 0.5:
        m = random_convex(int(rng.integers(16, 40)), seed=seed + 1)
    else:
        m = bumpy_sphere(2, amplitude=float(rng.uniform(0.03, 0.12)), seed=seed + 1)
    m = clean_mesh(m, merge_eps=1e-9)
    if m.n_faces > max_faces:
        raise AssertionError("generator produced too many faces")
    return m
