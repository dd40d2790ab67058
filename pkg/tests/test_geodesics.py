import math

import numpy as np
import pytest

from iermesh import shapes
from iermesh.geodesic import (
    GeodesicResult,
    crop_patch,
    exact_geodesics,
    geodesic_matrix,
    local_geodesics,
    oracle_geodesic_matrix,
    oracle_geodesics,
)
from iermesh.mesh import TriangleMesh


def test_flat_grid_matches_euclidean():
    # convex flat region: every geodesic is the straight segment
    mesh = shapes.plane_grid(5, 4, size=2.0)
    src = 0
    d = exact_geodesics(mesh, src)
    expect = np.linalg.norm(mesh.vertices - mesh.vertices[src], axis=1)
    np.testing.assert_allclose(d, expect, atol=1e-9)


def test_unit_cube_corner_distances():
    mesh = shapes.box((1.0, 1.0, 1.0))
    verts = mesh.vertices
    n = len(verts)
    dmat = geodesic_matrix(mesh, range(n))
    for i in range(n):
        for j in range(n):
            de = np.linalg.norm(verts[i] - verts[j])
            if i == j:
                assert dmat[i, j] == 0.0
            elif de == pytest.approx(1.0):
                assert dmat[i, j] == pytest.approx(1.0, abs=1e-9)
            elif de == pytest.approx(math.sqrt(2.0)):
                # face diagonal: straight across one flat (triangulated) face
                assert dmat[i, j] == pytest.approx(math.sqrt(2.0), abs=1e-9)
            else:
                # opposite corners: unfold two faces into a 2 x 1 rectangle
                assert dmat[i, j] == pytest.approx(math.sqrt(5.0), abs=1e-9)


def test_sphere_antipodal_ratio():
    mesh = shapes.icosphere(2, radius=0.5)
    verts = mesh.vertices
    anti = int(np.argmin(np.linalg.norm(verts + verts[0], axis=1)))
    d = exact_geodesics(mesh, 0, [anti])[0]
    ratio = d / np.linalg.norm(verts[anti] - verts[0])
    assert ratio == pytest.approx(math.pi / 2.0, rel=0.02)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_exact_agrees_with_lattice_oracle(seed):
    mesh = shapes.random_test_mesh(seed)
    rng = np.random.default_rng(seed)
    srcs = rng.choice(mesh.n_vertices, size=4, replace=False)
    upper = oracle_geodesic_matrix(mesh, srcs, subdivision=4)
    for row, s in enumerate(srcs):
        d = exact_geodesics(mesh, int(s))
        # the lattice graph can only overestimate
        assert (d <= upper[row] + 1e-9).all()
        finite = np.isfinite(upper[row]) & (upper[row] > 0)
        rel = (upper[row][finite] - d[finite]) / upper[row][finite]
        assert rel.max() <= 0.01


def test_symmetry_and_triangle_inequality():
    mesh = shapes.random_test_mesh(3)
    ids = np.linspace(0, mesh.n_vertices - 1, 8).astype(int)
    dmat = geodesic_matrix(mesh, ids)
    np.testing.assert_allclose(dmat, dmat.T, atol=1e-8)
    n = len(ids)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                assert dmat[i, k] <= dmat[i, j] + dmat[j, k] + 1e-9


def test_geodesic_at_least_euclidean():
    mesh = shapes.random_test_mesh(4)
    d = exact_geodesics(mesh, 0)
    de = np.linalg.norm(mesh.vertices - mesh.vertices[0], axis=1)
    assert (d >= de - 1e-9).all()


def test_disconnected_components_are_infinite():
    mesh = shapes.dual_spheres(subdivisions=1)
    last = mesh.n_vertices - 1
    assert exact_geodesics(mesh, 0, [last])[0] == math.inf
    assert oracle_geodesics(mesh, 0, [last], subdivision=1)[last] == math.inf
    # within one component both stay finite
    assert np.isfinite(exact_geodesics(mesh, 0, [1])[0])


def test_oracle_monotone_in_subdivision():
    mesh = shapes.random_test_mesh(5)
    ids = np.arange(0, mesh.n_vertices, max(1, mesh.n_vertices // 6))[:5]
    exact = np.vstack([exact_geodesics(mesh, int(s), ids) for s in ids])
    prev = None
    for s in range(5):
        cur = oracle_geodesic_matrix(mesh, ids, ids, subdivision=s)
        assert (cur >= exact - 1e-9).all()
        if prev is not None:
            assert (cur <= prev + 1e-9).all()
        prev = cur


def test_local_geodesics_result_contract():
    mesh = shapes.icosphere(1, radius=0.5)
    targets = [0, 3, 7, 11]
    res = local_geodesics(mesh, 0, targets, cutoff=10.0)
    assert isinstance(res, GeodesicResult)
    assert res.source == 0
    assert set(res.distances) == set(targets)
    assert res[0] == 0.0
    verts = mesh.vertices
    for t in targets:
        assert res[t] >= np.linalg.norm(verts[t] - verts[0]) - 1e-9
    # one shared cutoff truncates every farther target to inf
    dmax = max(res.distances.values())
    tight = local_geodesics(mesh, 0, targets, cutoff=0.5 * dmax)
    assert math.isinf(max(tight.distances.values()))
    assert tight[0] == 0.0
    for bad in (0.0, -1.0):
        with pytest.raises(ValueError):
            local_geodesics(mesh, 0, targets, cutoff=bad)


def test_local_geodesics_symmetry():
    mesh = shapes.random_test_mesh(6)
    ids = [0, mesh.n_vertices // 3, mesh.n_vertices - 1]
    for u in ids:
        for v in ids:
            duv = local_geodesics(mesh, u, [v])[v]
            dvu = local_geodesics(mesh, v, [u])[u]
            assert duv == pytest.approx(dvu, abs=1e-6)


def test_oracle_single_source_form():
    mesh = shapes.box()
    res = oracle_geodesics(mesh, 0, subdivision=2)
    assert isinstance(res, GeodesicResult)
    assert set(res.distances) == set(range(mesh.n_vertices))
    row = oracle_geodesic_matrix(mesh, [0], subdivision=2)[0]
    for t in range(mesh.n_vertices):
        assert res[t] == row[t]
    with pytest.raises(ValueError):
        oracle_geodesics(mesh, 0, subdivision=0)


def test_cutoffs_truncate_to_infinity():
    mesh = shapes.plane_grid(4, 4)
    src = 0
    targets = [6, 12, 18, 24]
    full = exact_geodesics(mesh, src, targets)
    loose = exact_geodesics(mesh, src, targets, cutoffs=2.0 * full)
    np.testing.assert_allclose(loose, full, atol=1e-12)
    tight = exact_geodesics(mesh, src, targets, cutoffs=0.999 * full)
    assert np.isinf(tight).all()
    mixed = exact_geodesics(
        mesh, src, targets, cutoffs=[2 * full[0], 0.5 * full[1], 2 * full[2], 0.0]
    )
    assert mixed[0] == full[0] and mixed[2] == full[2]
    assert math.isinf(mixed[1]) and math.isinf(mixed[3])


def test_cutoffs_without_targets_rejected():
    mesh = shapes.box()
    with pytest.raises(ValueError):
        exact_geodesics(mesh, 0, cutoffs=[1.0])


def test_vertex_insertion_preserves_distances():
    # splitting a face at its centroid changes the triangulation but not the
    # surface, so distances between original vertices must not move
    mesh = shapes.box((1.0, 1.0, 1.0))
    before = geodesic_matrix(mesh, range(mesh.n_vertices))
    f = mesh.faces[0]
    centroid = mesh.vertices[f].mean(axis=0)
    verts = np.vstack([mesh.vertices, centroid])
    c = len(verts) - 1
    rest = mesh.faces[1:]
    split = np.array([[f[0], f[1], c], [f[1], f[2], c], [f[2], f[0], c]])
    refined = TriangleMesh(verts, np.vstack([rest, split]))
    after = geodesic_matrix(refined, range(mesh.n_vertices))
    np.testing.assert_allclose(after, before, atol=1e-9)


def test_source_and_target_validation():
    mesh = shapes.box()
    with pytest.raises(ValueError):
        exact_geodesics(mesh, mesh.n_vertices)
    with pytest.raises(ValueError):
        exact_geodesics(mesh, 0, [mesh.n_vertices])


def test_deterministic_reruns():
    mesh = shapes.random_test_mesh(7)
    a = exact_geodesics(mesh, 2)
    b = exact_geodesics(mesh, 2)
    np.testing.assert_array_equal(a, b)


def test_crop_patch_preserves_short_geodesics():
    mesh = shapes.icosphere(3, radius=0.5)
    src = 0
    radius = 0.4
    all_d = exact_geodesics(mesh, src)
    patch, orig = crop_patch(mesh, mesh.vertices[src], radius)
    assert patch.n_faces < mesh.n_faces
    inv = {int(o): i for i, o in enumerate(orig)}
    pd = exact_geodesics(patch, inv[src])
    for pi, oi in enumerate(orig):
        if all_d[oi] <= radius:
            assert pd[pi] == pytest.approx(all_d[oi], abs=1e-9)
        else:
            # outside the certified radius the patch may only overestimate
            assert pd[pi] >= all_d[oi] - 1e-9
