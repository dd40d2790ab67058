import numpy as np
import pytest
from scipy.spatial import cKDTree

from iermesh import shapes
from iermesh.geom import point_triangle_distance
from iermesh.sampling import (
    add_noise,
    area_uniform_sample,
    poisson_disk_sample,
    poisson_radius_estimate,
    replicate_to_size,
)


def test_area_uniform_points_lie_on_their_faces():
    mesh = shapes.icosphere(2, radius=0.5)
    s = area_uniform_sample(mesh, 500, seed=1)
    d = point_triangle_distance(s.positions, mesh.face_corners()[s.face_ids])
    np.testing.assert_allclose(d, 0.0, atol=1e-9)
    np.testing.assert_allclose(np.linalg.norm(s.normals, axis=1), 1.0, atol=1e-12)


def test_area_uniform_face_counts_follow_area():
    # two faces, one with 4x the area: expect a ~4:1 split
    verts = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [10, 10, 0], [12, 10, 0], [10, 12, 0]]
    mesh = shapes.TriangleMesh(verts, [[0, 1, 2], [3, 4, 5]])
    s = area_uniform_sample(mesh, 20000, seed=2)
    frac = np.mean(s.face_ids == 1)
    assert frac == pytest.approx(0.8, abs=0.02)


def test_area_uniform_deterministic():
    mesh = shapes.box()
    a = area_uniform_sample(mesh, 100, seed=42)
    b = area_uniform_sample(mesh, 100, seed=42)
    np.testing.assert_array_equal(a.positions, b.positions)
    np.testing.assert_array_equal(a.face_ids, b.face_ids)


def test_area_uniform_rejects_zero_area():
    mesh = shapes.TriangleMesh(np.zeros((3, 3)), [[0, 1, 2]])
    with pytest.raises(ValueError):
        area_uniform_sample(mesh, 10)


@pytest.mark.parametrize("n_target", [500, 2000])
def test_poisson_disk_count_and_spacing(n_target):
    mesh = shapes.icosphere(3, radius=0.5)
    s = poisson_disk_sample(mesh, n_target, seed=0)
    assert 0.9 * n_target <= len(s) <= 1.1 * n_target
    r_est = poisson_radius_estimate(mesh.area(), n_target)
    dmin = cKDTree(s.positions).query(s.positions, k=2)[0][:, 1].min()
    assert dmin >= 0.5 * r_est
    # samples are on the surface with provenance
    d = point_triangle_distance(s.positions, mesh.face_corners()[s.face_ids])
    np.testing.assert_allclose(d, 0.0, atol=1e-9)


def test_poisson_disk_deterministic():
    mesh = shapes.box()
    a = poisson_disk_sample(mesh, 300, seed=9)
    b = poisson_disk_sample(mesh, 300, seed=9)
    np.testing.assert_array_equal(a.positions, b.positions)


def test_poisson_more_even_than_uniform():
    # blue-noise spacing: smallest gap far larger than iid sampling's
    mesh = shapes.icosphere(3, radius=0.5)
    n = 1000
    pois = poisson_disk_sample(mesh, n, seed=3)
    unif = area_uniform_sample(mesh, n, seed=3)
    gap = lambda pts: cKDTree(pts).query(pts, k=2)[0][:, 1].min()
    assert gap(pois.positions) > 4 * gap(unif.positions)


def test_replicate_to_size_pads_with_exact_duplicates():
    mesh = shapes.box()
    s = area_uniform_sample(mesh, 50, seed=0)
    out = replicate_to_size(s, 64, seed=1)
    assert len(out) == 64
    np.testing.assert_array_equal(out.positions[:50], s.positions)
    for i in range(50, 64):
        j = np.flatnonzero((s.positions == out.positions[i]).all(axis=1))
        assert len(j) >= 1  # bitwise copy of an existing record


def test_replicate_never_discards():
    mesh = shapes.box()
    s = area_uniform_sample(mesh, 50, seed=0)
    with pytest.raises(ValueError):
        replicate_to_size(s, 49)
    same = replicate_to_size(s, 50)
    np.testing.assert_array_equal(same.positions, s.positions)


def test_add_noise_zero_t_is_identity():
    mesh = shapes.box()
    s = area_uniform_sample(mesh, 40, seed=0)
    out = add_noise(s, 0.0, seed=5)
    np.testing.assert_array_equal(out.positions, s.positions)


def test_add_noise_sigma_scales_with_t():
    mesh = shapes.box()
    s = area_uniform_sample(mesh, 20000, seed=0)
    for t in (0.8, 1.6, 3.2):
        out = add_noise(s, t, seed=7)
        sigma = (out.positions - s.positions).std()
        assert sigma == pytest.approx(0.001 * t, rel=0.05)


def test_add_noise_deterministic():
    mesh = shapes.box()
    s = area_uniform_sample(mesh, 10, seed=0)
    a = add_noise(s, 1.6, seed=3)
    b = add_noise(s, 1.6, seed=3)
    np.testing.assert_array_equal(a.positions, b.positions)
