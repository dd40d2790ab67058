import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iermesh import shapes
from iermesh.mesh import (
    TriangleMesh,
    clean_mesh,
    edge_key,
    merge_close_vertices,
    normalize,
)


def test_edge_key_canonical():
    assert edge_key(3, 7) == (3, 7)
    assert edge_key(7, 3) == (3, 7)


def test_face_index_out_of_range_rejected():
    with pytest.raises(ValueError):
        TriangleMesh(np.zeros((2, 3)), [[0, 1, 2]])


def test_edge_face_map_box():
    m = shapes.box()
    ef = m.edge_face_map()
    counts = sorted(len(v) for v in ef.values())
    # closed manifold: every edge has exactly two incident faces
    assert counts == [2] * 18
    assert m.is_edge_manifold
    assert m.non_manifold_edges() == []
    assert m.boundary_edges() == []


def test_non_manifold_edge_detected():
    verts = np.array(
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, -1, 0]], dtype=float
    )
    faces = [[0, 1, 2], [0, 1, 3], [0, 1, 4]]
    m = TriangleMesh(verts, faces)
    assert m.non_manifold_edges() == [(0, 1)]
    assert not m.is_edge_manifold


def test_boundary_edges_plane():
    m = shapes.plane_grid(2, 2)
    assert len(m.boundary_edges()) == 8


def test_face_areas_and_normals():
    m = TriangleMesh(
        [[0, 0, 0], [2, 0, 0], [0, 2, 0]],
        [[0, 1, 2]],
    )
    assert m.face_areas()[0] == pytest.approx(2.0)
    np.testing.assert_allclose(m.face_normals()[0], [0, 0, 1])


def test_sphere_area_close_to_analytic():
    m = shapes.icosphere(4, radius=0.5)
    assert m.area() == pytest.approx(4 * np.pi * 0.25, rel=5e-3)


def test_merge_close_vertices_chain():
    verts = np.array([[0, 0, 0], [0.0009, 0, 0], [0.0018, 0, 0], [1, 0, 0]])
    merged, index_map = merge_close_vertices(verts, 1e-3)
    # chain collapses through transitive proximity
    assert len(merged) == 2
    assert index_map[0] == index_map[1] == index_map[2]
    assert index_map[3] != index_map[0]
    np.testing.assert_allclose(merged[index_map[0]], [0.0009, 0, 0])


def test_clean_merges_and_drops_degenerate_faces():
    verts = np.array(
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1e-5, 0, 0]], dtype=float
    )
    faces = [[0, 1, 2], [3, 1, 2]]  # second face duplicates the first after merge
    out = clean_mesh(TriangleMesh(verts, faces))
    assert out.n_faces == 1
    assert out.n_vertices == 3


def test_clean_splits_edge_through_vertex():
    # vertex 3 sits on the edge (0, 1) of face (0, 1, 2)
    verts = np.array(
        [[0, 0, 0], [1, 0, 0], [0.5, 1, 0], [0.5, 0, 0], [0.5, -1, 0]],
        dtype=float,
    )
    faces = [[0, 1, 2], [0, 3, 4], [3, 1, 4]]
    out = clean_mesh(TriangleMesh(verts, faces))
    assert out.n_faces == 4
    # the long edge is gone: every edge is now manifold-consistent
    canon = {tuple(sorted(f)) for f in out.faces}
    assert (0, 2, 3) in canon and (1, 2, 3) in canon


def test_clean_idempotent_on_messy_input():
    rng = np.random.default_rng(7)
    base = shapes.icosphere(1, radius=0.5)
    # duplicate some vertices with sub-eps offsets and duplicate faces
    extra = base.vertices[:10] + rng.normal(0, 1e-5, (10, 3))
    verts = np.vstack([base.vertices, extra])
    faces = np.vstack([base.faces, base.faces[:5]])
    once = clean_mesh(TriangleMesh(verts, faces))
    twice = clean_mesh(once)
    np.testing.assert_array_equal(once.faces, twice.faces)
    np.testing.assert_allclose(once.vertices, twice.vertices, atol=0)


def test_normalize_unit_diagonal_centered():
    m = shapes.box((2.0, 3.0, 6.0), center=(5.0, -2.0, 1.0))
    out, scale, translation = normalize(m)
    lo, hi = out.bounds()
    assert np.linalg.norm(hi - lo) == pytest.approx(1.0)
    np.testing.assert_allclose((lo + hi) / 2, 0.0, atol=1e-12)
    # round-trip back to the input frame
    restored = out.vertices / scale - translation
    np.testing.assert_allclose(restored, m.vertices, rtol=1e-12, atol=1e-12)


def test_normalize_degenerate_bbox_rejected():
    m = TriangleMesh(np.zeros((3, 3)), [[0, 1, 2]])
    with pytest.raises(ValueError):
        normalize(m)


@settings(max_examples=30, deadline=None)
@given(
    scale=st.floats(0.01, 100.0),
    dx=st.floats(-50.0, 50.0),
    dy=st.floats(-50.0, 50.0),
    dz=st.floats(-50.0, 50.0),
)
def test_normalize_invariant_under_similarity(scale, dx, dy, dz):
    base = shapes.box((1.0, 2.0, 0.5))
    moved = TriangleMesh(base.vertices * scale + [dx, dy, dz], base.faces)
    out, _, _ = normalize(moved)
    ref, _, _ = normalize(base)
    np.testing.assert_allclose(out.vertices, ref.vertices, atol=1e-9)


def test_referenced_vertices_mask():
    m = TriangleMesh(np.random.default_rng(0).random((5, 3)), [[0, 1, 2]])
    np.testing.assert_array_equal(
        m.referenced_vertices(), [True, True, True, False, False]
    )
