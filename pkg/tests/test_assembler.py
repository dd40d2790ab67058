"""Assembler tests: ordering, the shared-simplex intersection predicate, and
greedy merge invariants (manifold edges, zero pairwise intersections,
determinism, prefix monotonicity)."""

import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from iermesh import PointCloud, build_knn, propose_candidates, shapes
from iermesh.assembler import (
    MergeReport,
    Rejection,
    _tri_pair_test,
    _unit_normal,
    merge,
    sort_candidates,
    triangles_intersect,
    write_rejection_log,
)
from iermesh.candidates import CandidateSet


def make_cands(verts, longest_edge, labels):
    verts = np.asarray(verts, dtype=np.int64)
    m = len(verts)
    return CandidateSet(
        verts=verts,
        longest_edge=np.asarray(longest_edge, dtype=float),
        ier=np.full(m, np.nan),
        dist_to_ref=np.full(m, np.nan),
        label=np.asarray(labels, dtype=np.int8),
    )


# -- sort ----------------------------------------------------------------------


def test_sort_spec_example():
    # labels (2,1,1), edges (0.1,0.3,0.2) -> label1/0.2, label1/0.3, label2/0.1
    c = make_cands(
        [[0, 1, 2], [3, 4, 5], [6, 7, 8]], [0.1, 0.3, 0.2], [2, 1, 1]
    )
    s = sort_candidates(c)
    assert s.label.tolist() == [1, 1, 2]
    assert s.longest_edge.tolist() == [0.2, 0.3, 0.1]


def test_sort_tiebreak_lexicographic():
    c = make_cands(
        [[5, 6, 7], [0, 2, 9], [0, 1, 3], [0, 1, 2]], [1.0] * 4, [1] * 4
    )
    s = sort_candidates(c)
    assert s.verts.tolist() == [[0, 1, 2], [0, 1, 3], [0, 2, 9], [5, 6, 7]]


def test_sort_empty():
    c = make_cands(np.empty((0, 3), dtype=np.int64), [], [])
    assert len(sort_candidates(c)) == 0


def test_sort_rejects_unfiltered_labels():
    c = make_cands([[0, 1, 2], [1, 2, 3]], [0.1, 0.2], [0, 1])
    with pytest.raises(ValueError, match="label 0"):
        sort_candidates(c)
    s = sort_candidates(c, bins=np.array([1, 0]))
    assert s.verts.tolist() == [[1, 2, 3], [0, 1, 2]]


def test_sort_bins_length_mismatch():
    c = make_cands([[0, 1, 2]], [0.1], [1])
    with pytest.raises(ValueError, match="length"):
        sort_candidates(c, bins=np.array([0, 1]))


def test_sort_permutation_invariant():
    rng = np.random.default_rng(3)
    verts = np.sort(rng.choice(40, size=(30, 3), replace=True), axis=1)
    keep = (verts[:, 0] != verts[:, 1]) & (verts[:, 1] != verts[:, 2])
    verts = np.unique(verts[keep], axis=0)
    edges = rng.uniform(0.1, 1.0, len(verts))
    labels = rng.choice([1, 2], len(verts))
    c = make_cands(verts, edges, labels)
    ref = sort_candidates(c)
    for seed in range(3):
        perm = np.random.default_rng(seed).permutation(len(verts))
        s = sort_candidates(c.subset(perm))
        assert (s.verts == ref.verts).all()
        assert (s.longest_edge == ref.longest_edge).all()


# -- intersection predicate ----------------------------------------------------

A = ((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0))

# (name, triangle b, expected) against the fixed triangle A
PREDICATE_CASES = [
    # shared edge, folded: adjacency is not intersection
    ("fold_90", ((0, 0, 0), (1, 0, 0), (0.5, 0.0, 0.7)), False),
    ("fold_back", ((0, 0, 0), (1, 0, 0), (0.5, -0.4, 0.1)), False),
    ("fold_opposite_coplanar", ((0, 0, 0), (1, 0, 0), (0.5, -0.5, 0.0)), False),
    # shared edge, coplanar on the same side: overlap
    ("edge_coplanar_overlap", ((0, 0, 0), (1, 0, 0), (0.5, 0.3, 0.0)), True),
    ("edge_coplanar_nested", ((0, 0, 0), (1, 0, 0), (0.25, 0.25, 0.0)), True),
    # no shared vertices
    ("coplanar_overlap", ((0.2, 0.2, 0), (0.6, 0.2, 0), (0.2, 0.6, 0)), True),
    ("parallel_above", ((0, 0, 1), (1, 0, 1), (0, 1, 1)), False),
    ("far_away", ((5, 5, 5), (6, 5, 5), (5, 6, 5)), False),
    ("pierce", ((0.25, 0.25, -0.5), (0.25, 0.25, 0.5), (1.5, 1.5, 0.3)), True),
    ("touch_vertex_on_face", ((0.3, 0.3, 0.0), (1, 1, 1), (2, 0, 1)), True),
    ("touch_edge_on_edge", ((0.5, 0.0, 0.0), (1, -1, 1), (1, -1, -1)), True),
    # shared vertex only
    ("vertex_separated_coplanar", ((0, 0, 0), (-1, 0, 0), (0, -1, 0)), False),
    ("vertex_separated_3d", ((0, 0, 0), (-1, 0, 1), (0, -1, 1)), False),
    ("vertex_fan_overlap", ((0, 0, 0), (1, 1, 0), (1, -1, 0)), True),
    ("vertex_opposite_edge_pierce", ((0, 0, 0), (0.3, 0.3, -0.5), (0.3, 0.3, 0.5)), True),
    # identical triangle
    ("identical", A, True),
]


@pytest.mark.parametrize(
    "b,expected", [(c[1], c[2]) for c in PREDICATE_CASES],
    ids=[c[0] for c in PREDICATE_CASES],
)
def test_triangles_intersect_cases(b, expected):
    assert triangles_intersect(A, b) is expected
    assert triangles_intersect(b, A) is expected


def test_triangles_intersect_degenerate_errors():
    collinear = ((0, 0, 0), (1, 0, 0), (2, 0, 0))
    with pytest.raises(ValueError, match="degenerate"):
        triangles_intersect(A, collinear)
    with pytest.raises(ValueError, match="degenerate"):
        triangles_intersect(collinear, A)


def test_triangles_intersect_rejects_non_finite():
    bad = ((0, 0, 0), (1, 0, 0), (0, np.nan, 0))
    with pytest.raises(ValueError, match="finite"):
        triangles_intersect(A, bad)


@settings(max_examples=60, deadline=None)
@given(
    case=st.sampled_from(PREDICATE_CASES),
    angles=st.tuples(
        st.floats(0, 2 * np.pi), st.floats(0, np.pi), st.floats(0, 2 * np.pi)
    ),
    shift=st.tuples(
        st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5)
    ),
)
def test_triangles_intersect_rigid_invariant(case, angles, shift):
    _, b, expected = case
    rot = Rotation.from_euler("zyz", angles).as_matrix()
    ta = np.asarray(A) @ rot.T + shift
    tb = np.asarray(b) @ rot.T + shift
    assert triangles_intersect(ta, tb) is expected


# -- merge ---------------------------------------------------------------------


def decisions(report: MergeReport, cands: CandidateSet) -> list[str]:
    accepted = {tuple(t) for t in report.mesh.faces.tolist()}
    rejected = {r.verts: r.reason for r in report.rejections}
    out = []
    for t in map(tuple, cands.verts.tolist()):
        out.append("accepted" if t in accepted else rejected[t])
    return out


def brute_assert_no_intersections(mesh):
    pts = [tuple(p) for p in mesh.vertices.tolist()]
    eps = 1e-9 * mesh.bbox_diagonal()
    geo = []
    for tri in map(tuple, mesh.faces.tolist()):
        pa = (pts[tri[0]], pts[tri[1]], pts[tri[2]])
        geo.append((tri, pa, _unit_normal(pa, eps)))
    for i in range(len(geo)):
        ta, pa, na = geo[i]
        for j in range(i + 1, len(geo)):
            tb, pb, nb = geo[j]
            shared = [
                (x, y)
                for x, a in enumerate(ta)
                for y, b in enumerate(tb)
                if a == b
            ]
            assert not _tri_pair_test(pa, na, pb, nb, shared, eps), (ta, tb)


def test_merge_edge_sharing_pair_accepted():
    pts = np.array(
        [[0, 0, 0], [1, 0, 0], [0.5, 1, 0], [0.5, -0.4, 0.8]], dtype=float
    )
    c = CandidateSet.from_verts([[0, 1, 2], [0, 1, 3]], pts)
    rep = merge(c, pts)
    assert len(rep.mesh.faces) == 2 and not rep.rejections
    assert len(rep.unreferenced) == 0


def test_merge_non_manifold_third_face_rejected():
    # three faces fanning around edge (0,1): the third would make it triple
    pts = np.array(
        [
            [0, 0, 0],
            [1, 0, 0],
            [0.5, 1.0, 0.0],
            [0.5, -0.5, 0.8],
            [0.5, -0.5, -0.8],
        ],
        dtype=float,
    )
    c = CandidateSet.from_verts([[0, 1, 2], [0, 1, 3], [0, 1, 4]], pts)
    rep = merge(c, pts)
    assert len(rep.mesh.faces) == 2
    assert rep.rejections == [Rejection((0, 1, 4), "non-manifold")]


def test_merge_crossing_candidate_rejected():
    pts = np.array(
        [
            [0, 0, 0],
            [1, 0, 0],
            [0, 1, 0],
            [0.25, 0.25, -0.5],
            [0.25, 0.25, 0.5],
            [1.5, 1.5, 0.3],
        ],
        dtype=float,
    )
    c = CandidateSet.from_verts([[0, 1, 2], [3, 4, 5]], pts)
    rep = merge(c, pts)
    assert rep.mesh.faces.tolist() == [[0, 1, 2]]
    assert rep.rejections == [Rejection((3, 4, 5), "intersection")]
    # vertices of the rejected face stay in the mesh, flagged unreferenced
    assert rep.unreferenced.tolist() == [3, 4, 5]
    assert rep.mesh.n_vertices == 6


def test_merge_empty():
    pts = np.zeros((4, 3))
    c = CandidateSet.from_verts(np.empty((0, 3), dtype=np.int64), pts)
    rep = merge(c, pts)
    assert rep.mesh.n_faces == 0 and rep.mesh.n_vertices == 4
    assert rep.unreferenced.tolist() == [0, 1, 2, 3]


def test_merge_index_out_of_range():
    pts = np.zeros((2, 3))
    c = make_cands([[0, 1, 5]], [1.0], [1])
    with pytest.raises(ValueError, match="out of range"):
        merge(c, pts)


def sphere_candidates():
    mesh = shapes.icosphere(1, radius=0.5)
    pts = mesh.vertices
    knn = build_knn(PointCloud(pts), k=8)
    return propose_candidates(knn, PointCloud(pts)), pts


def test_merge_invariants_on_sphere_soup():
    cands, pts = sphere_candidates()
    # order by edge length alone: an adversarial unlabeled soup
    rep = merge(sort_candidates(cands, bins=np.zeros(len(cands))), pts)
    mesh = rep.mesh
    assert mesh.n_faces > 20
    assert mesh.non_manifold_edges() == []
    assert mesh.edge_face_counts().max() <= 2
    assert mesh.n_vertices == len(pts)
    brute_assert_no_intersections(mesh)
    assert len(rep.rejections) + mesh.n_faces == len(cands)


def test_merge_deterministic_under_permutation():
    cands, pts = sphere_candidates()
    bins = np.zeros(len(cands))
    ref = merge(sort_candidates(cands, bins=bins), pts)
    perm = np.random.default_rng(11).permutation(len(cands))
    shuffled = cands.subset(perm)
    rep = merge(sort_candidates(shuffled, bins=bins[perm]), pts)
    assert (rep.mesh.faces == ref.mesh.faces).all()
    assert rep.rejections == ref.rejections


def test_merge_prefix_property():
    # decisions depend only on earlier rows: truncating the tail changes nothing
    cands, pts = sphere_candidates()
    s = sort_candidates(cands, bins=np.zeros(len(cands)))
    full = decisions(merge(s, pts), s)
    for cut in (len(s) // 4, len(s) // 2):
        head = s.subset(np.arange(cut))
        assert decisions(merge(head, pts), head) == full[:cut]


def test_merge_monotone_when_later_rows_removed():
    cands, pts = sphere_candidates()
    s = sort_candidates(cands, bins=np.zeros(len(cands)))
    full = decisions(merge(s, pts), s)
    # drop a scattered subset; every row before the first removal is unchanged
    rng = np.random.default_rng(5)
    removed = np.sort(rng.choice(len(s), size=len(s) // 3, replace=False))
    keep = np.setdiff1d(np.arange(len(s)), removed)
    sub = s.subset(keep)
    got = decisions(merge(sub, pts), sub)
    first = removed[0]
    n_before = int((keep < first).sum())
    assert got[:n_before] == [full[i] for i in keep[:n_before]]


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_merge_invariants_random_soups(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1, 1, size=(10, 3))
    verts = []
    for i in range(10):
        for j in range(i + 1, 10):
            for k in range(j + 1, 10):
                a, b, c = pts[i], pts[j], pts[k]
                if np.linalg.norm(np.cross(b - a, c - a)) > 1e-6:
                    verts.append((i, j, k))
    cands = CandidateSet.from_verts(np.array(verts), pts)
    rep = merge(sort_candidates(cands, bins=np.zeros(len(cands))), pts)
    assert rep.mesh.non_manifold_edges() == []
    brute_assert_no_intersections(rep.mesh)


def test_rejection_log_roundtrip(tmp_path):
    rejections = [
        Rejection((0, 1, 4), "non-manifold"),
        Rejection((3, 4, 5), "intersection"),
    ]
    path = tmp_path / "rejections.csv"
    write_rejection_log(path, rejections)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["u", "v", "w", "reason"]
    assert rows[1:] == [["0", "1", "4", "non-manifold"], ["3", "4", "5", "intersection"]]
