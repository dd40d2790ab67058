"""Triangle meshes, point clouds, and the cleaning rules shared by the pipeline.

Meshes are plain vertex/face arrays. Adjacency is derived data, computed on
demand and cached; nothing mutates a mesh in place, so cached maps never go
stale. All cleaning operations return new meshes.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

EdgeKey = tuple[int, int]


def edge_key(u: int, v: int) -> EdgeKey:
    """Canonical (min, max) form of an undirected edge."""
    return (u, v) if u < v else (v, u)


class TriangleMesh:
    """Immutable-by-convention triangle mesh.

    Parameters
    ----------
    vertices : (V, 3) float array
    faces : (F, 3) int array, indices into ``vertices``
    """

    def __init__(self, vertices, faces):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64).reshape(-1, 3)
        if len(self.faces):
            if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
                raise ValueError("face index out of range")
        self._cache: dict[str, object] = {}

    # -- basic shape -------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def copy(self) -> "TriangleMesh":
        return TriangleMesh(self.vertices.copy(), self.faces.copy())

    def __repr__(self):
        return f"TriangleMesh(V={self.n_vertices}, F={self.n_faces})"

    # -- derived geometry ----------------------------------------------------

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.n_vertices == 0:
            raise ValueError("empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def bbox_diagonal(self) -> float:
        lo, hi = self.bounds()
        return float(np.linalg.norm(hi - lo))

    def face_corners(self) -> np.ndarray:
        """(F, 3, 3) vertex positions per face."""
        return self.vertices[self.faces]

    def face_cross(self) -> np.ndarray:
        tri = self.face_corners()
        return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])

    def face_areas(self) -> np.ndarray:
        if "areas" not in self._cache:
            self._cache["areas"] = 0.5 * np.linalg.norm(self.face_cross(), axis=1)
        return self._cache["areas"]

    def face_normals(self) -> np.ndarray:
        """Unit face normals; zero vector for degenerate faces."""
        if "normals" not in self._cache:
            c = self.face_cross()
            n = np.linalg.norm(c, axis=1, keepdims=True)
            self._cache["normals"] = np.divide(
                c, n, out=np.zeros_like(c), where=n > 0.0
            )
        return self._cache["normals"]

    def area(self) -> float:
        return float(self.face_areas().sum())

    # -- derived adjacency ---------------------------------------------------

    def _edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Unique undirected edges and the face list structure behind them.

        Returns (edges (E, 2) sorted rows, face_of (3F,), edge_of_corner (3F,))
        where corner j of face i maps to unique edge edge_of_corner[3i + j].
        """
        if "edge_arrays" not in self._cache:
            f = self.faces
            raw = np.stack(
                [f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=1
            ).reshape(-1, 2)
            raw = np.sort(raw, axis=1)
            edges, inverse = np.unique(raw, axis=0, return_inverse=True)
            face_of = np.repeat(np.arange(len(f)), 3)
            self._cache["edge_arrays"] = (edges, face_of, inverse)
        return self._cache["edge_arrays"]

    def edges(self) -> np.ndarray:
        """(E, 2) unique undirected edges, each row sorted ascending."""
        return self._edge_arrays()[0]

    def edge_face_map(self) -> dict[EdgeKey, list[int]]:
        """Undirected edge -> list of incident face ids."""
        if "edge_faces" not in self._cache:
            edges, face_of, inverse = self._edge_arrays()
            out: dict[EdgeKey, list[int]] = {tuple(e): [] for e in edges}
            keys = [tuple(e) for e in edges]
            for corner, eid in enumerate(inverse):
                out[keys[eid]].append(int(face_of[corner]))
            self._cache["edge_faces"] = out
        return self._cache["edge_faces"]

    def edge_face_counts(self) -> np.ndarray:
        """Number of incident faces per unique edge, aligned with edges()."""
        _, _, inverse = self._edge_arrays()
        return np.bincount(inverse, minlength=len(self.edges()))

    def non_manifold_edges(self) -> list[EdgeKey]:
        """Edges with more than two incident faces."""
        edges = self.edges()
        counts = self.edge_face_counts()
        return [tuple(e) for e in edges[counts > 2]]

    def boundary_edges(self) -> list[EdgeKey]:
        edges = self.edges()
        counts = self.edge_face_counts()
        return [tuple(e) for e in edges[counts == 1]]

    @property
    def is_edge_manifold(self) -> bool:
        return len(self.non_manifold_edges()) == 0

    def referenced_vertices(self) -> np.ndarray:
        """Boolean mask of vertices used by at least one face."""
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.faces.reshape(-1)] = True
        return mask

    def vertex_face_map(self) -> list[list[int]]:
        if "vertex_faces" not in self._cache:
            out: list[list[int]] = [[] for _ in range(self.n_vertices)]
            for i, (a, b, c) in enumerate(self.faces):
                out[a].append(i)
                out[b].append(i)
                out[c].append(i)
            self._cache["vertex_faces"] = out
        return self._cache["vertex_faces"]


class PointCloud:
    """Point positions with optional unit normals."""

    def __init__(self, points, normals=None):
        self.points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        if normals is not None:
            normals = np.ascontiguousarray(normals, dtype=np.float64).reshape(-1, 3)
            if len(normals) != len(self.points):
                raise ValueError("normals length must match points")
            lengths = np.linalg.norm(normals, axis=1)
            if len(lengths) and abs(lengths - 1.0).max() > 1e-6:
                raise ValueError("normals must have unit length within 1e-6")
        self.normals = normals

    def __len__(self):
        return len(self.points)

    def __repr__(self):
        tag = "with normals" if self.normals is not None else "no normals"
        return f"PointCloud(N={len(self)}, {tag})"


# -- cleaning ----------------------------------------------------------------


def merge_close_vertices(
    vertices: np.ndarray, eps: float
) -> tuple[np.ndarray, np.ndarray]:
    """Collapse vertices within ``eps`` of each other.

    Union-find over the proximity graph (pairs at distance <= eps); each
    component is replaced by its centroid. Repeats until no sub-eps pair
    remains, because centroid collapse can create new close pairs and the
    cleaning contract requires idempotence.

    Returns (new_vertices, index_map) with index_map[old] = new.
    """
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    index_map = np.arange(len(vertices))
    while True:
        pairs = cKDTree(vertices).query_pairs(eps, output_type="ndarray")
        if len(pairs) == 0:
            break
        parent = np.arange(len(vertices))

        def find(i):
            root = i
            while parent[root] != root:
                root = parent[root]
            while parent[i] != root:
                parent[i], i = root, parent[i]
            return root

        for a, b in pairs:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        roots = np.array([find(i) for i in range(len(vertices))])
        uniq, inverse = np.unique(roots, return_inverse=True)
        sums = np.zeros((len(uniq), 3))
        np.add.at(sums, inverse, vertices)
        counts = np.bincount(inverse, minlength=len(uniq)).astype(np.float64)
        vertices = sums / counts[:, None]
        index_map = inverse[index_map]
    return vertices, index_map


def _drop_bad_faces(faces: np.ndarray) -> np.ndarray:
    """Remove faces with repeated vertex indices and duplicate faces."""
    if len(faces) == 0:
        return faces.reshape(0, 3)
    distinct = (
        (faces[:, 0] != faces[:, 1])
        & (faces[:, 1] != faces[:, 2])
        & (faces[:, 0] != faces[:, 2])
    )
    faces = faces[distinct]
    if len(faces) == 0:
        return faces.reshape(0, 3)
    canon = np.sort(faces, axis=1)
    _, first = np.unique(canon, axis=0, return_index=True)
    return faces[np.sort(first)]


def _split_edges_through_vertices(
    vertices: np.ndarray, faces: np.ndarray, tol: float
) -> np.ndarray:
    """Split any face edge that passes through a non-endpoint vertex.

    A vertex v splits edge (a, b) when its distance to the segment is below
    ``tol`` and its projection lies strictly between the endpoints (more than
    ``tol`` from each). One split at a time per face, iterated to a fixpoint:
    splitting creates new edges that may themselves pass through vertices.
    """
    if len(faces) == 0:
        return faces
    tree = cKDTree(vertices)
    faces = [tuple(f) for f in faces]
    out = []
    guard = 0
    limit = 10 * (len(faces) + len(vertices) + 1)
    while faces:
        guard += 1
        if guard > limit:
            raise RuntimeError("edge splitting failed to converge")
        a, b, c = faces.pop()
        split = None
        for u, v, w in ((a, b, c), (b, c, a), (c, a, b)):
            p, q = vertices[u], vertices[v]
            d = q - p
            length = float(np.linalg.norm(d))
            if length <= tol:
                continue
            mid = 0.5 * (p + q)
            near = tree.query_ball_point(mid, 0.5 * length + tol)
            for vid in near:
                if vid in (u, v, w):
                    continue
                t = float(np.dot(vertices[vid] - p, d)) / (length * length)
                if t * length <= tol or (1.0 - t) * length <= tol:
                    continue
                gap = np.linalg.norm(vertices[vid] - (p + t * d))
                if gap < tol:
                    split = (u, v, w, vid)
                    break
            if split:
                break
        if split:
            u, v, w, vid = split
            faces.append((u, vid, w))
            faces.append((vid, v, w))
        else:
            out.append((a, b, c))
    out.reverse()
    return np.asarray(out, dtype=np.int64).reshape(-1, 3)


def clean_mesh(mesh: TriangleMesh, merge_eps: float = 1e-3) -> TriangleMesh:
    """Apply the standard cleaning rules.

    Vertices within ``merge_eps`` are merged (component centroid), duplicate
    and repeated-index faces are removed, edges passing through non-endpoint
    vertices are split (tolerance 1e-6 x bbox diagonal), and zero-area faces
    produced by merging are removed. Unreferenced vertices are kept.
    Idempotent: cleaning a cleaned mesh is a no-op.
    """
    if mesh.n_vertices == 0:
        return mesh.copy()
    verts, index_map = merge_close_vertices(mesh.vertices, merge_eps)
    faces = _drop_bad_faces(index_map[mesh.faces])
    lo = verts.min(axis=0)
    hi = verts.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    if diag > 0.0 and len(faces):
        faces = _split_edges_through_vertices(verts, faces, 1e-6 * diag)
        faces = _drop_bad_faces(faces)
    return TriangleMesh(verts, faces)


def normalize(mesh: TriangleMesh) -> tuple[TriangleMesh, float, np.ndarray]:
    """Scale and translate so the bounding box has unit diagonal, centered at 0.

    Returns (mesh, scale, translation) where the applied map is
    ``v' = (v + translation) * scale``; invert with ``v = v' / scale - translation``.
    Raises ValueError when the bounding box is degenerate (zero diagonal).
    """
    lo, hi = mesh.bounds()
    diag = float(np.linalg.norm(hi - lo))
    if diag == 0.0:
        raise ValueError("cannot normalize mesh with zero bounding-box diagonal")
    center = 0.5 * (lo + hi)
    scale = 1.0 / diag
    verts = (mesh.vertices - center) * scale
    return TriangleMesh(verts, mesh.faces.copy()), scale, -center


def apply_inverse_transform(
    points: np.ndarray, scale: float, translation: np.ndarray
) -> np.ndarray:
    """Map points from normalized coordinates back to the input frame."""
    return np.asarray(points, dtype=np.float64) / scale - translation
