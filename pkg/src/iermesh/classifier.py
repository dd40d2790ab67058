"""Candidate classification: rigid-invariant features plus a small MLP.

The learned path mirrors the oracle path behind one interface: extract a
60-dimensional descriptor per candidate, run a feed-forward network loaded
from a portable weights file, and emit 3-class labels (0 = discard,
1 = near-reference, 2 = other-keep) with softmax scores as diagnostics.

Feature layout (all lengths divided by the cloud's mean 1-NN distance s,
areas by s^2, so the vector is invariant to rigid motion and uniform scale):

    [0:3)    candidate edge lengths, ascending
    [3]      triangle area
    [4]      aspect ratio longest^2 / (2 area), capped at 1e6
    [5:29)   per-vertex distances to the 8 nearest neighbors, ascending
    [29:32)  per-vertex |cos| between candidate normal and 16-NN PCA normal
    [32:35)  per-vertex signed above/below count fraction inside the ball of
             radius 1.5 x longest edge (candidate plane splits the ball; the
             center point is excluded, points within 1e-9 x longest of the
             plane count as neither side)
    [35:41)  per-vertex PCA eigenvalue ratios (lambda1/lambda0,
             lambda2/lambda0; descending eigenvalues of the 16-NN patch)
    [41:44)  per-vertex signed offset of the 16-NN patch centroid from the
             candidate plane
    [44:53)  distance from probes on each edge at t = 0.25/0.5/0.75 to the
             nearest cloud point
    [53]     distance from the face centroid to the nearest cloud point
    [54:57)  per-vertex ball neighbor count, min(count, 64) / 16
    [57:60)  pairwise |cos| between the three PCA normals, ascending
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .candidates import CandidateSet, KnnGraph, LabelingParams, label_candidates
from .mesh import PointCloud, TriangleMesh

FEATURE_DIM = 60

_IERW_MAGIC = b"IERW"
_IERW_VERSION = 1
_ACTIVATIONS = ("linear", "relu")
_CHUNK = 131072


# -- feature extraction -------------------------------------------------------


def _patch_stats(upts: np.ndarray, nbr_pos: np.ndarray):
    """PCA over each point's 16-NN patch (the point itself included).

    Returns (normals, eig_ratios, centroids): the unit eigenvector of the
    smallest covariance eigenvalue, (lambda1/lambda0, lambda2/lambda0) with
    eigenvalues descending, and the patch centroid.
    """
    patch = np.concatenate([upts[:, None, :], nbr_pos], axis=1)
    centroid = patch.mean(axis=1)
    x = patch - centroid[:, None, :]
    cov = np.einsum("nij,nik->njk", x, x) / patch.shape[1]
    w, v = np.linalg.eigh(cov)  # ascending eigenvalues
    normals = v[:, :, 0]
    lam0 = w[:, 2]
    safe = np.maximum(lam0, np.finfo(float).tiny)
    ratios = np.stack([w[:, 1] / safe, w[:, 0] / safe], axis=1)
    ratios[lam0 <= 0.0] = 0.0
    return normals, ratios, centroid


def extract_features(
    pc: PointCloud, cands: CandidateSet, knn: KnnGraph
) -> np.ndarray:
    """(M, 60) rigid- and scale-invariant descriptors, layout per module doc.

    Candidate vertex ids must be representative (deduplicated) ids, as
    produced by propose_candidates over the same KnnGraph.
    """
    if knn.k < 16:
        raise ValueError("feature extraction needs a k-NN graph with k >= 16")
    pts = pc.points if isinstance(pc, PointCloud) else np.asarray(pc, dtype=float)
    upts = pts[knn.unique_ids]
    tree = cKDTree(upts)

    s = float(knn.distances[:, 0].mean())
    if not np.isfinite(s) or s <= 0.0:
        raise ValueError("degenerate cloud: mean 1-NN distance is not positive")

    nbr16_pos = pts[knn.neighbors[:, :16]]
    pca_normals, pca_ratios, pca_centroids = _patch_stats(upts, nbr16_pos)
    nbr8 = knn.distances[:, :8]

    m = len(cands)
    out = np.empty((m, FEATURE_DIM), dtype=float)
    verts = cands.verts
    if m and (verts.min() < 0 or verts.max() >= len(pts)):
        raise ValueError("candidate vertex index out of range")

    for lo in range(0, m, _CHUNK):
        hi = min(lo + _CHUNK, m)
        _extract_chunk(
            out[lo:hi],
            verts[lo:hi],
            knn,
            upts,
            tree,
            s,
            nbr8,
            pca_normals,
            pca_ratios,
            pca_centroids,
        )
    return out


def _extract_chunk(
    out, verts, knn, upts, tree, s, nbr8, pca_normals, pca_ratios, pca_centroids
):
    rows = knn.row[verts]  # (m, 3) unique-row indices
    tri = upts[rows]  # (m, 3, 3)
    m = len(verts)

    e = np.stack(
        [
            np.linalg.norm(tri[:, 1] - tri[:, 0], axis=1),
            np.linalg.norm(tri[:, 2] - tri[:, 0], axis=1),
            np.linalg.norm(tri[:, 2] - tri[:, 1], axis=1),
        ],
        axis=1,
    )
    longest = e.max(axis=1)
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    cnorm = np.linalg.norm(cross, axis=1)
    area = 0.5 * cnorm
    n_c = cross / np.maximum(cnorm, np.finfo(float).tiny)[:, None]

    out[:, 0:3] = np.sort(e, axis=1) / s
    out[:, 3] = area / (s * s)
    out[:, 4] = np.minimum(
        longest**2 / np.maximum(2.0 * area, longest**2 * 1e-6 + np.finfo(float).tiny),
        1e6,
    )
    out[:, 5:29] = (nbr8[rows] / s).reshape(m, 24)
    vnormals = pca_normals[rows]  # (m, 3, 3)
    out[:, 29:32] = np.abs(np.einsum("mvc,mc->mv", vnormals, n_c))

    # above/below asymmetry and bounded count over exact per-vertex balls
    radius = 1.5 * longest
    band = 1e-9 * longest
    for v in range(3):
        centers = tri[:, v, :]
        lists = tree.query_ball_point(centers, radius)
        lens = np.fromiter((len(l) for l in lists), dtype=np.int64, count=m)
        if lens.sum():
            flat = np.concatenate([np.asarray(l, dtype=np.int64) for l in lists])
        else:
            flat = np.empty(0, dtype=np.int64)
        owner = np.repeat(np.arange(m), lens)
        keep = flat != rows[owner, v]  # drop the center point itself
        flat, owner = flat[keep], owner[keep]
        h = np.einsum("ij,ij->i", upts[flat] - centers[owner], n_c[owner])
        above = np.bincount(owner[h > band[owner]], minlength=m)
        below = np.bincount(owner[h < -band[owner]], minlength=m)
        total = np.bincount(owner, minlength=m)
        out[:, 32 + v] = (above - below) / np.maximum(total, 1)
        out[:, 54 + v] = np.minimum(total, 64) / 16.0

    out[:, 35:41] = pca_ratios[rows].reshape(m, 6)
    out[:, 41:44] = (
        np.einsum("mvc,mc->mv", pca_centroids[rows] - tri, n_c) / s
    )

    probes = np.empty((m, 10, 3))
    k = 0
    for a, b in ((0, 1), (0, 2), (1, 2)):
        for t in (0.25, 0.5, 0.75):
            probes[:, k] = tri[:, a] + t * (tri[:, b] - tri[:, a])
            k += 1
    probes[:, 9] = tri.mean(axis=1)
    d, _ = tree.query(probes.reshape(-1, 3), k=1, workers=-1)
    out[:, 44:54] = d.reshape(m, 10) / s

    pair_cos = np.abs(
        np.stack(
            [
                np.einsum("mc,mc->m", vnormals[:, 0], vnormals[:, 1]),
                np.einsum("mc,mc->m", vnormals[:, 0], vnormals[:, 2]),
                np.einsum("mc,mc->m", vnormals[:, 1], vnormals[:, 2]),
            ],
            axis=1,
        )
    )
    out[:, 57:60] = np.sort(pair_cos, axis=1)


# -- weights and inference ----------------------------------------------------


@dataclass(frozen=True)
class Layer:
    matrix: np.ndarray  # (rows, cols) float32
    bias: np.ndarray  # (cols,) float32
    activation: str  # "linear" | "relu"

    def __post_init__(self):
        object.__setattr__(
            self, "matrix", np.ascontiguousarray(self.matrix, dtype=np.float32)
        )
        object.__setattr__(
            self, "bias", np.ascontiguousarray(self.bias, dtype=np.float32)
        )
        if self.matrix.ndim != 2:
            raise ValueError("layer matrix must be 2-D")
        if self.bias.shape != (self.matrix.shape[1],):
            raise ValueError("bias length must equal the matrix column count")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class ClassifierWeights:
    layers: tuple[Layer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise ValueError("weights need at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.matrix.shape[1] != b.matrix.shape[0]:
                raise ValueError(
                    "dimension chain broken: layer outputs "
                    f"{a.matrix.shape[1]} but next layer expects {b.matrix.shape[0]}"
                )
        if layers[-1].matrix.shape[1] != 3:
            raise ValueError("final layer must output 3 logits")

    @property
    def input_dim(self) -> int:
        return int(self.layers[0].matrix.shape[0])


def forward_logits(weights: ClassifierWeights, features: np.ndarray) -> np.ndarray:
    """Raw (M, 3) float32 logits; the trainer reproduces these to 1e-5."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float32))
    if x.shape[1] != weights.input_dim:
        raise ValueError(
            f"feature dimension {x.shape[1]} does not match weights "
            f"input {weights.input_dim}"
        )
    for layer in weights.layers:
        x = x @ layer.matrix + layer.bias
        if layer.activation == "relu":
            np.maximum(x, np.float32(0.0), out=x)
    return x


def predict(weights: ClassifierWeights, features: np.ndarray):
    """Forward pass + softmax; label = argmax with ties to the lower class.

    A single feature vector yields (int label, (3,) scores); a batch yields
    ((M,) labels, (M, 3) scores). The forward pass runs in float32 for
    weight-file portability; the softmax runs in float64 so scores sum to 1
    within 1e-9.
    """
    features = np.asarray(features)
    single = features.ndim == 1
    logits = forward_logits(weights, features).astype(np.float64)
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    scores = ez / ez.sum(axis=1, keepdims=True)
    labels = np.argmax(scores, axis=1).astype(np.int8)
    if single:
        return int(labels[0]), scores[0]
    return labels, scores


def oracle_classify(
    cands: CandidateSet,
    ref_mesh: TriangleMesh,
    params: LabelingParams = LabelingParams(),
    seed=0,
    points: np.ndarray | None = None,
) -> np.ndarray:
    """Ground-truth labels via the labeling rule; same contract as
    label_candidates, exposed so remesh mode mirrors the learned interface."""
    return label_candidates(
        cands, ref_mesh=ref_mesh, params=params, seed=seed, points=points
    ).label


def confusion_matrix(predicted, true) -> np.ndarray:
    """Row-normalized 3x3 matrix: entry (i, j) = P(predicted j | true i).

    Rows of empty true classes stay zero.
    """
    predicted = np.asarray(predicted, dtype=np.int64).reshape(-1)
    true = np.asarray(true, dtype=np.int64).reshape(-1)
    if len(predicted) != len(true):
        raise ValueError("predicted and true label counts differ")
    for arr, name in ((predicted, "predicted"), (true, "true")):
        if len(arr) and (arr.min() < 0 or arr.max() > 2):
            raise ValueError(f"{name} labels must be in 0..2")
    cm = np.zeros((3, 3), dtype=float)
    np.add.at(cm, (true, predicted), 1.0)
    sums = cm.sum(axis=1, keepdims=True)
    return np.divide(cm, sums, out=np.zeros_like(cm), where=sums > 0)


# -- feature dump format ------------------------------------------------------

_IERF_MAGIC = b"IERF"


def save_features(path, features: np.ndarray) -> None:
    """IERF: magic, count u64, dimension u32, then f32 rows keyed by the
    record index of the matching candidate dump."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float32))
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sQI", _IERF_MAGIC, features.shape[0], features.shape[1]))
        fh.write(features.astype("<f4").tobytes())


def load_features(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise ValueError("feature file truncated: missing header")
    magic, count, dim = struct.unpack_from("<4sQI", blob, 0)
    if magic != _IERF_MAGIC:
        raise ValueError(
            f"bad magic {magic!r}: expected {_IERF_MAGIC.decode()} feature file"
        )
    if len(blob) != 16 + 4 * count * dim:
        raise ValueError("feature file size does not match its declared count")
    data = np.frombuffer(blob, dtype="<f4", count=count * dim, offset=16)
    return data.reshape(count, dim).astype(np.float32)


# -- weights file format ------------------------------------------------------


def save_weights(path, weights: ClassifierWeights) -> None:
    """IERW: magic, version u32, layer count u32, then per layer rows u32,
    cols u32, activation u8, f32 row-major matrix, f32 bias."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", _IERW_MAGIC, _IERW_VERSION, len(weights.layers)))
        for layer in weights.layers:
            rows, cols = layer.matrix.shape
            fh.write(
                struct.pack("<IIB", rows, cols, _ACTIVATIONS.index(layer.activation))
            )
            fh.write(layer.matrix.astype("<f4").tobytes())
            fh.write(layer.bias.astype("<f4").tobytes())


def load_weights(path) -> ClassifierWeights:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12:
        raise ValueError("weights file truncated: missing header")
    magic, version, n_layers = struct.unpack_from("<4sII", blob, 0)
    if magic != _IERW_MAGIC:
        raise ValueError(
            f"bad magic {magic!r}: expected {_IERW_MAGIC.decode()} weights file"
        )
    if version != _IERW_VERSION:
        raise ValueError(f"unsupported IERW version {version}")
    off = 12
    layers = []
    for i in range(n_layers):
        if off + 9 > len(blob):
            raise ValueError(f"weights file truncated in layer {i} header")
        rows, cols, act = struct.unpack_from("<IIB", blob, off)
        off += 9
        if act >= len(_ACTIVATIONS):
            raise ValueError(f"unknown activation tag {act} in layer {i}")
        need = 4 * (rows * cols + cols)
        if off + need > len(blob):
            raise ValueError(f"weights file truncated in layer {i} data")
        matrix = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=off)
        off += 4 * rows * cols
        bias = np.frombuffer(blob, dtype="<f4", count=cols, offset=off)
        off += 4 * cols
        layers.append(
            Layer(matrix.reshape(rows, cols).copy(), bias.copy(), _ACTIVATIONS[act])
        )
    if off != len(blob):
        raise ValueError("trailing bytes after the last declared layer")
    return ClassifierWeights(tuple(layers))
