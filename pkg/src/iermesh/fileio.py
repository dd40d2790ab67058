"""Mesh and point-cloud file IO.

Meshes: OBJ read/write (ASCII v/f records, 1-based indices, quads fan-
triangulated, larger polygons rejected) and PLY read (ascii or
binary_little_endian). Point clouds: PLY and XYZ, both directions.
Writers emit 9 significant digits, so save -> load -> save is byte-stable.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import PointCloud, TriangleMesh


class ParseError(ValueError):
    """Malformed input file; message carries file and line context."""


def _fail(path, lineno, msg):
    raise ParseError(f"{path}:{lineno}: {msg}")


# -- OBJ -----------------------------------------------------------------------


def _parse_obj(path: Path) -> tuple[np.ndarray, np.ndarray]:
    verts: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    _fail(path, lineno, "vertex record needs 3 coordinates")
                try:
                    verts.append(tuple(float(x) for x in parts[1:4]))
                except ValueError:
                    _fail(path, lineno, f"bad vertex coordinate in {body!r}")
            elif tag == "f":
                refs = parts[1:]
                if len(refs) < 3:
                    _fail(path, lineno, "face record needs at least 3 indices")
                if len(refs) > 4:
                    _fail(path, lineno, f"{len(refs)}-gon faces are not supported")
                idx = []
                for ref in refs:
                    head = ref.split("/", 1)[0]
                    try:
                        i = int(head)
                    except ValueError:
                        _fail(path, lineno, f"bad face index {ref!r}")
                    if i < 0:
                        i = len(verts) + i
                    else:
                        i = i - 1
                    if i < 0 or i >= len(verts):
                        _fail(path, lineno, f"face index {ref!r} out of range")
                    idx.append(i)
                faces.append((idx[0], idx[1], idx[2]))
                if len(idx) == 4:
                    faces.append((idx[0], idx[2], idx[3]))
            elif tag in ("p", "l"):
                _fail(path, lineno, f"unsupported primitive type {tag!r}")
            # vn/vt/vp/o/g/s/usemtl/mtllib and unknown tags are ignored
    v = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    return v, f


def save_mesh(path, mesh: TriangleMesh) -> None:
    path = Path(path)
    if path.suffix.lower() != ".obj":
        raise ValueError(f"unsupported mesh output format {path.suffix!r}")
    lines = []
    for x, y, z in mesh.vertices:
        lines.append(f"v {x:.9g} {y:.9g} {z:.9g}")
    for a, b, c in mesh.faces:
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- PLY -----------------------------------------------------------------------

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


class _PlyElement:
    def __init__(self, name, count):
        self.name = name
        self.count = count
        self.props = []  # (name, dtype) or (name, "list", count_dtype, item_dtype)


def _parse_ply_header(fh, path):
    lineno = 1
    if fh.readline().strip() != b"ply":
        _fail(path, 1, "not a PLY file")
    fmt = None
    elements: list[_PlyElement] = []
    while True:
        raw = fh.readline()
        lineno += 1
        if not raw:
            _fail(path, lineno, "unexpected end of header")
        parts = raw.decode("ascii", errors="replace").strip().split()
        if not parts:
            continue
        if parts[0] == "comment":
            continue
        if parts[0] == "format":
            if parts[1] == "ascii":
                fmt = "ascii"
            elif parts[1] == "binary_little_endian":
                fmt = "binary"
            else:
                _fail(path, lineno, f"unsupported PLY format {parts[1]!r}")
        elif parts[0] == "element":
            elements.append(_PlyElement(parts[1], int(parts[2])))
        elif parts[0] == "property":
            if not elements:
                _fail(path, lineno, "property before element")
            if parts[1] == "list":
                if parts[2] not in _PLY_TYPES or parts[3] not in _PLY_TYPES:
                    _fail(path, lineno, f"unsupported list types in {raw!r}")
                elements[-1].props.append(
                    (parts[4], "list", _PLY_TYPES[parts[2]], _PLY_TYPES[parts[3]])
                )
            else:
                if parts[1] not in _PLY_TYPES:
                    _fail(path, lineno, f"unsupported property type {parts[1]!r}")
                elements[-1].props.append((parts[2], _PLY_TYPES[parts[1]]))
        elif parts[0] == "end_header":
            break
        else:
            _fail(path, lineno, f"unrecognized header line {raw!r}")
    if fmt is None:
        _fail(path, lineno, "missing format line")
    return fmt, elements


def _read_ply(path: Path):
    """Returns dict element name -> dict of property arrays (lists stay ragged)."""
    with open(path, "rb") as fh:
        fmt, elements = _parse_ply_header(fh, path)
        out = {}
        if fmt == "ascii":
            tokens = fh.read().decode("ascii", errors="replace").split()
            pos = 0

            def take(n):
                nonlocal pos
                if pos + n > len(tokens):
                    _fail(path, 0, "truncated PLY body")
                vals = tokens[pos : pos + n]
                pos += n
                return vals

            for el in elements:
                cols = {name: [] for name, *_ in el.props}
                for _ in range(el.count):
                    for prop in el.props:
                        if prop[1] == "list":
                            n = int(float(take(1)[0]))
                            cols[prop[0]].append([int(float(x)) for x in take(n)])
                        else:
                            cols[prop[0]].append(float(take(1)[0]))
                out[el.name] = cols
        else:
            for el in elements:
                has_list = any(p[1] == "list" for p in el.props)
                if not has_list:
                    dtype = np.dtype(
                        [(name, "<" + code) for name, code in el.props]
                    )
                    data = np.frombuffer(fh.read(dtype.itemsize * el.count), dtype)
                    if len(data) != el.count:
                        _fail(path, 0, f"truncated element {el.name!r}")
                    out[el.name] = {name: data[name] for name, _ in el.props}
                else:
                    cols = {name: [] for name, *_ in el.props}
                    for _ in range(el.count):
                        for prop in el.props:
                            if prop[1] == "list":
                                cdt = np.dtype("<" + prop[2])
                                n = int(
                                    np.frombuffer(fh.read(cdt.itemsize), cdt)[0]
                                )
                                idt = np.dtype("<" + prop[3])
                                vals = np.frombuffer(fh.read(idt.itemsize * n), idt)
                                cols[prop[0]].append([int(v) for v in vals])
                            else:
                                dt = np.dtype("<" + prop[1])
                                cols[prop[0]].append(
                                    float(np.frombuffer(fh.read(dt.itemsize), dt)[0])
                                )
                    out[el.name] = cols
        return out


def _ply_vertices(data, path):
    if "vertex" not in data:
        _fail(path, 0, "PLY file has no vertex element")
    vd = data["vertex"]
    for axis in ("x", "y", "z"):
        if axis not in vd:
            _fail(path, 0, f"PLY vertex element missing {axis!r}")
    pts = np.column_stack(
        [np.asarray(vd["x"], float), np.asarray(vd["y"], float), np.asarray(vd["z"], float)]
    )
    normals = None
    if all(k in vd for k in ("nx", "ny", "nz")):
        normals = np.column_stack(
            [np.asarray(vd["nx"], float), np.asarray(vd["ny"], float), np.asarray(vd["nz"], float)]
        )
    return pts, normals


def _parse_ply_mesh(path: Path) -> tuple[np.ndarray, np.ndarray]:
    data = _read_ply(path)
    pts, _ = _ply_vertices(data, path)
    faces: list[tuple[int, int, int]] = []
    if "face" in data:
        fd = data["face"]
        key = "vertex_indices" if "vertex_indices" in fd else "vertex_index"
        if key not in fd:
            _fail(path, 0, "PLY face element missing vertex indices")
        for row in fd[key]:
            if len(row) < 3:
                _fail(path, 0, "face with fewer than 3 vertices")
            if len(row) > 4:
                _fail(path, 0, f"{len(row)}-gon faces are not supported")
            if min(row) < 0 or max(row) >= len(pts):
                _fail(path, 0, f"face index out of range in {row}")
            faces.append((row[0], row[1], row[2]))
            if len(row) == 4:
                faces.append((row[0], row[2], row[3]))
    return pts, np.asarray(faces, dtype=np.int64).reshape(-1, 3)


def load_mesh(path) -> TriangleMesh:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        v, f = _parse_obj(path)
    elif suffix == ".ply":
        v, f = _parse_ply_mesh(path)
    else:
        raise ValueError(f"unsupported mesh format {suffix!r}")
    return TriangleMesh(v, f)


# -- point clouds ---------------------------------------------------------------


def load_point_cloud(path) -> PointCloud:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ply":
        pts, normals = _ply_vertices(_read_ply(path), path)
        return PointCloud(pts, normals)
    if suffix == ".xyz":
        pts = []
        normals = []
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                body = line.split("#", 1)[0].strip()
                if not body:
                    continue
                parts = body.split()
                if len(parts) not in (3, 6):
                    _fail(path, lineno, "expected 3 or 6 columns")
                try:
                    vals = [float(x) for x in parts]
                except ValueError:
                    _fail(path, lineno, f"bad number in {body!r}")
                pts.append(vals[:3])
                if len(vals) == 6:
                    normals.append(vals[3:])
        if normals and len(normals) != len(pts):
            _fail(path, 0, "mixed rows with and without normals")
        pts = np.asarray(pts, float).reshape(-1, 3)
        return PointCloud(pts, np.asarray(normals, float) if normals else None)
    raise ValueError(f"unsupported point cloud format {suffix!r}")


def _cloud_row(*vals) -> str:
    # shortest round-trip decimal form: reloading reproduces the exact float64
    # bits, which downstream snapping-to-surface relies on
    return " ".join(repr(float(v)) for v in vals)


def save_point_cloud(path, cloud: PointCloud) -> None:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".xyz":
        lines = []
        if cloud.normals is not None:
            for p, n in zip(cloud.points, cloud.normals):
                lines.append(_cloud_row(*p, *n))
        else:
            for p in cloud.points:
                lines.append(_cloud_row(*p))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return
    if suffix == ".ply":
        header = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}"]
        header += ["property double x", "property double y", "property double z"]
        if cloud.normals is not None:
            header += [
                "property double nx",
                "property double ny",
                "property double nz",
            ]
        header.append("end_header")
        lines = header
        if cloud.normals is not None:
            for p, n in zip(cloud.points, cloud.normals):
                lines.append(_cloud_row(*p, *n))
        else:
            for p in cloud.points:
                lines.append(_cloud_row(*p))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return
    raise ValueError(f"unsupported point cloud format {suffix!r}")
