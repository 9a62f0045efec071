"""Readers and writers: XYZ, ascii PLY, STL, CSV tables and the sparse operator dump.

Floats are written with ``repr`` so every writer round-trips bit-exactly.
"""

from __future__ import annotations

import json
import math
import struct
import warnings
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import InvalidInputError, UnsupportedFormatError
from .geometry import PointCloud

PALETTE = (
    (31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40), (148, 103, 189),
    (140, 86, 75), (227, 119, 194), (127, 127, 127), (188, 189, 34), (23, 190, 207),
    (174, 199, 232), (255, 187, 120), (152, 223, 138), (255, 152, 150), (197, 176, 213),
    (196, 156, 148), (247, 182, 210), (199, 199, 199), (219, 219, 141), (158, 218, 229),
)
#: color of points without a segment (culled or unassigned)
UNLABELED_COLOR = (0, 0, 0)
SPARSE_HEADER = "lapshape-sparse v1"


def _f(v) -> str:
    return repr(float(v))


def _parse_float(token: str, where: str) -> float:
    try:
        v = float(token)
    except ValueError:
        raise InvalidInputError(f"{where}: {token!r} is not a number") from None
    if not math.isfinite(v):
        raise InvalidInputError(f"{where}: non-finite value {token!r}")
    return v


def _comment_lines(comments: Iterable[str], prefix: str) -> list[str]:
    out = []
    for c in comments:
        for line in str(c).splitlines() or [""]:
            out.append(f"{prefix}{line}" if not line.startswith(prefix) else line)
    return out


def _write_text(path: str | Path, lines: Sequence[str]) -> None:
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


# ----------------------------------------------------------------------------
# XYZ


def read_xyz_points(path: str | Path) -> np.ndarray:
    """Coordinates from an XYZ file without any point-count check."""
    pts = []
    extra_lines = 0
    with open(path, encoding="utf-8", newline=None) as fh:
        for no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 3:
                raise InvalidInputError(f"{path}:{no}: expected 3 coordinates, found {len(parts)}")
            if len(parts) > 3:
                extra_lines += 1
            pts.append([_parse_float(t, f"{path}:{no}") for t in parts[:3]])
    if extra_lines:
        warnings.warn(f"{path}: ignored extra columns on {extra_lines} line(s)", stacklevel=2)
    return np.array(pts, dtype=np.float64).reshape(-1, 3)


def read_xyz(path: str | Path) -> PointCloud:
    """Point cloud from whitespace-separated ``x y z`` lines (``#`` comments allowed)."""
    pts = read_xyz_points(path)
    if len(pts) < 4:
        raise InvalidInputError(f"{path}: {len(pts)} point(s); at least 4 are required")
    return PointCloud(pts)


def write_xyz(path: str | Path, points, comments: Iterable[str] = ()) -> None:
    pts = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)
    lines = _comment_lines(comments, "# ")
    lines += [f"{_f(x)} {_f(y)} {_f(z)}" for x, y, z in pts.tolist()]
    _write_text(path, lines)


# ----------------------------------------------------------------------------
# PLY

_PLY_TYPES = {
    "char": int, "uchar": int, "short": int, "ushort": int, "int": int, "uint": int,
    "int8": int, "uint8": int, "int16": int, "uint16": int, "int32": int, "uint32": int,
    "float": float, "double": float, "float32": float, "float64": float,
}


def _ply_header(lines: list[str], path) -> tuple[list[dict], int]:
    if not lines or lines[0].strip() != "ply":
        raise InvalidInputError(f"{path}: not a PLY file")
    elements: list[dict] = []
    for i, raw in enumerate(lines[1:], start=1):
        parts = raw.split()
        if not parts:
            continue
        key = parts[0]
        if key == "format":
            if len(parts) < 2:
                raise InvalidInputError(f"{path}:{i + 1}: malformed format line")
            if parts[1] != "ascii":
                raise UnsupportedFormatError(f"{path}: PLY variant {parts[1]!r} is not supported (ascii only)")
        elif key == "element":
            if len(parts) != 3:
                raise InvalidInputError(f"{path}:{i + 1}: malformed element line")
            elements.append({"name": parts[1], "count": int(parts[2]), "props": []})
        elif key == "property":
            if not elements:
                raise InvalidInputError(f"{path}:{i + 1}: property before any element")
            if parts[1] == "list":
                elements[-1]["props"].append(("list", parts[-1]))
            else:
                if parts[1] not in _PLY_TYPES:
                    raise InvalidInputError(f"{path}:{i + 1}: unknown PLY type {parts[1]!r}")
                elements[-1]["props"].append((parts[1], parts[2]))
        elif key == "end_header":
            return elements, i + 1
        elif key not in ("comment", "obj_info"):
            raise InvalidInputError(f"{path}:{i + 1}: unexpected header line {raw.strip()!r}")
    raise InvalidInputError(f"{path}: PLY header has no end_header")


def read_ply(path: str | Path) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Vertex coordinates and the other scalar vertex properties of an ascii PLY file."""
    with open(path, "rb") as fh:
        head = fh.read(64)
    if b"format binary" in head:
        variant = head.split(b"format ", 1)[1].split()[0].decode("ascii", "replace")
        raise UnsupportedFormatError(f"{path}: PLY variant {variant!r} is not supported (ascii only)")
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    elements, body = _ply_header(lines, path)
    row = body
    for el in elements:
        if el["name"] != "vertex":
            row += el["count"]
            continue
        names = [name for _, name in el["props"]]
        for axis in "xyz":
            if axis not in names:
                raise InvalidInputError(f"{path}: vertex element has no {axis!r} property")
        if any(kind == "list" for kind, _ in el["props"]):
            raise InvalidInputError(f"{path}: list properties on vertices are not supported")
        data = np.empty((el["count"], len(names)))
        for j in range(el["count"]):
            no = row + j
            if no >= len(lines):
                raise InvalidInputError(f"{path}: file ends after {j} of {el['count']} vertices")
            parts = lines[no].split()
            if len(parts) != len(names):
                raise InvalidInputError(f"{path}:{no + 1}: expected {len(names)} values, found {len(parts)}")
            data[j] = [_parse_float(t, f"{path}:{no + 1}") for t in parts]
        cols = {name: data[:, i] for i, name in enumerate(names)}
        pts = np.column_stack([cols.pop("x"), cols.pop("y"), cols.pop("z")])
        return pts, cols
    raise InvalidInputError(f"{path}: no vertex element")


def label_color(label: int) -> tuple[int, int, int]:
    return UNLABELED_COLOR if label < 0 else PALETTE[label % len(PALETTE)]


def sidecar_path(ply_path: str | Path) -> Path:
    p = Path(ply_path)
    return p.with_name(p.stem + ".labels.csv")


def write_labeled_ply(path: str | Path, points, labels, comments: Iterable[str] = (),
                      sidecar: bool = True) -> None:
    """Ascii PLY colored by segment id, plus a ``<stem>.labels.csv`` sidecar.

    Colors cycle through a 20-entry palette, so the sidecar is the lossless
    record once there are more than 20 segments.
    """
    pts = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != len(pts):
        raise InvalidInputError(f"{len(labels)} labels for {len(pts)} points")
    lines = ["ply", "format ascii 1.0"]
    lines += [f"comment {c}" for c in comments]
    lines += [f"element vertex {len(pts)}",
              "property double x", "property double y", "property double z",
              "property uchar red", "property uchar green", "property uchar blue", "end_header"]
    for (x, y, z), lab in zip(pts.tolist(), labels.tolist()):
        r, g, b = label_color(lab)
        lines.append(f"{_f(x)} {_f(y)} {_f(z)} {r} {g} {b}")
    _write_text(path, lines)
    if sidecar:
        write_segmentation_csv(sidecar_path(path), labels, comments=comments)


def read_labeled_ply(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Points and labels; labels come from the sidecar when present, else from the palette."""
    pts, props = read_ply(path)
    side = sidecar_path(path)
    if side.exists():
        labels, _ = read_segmentation_csv(side)
        if len(labels) != len(pts):
            raise InvalidInputError(f"{side}: {len(labels)} labels for {len(pts)} points")
        return pts, labels
    for name in ("red", "green", "blue"):
        if name not in props:
            raise InvalidInputError(f"{path}: no colors and no sidecar; labels unrecoverable")
    lookup = {c: i for i, c in enumerate(PALETTE)}
    lookup[UNLABELED_COLOR] = -1
    labels = np.empty(len(pts), dtype=np.int64)
    for i, rgb in enumerate(zip(props["red"].astype(int).tolist(), props["green"].astype(int).tolist(),
                                props["blue"].astype(int).tolist())):
        if rgb not in lookup:
            raise InvalidInputError(f"{path}: vertex {i} color {rgb} is not a palette color")
        labels[i] = lookup[rgb]
    return pts, labels


# ----------------------------------------------------------------------------
# STL


def read_stl(path: str | Path) -> np.ndarray:
    """Triangles ``(T, 3, 3)`` from an ascii or binary STL file."""
    data = Path(path).read_bytes()
    if len(data) >= 84:
        count = struct.unpack("<I", data[80:84])[0]
        if len(data) == 84 + 50 * count:
            rec = np.dtype([("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
            arr = np.frombuffer(data, dtype=rec, count=count, offset=84)
            return arr["v"].astype(np.float64)
    if not data.lstrip().startswith(b"solid"):
        raise InvalidInputError(f"{path}: neither binary nor ascii STL")
    verts = []
    for no, line in enumerate(data.decode("utf-8", "replace").splitlines(), start=1):
        parts = line.split()
        if parts and parts[0] == "vertex":
            if len(parts) != 4:
                raise InvalidInputError(f"{path}:{no}: malformed vertex line")
            verts.append([_parse_float(t, f"{path}:{no}") for t in parts[1:]])
    if len(verts) % 3:
        raise InvalidInputError(f"{path}: vertex count {len(verts)} is not a multiple of 3")
    if not verts:
        raise InvalidInputError(f"{path}: no triangles")
    return np.array(verts, dtype=np.float64).reshape(-1, 3, 3)


def write_stl_ascii(path: str | Path, tris: np.ndarray, name: str = "lapshape") -> None:
    lines = [f"solid {name}"]
    for t in np.asarray(tris, dtype=np.float64):
        nrm = np.cross(t[1] - t[0], t[2] - t[0])
        norm = np.linalg.norm(nrm)
        nrm = nrm / norm if norm > 0 else nrm
        lines.append(f"  facet normal {_f(nrm[0])} {_f(nrm[1])} {_f(nrm[2])}")
        lines.append("    outer loop")
        lines += [f"      vertex {_f(v[0])} {_f(v[1])} {_f(v[2])}" for v in t]
        lines += ["    endloop", "  endfacet"]
    lines.append(f"endsolid {name}")
    _write_text(path, lines)


def write_stl_binary(path: str | Path, tris: np.ndarray) -> None:
    tris = np.asarray(tris, dtype=np.float64)
    rec = np.dtype([("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    arr = np.zeros(len(tris), dtype=rec)
    arr["v"] = tris
    nrm = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    norm = np.linalg.norm(nrm, axis=1, keepdims=True)
    arr["normal"] = np.divide(nrm, norm, out=np.zeros_like(nrm), where=norm > 0)
    with open(path, "wb") as fh:
        fh.write(b"lapshape binary stl".ljust(80, b" "))
        fh.write(struct.pack("<I", len(tris)))
        fh.write(arr.tobytes())


def sample_stl(path: str | Path, n: int, seed: int = 0) -> PointCloud:
    """``n`` area-weighted uniform samples on the mesh surface; deterministic per seed."""
    from .synthetic import sample_triangles

    if n < 4:
        raise InvalidInputError("sample count must be at least 4")
    tris = read_stl(path)
    return PointCloud(sample_triangles(tris, n, np.random.default_rng(seed)))


# ----------------------------------------------------------------------------
# CSV tables


def _read_table(path: str | Path) -> tuple[list[str], list[list[str]], list[str]]:
    header = None
    rows = []
    comments = []
    with open(path, encoding="utf-8", newline=None) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                comments.append(line[1:].strip())
                continue
            cells = line.split(",")
            if header is None:
                header = cells
            else:
                rows.append(cells)
    if header is None:
        raise InvalidInputError(f"{path}: no header row")
    return header, rows, comments


def _meta(comments: list[str], key: str):
    for c in comments:
        if c.startswith(key + " "):
            return json.loads(c[len(key) + 1:])
    return None


def write_hks_csv(path: str | Path, t_scales, values, comments: Iterable[str] = ()) -> None:
    """One row per point; columns ``t_0 .. t_{m-1}`` with the times recorded in a comment."""
    values = np.asarray(values, dtype=np.float64)
    t = [float(v) for v in t_scales]
    lines = _comment_lines(comments, "# ")
    lines.append("# t_scales " + json.dumps(t))
    lines.append(",".join(["point_id"] + [f"t_{j}" for j in range(len(t))]))
    for i, row in enumerate(values.tolist()):
        lines.append(",".join([str(i)] + [_f(v) for v in row]))
    _write_text(path, lines)


def read_hks_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    header, rows, comments = _read_table(path)
    t = _meta(comments, "t_scales")
    if header[0] != "point_id" or t is None or len(header) != len(t) + 1:
        raise InvalidInputError(f"{path}: not a signature CSV")
    values = np.empty((len(rows), len(t)))
    for i, cells in enumerate(rows):
        if len(cells) != len(header) or int(cells[0]) != i:
            raise InvalidInputError(f"{path}: malformed row {i}")
        values[i] = [_parse_float(c, f"{path} row {i}") for c in cells[1:]]
    return np.array(t, dtype=np.float64), values


def write_segmentation_csv(path: str | Path, labels, types=None, comments: Iterable[str] = (),
                           meta: dict | None = None) -> None:
    """``point_id,segment_id[,type_id]`` rows; ``meta`` entries go into ``# key json`` comments."""
    labels = np.asarray(labels, dtype=np.int64)
    lines = _comment_lines(comments, "# ")
    for key, value in sorted((meta or {}).items()):
        lines.append(f"# {key} {json.dumps(value)}")
    if types is None:
        lines.append("point_id,segment_id")
        lines += [f"{i},{lab}" for i, lab in enumerate(labels.tolist())]
    else:
        types = np.asarray(types, dtype=np.int64)
        lines.append("point_id,segment_id,type_id")
        lines += [f"{i},{lab},{ty}" for i, (lab, ty) in enumerate(zip(labels.tolist(), types.tolist()))]
    _write_text(path, lines)


def read_segmentation_csv(path: str | Path) -> tuple[np.ndarray, dict]:
    """Labels plus the ``# key json`` metadata comments (``type_id`` column under ``types``)."""
    header, rows, comments = _read_table(path)
    if header[:2] != ["point_id", "segment_id"]:
        raise InvalidInputError(f"{path}: not a segmentation CSV")
    labels = np.empty(len(rows), dtype=np.int64)
    types = np.empty(len(rows), dtype=np.int64) if len(header) == 3 else None
    for i, cells in enumerate(rows):
        try:
            if len(cells) != len(header) or int(cells[0]) != i:
                raise ValueError
            labels[i] = int(cells[1])
            if types is not None:
                types[i] = int(cells[2])
        except ValueError:
            raise InvalidInputError(f"{path}: malformed row {i}") from None
    meta = {}
    for c in comments:
        key, _, rest = c.partition(" ")
        try:
            meta[key] = json.loads(rest)
        except json.JSONDecodeError:
            continue
    if types is not None:
        meta["types"] = types
    return labels, meta


def write_persistence_csv(path: str | Path, pairs, comments: Iterable[str] = ()) -> None:
    lines = _comment_lines(comments, "# ")
    lines.append("birth,death,lifespan")
    lines += [f"{_f(p.birth)},{_f(p.death)},{_f(p.lifespan)}" for p in pairs]
    _write_text(path, lines)


def read_persistence_csv(path: str | Path) -> np.ndarray:
    header, rows, _ = _read_table(path)
    if header != ["birth", "death", "lifespan"]:
        raise InvalidInputError(f"{path}: not a persistence CSV")
    out = np.empty((len(rows), 3))
    for i, cells in enumerate(rows):
        if len(cells) != 3:
            raise InvalidInputError(f"{path}: malformed row {i}")
        try:
            out[i] = [float(c) for c in cells]
        except ValueError:
            raise InvalidInputError(f"{path}: malformed row {i}") from None
    return out


def write_type_csv(path: str | Path, segment_type, criterion, comments: Iterable[str] = ()) -> None:
    lines = _comment_lines(comments, "# ")
    lines.append("segment_id,type_id,criterion")
    lines += [f"{s},{int(t)},{_f(c)}" for s, (t, c) in enumerate(zip(segment_type, criterion))]
    _write_text(path, lines)


# ----------------------------------------------------------------------------
# sparse operator dump


def write_sparse(path: str | Path, stiffness: sp.spmatrix, mass, radius: float | None = None,
                 bandwidth: float | None = None, comments: Iterable[str] = ()) -> None:
    """Triplet dump: a ``stiffness n nnz`` block of ``i j value`` lines, then ``mass n`` values."""
    a = sp.csr_matrix(stiffness)
    a.sort_indices()
    coo = a.tocoo()
    mass = np.asarray(mass, dtype=np.float64)
    lines = [f"# {SPARSE_HEADER}"]
    lines += _comment_lines(comments, "# ")
    if radius is not None:
        lines.append(f"radius {_f(radius)}")
    if bandwidth is not None:
        lines.append(f"bandwidth {_f(bandwidth)}")
    lines.append(f"stiffness {a.shape[0]} {coo.nnz}")
    lines += [f"{i} {j} {_f(v)}" for i, j, v in zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist())]
    lines.append(f"mass {len(mass)}")
    lines += [_f(v) for v in mass.tolist()]
    _write_text(path, lines)


def read_sparse(path: str | Path) -> tuple[sp.csr_matrix, np.ndarray, dict]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh]
    if not lines or lines[0] != f"# {SPARSE_HEADER}":
        raise InvalidInputError(f"{path}: not a sparse dump")
    body = [(no, ln) for no, ln in enumerate(lines, start=1) if ln and not ln.startswith("#")]
    meta: dict = {}
    pos = 0
    while pos < len(body) and body[pos][1].split()[0] in ("radius", "bandwidth"):
        key, val = body[pos][1].split()
        meta[key] = _parse_float(val, f"{path}:{body[pos][0]}")
        pos += 1
    try:
        tag, n, nnz = body[pos][1].split()
        if tag != "stiffness":
            raise ValueError
        n, nnz = int(n), int(nnz)
        trip = body[pos + 1:pos + 1 + nnz]
        rows = np.array([int(ln.split()[0]) for _, ln in trip], dtype=np.int64)
        cols = np.array([int(ln.split()[1]) for _, ln in trip], dtype=np.int64)
        vals = np.array([_parse_float(ln.split()[2], f"{path}:{no}") for no, ln in trip])
        pos += 1 + nnz
        tag, nm = body[pos][1].split()
        if tag != "mass" or int(nm) != n:
            raise ValueError
        mass = np.array([_parse_float(ln, f"{path}:{no}") for no, ln in body[pos + 1:pos + 1 + n]])
        if len(mass) != n or len(rows) != nnz:
            raise ValueError
    except (ValueError, IndexError):
        raise InvalidInputError(f"{path}: malformed sparse dump") from None
    a = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    a.sort_indices()
    return a, mass, meta
