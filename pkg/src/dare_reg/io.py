"""Point cloud (PLY, XYZ) and transform (JSON) file I/O."""

from __future__ import annotations

import json
import os

import numpy as np

from . import __version__
from .geom import PointCloud, RigidTransform, is_rotation, orthonormalize

GENERATOR = f"dare-reg {__version__}"

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


class ParseError(ValueError):
    pass


def _normals_or_none(nrm):
    norm = np.linalg.norm(nrm, axis=1, keepdims=True)
    if np.any(norm == 0):
        return None
    if np.all(np.abs(norm - 1.0) <= 1e-9):
        return nrm  # already unit: keep stored values bit-exact
    return nrm / norm


def _cloud_from_columns(cols, where):
    pts = np.column_stack([cols["x"], cols["y"], cols["z"]]).astype(np.float64)
    normals = None
    if all(k in cols for k in ("nx", "ny", "nz")):
        normals = np.column_stack([cols["nx"], cols["ny"], cols["nz"]]).astype(np.float64)
    weights = cols.get("weight")
    arrays = [pts] + [a for a in (normals, weights) if a is not None]
    for a in arrays:
        bad = ~np.isfinite(np.asarray(a, dtype=np.float64))
        if bad.any():
            row = int(np.argwhere(bad)[0][0])
            raise ParseError(f"non-finite value in vertex {row} ({where(row)})")
    if normals is not None:
        normals = _normals_or_none(normals)
    return PointCloud(pts, normals, None if weights is None else np.asarray(weights, dtype=np.float64))


def _parse_header(f):
    first = f.readline()
    if first.rstrip(b"\r\n") != b"ply":
        raise ParseError("line 1: missing 'ply' magic")
    fmt = None
    elements = []
    lineno = 1
    while True:
        raw = f.readline()
        lineno += 1
        if not raw:
            raise ParseError(f"line {lineno}: unexpected end of header")
        line = raw.decode("ascii", errors="replace").strip()
        tok = line.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "end_header":
            break
        if tok[0] == "format":
            if len(tok) != 3 or tok[1] not in ("ascii", "binary_little_endian", "binary_big_endian"):
                raise ParseError(f"line {lineno}: bad format line {line!r}")
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise ParseError(f"line {lineno}: bad element line {line!r}")
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise ParseError(f"line {lineno}: property before element")
            if tok[1] == "list":
                if len(tok) != 5 or tok[2] not in _PLY_TYPES or tok[3] not in _PLY_TYPES:
                    raise ParseError(f"line {lineno}: bad list property {line!r}")
                elements[-1][2].append((tok[4], ("list", _PLY_TYPES[tok[2]], _PLY_TYPES[tok[3]])))
            else:
                if len(tok) != 3 or tok[1] not in _PLY_TYPES:
                    raise ParseError(f"line {lineno}: bad property {line!r}")
                elements[-1][2].append((tok[2], _PLY_TYPES[tok[1]]))
        else:
            raise ParseError(f"line {lineno}: unexpected header keyword {tok[0]!r}")
    if fmt is None:
        raise ParseError("missing format line")
    return fmt, elements, lineno


def read_ply(path) -> PointCloud:
    with open(path, "rb") as f:
        fmt, elements, header_lines = _parse_header(f)
        offset = f.tell()
        body = f.read()
    names = [e[0] for e in elements]
    if "vertex" not in names:
        raise ParseError("no vertex element")
    for name, count, props in elements:
        if name == "vertex":
            pnames = [p[0] for p in props]
            for req in ("x", "y", "z"):
                if req not in pnames:
                    raise ParseError(f"vertex element lacks property {req!r}")
            if any(isinstance(p[1], tuple) for p in props):
                raise ParseError("list properties on vertex are not supported")
            break

    if fmt == "ascii":
        return _read_ply_ascii(body, elements, header_lines)
    endian = "<" if fmt == "binary_little_endian" else ">"
    pos = 0
    for name, count, props in elements:
        if any(isinstance(p[1], tuple) for p in props):
            raise ParseError(f"element {name!r} with list properties precedes vertex data")
        dt = np.dtype([(p[0], endian + p[1]) for p in props])
        need = dt.itemsize * count
        if len(body) - pos < need:
            raise ParseError(f"byte {offset + len(body)}: payload too short for element {name!r}, "
                             f"expected {need} bytes at byte {offset + pos}")
        if name == "vertex":
            arr = np.frombuffer(body, dtype=dt, count=count, offset=pos)
            cols = {p[0]: arr[p[0]].astype(np.float64) for p in props}
            return _cloud_from_columns(cols, lambda r: f"byte {offset + pos + r * dt.itemsize}")
        pos += need
    raise AssertionError("unreachable")


def _read_ply_ascii(body, elements, header_lines):
    lines = body.decode("ascii", errors="replace").splitlines()
    cur = 0
    for name, count, props in elements:
        if name != "vertex":
            cur += count
            continue
        if len(lines) - cur < count:
            raise ParseError(f"line {header_lines + len(lines)}: expected {count} vertex lines, "
                             f"file ends after {max(len(lines) - cur, 0)}")
        rows = []
        for r in range(count):
            tok = lines[cur + r].split()
            if len(tok) < len(props):
                raise ParseError(f"line {header_lines + cur + r + 1}: expected {len(props)} values, got {len(tok)}")
            try:
                rows.append([float(t) for t in tok[:len(props)]])
            except ValueError as e:
                raise ParseError(f"line {header_lines + cur + r + 1}: {e}") from None
        arr = np.array(rows, dtype=np.float64).reshape(count, len(props))
        cols = {p[0]: arr[:, i] for i, p in enumerate(props)}
        first = header_lines + cur + 1
        return _cloud_from_columns(cols, lambda r: f"line {first + r}")
    raise AssertionError("unreachable")


def read_xyz(path) -> PointCloud:
    rows = []
    ncol = None
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            tok = s.replace(",", " ").split()
            if len(tok) not in (3, 6) or (ncol is not None and len(tok) != ncol):
                raise ParseError(f"line {lineno}: expected 3 or 6 columns, got {len(tok)}")
            ncol = len(tok)
            try:
                vals = [float(t) for t in tok]
            except ValueError as e:
                raise ParseError(f"line {lineno}: {e}") from None
            if not all(np.isfinite(vals)):
                raise ParseError(f"line {lineno}: non-finite value")
            rows.append(vals)
    arr = np.array(rows, dtype=np.float64).reshape(-1, ncol or 3)
    normals = _normals_or_none(arr[:, 3:6]) if ncol == 6 else None
    return PointCloud(arr[:, :3], normals)


def read_point_cloud(path) -> PointCloud:
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".ply":
        return read_ply(path)
    if ext in (".xyz", ".txt", ".pts"):
        return read_xyz(path)
    with open(path, "rb") as f:
        magic = f.read(3)
    return read_ply(path) if magic == b"ply" else read_xyz(path)


def write_point_cloud(cloud: PointCloud, path, format=None):
    """Write ``cloud``; format is 'ply' (binary little endian), 'ply-ascii' or 'xyz'.

    Defaults by extension: .ply -> binary PLY, anything else -> XYZ. Binary PLY
    stores doubles, so coordinates round-trip bit-exactly.
    """
    if format is None:
        format = "ply" if str(path).lower().endswith(".ply") else "xyz"
    cols = [cloud.points]
    if cloud.normals is not None:
        cols.append(cloud.normals)
    data = np.hstack(cols) if len(cloud) else np.zeros((0, 3 * len(cols)))
    if format == "xyz":
        np.savetxt(path, data, fmt="%.9g")
        return
    props = ["x", "y", "z"] + (["nx", "ny", "nz"] if cloud.normals is not None else [])
    if cloud.weights is not None:
        props.append("weight")
        data = np.column_stack([data, cloud.weights])
    binary = format in ("ply", "ply-binary")
    if not binary and format != "ply-ascii":
        raise ValueError(f"unknown point cloud format {format!r}")
    header = ["ply", "format " + ("binary_little_endian" if binary else "ascii") + " 1.0",
              f"comment generator: {GENERATOR}", f"element vertex {len(cloud)}"]
    header += [f"property double {p}" for p in props] + ["end_header"]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            f.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
        else:
            for row in data:
                f.write((" ".join(f"{v:.9g}" for v in row) + "\n").encode("ascii"))


def _r17(x):
    return float(f"{x:.17g}")


def transforms_to_json(transforms, config=None, objective_trace=None, extra=None) -> str:
    doc = {
        "generator": GENERATOR,
        "transforms": [
            {"set_id": i,
             "rotation": [_r17(v) for v in np.asarray(t.rotation).reshape(-1)],
             "translation": [_r17(v) for v in t.translation]}
            for i, t in enumerate(transforms)
        ],
        "metadata": {
            "config": config or {},
            "objective_trace": [_r17(v) for v in (objective_trace or [])],
        },
    }
    if extra:
        doc["metadata"].update(extra)
    return json.dumps(doc, indent=2) + "\n"


def write_transform_file(path, transforms, config=None, objective_trace=None, extra=None):
    with open(path, "w") as f:
        f.write(transforms_to_json(transforms, config, objective_trace, extra))


def read_transform_file(path):
    """Returns (transforms ordered by set_id, metadata)."""
    with open(path) as f:
        doc = json.load(f)
    out = []
    for entry in sorted(doc["transforms"], key=lambda e: e["set_id"]):
        r = np.asarray(entry["rotation"], dtype=np.float64).reshape(3, 3)
        if not is_rotation(r, tol=1e-6):
            raise ParseError(f"set {entry['set_id']}: rotation is not orthonormal within 1e-6")
        out.append(RigidTransform(orthonormalize(r), entry["translation"]))
    return out, doc.get("metadata", {})

