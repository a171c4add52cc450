"""PLY and OBJ readers/writers for point clouds and triangle meshes."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from sclab.geometry.types import OrientedPointCloud, TriangleMesh

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


class PlyError(ValueError):
    pass


def _parse_header(fh):
    if fh.readline().strip() != b"ply":
        raise PlyError("missing 'ply' magic")
    fmt = None
    elements = []
    while True:
        line = fh.readline()
        if not line:
            raise PlyError("unterminated header")
        tok = line.decode("ascii").split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append({"name": tok[1], "count": int(tok[2]), "props": []})
        elif tok[0] == "property":
            if tok[1] == "list":
                elements[-1]["props"].append((tok[4], "list", _PLY_TYPES[tok[2]], _PLY_TYPES[tok[3]]))
            else:
                elements[-1]["props"].append((tok[2], _PLY_TYPES[tok[1]]))
        elif tok[0] == "end_header":
            break
    if fmt not in ("ascii", "binary_little_endian"):
        raise PlyError(f"unsupported PLY format {fmt!r}")
    return fmt, elements


def read_ply(path) -> dict[str, dict[str, np.ndarray]]:
    """Read every element of a PLY file into ``{element: {property: array}}``."""
    with open(path, "rb") as fh:
        fmt, elements = _parse_header(fh)
        body = fh.read()
    out: dict[str, dict[str, np.ndarray]] = {}
    if fmt == "ascii":
        tokens = body.split()
        pos = 0
        for el in elements:
            cols: dict[str, list] = {p[0]: [] for p in el["props"]}
            for _ in range(el["count"]):
                for p in el["props"]:
                    if p[1] == "list":
                        k = int(tokens[pos])
                        cols[p[0]].append([float(x) for x in tokens[pos + 1:pos + 1 + k]])
                        pos += 1 + k
                    else:
                        cols[p[0]].append(float(tokens[pos]))
                        pos += 1
            out[el["name"]] = {
                p[0]: ([np.asarray(x, dtype=p[3]) for x in cols[p[0]]] if p[1] == "list"
                       else np.asarray(cols[p[0]], dtype=p[1]))
                for p in el["props"]
            }
        return out
    pos = 0
    for el in elements:
        props = el["props"]
        if all(p[1] != "list" for p in props):
            dt = np.dtype([(p[0], "<" + p[1]) for p in props])
            arr = np.frombuffer(body, dtype=dt, count=el["count"], offset=pos)
            pos += dt.itemsize * el["count"]
            out[el["name"]] = {p[0]: np.array(arr[p[0]]) for p in props}
            continue
        cols = {p[0]: [] for p in props}
        for _ in range(el["count"]):
            for p in props:
                if p[1] == "list":
                    cdt = np.dtype("<" + p[2])
                    k = int(np.frombuffer(body, cdt, 1, pos)[0])
                    pos += cdt.itemsize
                    idt = np.dtype("<" + p[3])
                    cols[p[0]].append(np.frombuffer(body, idt, k, pos).copy())
                    pos += idt.itemsize * k
                else:
                    dt = np.dtype("<" + p[1])
                    cols[p[0]].append(np.frombuffer(body, dt, 1, pos)[0])
                    pos += dt.itemsize
        out[el["name"]] = {p[0]: np.asarray(cols[p[0]]) for p in props}
    return out


def read_point_cloud(path) -> OrientedPointCloud:
    """Points with optional normals and ``instance_id``; missing normals become +z."""
    data = read_ply(path)
    if "vertex" not in data:
        raise PlyError(f"{path}: no vertex element")
    v = data["vertex"]
    pts = np.c_[v["x"], v["y"], v["z"]].astype(np.float64)
    if all(k in v for k in ("nx", "ny", "nz")):
        nrm = np.c_[v["nx"], v["ny"], v["nz"]].astype(np.float64)
        nrm /= np.maximum(np.linalg.norm(nrm, axis=1, keepdims=True), 1e-300)
    else:
        nrm = np.tile([0.0, 0.0, 1.0], (len(pts), 1))
    labels = v.get("instance_id")
    return OrientedPointCloud(pts, nrm, None if labels is None else labels.astype(np.int64))


def write_point_cloud(path, points, normals=None, labels=None, binary: bool = True) -> None:
    if isinstance(points, OrientedPointCloud):
        points, normals, labels = points.points, points.normals, points.labels
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
    cols = [pts[:, 0], pts[:, 1], pts[:, 2]]
    if normals is not None:
        normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
        fields += [("nx", "<f8"), ("ny", "<f8"), ("nz", "<f8")]
        cols += [normals[:, 0], normals[:, 1], normals[:, 2]]
    if labels is not None:
        fields += [("instance_id", "<i4")]
        cols += [np.asarray(labels, dtype=np.int32)]
    names = {"<f8": "double", "<i4": "int"}
    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
              f"element vertex {len(pts)}"]
    header += [f"property {names[t]} {n}" for n, t in fields]
    header.append("end_header")
    arr = np.empty(len(pts), dtype=np.dtype(fields))
    for (n, _), c in zip(fields, cols):
        arr[n] = c
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(arr.tobytes())
        else:
            for row in arr:
                fh.write((" ".join(repr(float(x)) if isinstance(x, np.floating) else str(int(x))
                                   for x in row) + "\n").encode("ascii"))


def read_mesh(path) -> TriangleMesh:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return read_obj(path)
    if suffix == ".ply":
        data = read_ply(path)
        v = data["vertex"]
        faces = data.get("face", {})
        key = "vertex_indices" if "vertex_indices" in faces else "vertex_index"
        if key not in faces:
            raise PlyError(f"{path}: no face element")
        tris = _triangulate(list(faces[key]))
        return TriangleMesh(np.c_[v["x"], v["y"], v["z"]], tris)
    raise ValueError(f"unsupported mesh format: {path}")


def _triangulate(polys) -> np.ndarray:
    tris = []
    for poly in polys:
        poly = [int(i) for i in poly]
        for k in range(1, len(poly) - 1):
            tris.append([poly[0], poly[k], poly[k + 1]])
    return np.asarray(tris, dtype=np.int64).reshape(-1, 3)


def read_obj(path) -> TriangleMesh:
    verts, faces = [], []
    with open(path) as fh:
        for line in fh:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "v":
                verts.append([float(x) for x in tok[1:4]])
            elif tok[0] == "f":
                idx = []
                for t in tok[1:]:
                    i = int(t.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                faces.append(idx)
    return TriangleMesh(np.asarray(verts), _triangulate(faces))


def write_obj(path, mesh: TriangleMesh) -> None:
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for a, b, c in mesh.triangles + 1:
            fh.write(f"f {a} {b} {c}\n")


def write_mesh_ply(path, mesh: TriangleMesh) -> None:
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {len(mesh.vertices)}",
              "property double x", "property double y", "property double z",
              f"element face {len(mesh.triangles)}", "property list uchar int vertex_indices",
              "end_header"]
    face = np.empty(len(mesh.triangles), dtype=[("n", "u1"), ("i", "<i4", (3,))])
    face["n"] = 3
    face["i"] = mesh.triangles
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(mesh.vertices.astype("<f8").tobytes())
        fh.write(face.tobytes())


def write_mesh(path, mesh: TriangleMesh) -> None:
    if Path(path).suffix.lower() == ".ply":
        write_mesh_ply(path, mesh)
    else:
        write_obj(path, mesh)
