"""Binary and text codecs: PLY clouds, raw depth rasters, PBM masks, OBJ meshes."""
from __future__ import annotations

import json
import os

import numpy as np

from .cloudproc import BinaryMask, DepthImage, PointCloud


def save_ply(path, cloud: PointCloud, binary: bool = True) -> None:
    """Write xyz float32 PLY, ASCII or binary little-endian.

    Colors are not part of the schema and are not persisted.
    """
    pts = cloud.points.astype("<f4")
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        "ply\n"
        f"format {fmt} 1.0\n"
        f"element vertex {len(pts)}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "end_header\n"
    )
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        if binary:
            f.write(pts.tobytes())
        else:
            lines = [f"{x:.9g} {y:.9g} {z:.9g}" for x, y, z in pts]
            f.write(("\n".join(lines) + ("\n" if lines else "")).encode("ascii"))


def load_ply(path) -> PointCloud:
    """Read an xyz PLY written by save_ply (either format)."""
    with open(path, "rb") as f:
        data = f.read()
    end = data.index(b"end_header\n") + len(b"end_header\n")
    header = data[:end].decode("ascii").splitlines()
    if header[0] != "ply":
        raise ValueError(f"{path} is not a PLY file")
    fmt = None
    count = 0
    for line in header[1:]:
        if line.startswith("format"):
            fmt = line.split()[1]
        elif line.startswith("element vertex"):
            count = int(line.split()[2])
    if fmt not in ("ascii", "binary_little_endian"):
        raise ValueError(f"unsupported PLY format {fmt!r}")
    if fmt == "binary_little_endian":
        pts = np.frombuffer(data[end:], dtype="<f4", count=count * 3).reshape(count, 3)
    else:
        body = data[end:].decode("ascii").split()
        pts = np.array(body, dtype=np.float32).reshape(count, 3)
    return PointCloud(points=pts.astype(np.float64))


def save_depth(path, depth: DepthImage, camera_id: str = "", timestamp: float = 0.0) -> None:
    """Write a raw little-endian float32 raster plus a JSON header sidecar."""
    with open(path, "wb") as f:
        f.write(depth.depths.astype("<f4").tobytes())
    sidecar = {
        "width": depth.width,
        "height": depth.height,
        "camera_id": camera_id,
        "timestamp": timestamp,
    }
    with open(str(path) + ".json", "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")


def load_depth(path) -> tuple[DepthImage, dict]:
    """Read a raster written by save_depth; returns (image, sidecar dict)."""
    with open(str(path) + ".json") as f:
        sidecar = json.load(f)
    w, h = int(sidecar["width"]), int(sidecar["height"])
    raw = np.fromfile(path, dtype="<f4", count=w * h).reshape(h, w)
    return DepthImage(width=w, height=h, depths=raw.astype(np.float64)), sidecar


def save_pbm(path, mask: BinaryMask) -> None:
    """Write a binary PBM (P4); set bits mark masked pixels."""
    header = f"P4\n{mask.width} {mask.height}\n".encode("ascii")
    packed = np.packbits(mask.bits.astype(np.uint8), axis=1)
    with open(path, "wb") as f:
        f.write(header)
        f.write(packed.tobytes())


def load_pbm(path) -> BinaryMask:
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P4"):
        raise ValueError(f"{path} is not a binary PBM")
    # header: magic, whitespace, width, whitespace, height, single whitespace
    parts = data[2:].split(None, 2)
    w, h = int(parts[0]), int(parts[1])
    header_len = len(data) - len(parts[2]) if len(parts) > 2 else len(data)
    row_bytes = (w + 7) // 8
    raw = np.frombuffer(data[header_len:], dtype=np.uint8, count=h * row_bytes)
    bits = np.unpackbits(raw.reshape(h, row_bytes), axis=1)[:, :w].astype(bool)
    return BinaryMask(width=w, height=h, bits=bits)


def save_obj(path, vertices: np.ndarray, faces: np.ndarray) -> None:
    """Write an ASCII OBJ with v/f records only (1-based face indices)."""
    with open(path, "w") as f:
        for x, y, z in np.asarray(vertices, dtype=np.float64):
            f.write(f"v {x!r} {y!r} {z!r}\n")
        for tri in np.asarray(faces, dtype=np.int64):
            f.write("f " + " ".join(str(i + 1) for i in tri) + "\n")


def load_obj(path) -> tuple[np.ndarray, np.ndarray]:
    """Read v/f records; returns (vertices (V,3), faces (F,3) 0-based)."""
    verts, faces = [], []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(p) for p in parts[1:4]])
            elif parts[0] == "f":
                # tolerate v/vt/vn references; keep the vertex index
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    verts = np.array(verts, dtype=np.float64).reshape(-1, 3)
    faces = np.array(faces, dtype=np.int64).reshape(-1, 3)
    return verts, faces


def write_json(path, doc) -> None:
    """Canonical JSON writer: sorted keys, trailing newline."""
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path):
    with open(path) as f:
        return json.load(f)


def file_digest(path) -> str:
    """Hex SHA-256 of a file, for manifests and determinism checks."""
    import hashlib

    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def list_files(root) -> list[str]:
    """Sorted relative paths of all files under root."""
    out = []
    for dirpath, _, filenames in os.walk(root):
        for name in filenames:
            out.append(os.path.relpath(os.path.join(dirpath, name), root))
    return sorted(out)
