"""Point cloud ingestion, mesh sampling, normalization and Chamfer distance.

A point cloud is a plain ``(T, 3)`` float64 array throughout the package.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import (DegenerateInputError, EmptyInputError, ParseError,
                     UnsupportedFormatError)

XYZ_SUFFIXES = (".xyz", ".txt", ".pts")


def as_points(points) -> np.ndarray:
    """Validate and return a ``(T, 3)`` float64 copy-free view when possible."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1 and pts.size == 3:
        pts = pts.reshape(1, 3)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected an (T, 3) array, got shape {pts.shape}")
    if pts.shape[0] == 0:
        raise EmptyInputError("point cloud is empty")
    if not np.all(np.isfinite(pts)):
        raise ValueError("point cloud contains non-finite coordinates")
    return pts


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray  # (F, 3) int

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    def triangle_areas(self) -> np.ndarray:
        tri = self.vertices[self.faces]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)


# ----------------------------------------------------------------------------
# file formats

def load_xyz(path) -> np.ndarray:
    """Read an ASCII ``x y z`` file. Blank lines and ``#`` comments are skipped."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(f"expected 3 values, got {len(parts)}", line=lineno)
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise ParseError(f"non-numeric value in {line!r}", line=lineno) from None
    if not rows:
        raise EmptyInputError(f"{path}: no points")
    return as_points(rows)


def save_xyz(path, points, header=None):
    pts = as_points(points)
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        # repr of a Python float is the shortest string that round-trips
        for x, y, z in pts.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")


def _tokens(path):
    # OFF allows comments anywhere; yield (lineno, tokens) for data lines
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def load_off_mesh(path) -> TriangleMesh:
    """Read an ASCII OFF file with triangular faces only."""
    lines = list(_tokens(path))
    if not lines:
        raise EmptyInputError(f"{path}: empty file")
    lineno, head = lines[0]
    # some ModelNet files glue the counts to the header: "OFF490 518 0"
    if head[0].upper().startswith("OFF") and len(head[0]) > 3:
        head = [head[0][:3], head[0][3:]] + head[1:]
    if head[0].upper() != "OFF":
        raise ParseError("missing OFF header", line=lineno)
    counts = head[1:]
    body = lines[1:]
    if not counts:
        if not body:
            raise ParseError("missing vertex/face counts", line=lineno)
        lineno, counts = body[0]
        body = body[1:]
    try:
        n_vert, n_face = int(counts[0]), int(counts[1])
    except (ValueError, IndexError):
        raise ParseError("bad vertex/face counts", line=lineno) from None

    if len(body) < n_vert + n_face:
        raise ParseError(
            f"declared {n_vert} vertices and {n_face} faces but found "
            f"{len(body)} data lines", line=body[-1][0] if body else lineno)
    if len(body) > n_vert + n_face:
        raise ParseError("more data lines than declared", line=body[n_vert + n_face][0])

    verts = np.empty((n_vert, 3))
    for i in range(n_vert):
        lineno, tok = body[i]
        if len(tok) < 3:
            raise ParseError("vertex needs 3 coordinates", line=lineno)
        try:
            verts[i] = [float(t) for t in tok[:3]]
        except ValueError:
            raise ParseError("non-numeric vertex coordinate", line=lineno) from None

    faces = np.empty((n_face, 3), dtype=np.int64)
    for i in range(n_face):
        lineno, tok = body[n_vert + i]
        try:
            n = int(tok[0])
        except ValueError:
            raise ParseError("bad face vertex count", line=lineno) from None
        if n != 3:
            raise UnsupportedFormatError(f"line {lineno}: only triangular faces are supported (got {n})")
        if len(tok) < 4:
            raise ParseError("face needs 3 indices", line=lineno)
        idx = [int(t) for t in tok[1:4]]
        if min(idx) < 0 or max(idx) >= n_vert:
            raise ParseError("face index out of range", line=lineno)
        faces[i] = idx
    return TriangleMesh(verts, faces)


def save_off_mesh(path, mesh: TriangleMesh):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"OFF\n{len(mesh.vertices)} {len(mesh.faces)} 0\n")
        for x, y, z in mesh.vertices.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")
        for f in mesh.faces.tolist():
            fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")


# ----------------------------------------------------------------------------
# sampling and normalization

def sample_mesh(mesh: TriangleMesh, n: int, seed: int) -> np.ndarray:
    """Area-weighted triangle choice followed by uniform barycentric sampling."""
    if n < 1:
        raise ValueError("n must be positive")
    areas = mesh.triangle_areas()
    total = areas.sum()
    if not total > 0:
        raise DegenerateInputError("mesh has zero total area")
    rng = np.random.default_rng(seed)
    face_idx = rng.choice(len(areas), size=n, p=areas / total)
    uv = rng.random((n, 2))
    fold = uv.sum(axis=1) > 1.0
    uv[fold] = 1.0 - uv[fold]
    tri = mesh.vertices[mesh.faces[face_idx]]
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    return a + uv[:, :1] * (b - a) + uv[:, 1:] * (c - a)


def normalize_unit_sphere(points) -> np.ndarray:
    """Center on the centroid and scale so the farthest point has norm 1."""
    pts = as_points(points)
    centered = pts - pts.mean(axis=0)
    radius = np.sqrt((centered ** 2).sum(axis=1)).max()
    if not radius > 0:
        raise DegenerateInputError("all points coincide")
    out = centered / radius
    # the centroid of the scaled cloud can drift by a few ulps; re-center once
    return out - out.mean(axis=0)


def chamfer_distance(a, b, workers=1) -> float:
    """Symmetric mean squared nearest-neighbour distance between two clouds."""
    a = as_points(a)
    b = as_points(b)
    d_ab, _ = cKDTree(b).query(a, k=1, workers=workers)
    d_ba, _ = cKDTree(a).query(b, k=1, workers=workers)
    return float(np.mean(d_ab ** 2) + np.mean(d_ba ** 2))


def load_cloud(path, n_points=2048, seed=0) -> np.ndarray:
    """Load ``.xyz`` directly, or sample ``n_points`` from an ``.off`` mesh."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".off":
        return sample_mesh(load_off_mesh(path), n_points, seed=seed)
    if suffix in XYZ_SUFFIXES:
        return load_xyz(path)
    raise UnsupportedFormatError(f"{path}: unsupported file type {suffix!r}")
