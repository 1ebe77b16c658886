"""Indexed triangle meshes, Wavefront OBJ I/O and generalized-cylinder sweeps."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

TAG_NAMES = ("branch", "leaf")
GROUP_NAMES = {0: "branch", 1: "leaves"}


@dataclass
class TriMesh:
    vertices: np.ndarray
    faces: np.ndarray
    tags: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.tags is not None:
            self.tags = np.asarray(self.tags, dtype=np.int8).reshape(-1)
            if self.tags.size != len(self.faces):
                raise ValidationError("one tag per face required")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def validate(self):
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= self.n_vertices):
            raise ValidationError("face index out of range")
        if not np.all(np.isfinite(self.vertices)):
            raise ValidationError("non-finite vertex coordinate")
        f = self.faces
        if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise ValidationError("degenerate face with a repeated index")
        return self

    def faces_tagged(self, name):
        code = TAG_NAMES.index(name)
        if self.tags is None:
            return self.faces if code == 0 else self.faces[:0]
        return self.faces[self.tags == code]

    def copy(self):
        return TriMesh(self.vertices.copy(), self.faces.copy(),
                       None if self.tags is None else self.tags.copy())


def merge_meshes(meshes, tags=None):
    """Concatenate meshes. ``tags`` gives one tag code per input mesh and
    overrides any per-face tags they carry."""
    verts, faces, out_tags = [], [], []
    offset = 0
    for i, m in enumerate(meshes):
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        if tags is not None:
            out_tags.append(np.full(m.n_faces, tags[i], dtype=np.int8))
        elif m.tags is not None:
            out_tags.append(m.tags)
        else:
            out_tags.append(np.zeros(m.n_faces, dtype=np.int8))
        offset += m.n_vertices
    if not meshes:
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.int8))
    return TriMesh(np.concatenate(verts), np.concatenate(faces), np.concatenate(out_tags))


# ----------------------------------------------------------------------------
# OBJ


def _fmt(x):
    return f"{x + 0.0:.9g}"


def obj_text(mesh: TriMesh) -> str:
    lines = [f"v {_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in mesh.vertices.tolist()]
    if mesh.tags is None:
        groups = [(None, mesh.faces)]
    else:
        groups = [(GROUP_NAMES[code], mesh.faces[mesh.tags == code])
                  for code in sorted(GROUP_NAMES) if np.any(mesh.tags == code)]
    for name, faces in groups:
        if name is not None:
            lines.append(f"g {name}")
        lines.extend(f"f {a + 1} {b + 1} {c + 1}" for a, b, c in faces.tolist())
    return "\n".join(lines) + "\n"


def export_obj(mesh: TriMesh, path):
    """Write ``mesh`` as Wavefront OBJ: ``v`` lines at 9 significant digits,
    then 1-based ``f`` lines (grouped under ``g branch`` / ``g leaves`` when
    the mesh carries face tags)."""
    mesh.validate()
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(obj_text(mesh))
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from None


def read_obj(path) -> TriMesh:
    """Minimal reader for the subset of OBJ written by :func:`export_obj`."""
    verts, faces, tags = [], [], []
    current = 0
    names = {v: k for k, v in GROUP_NAMES.items()}
    try:
        text = Path(path).read_text(encoding="ascii")
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from None
    has_groups = False
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "v":
                verts.append([float(p) for p in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
                tags.append(current)
            elif parts[0] == "g":
                has_groups = True
                current = names.get(parts[1], 0) if len(parts) > 1 else 0
        except ValueError:
            raise FormatError(f"{path}:{lineno}: malformed line") from None
    return TriMesh(np.array(verts).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3),
                   np.array(tags, dtype=np.int8) if has_groups else None)


# ----------------------------------------------------------------------------
# measures


def signed_volume(mesh: TriMesh) -> float:
    v = mesh.vertices[mesh.faces]
    return float(np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6.0)


def is_closed_manifold(faces) -> bool:
    """Every directed edge appears once and is matched by its reverse."""
    faces = np.asarray(faces)
    if faces.size == 0:
        return False
    edges = Counter()
    for a, b, c in faces.tolist():
        edges[(a, b)] += 1
        edges[(b, c)] += 1
        edges[(c, a)] += 1
    return all(n == 1 and edges.get((b, a)) == 1 for (a, b), n in edges.items())


def bbox_diagonal(vertices) -> float:
    v = np.asarray(vertices)
    return float(np.linalg.norm(v.max(axis=0) - v.min(axis=0)))


# ----------------------------------------------------------------------------
# sweeps


def rotation_matrix(axis, angle):
    """Rodrigues rotation about a unit ``axis`` by ``angle`` radians."""
    x, y, z = axis
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def _any_perpendicular(t):
    axis = np.eye(3)[int(np.argmin(np.abs(t)))]
    n = axis - (axis @ t) * t
    return n / np.linalg.norm(n)


def transport_frames(points, normal=None):
    """Unit tangents and parallel-transported normals along a polyline."""
    points = np.asarray(points, dtype=np.float64)
    seg = np.diff(points, axis=0)
    lengths = np.linalg.norm(seg, axis=1)
    if np.any(lengths <= 1e-12):
        raise ValidationError("zero-length spine segment")
    seg = seg / lengths[:, None]
    tangents = np.empty_like(points)
    tangents[0] = seg[0]
    tangents[-1] = seg[-1]
    for i in range(1, len(points) - 1):
        t = seg[i - 1] + seg[i]
        norm = np.linalg.norm(t)
        tangents[i] = t / norm if norm > 1e-9 else seg[i - 1]
    normals = np.empty_like(points)
    if normal is None:
        n = _any_perpendicular(tangents[0])
    else:
        n = np.asarray(normal, dtype=np.float64)
        n = n - (n @ tangents[0]) * tangents[0]
        nn = np.linalg.norm(n)
        n = n / nn if nn > 1e-9 else _any_perpendicular(tangents[0])
    normals[0] = n
    for i in range(1, len(points)):
        a, b = tangents[i - 1], tangents[i]
        axis = np.cross(a, b)
        s = np.linalg.norm(axis)
        if s > 1e-12:
            n = rotation_matrix(axis / s, np.arctan2(s, a @ b)) @ n
        n = n - (n @ b) * b
        n /= np.linalg.norm(n)
        normals[i] = n
    return tangents, normals


def mesh_stem(spine, radii, radial_resolution=8, normal=None) -> TriMesh:
    """Sweep a ``radial_resolution``-gon along ``spine``.

    One ring per spine point, ``2 * res`` side triangles per segment, and each
    end closed by a fan of ``res - 2`` triangles over the ring itself, giving a
    closed, outward-oriented surface with ``len(spine) * res`` vertices.
    """
    spine = np.asarray(spine, dtype=np.float64).reshape(-1, 3)
    if len(spine) < 2:
        raise ValidationError("spine needs at least two points")
    if radial_resolution < 3:
        raise ValidationError("radial_resolution must be >= 3")
    radii = np.broadcast_to(np.asarray(radii, dtype=np.float64), (len(spine),))
    tangents, normals = transport_frames(spine, normal)
    binormals = np.cross(tangents, normals)
    res = radial_resolution
    theta = 2.0 * np.pi * np.arange(res) / res
    ring = np.cos(theta)[None, :, None] * normals[:, None, :] + \
        np.sin(theta)[None, :, None] * binormals[:, None, :]
    verts = spine[:, None, :] + radii[:, None, None] * ring
    n_rings = len(spine)
    faces = []
    j = np.arange(res)
    jn = (j + 1) % res
    for i in range(n_rings - 1):
        a, b = i * res + j, i * res + jn
        c, d = (i + 1) * res + j, (i + 1) * res + jn
        faces.append(np.stack([a, b, d], axis=1))
        faces.append(np.stack([a, d, c], axis=1))
    k = np.arange(1, res - 1)
    faces.append(np.stack([np.zeros_like(k), k + 1, k], axis=1))
    last = (n_rings - 1) * res
    faces.append(np.stack([np.full_like(k, last), last + k, last + k + 1], axis=1))
    return TriMesh(verts.reshape(-1, 3), np.concatenate(faces))
