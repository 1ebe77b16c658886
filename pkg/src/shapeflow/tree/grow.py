"""Recursive stem growth and tree meshing.

Growth follows the Weber-Penn recipe in simplified form: a trunk of
``curve_res_0`` segments, children placed evenly above ``base_size`` with
rotate/down angles, lengths shaped by the crown envelope, radii from
``ratio``/``ratio_power``, and segment splitting driven by ``seg_splits`` with
fractional parts carried forward per level (error diffusion).

Every random draw comes from one seeded generator and is multiplied by a
``*_v`` field, so zero variation makes the output independent of the seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from ..errors import ValidationError
from ..mesh import TriMesh, merge_meshes, mesh_stem, rotation_matrix
from .params import LEAF_SHAPES, shape_ratio, validate_params

MIN_RADIUS_FRACTION = 0.02
MIN_LENGTH_FRACTION = 1e-3
LEAF_TILT = math.radians(45.0)
LEAF_PHYLLOTAXIS = math.radians(137.5)

# per leaf shape: (width relative to length, position of the widest point)
LEAF_OUTLINES = {
    "ovate": (0.6, 0.35), "linear": (0.15, 0.5), "cordate": (0.9, 0.3),
    "maple": (1.0, 0.45), "palmate": (1.1, 0.55), "spiky-oak": (0.5, 0.5),
    "rounded-oak": (0.6, 0.55), "elliptic": (0.5, 0.5), "rectangle": (0.4, 0.9),
    "triangle": (0.8, 0.1),
}


@dataclass
class StemNode:
    level: int
    points: np.ndarray
    radii: np.ndarray
    children: list = field(default_factory=list)
    clones: list = field(default_factory=list)
    leaves: list = field(default_factory=list)

    @property
    def length(self):
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def walk(self):
        """Depth-first iterator over this stem, its clones and descendants."""
        yield self
        for sub in self.clones + self.children:
            yield from sub.walk()


def same_structure(a: StemNode, b: StemNode) -> bool:
    """Exact structural and geometric equality of two stem trees."""
    if a.level != b.level or len(a.children) != len(b.children) \
            or len(a.clones) != len(b.clones) or len(a.leaves) != len(b.leaves):
        return False
    if not (np.array_equal(a.points, b.points) and np.array_equal(a.radii, b.radii)):
        return False
    for (pa, fa), (pb, fb) in zip(a.leaves, b.leaves):
        if not (np.array_equal(pa, pb) and np.array_equal(fa, fb)):
            return False
    return all(same_structure(x, y) for x, y in zip(a.clones + a.children, b.clones + b.children))


def count_stems(root: StemNode, level=None):
    return sum(1 for s in root.walk() if level is None or s.level == level)


class _Grower:
    def __init__(self, params, seed):
        self.p = validate_params(params)
        self.rng = np.random.default_rng(seed)
        self.levels = int(params["levels"])
        self.split_err = [0.0] * self.levels
        self.branch_err = [0.0] * self.levels

    def u(self):
        return float(self.rng.uniform(-1.0, 1.0))

    def lv(self, name, level):
        return self.p[f"{name}_{level}"]

    # -- one stem -------------------------------------------------------------

    def stem(self, level, origin, frame, length, radius, start_seg=0, start_frac=0.0,
             parent_length=None, offset=0.0):
        """Grow one stem, or a clone continuing from segment ``start_seg``.
        Clones carry no children or leaves of their own."""
        res = int(self.lv("curve_res", level))
        seg_len = length / res
        curve, back = self.lv("curve", level), self.lv("curve_back", level)
        curve_v = self.lv("curve_v", level)
        taper = self.lv("taper", level)
        points = [np.asarray(origin, dtype=np.float64)]
        frames = []
        clones = []
        frame = np.array(frame, dtype=np.float64)
        for seg in range(start_seg, res):
            if seg > 0:
                if back == 0.0:
                    angle = curve / res
                elif seg < (res + 1) // 2:
                    angle = curve / max(1, (res + 1) // 2)
                else:
                    angle = back / max(1, res // 2)
                angle += curve_v / res * self.u()
                frame = frame @ rotation_matrix(np.array([1.0, 0.0, 0.0]), math.radians(angle))
                if seg > start_seg:
                    clones += self._split(level, points[-1], frame, length, radius, seg)
            frames.append(frame)
            points.append(points[-1] + seg_len * frame[:, 2])
        points = np.array(points)
        n_seg = len(points) - 1
        frac = start_frac + np.arange(n_seg + 1) / res
        radii = radius * np.maximum(1.0 - taper * frac, MIN_RADIUS_FRACTION)
        node = StemNode(level, points, radii, clones=clones)
        if start_seg == 0:
            self._children(node, frames, length, parent_length, offset)
        return node

    def _split(self, level, point, frame, length, radius, seg):
        want = self.lv("seg_splits", level)
        n = int(math.floor(want + self.split_err[level] + 0.5))
        self.split_err[level] += want - n
        clones = []
        for k in range(1, n + 1):
            tilt = self.lv("split_angle", level) + self.lv("split_angle_v", level) * self.u()
            azimuth = 2.0 * math.pi * k / (n + 1)
            f = frame @ rotation_matrix(np.array([0.0, 0.0, 1.0]), azimuth)
            f = f @ rotation_matrix(np.array([1.0, 0.0, 0.0]), math.radians(tilt))
            clones.append(self._clone(level, point, f, length, radius, seg))
        return clones

    def _clone(self, level, point, frame, length, radius, seg):
        res = int(self.lv("curve_res", level))
        return self.stem(level, point, frame, length, radius, start_seg=seg, start_frac=seg / res)

    # -- children and leaves ----------------------------------------------------

    def _children(self, node, frames, length, parent_length, offset):
        level = node.level
        if level + 1 < self.levels:
            child = level + 1
            if level == 0:
                n = int(self.p["branches_1"])
                base = self.p["base_size"]
            else:
                want = self.lv("branches", child) * (1.0 - 0.5 * offset / max(parent_length, 1e-12))
                n = int(math.floor(want + self.branch_err[child] + 0.5))
                self.branch_err[child] += want - n
                base = 0.0
            phi = 0.0
            for k in range(n):
                t = base + (1.0 - base) * (k + 0.5) / n
                pos, frame, r_here = _sample(node, frames, t)
                phi += self.lv("rotate", child) + self.lv("rotate_v", child) * self.u()
                down = self.lv("down_angle", child) + self.lv("down_angle_v", child) * self.u()
                f = frame @ rotation_matrix(np.array([0.0, 0.0, 1.0]), math.radians(phi))
                f = f @ rotation_matrix(np.array([1.0, 0.0, 0.0]), math.radians(down))
                off = t * length
                rel = self.lv("length", child) + self.lv("length_v", child) * self.u()
                if level == 0:
                    span = max(length * (1.0 - base), 1e-12)
                    ratio = min(max((length - off) / span, 0.0), 1.0)
                    c_len = length * rel * shape_ratio(int(self.p["shape"]), ratio)
                else:
                    c_len = rel * (length - 0.6 * off)
                c_len = max(c_len, MIN_LENGTH_FRACTION * length)
                c_rad = min(node.radii[0] * (c_len / length) ** self.p["ratio_power"], r_here)
                node.children.append(self.stem(child, pos, f, c_len, c_rad,
                                               parent_length=length, offset=off))
        if level == self.levels - 1 and self.p["leaf_count"] > 0:
            n = int(self.p["leaf_count"])
            for k in range(n):
                t = (k + 0.5) / n
                pos, frame, _ = _sample(node, frames, t)
                f = frame @ rotation_matrix(np.array([0.0, 0.0, 1.0]), k * LEAF_PHYLLOTAXIS)
                f = f @ rotation_matrix(np.array([1.0, 0.0, 0.0]), LEAF_TILT)
                node.leaves.append((pos, f))


def _sample(node, frames, t):
    """Position, segment frame and radius at arclength fraction ``t``."""
    n_seg = len(frames)
    x = min(max(t, 0.0), 1.0) * n_seg
    i = min(int(x), n_seg - 1)
    w = x - i
    pos = (1.0 - w) * node.points[i] + w * node.points[i + 1]
    r = (1.0 - w) * node.radii[i] + w * node.radii[i + 1]
    return pos, frames[i], float(r)


def grow(params, seed=0) -> StemNode:
    """Grow the stem skeleton of a tree; deterministic per ``(params, seed)``."""
    g = _Grower(params, seed)
    p = g.p
    scale = max(p["g_scale"] + p["g_scale_v"] * g.u(), 1e-3)
    length = max((p["length_0"] + p["length_v_0"] * g.u()) * scale, MIN_LENGTH_FRACTION * scale)
    radius = length * p["ratio"]
    return g.stem(0, np.zeros(3), np.eye(3), length, radius)


# ----------------------------------------------------------------------------
# meshing


def leaf_mesh(leaves, leaf_shape, scale, scale_x, bend) -> TriMesh:
    """Two-triangle kite per leaf, folded about its midrib by ``bend``."""
    if not leaves:
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    name = LEAF_SHAPES[int(leaf_shape)]
    width, widest = LEAF_OUTLINES[name]
    half = 0.5 * width * scale_x * scale
    fold = 0.5 * math.pi * bend
    local = np.array([
        [0.0, 0.0, 0.0],
        [half * math.cos(fold), half * math.sin(fold), widest * scale],
        [0.0, 0.0, scale],
        [-half * math.cos(fold), half * math.sin(fold), widest * scale],
    ])
    pos = np.array([p for p, _ in leaves])
    frames = np.array([f for _, f in leaves])
    verts = pos[:, None, :] + np.einsum("nab,kb->nka", frames, local)
    base = 4 * np.arange(len(leaves))[:, None]
    faces = np.concatenate([base + np.array([0, 1, 2]), base + np.array([0, 2, 3])], axis=1)
    return TriMesh(verts.reshape(-1, 3), faces.reshape(-1, 3))


def generate_tree(params, seed=0, radial_resolution=8) -> TriMesh:
    """Grow a tree and mesh it: one closed sweep per stem or clone (tag
    ``branch``) plus leaf quads (tag ``leaf``)."""
    if radial_resolution < 3:
        raise ValidationError("radial_resolution must be >= 3")
    root = grow(params, seed)
    parts, tags, leaves = [], [], []
    for s in root.walk():
        parts.append(mesh_stem(s.points, s.radii, radial_resolution))
        tags.append(0)
        leaves.extend(s.leaves)
    if leaves:
        parts.append(leaf_mesh(leaves, params["leaf_shape"], params["leaf_scale"],
                               params["leaf_scale_x"], params["leaf_bend"]))
        tags.append(1)
    return merge_meshes(parts, tags).validate()
