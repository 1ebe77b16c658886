"""Statistical quadruped model: PCA shape space, joint regression and linear
blend skinning.

Vertex arrays are ``(n_V, 3)``. Shape bases are ``(3 n_V, n_B)`` acting on the
row-major flattening ``[x0, y0, z0, x1, ...]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .container import read_container, write_container
from .errors import FormatError, ValidationError
from .mesh import TriMesh, rotation_matrix


@dataclass
class ShapeSpace:
    template: TriMesh
    basis: np.ndarray
    component_std: np.ndarray

    def __post_init__(self):
        self.basis = np.asarray(self.basis, dtype=np.float64)
        self.component_std = np.asarray(self.component_std, dtype=np.float64)
        if self.basis.shape[0] != 3 * self.template.n_vertices:
            raise ValidationError("basis rows must equal 3 * n_vertices")
        if self.component_std.shape != (self.n_components,):
            raise ValidationError("one standard deviation per component required")

    @property
    def n_components(self):
        return self.basis.shape[1]

    @property
    def n_vertices(self):
        return self.template.n_vertices

    def project(self, vertices):
        """Coefficients of ``vertices`` in the (orthogonal) basis."""
        d = np.asarray(vertices, dtype=np.float64).reshape(-1) - self.template.vertices.reshape(-1)
        return (self.basis.T @ d) / np.einsum("ij,ij->j", self.basis, self.basis)


@dataclass
class Skeleton:
    joint_regressor: np.ndarray
    parents: np.ndarray
    skin_weights: np.ndarray
    names: list = field(default_factory=list)

    def __post_init__(self):
        self.joint_regressor = np.asarray(self.joint_regressor, dtype=np.float64)
        self.parents = np.asarray(self.parents, dtype=np.int64)
        self.skin_weights = np.asarray(self.skin_weights, dtype=np.float64)
        n_j = len(self.parents)
        if self.joint_regressor.shape[0] != n_j or self.skin_weights.shape[1] != n_j:
            raise ValidationError("regressor rows / weight columns must match joint count")
        if self.joint_regressor.shape[1] != self.skin_weights.shape[0]:
            raise ValidationError("regressor and weights disagree on vertex count")
        for name, m in (("joint regressor", self.joint_regressor), ("skinning weights", self.skin_weights)):
            if np.any(m < 0):
                raise ValidationError(f"{name} has negative entries")
            if np.max(np.abs(m.sum(axis=1) - 1.0)) > 1e-9:
                raise ValidationError(f"{name} rows must sum to 1")
        self.order = _topological_order(self.parents)

    @property
    def n_joints(self):
        return len(self.parents)


def _topological_order(parents):
    n = len(parents)
    if n == 0 or parents[0] != -1:
        raise ValidationError("joint 0 must be the root (parent -1)")
    children = [[] for _ in range(n)]
    for j in range(1, n):
        p = int(parents[j])
        if not 0 <= p < n or p == j:
            raise ValidationError(f"joint {j} has invalid parent {p}")
        children[p].append(j)
    order, stack = [], [0]
    while stack:
        j = stack.pop()
        order.append(j)
        stack.extend(reversed(children[j]))
    if len(order) != n:
        raise ValidationError("parent array is cyclic or disconnected")
    return order


@dataclass
class Pose:
    rotations: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotations = np.asarray(self.rotations, dtype=np.float64).reshape(-1, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        angles = np.linalg.norm(self.rotations, axis=1)
        if np.any(angles >= np.pi):
            raise ValidationError("axis-angle magnitudes must be below pi")

    @classmethod
    def identity(cls, n_joints):
        return cls(np.zeros((n_joints, 3)))


def axis_angle_matrix(aa):
    angle = float(np.linalg.norm(aa))
    if angle < 1e-15:
        return np.eye(3)
    return rotation_matrix(np.asarray(aa) / angle, angle)


# ----------------------------------------------------------------------------
# operations


def fit_pca(registrations, faces, n_components=None) -> ShapeSpace:
    """Learn a shape space from registered meshes sharing ``faces``.

    The mean becomes the template. Basis columns are principal directions
    scaled by the component standard deviation (population convention), so
    training shapes project to coefficients with zero mean and unit variance.
    At most ``len(registrations) - 1`` components are kept.
    """
    regs = [np.asarray(r, dtype=np.float64) for r in registrations]
    if len(regs) < 2:
        raise ValidationError("PCA needs at least two registrations")
    n_v = regs[0].shape[0]
    for i, r in enumerate(regs):
        if r.shape != (n_v, 3):
            raise ValidationError(f"registration {i} has shape {r.shape}, expected ({n_v}, 3)")
    data = np.stack([r.reshape(-1) for r in regs])
    n = len(regs)
    k = n - 1 if n_components is None else min(int(n_components), n - 1)
    if k < 1:
        raise ValidationError("need at least one component")
    mean = data.mean(axis=0)
    _, s, vt = np.linalg.svd(data - mean, full_matrices=False)
    directions = vt[:k].T
    # deterministic sign: largest-magnitude entry of every direction is positive
    flip = np.sign(directions[np.argmax(np.abs(directions), axis=0), np.arange(k)])
    directions = directions * flip
    std = s[:k] / np.sqrt(n)
    template = TriMesh(mean.reshape(n_v, 3), faces).validate()
    return ShapeSpace(template, directions * std, std)


def shape_mesh(space: ShapeSpace, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    if beta.size != space.n_components:
        raise ValidationError(f"beta has {beta.size} entries, shape space has {space.n_components}")
    return space.template.vertices + (space.basis @ beta).reshape(-1, 3)


def regress_joints(skeleton: Skeleton, vertices) -> np.ndarray:
    vertices = np.asarray(vertices, dtype=np.float64)
    if vertices.shape != (skeleton.joint_regressor.shape[1], 3):
        raise ValidationError(
            f"vertices have shape {vertices.shape}, regressor expects "
            f"({skeleton.joint_regressor.shape[1]}, 3)")
    return skeleton.joint_regressor @ vertices


def joint_transforms(skeleton: Skeleton, joints, pose: Pose):
    """World rotations and translations mapping rest-pose points to posed
    points for every joint (rotation about the rest joint centre, chained down
    the kinematic tree)."""
    n_j = skeleton.n_joints
    if pose.rotations.shape[0] != n_j:
        raise ValidationError(f"pose has {pose.rotations.shape[0]} joints, skeleton has {n_j}")
    rot = np.empty((n_j, 3, 3))
    trans = np.empty((n_j, 3))
    for j in skeleton.order:
        local = axis_angle_matrix(pose.rotations[j])
        p = skeleton.parents[j]
        if p < 0:
            rot[j] = local
            trans[j] = joints[j] - local @ joints[j]
        else:
            rot[j] = rot[p] @ local
            # rest joint position is carried by the parent, then rotated about itself
            centre = rot[p] @ joints[j] + trans[p]
            trans[j] = centre - rot[j] @ joints[j]
    return rot, trans


def pose_lbs(vertices, pose: Pose, skeleton: Skeleton) -> np.ndarray:
    """Linear blend skinning of shaped vertices; joint centres come from the
    joint regressor and the global translation is applied last."""
    vertices = np.asarray(vertices, dtype=np.float64)
    joints = regress_joints(skeleton, vertices)
    rot, trans = joint_transforms(skeleton, joints, pose)
    per_joint = np.einsum("jab,vb->vja", rot, vertices) + trans[None]
    posed = np.einsum("vj,vja->va", skeleton.skin_weights, per_joint)
    return posed + pose.translation


def animal_mesh(space: ShapeSpace, skeleton: Skeleton, beta, pose: Pose | None = None) -> TriMesh:
    v = shape_mesh(space, beta)
    if pose is not None:
        v = pose_lbs(v, pose, skeleton)
    return TriMesh(v, space.template.faces)


# ----------------------------------------------------------------------------
# shape-space files


def shape_space_arrays(space: ShapeSpace, skeleton: Skeleton, betas=None, prefix=""):
    arrays = [
        ("template", space.template.vertices),
        ("faces", space.template.faces),
        ("basis", space.basis),
        ("component_std", space.component_std),
        ("joint_regressor", skeleton.joint_regressor),
        ("parents", skeleton.parents),
        ("skin_weights", skeleton.skin_weights),
    ]
    if betas is not None:
        arrays.append(("betas", np.asarray(betas, dtype=np.float64)))
    return [(prefix + name, arr) for name, arr in arrays]


def shape_space_from_arrays(arrays, prefix=""):
    try:
        g = lambda name: arrays[prefix + name]  # noqa: E731
        template = TriMesh(g("template"), g("faces").astype(np.int64))
        space = ShapeSpace(template, g("basis"), g("component_std"))
        skeleton = Skeleton(g("joint_regressor"), g("parents").astype(np.int64), g("skin_weights"))
    except KeyError as exc:
        raise FormatError(f"shape-space data missing array {exc}") from None
    betas = arrays.get(prefix + "betas")
    return space, skeleton, betas


def save_shape_space(path, space: ShapeSpace, skeleton: Skeleton, labels=(), betas=None):
    labels = list(labels)
    if betas is not None and len(labels) != len(betas):
        raise ValidationError("one label per beta row required")
    meta = {"labels": labels, "joint_names": list(skeleton.names),
            "n_components": space.n_components}
    write_container(path, "shape_space", meta, shape_space_arrays(space, skeleton, betas))


def load_shape_space(path):
    """Returns ``(space, skeleton, labels, betas)``."""
    kind, meta, arrays = read_container(path)
    if kind != "shape_space":
        raise FormatError(f"{path}: expected a shape_space container, found {kind!r}")
    space, skeleton, betas = shape_space_from_arrays(arrays)
    skeleton.names = list(meta.get("joint_names", []))
    return space, skeleton, list(meta.get("labels", [])), betas
