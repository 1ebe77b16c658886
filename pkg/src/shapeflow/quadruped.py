"""Procedural quadruped fixture standing in for registered animal scans.

Every synthetic species shares one topology (386 vertices, 33 joints) built
from swept tubes: a 10-ring torso, four 4-ring legs, a 4-ring neck and head,
two 2-ring ears and a 7-ring tail. Species differ through a handful of smooth
proportions derived deterministically from the label.
"""
from __future__ import annotations

import hashlib

import numpy as np

from .animal import Skeleton, fit_pca
from .errors import ValidationError
from .mesh import TriMesh, merge_meshes, mesh_stem

ANIMAL_LABELS = (
    "Cat", "Dog", "Horse", "Cow", "Sheep", "Goat", "Pig", "Llama", "Deer", "Fox",
    "Wolf", "Lion", "Tiger", "Bear", "Zebra", "Giraffe", "Hippo", "Rhino", "Rabbit", "Camel",
)

# name, (low, high)
PROPORTIONS = (
    ("body_length", (1.0, 2.4)),
    ("girth", (0.25, 0.6)),
    ("leg_length", (0.4, 1.4)),
    ("leg_thickness", (0.05, 0.16)),
    ("neck_length", (0.2, 1.4)),
    ("neck_angle", (0.3, 1.3)),
    ("head_size", (0.15, 0.4)),
    ("tail_length", (0.1, 1.2)),
    ("ear_size", (0.05, 0.3)),
)

# (part, n_rings, ring resolution)
PARTS = (("torso", 10, 16), ("leg_fl", 4, 8), ("leg_fr", 4, 8), ("leg_rl", 4, 8),
         ("leg_rr", 4, 8), ("head", 4, 10), ("ear_l", 2, 4), ("ear_r", 2, 4), ("tail", 7, 6))

LEG_JOINTS = ("upper", "knee", "ankle", "foot")
JOINT_NAMES = (
    ["spine0", "spine1", "spine2", "spine3"]
    + [f"{leg}_{j}" for leg in ("leg_fl", "leg_fr", "leg_rl", "leg_rr") for j in LEG_JOINTS]
    + ["neck0", "neck1", "head", "jaw", "ear_l", "ear_r"]
    + [f"tail{k}" for k in range(7)]
)
TORSO_RING_JOINT = (0, 0, 0, 1, 1, 2, 2, 3, 3, 3)


def _joint(name):
    return JOINT_NAMES.index(name)


def _parents():
    parents = {"spine0": -1, "spine1": "spine0", "spine2": "spine1", "spine3": "spine2",
               "neck0": "spine3", "neck1": "neck0", "head": "neck1", "jaw": "head",
               "ear_l": "head", "ear_r": "head", "tail0": "spine0"}
    for leg, hip in (("leg_fl", "spine3"), ("leg_fr", "spine3"), ("leg_rl", "spine0"), ("leg_rr", "spine0")):
        chain = [hip] + [f"{leg}_{j}" for j in LEG_JOINTS]
        for a, b in zip(chain, chain[1:]):
            parents[b] = a
    for k in range(1, 7):
        parents[f"tail{k}"] = f"tail{k - 1}"
    return np.array([-1 if parents[n] == -1 else _joint(parents[n]) for n in JOINT_NAMES])


PARENTS = _parents()


def _ring_joints():
    """Joint index owning every ring, part by part."""
    out = []
    for part, n_rings, _ in PARTS:
        if part == "torso":
            out.append(list(TORSO_RING_JOINT))
        elif part.startswith("leg"):
            out.append([_joint(f"{part}_{j}") for j in LEG_JOINTS])
        elif part == "head":
            out.append([_joint(n) for n in ("neck0", "neck1", "head", "jaw")])
        elif part.startswith("ear"):
            out.append([_joint(part)] * n_rings)
        else:
            out.append([_joint(f"tail{k}") for k in range(n_rings)])
    return out


def species_proportions(label: str) -> dict:
    """Deterministic proportions for ``label`` (hash-seeded, platform stable)."""
    key = int.from_bytes(hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest(), "little")
    u = np.random.Generator(np.random.Philox(key=key)).uniform(size=len(PROPORTIONS))
    return {name: lo + (hi - lo) * float(x) for (name, (lo, hi)), x in zip(PROPORTIONS, u)}


def _spines(p):
    length, girth = p["body_length"], p["girth"]
    height = p["leg_length"] + girth
    s = np.linspace(-0.9, 0.9, 10)
    torso = np.stack([0.5 * length * s, np.full(10, height), np.zeros(10)], axis=1)
    torso_r = girth * np.sqrt(np.maximum(1.0 - s ** 2, 0.0)) + 0.15 * girth
    spines = {"torso": (torso, torso_r)}
    t = np.linspace(0.0, 1.0, 4)
    for part, x, z in (("leg_fl", 0.35, 0.5), ("leg_fr", 0.35, -0.5),
                       ("leg_rl", -0.35, 0.5), ("leg_rr", -0.35, -0.5)):
        top = height - 0.5 * girth
        pts = np.stack([np.full(4, x * length), top * (1.0 - t), np.full(4, z * girth)], axis=1)
        spines[part] = (pts, p["leg_thickness"] * np.array([1.0, 0.8, 0.7, 0.6]))
    base = np.array([0.45 * length, height + 0.3 * girth, 0.0])
    direction = np.array([np.cos(p["neck_angle"]), np.sin(p["neck_angle"]), 0.0])
    neck1 = base + 0.5 * p["neck_length"] * direction
    head = base + p["neck_length"] * direction
    snout = head + np.array([1.5 * p["head_size"], -0.3 * p["head_size"], 0.0])
    spines["head"] = (np.stack([base, neck1, head, snout]),
                      np.array([0.5 * girth, 0.35 * girth, p["head_size"], 0.5 * p["head_size"]]))
    for part, z in (("ear_l", 0.6), ("ear_r", -0.6)):
        root = head + np.array([0.0, 0.8 * p["head_size"], z * p["head_size"]])
        spines[part] = (np.stack([root, root + np.array([0.0, p["ear_size"], 0.2 * z * p["ear_size"]])]),
                        p["ear_size"] * np.array([0.35, 0.1]))
    k = np.arange(7) / 6.0
    tail_base = torso[0] + np.array([-0.05 * length, 0.2 * girth, 0.0])
    tail = tail_base + p["tail_length"] * np.stack([-k, -0.6 * k ** 2, np.zeros(7)], axis=1)
    spines["tail"] = (tail, 0.12 * girth * (1.0 - 0.7 * k))
    return spines


def quadruped_mesh(proportions) -> TriMesh:
    spines = _spines(proportions)
    parts = []
    for part, n_rings, res in PARTS:
        pts, radii = spines[part]
        normal = (0.0, 0.0, 1.0) if part.startswith(("torso", "head", "tail")) else (1.0, 0.0, 0.0)
        parts.append(mesh_stem(pts, radii, res, normal=normal))
    m = merge_meshes(parts)
    return TriMesh(m.vertices, m.faces)


def quadruped_skeleton() -> Skeleton:
    n_j = len(JOINT_NAMES)
    ring_owner = []
    for (part, n_rings, res), owners in zip(PARTS, _ring_joints()):
        for r in range(n_rings):
            ring_owner.extend([owners[r]] * res)
    ring_owner = np.array(ring_owner)
    n_v = len(ring_owner)
    regressor = np.zeros((n_j, n_v))
    for j in range(n_j):
        members = ring_owner == j
        regressor[j, members] = 1.0 / members.sum()
    weights = np.zeros((n_v, n_j))
    for v, j in enumerate(ring_owner):
        parent = PARENTS[j]
        if parent < 0:
            weights[v, j] = 1.0
        else:
            weights[v, j] = 0.75
            weights[v, parent] = 0.25
    return Skeleton(regressor, PARENTS.copy(), weights, list(JOINT_NAMES))


def make_registrations(labels):
    labels = list(labels)
    if len(set(labels)) != len(labels):
        raise ValidationError("species labels must be unique")
    meshes = [quadruped_mesh(species_proportions(lab)) for lab in labels]
    return [m.vertices for m in meshes], meshes[0].faces


def build_animal_fixture(labels=ANIMAL_LABELS[:12], n_components=None):
    """Fit a shape space to synthetic species. Returns
    ``(space, skeleton, labels, betas)`` with one beta row per label."""
    regs, faces = make_registrations(labels)
    space = fit_pca(regs, faces, n_components)
    betas = np.stack([space.project(r) for r in regs])
    return space, quadruped_skeleton(), list(labels), betas
