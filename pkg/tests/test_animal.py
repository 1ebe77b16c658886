import numpy as np
import pytest

from shapeflow.animal import (Pose, ShapeSpace, Skeleton, animal_mesh, axis_angle_matrix, fit_pca,
                              load_shape_space, pose_lbs, regress_joints, save_shape_space,
                              shape_mesh)
from shapeflow.errors import ValidationError
from shapeflow.mesh import TriMesh
from shapeflow.quadruped import (JOINT_NAMES, build_animal_fixture, make_registrations,
                                 quadruped_skeleton, species_proportions)

FACE = np.array([[0, 1, 2]])


def strip_skeleton():
    """Two-bone strip: joint 0 at v0 (origin), joint 1 at v2 = (1, 0, 0)."""
    verts = np.array([[0.0, 0, 0], [0.5, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
    regressor = np.array([[1.0, 0, 0, 0], [0, 0, 1.0, 0]])
    weights = np.array([[1.0, 0], [0.5, 0.5], [0, 1.0], [0, 1.0]])
    return verts, Skeleton(regressor, [-1, 0], weights)


def test_two_registrations_give_unit_betas():
    a = np.random.default_rng(0).standard_normal((3, 3))
    b = a + 0.5
    space = fit_pca([a, b], FACE)
    assert space.n_components == 1
    betas = sorted(space.project(r)[0] for r in (a, b))
    assert betas == pytest.approx([-1.0, 1.0], abs=1e-12)
    assert np.allclose(space.template.vertices, (a + b) / 2)


def test_component_count_capped():
    regs = [np.random.default_rng(i).standard_normal((3, 3)) for i in range(4)]
    assert fit_pca(regs, FACE, 10).n_components == 3
    assert fit_pca(regs, FACE, 2).n_components == 2


def test_pca_matches_covariance_eigendecomposition():
    regs, faces = make_registrations(["Cat", "Dog", "Horse", "Cow", "Sheep", "Goat"])
    space = fit_pca(regs, faces)
    data = np.stack([r.reshape(-1) for r in regs])
    centred = data - data.mean(axis=0)
    cov = centred.T @ centred / len(regs)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:space.n_components]
    ref = evecs[:, order] * np.sqrt(evals[order])
    scale = np.abs(ref).max()
    for k in range(space.n_components):
        col = space.basis[:, k]
        sign = np.sign(col @ ref[:, k])
        assert np.max(np.abs(col - sign * ref[:, k])) / scale < 1e-8
    gram = space.basis.T @ space.basis
    assert np.max(np.abs(gram - np.diag(np.diag(gram)))) < 1e-8 * np.max(np.diag(gram))


def test_pca_errors():
    with pytest.raises(ValidationError):
        fit_pca([np.zeros((3, 3))], FACE)
    with pytest.raises(ValidationError, match="registration 1"):
        fit_pca([np.zeros((3, 3)), np.zeros((4, 3))], FACE)


def test_shape_mesh_linearity():
    space, _, _, _ = build_animal_fixture(["Cat", "Dog", "Horse", "Cow"])
    assert np.array_equal(shape_mesh(space, np.zeros(3)), space.template.vertices)
    e1 = np.array([0.0, 1.0, 0.0])
    expect = space.template.vertices + space.basis[:, 1].reshape(-1, 3)
    assert np.allclose(shape_mesh(space, e1), expect, atol=1e-15)
    with pytest.raises(ValidationError):
        shape_mesh(space, np.zeros(4))


def test_training_betas_reproduce_registrations():
    labels = ["Cat", "Dog", "Horse", "Cow", "Sheep"]
    space, _, _, betas = build_animal_fixture(labels)
    regs, _ = make_registrations(labels)
    diag = np.linalg.norm(np.ptp(np.concatenate(regs), axis=0))
    for b, r in zip(betas, regs):
        assert np.max(np.abs(shape_mesh(space, b) - r)) < 1e-6 * diag


def test_regress_joints_simple_rows():
    v = np.random.default_rng(0).standard_normal((4, 3))
    sk = Skeleton(np.array([[0.25] * 4, [0, 1.0, 0, 0]]), [-1, 0], np.tile([1.0, 0.0], (4, 1)))
    j = regress_joints(sk, v)
    assert np.allclose(j[0], v.mean(axis=0), atol=1e-15)
    assert np.array_equal(j[1], v[1])
    t = np.array([1.0, -2.0, 3.0])
    assert np.allclose(regress_joints(sk, v + t), j + t, atol=1e-14)
    with pytest.raises(ValidationError):
        regress_joints(sk, np.zeros((5, 3)))


def test_skeleton_validation():
    w = np.tile([1.0, 0.0], (2, 1))
    with pytest.raises(ValidationError, match="cyclic"):
        Skeleton(np.full((3, 2), 0.5), [-1, 2, 1], np.tile([1.0, 0, 0], (2, 1)))
    with pytest.raises(ValidationError, match="root"):
        Skeleton(np.full((2, 2), 0.5), [0, 0], w)
    with pytest.raises(ValidationError, match="sum to 1"):
        Skeleton(np.full((2, 2), 0.4), [-1, 0], w)
    with pytest.raises(ValidationError, match="negative"):
        Skeleton(np.array([[1.5, -0.5], [0.5, 0.5]]), [-1, 0], w)


def test_pose_rejects_large_angles():
    with pytest.raises(ValidationError):
        Pose(np.array([[np.pi, 0, 0]]))
    Pose(np.array([[np.pi - 1e-9, 0, 0]]))


def test_axis_angle_matrix_is_rotation():
    r = axis_angle_matrix([0.3, -0.2, 0.9])
    assert np.allclose(r @ r.T, np.eye(3), atol=1e-15)
    assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-14)
    assert np.array_equal(axis_angle_matrix([0, 0, 0]), np.eye(3))


def test_two_bone_elbow_hand_worked():
    verts, sk = strip_skeleton()
    pose = Pose(np.array([[0, 0, 0], [0, 0, np.pi / 2]]))
    out = pose_lbs(verts, pose, sk)
    expect = np.array([[0.0, 0, 0], [0.75, -0.25, 0], [1.0, 0, 0], [1.0, 1.0, 0]])
    assert np.max(np.abs(out - expect)) < 1e-9


def test_two_bone_chain_with_root_rotation_and_translation():
    verts, sk = strip_skeleton()
    pose = Pose(np.array([[0, 0, np.pi / 2], [0, 0, np.pi / 2]]), translation=[0, 0, 1.0])
    out = pose_lbs(verts, pose, sk)
    # root turns everything by 90 deg about the origin; the elbow adds another 90
    expect = np.array([[0.0, 0, 1], [0.25, 0.75, 1], [0.0, 1.0, 1], [-1.0, 1.0, 1]])
    assert np.max(np.abs(out - expect)) < 1e-9


def test_fixture_topology():
    space, sk, labels, betas = build_animal_fixture()
    assert sk.n_joints == 33 == len(JOINT_NAMES)
    assert space.n_vertices == 386
    assert betas.shape == (len(labels), len(labels) - 1)
    TriMesh(space.template.vertices, space.template.faces).validate()


def test_species_proportions_stable():
    assert species_proportions("Cat") == species_proportions("Cat")
    assert species_proportions("Cat") != species_proportions("Dog")


def test_animal_mesh_posed_identity_is_template():
    space, sk, _, _ = build_animal_fixture(["Cat", "Dog", "Horse"])
    m = animal_mesh(space, sk, np.zeros(2), Pose.identity(sk.n_joints))
    assert np.max(np.abs(m.vertices - space.template.vertices)) < 1e-12


def test_shape_space_file_roundtrip(tmp_path):
    space, sk, labels, betas = build_animal_fixture(["Cat", "Dog", "Horse"])
    path = tmp_path / "space.bin"
    save_shape_space(path, space, sk, labels, betas)
    space2, sk2, labels2, betas2 = load_shape_space(path)
    assert labels2 == labels and sk2.names == list(JOINT_NAMES)
    assert np.array_equal(space2.basis, space.basis)
    assert np.array_equal(space2.template.faces, space.template.faces)
    assert np.array_equal(betas2, betas)
    assert np.max(np.abs(sk2.skin_weights.sum(axis=1) - 1)) < 1e-9
    assert np.max(np.abs(sk2.joint_regressor.sum(axis=1) - 1)) < 1e-9
    assert np.array_equal(sk2.parents, quadruped_skeleton().parents)
    with pytest.raises(ValidationError):
        save_shape_space(path, space, sk, labels[:2], betas)


def test_shape_space_validation():
    tpl = TriMesh(np.zeros((3, 3)), FACE)
    with pytest.raises(ValidationError):
        ShapeSpace(tpl, np.zeros((8, 1)), np.ones(1))
    with pytest.raises(ValidationError):
        ShapeSpace(tpl, np.zeros((9, 2)), np.ones(1))
