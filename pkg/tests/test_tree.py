import math

import numpy as np
import pytest

from shapeflow.errors import FormatError, ValidationError
from shapeflow.mesh import is_closed_manifold, obj_text
from shapeflow.tree import (SHAPES, TREE_SCHEMA, count_stems, generate_tree, grow, list_presets,
                            load_preset, parse_preset, preset_text, read_preset_file, same_structure,
                            save_preset, shape_ratio, validate_params, without_variation)


def simple(levels=1, **kw):
    p = without_variation(load_preset("sphere_tree"))
    p.update(levels=levels, leaf_count=0, seg_splits_0=0.0, seg_splits_1=0.0, seg_splits_2=0.0)
    p.update(kw)
    return p


# values transcribed from the Weber-Penn shape-ratio table
@pytest.mark.parametrize("shape,ratio,expect", [
    ("cylindrical", 0.0, 1.0), ("cylindrical", 0.37, 1.0), ("conical", 1.0, 1.0),
    ("conical", 0.0, 0.2), ("spherical", 0.0, 0.2), ("spherical", 0.5, 1.0),
    ("hemispherical", 1.0, 1.0), ("tapered-cylindrical", 0.0, 0.5), ("flame", 0.7, 1.0),
    ("flame", 1.0, 0.0), ("inverse-conical", 1.0, 0.2), ("tend-flame", 0.7, 1.0),
    ("tend-flame", 0.0, 0.5), ("custom-envelope", 0.5, 1.0), ("custom-envelope", 0.0, 0.0),
])
def test_shape_ratio_table(shape, ratio, expect):
    assert shape_ratio(shape, ratio) == pytest.approx(expect, abs=1e-15)


def test_shape_ratio_errors_and_index_form():
    with pytest.raises(ValidationError):
        shape_ratio("conical", 1.2)
    with pytest.raises(ValidationError):
        shape_ratio("weird", 0.5)
    assert shape_ratio(SHAPES.index("conical"), 0.5) == shape_ratio("conical", 0.5)


def test_schema_layout():
    assert len(TREE_SCHEMA) == 72
    assert TREE_SCHEMA["shape"].n_classes == 9
    assert TREE_SCHEMA["leaf_shape"].n_classes == 10


def test_single_trunk():
    p = simple(levels=1, curve_res_0=5)
    root = grow(p, 0)
    assert len(root.points) == 6 and not root.children and not root.clones
    m = generate_tree(p, 0, radial_resolution=8)
    assert m.n_vertices == 6 * 8
    assert m.n_faces == 5 * 2 * 8 + 2 * (8 - 2)


def test_exact_level1_count():
    p = simple(levels=2, branches_1=10)
    root = grow(p, 3)
    assert len(root.children) == 10
    assert all(c.level == 1 for c in root.children)


def test_level1_count_holds_with_splits_and_variation():
    p = load_preset("english_oak")
    root = grow(p, 5)
    assert len(root.children) == p["branches_1"]
    assert any(s.clones for s in root.walk())


def test_taper_makes_radii_non_increasing():
    for s in grow(load_preset("maple"), 1).walk():
        assert np.all(np.diff(s.radii) <= 1e-15)


def test_child_level_is_parent_plus_one():
    def check(node):
        for c in node.children:
            assert c.level == node.level + 1
            check(c)
        for c in node.clones:
            assert c.level == node.level
            check(c)
    check(grow(load_preset("black_oak"), 2))


def test_zero_variation_is_seed_independent():
    p = without_variation(load_preset("weeping_willow"))
    assert same_structure(grow(p, 0), grow(p, 12345))


def test_variation_depends_on_seed():
    p = load_preset("weeping_willow")
    assert not same_structure(grow(p, 0), grow(p, 1))


def test_quaking_aspen_deterministic_bytes():
    p = load_preset("quaking_aspen")
    assert p["levels"] == 3 and SHAPES[p["shape"]] == "tend-flame"
    assert obj_text(generate_tree(p, 0)) == obj_text(generate_tree(p, 0))


def test_leaf_count_zero_has_no_leaves():
    p = load_preset("maple")
    p["leaf_count"] = 0
    m = generate_tree(p, 0)
    assert len(m.faces_tagged("leaf")) == 0
    assert is_closed_manifold(m.faces_tagged("branch"))


def test_leaves_are_two_triangle_quads():
    p = simple(levels=2, branches_1=4, leaf_count=3)
    root = grow(p, 0)
    m = generate_tree(p, 0)
    assert len(m.faces_tagged("leaf")) == 2 * 4 * 3
    assert sum(len(s.leaves) for s in root.walk()) == 12


def test_leaf_bend_folds_halves():
    flat = simple(levels=2, branches_1=1, leaf_count=1, leaf_bend=0.0)
    bent = dict(flat, leaf_bend=1.0)
    a = generate_tree(flat, 0).vertices[-4:]
    b = generate_tree(bent, 0).vertices[-4:]
    # flat kite: all four corners coplanar; folded: wing tips leave the plane
    normal = np.cross(a[1] - a[0], a[2] - a[0])
    assert abs(np.dot(a[3] - a[0], normal)) < 1e-12
    assert not np.allclose(a, b)


def test_radial_resolution_check():
    with pytest.raises(ValidationError):
        generate_tree(simple(), 0, radial_resolution=2)


def test_presets_shipped():
    names = list_presets()
    assert len(names) == 21
    assert "quaking_aspen" in names and "poplar" in names
    _, label = load_preset("Quaking Aspen", with_name=True)
    assert label == "Quaking Aspen"


def test_unknown_preset_lists_available():
    with pytest.raises(ValidationError, match="available: apple"):
        load_preset("baobab")


def test_preset_roundtrip(tmp_path):
    for key in list_presets():
        rec, name = load_preset(key, with_name=True)
        save_preset(rec, tmp_path / f"{key}.tree", name)
        back, back_name = read_preset_file(tmp_path / f"{key}.tree")
        assert back == rec and back_name == name


def test_malformed_presets():
    good = preset_text(load_preset("apple"))
    with pytest.raises(FormatError, match="missing"):
        parse_preset(good.replace("levels = 3\n", ""))
    with pytest.raises(FormatError, match="unknown field"):
        parse_preset(good + "colour = red\n")
    with pytest.raises(FormatError, match="bad value"):
        parse_preset(good.replace("levels = 3", "levels = three"))
    with pytest.raises(FormatError, match="duplicate"):
        parse_preset(good + "levels = 2\n")
    with pytest.raises(FormatError):
        parse_preset(good.replace("levels = 3", "levels = 9"))
    with pytest.raises(FormatError, match="key = value"):
        parse_preset("just words\n")


def test_validate_params_ranges():
    p = load_preset("apple")
    with pytest.raises(ValidationError):
        validate_params(dict(p, taper_1=1.5))
    with pytest.raises(ValidationError):
        validate_params(dict(p, curve_res_0=0))


def test_without_variation_zeroes_only_v_fields():
    p = load_preset("apple")
    q = without_variation(p)
    changed = {k for k in p if p[k] != q[k]}
    assert changed and all(k.endswith("_v") or "_v_" in k for k in changed)
    assert q["g_scale_v"] == 0.0 and q["curve_v_1"] == 0.0 and q["curve_1"] == p["curve_1"]


def test_count_stems():
    root = grow(simple(levels=3, branches_1=3, branches_2=2), 0)
    assert count_stems(root, 1) == 3
    assert count_stems(root) == 1 + 3 + count_stems(root, 2)
    assert math.isfinite(root.length) and root.length > 0
