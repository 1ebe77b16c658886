"""Procedural tree generation."""
from .grow import StemNode, count_stems, generate_tree, grow, leaf_mesh, same_structure
from .params import (LEAF_SHAPES, SHAPES, TREE_SCHEMA, list_presets, load_preset,
                     parse_preset, preset_text, read_preset_file, save_preset,
                     shape_ratio, validate_params, without_variation)

__all__ = [
    "StemNode", "count_stems", "generate_tree", "grow", "leaf_mesh", "same_structure",
    "LEAF_SHAPES", "SHAPES", "TREE_SCHEMA", "list_presets", "load_preset", "parse_preset",
    "preset_text", "read_preset_file", "save_preset", "shape_ratio", "validate_params",
    "without_variation",
]
