"""Tree parameter schema, crown shape envelopes and preset files.

Preset files are UTF-8 ``key = value`` lines. ``#`` starts a comment line.
The optional ``name`` key holds the display label (used for prompts); every
other key must be a schema field and every schema field must be present.
Categorical fields are written by name (``shape = tend-flame``).
"""
from __future__ import annotations

import math
from importlib import resources
from pathlib import Path

from ..codec import FieldSpec, ParamSchema
from ..errors import FormatError, ValidationError

MAX_LEVELS = 4

SHAPES = ("conical", "spherical", "hemispherical", "cylindrical", "tapered-cylindrical",
          "flame", "inverse-conical", "tend-flame", "custom-envelope")
LEAF_SHAPES = ("ovate", "linear", "cordate", "maple", "palmate", "spiky-oak",
               "rounded-oak", "elliptic", "rectangle", "triangle")
CATEGORIES = {"shape": SHAPES, "leaf_shape": LEAF_SHAPES}

# custom-envelope profile: peak position (from the top) and the exponents of
# the rising and falling parts
ENVELOPE_PEAK = 0.5
ENVELOPE_POWER_HIGH = 0.5
ENVELOPE_POWER_LOW = 0.5

LEVEL_FIELDS = (
    ("length", "numeric", 0.0, 10.0),
    ("length_v", "numeric", 0.0, 10.0),
    ("branches", "integer", 0, 200),
    ("curve_res", "integer", 1, 50),
    ("curve", "numeric", -360.0, 360.0),
    ("curve_back", "numeric", -360.0, 360.0),
    ("curve_v", "numeric", 0.0, 360.0),
    ("seg_splits", "numeric", 0.0, 4.0),
    ("split_angle", "numeric", 0.0, 180.0),
    ("split_angle_v", "numeric", 0.0, 180.0),
    ("down_angle", "numeric", -180.0, 180.0),
    ("down_angle_v", "numeric", 0.0, 180.0),
    ("rotate", "numeric", -360.0, 360.0),
    ("rotate_v", "numeric", 0.0, 360.0),
    ("taper", "numeric", 0.0, 1.0),
)


def _build_schema():
    f = [
        FieldSpec("shape", "categorical", n_classes=len(SHAPES)),
        FieldSpec("levels", "integer", lo=1, hi=MAX_LEVELS),
        FieldSpec("g_scale", "numeric", lo=1e-3, hi=1e3, note="model units"),
        FieldSpec("g_scale_v", "numeric", lo=0.0, hi=1e3),
        FieldSpec("ratio", "numeric", lo=1e-4, hi=1.0),
        FieldSpec("ratio_power", "numeric", lo=0.0, hi=5.0),
        FieldSpec("base_size", "numeric", lo=0.0, hi=0.99),
    ]
    for level in range(MAX_LEVELS):
        for name, kind, lo, hi in LEVEL_FIELDS:
            note = "degrees" if "angle" in name or name.startswith(("curve", "rotate")) \
                and name != "curve_res" else ""
            f.append(FieldSpec(f"{name}_{level}", kind, lo=lo, hi=hi, note=note))
    f += [
        FieldSpec("leaf_count", "integer", lo=0, hi=500),
        FieldSpec("leaf_shape", "categorical", n_classes=len(LEAF_SHAPES)),
        FieldSpec("leaf_scale", "numeric", lo=1e-3, hi=10.0),
        FieldSpec("leaf_scale_x", "numeric", lo=1e-3, hi=10.0),
        FieldSpec("leaf_bend", "numeric", lo=0.0, hi=1.0),
    ]
    return ParamSchema(f)


TREE_SCHEMA = _build_schema()
VARIATION_FIELDS = tuple(n for n in TREE_SCHEMA.names if n.endswith("_v")
                         or "_v_" in n)


def validate_params(params):
    """Schema validation plus range checks; returns ``params``."""
    TREE_SCHEMA.validate(params)
    for f in TREE_SCHEMA:
        v = params[f.name]
        if f.kind != "categorical" and not f.lo <= v <= f.hi:
            raise ValidationError(f"tree field {f.name}={v!r} outside [{f.lo}, {f.hi}]")
    return params


def without_variation(params):
    """Copy of ``params`` with every ``*_v`` field set to zero."""
    out = dict(params)
    for name in VARIATION_FIELDS:
        out[name] = 0.0
    return out


def shape_ratio(shape, ratio: float) -> float:
    """Relative branch length for a crown envelope at height ``ratio``."""
    if isinstance(shape, str):
        if shape not in SHAPES:
            raise ValidationError(f"unknown crown shape {shape!r}")
        shape = SHAPES.index(shape)
    if not 0.0 <= ratio <= 1.0:
        raise ValidationError(f"shape ratio argument {ratio} outside [0, 1]")
    name = SHAPES[shape]
    if name == "conical":
        return 0.2 + 0.8 * ratio
    if name == "spherical":
        return 0.2 + 0.8 * math.sin(math.pi * ratio)
    if name == "hemispherical":
        return 0.2 + 0.8 * math.sin(0.5 * math.pi * ratio)
    if name == "cylindrical":
        return 1.0
    if name == "tapered-cylindrical":
        return 0.5 + 0.5 * ratio
    if name == "flame":
        return ratio / 0.7 if ratio <= 0.7 else (1.0 - ratio) / 0.3
    if name == "inverse-conical":
        return 1.0 - 0.8 * ratio
    if name == "tend-flame":
        return 0.5 + 0.5 * ratio / 0.7 if ratio <= 0.7 else 0.5 + 0.5 * (1.0 - ratio) / 0.3
    # custom-envelope
    edge = 1.0 - ENVELOPE_PEAK
    if ratio < edge:
        return (ratio / edge) ** ENVELOPE_POWER_HIGH
    return ((1.0 - ratio) / ENVELOPE_PEAK) ** ENVELOPE_POWER_LOW


# ----------------------------------------------------------------------------
# preset files


def _preset_dir():
    return resources.files("shapeflow.tree") / "presets"


def list_presets():
    return sorted(p.name[:-len(".tree")] for p in _preset_dir().iterdir()
                  if p.name.endswith(".tree"))


def preset_text(record, name=None) -> str:
    validate_params(record)
    lines = ["# shapeflow tree preset"]
    if name:
        lines.append(f"name = {name}")
    for f in TREE_SCHEMA:
        v = record[f.name]
        if f.kind == "categorical":
            text = CATEGORIES[f.name][int(v)]
        elif f.kind == "integer":
            text = str(int(v))
        else:
            text = repr(float(v))
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def parse_preset(text, source="<text>"):
    """Returns ``(record, name)``."""
    record, name = {}, None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "name":
            name = value
            continue
        if key not in TREE_SCHEMA:
            raise FormatError(f"{source}:{lineno}: unknown field {key!r}")
        if key in record:
            raise FormatError(f"{source}:{lineno}: duplicate field {key!r}")
        f = TREE_SCHEMA[key]
        try:
            if f.kind == "categorical":
                options = CATEGORIES[key]
                record[key] = options.index(value) if value in options else int(value)
            elif f.kind == "integer":
                record[key] = int(value)
            else:
                record[key] = float(value)
        except ValueError:
            raise FormatError(f"{source}:{lineno}: bad value {value!r} for {key}") from None
    missing = [n for n in TREE_SCHEMA.names if n not in record]
    if missing:
        raise FormatError(f"{source}: missing fields {missing}")
    try:
        validate_params(record)
    except ValidationError as exc:
        raise FormatError(f"{source}: {exc}") from None
    return record, name


def read_preset_file(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read preset {path}: {exc}") from None
    return parse_preset(text, str(path))


def load_preset(name, with_name=False):
    """Load a shipped preset by file stem (``quaking_aspen``) or display name."""
    key = name.strip().lower().replace(" ", "_").replace("-", "_")
    available = list_presets()
    if key not in available:
        raise ValidationError(f"unknown preset {name!r}; available: {', '.join(available)}")
    path = _preset_dir() / f"{key}.tree"
    record, label = parse_preset(path.read_text(encoding="utf-8"), f"{key}.tree")
    return (record, label or key) if with_name else record


def save_preset(record, path, name=None):
    try:
        Path(path).write_text(preset_text(record, name), encoding="utf-8", newline="\n")
    except OSError as exc:
        raise FormatError(f"cannot write preset {path}: {exc}") from None
