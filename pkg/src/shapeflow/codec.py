"""Encoding between native parameter records and the flow's real vectors.

Numeric and integer fields are z-scored with training-set statistics;
categorical fields become one-hot blocks and are left unscaled. Fields that do
not vary over the training set are pruned from the encoded vector and restored
from their constant value on decode.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import json
import math

import numpy as np

from .errors import ValidationError

KINDS = ("numeric", "integer", "categorical")


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: str
    n_classes: int = 0
    lo: float = -math.inf
    hi: float = math.inf
    note: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"field {self.name}: unknown kind {self.kind!r}")
        if self.kind == "categorical" and self.n_classes < 2:
            raise ValidationError(f"field {self.name}: categorical needs >= 2 classes")
        if self.lo > self.hi:
            raise ValidationError(f"field {self.name}: empty range")

    @property
    def width(self):
        return self.n_classes if self.kind == "categorical" else 1

    def to_dict(self):
        d = {"name": self.name, "kind": self.kind}
        if self.kind == "categorical":
            d["n_classes"] = self.n_classes
        else:
            d["lo"] = None if math.isinf(self.lo) else self.lo
            d["hi"] = None if math.isinf(self.hi) else self.hi
        if self.note:
            d["note"] = self.note
        return d

    @classmethod
    def from_dict(cls, d):
        lo = d.get("lo")
        hi = d.get("hi")
        return cls(d["name"], d["kind"], d.get("n_classes", 0),
                   -math.inf if lo is None else lo,
                   math.inf if hi is None else hi, d.get("note", ""))


class ParamSchema:
    def __init__(self, fields):
        self.fields = tuple(fields)
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise ValidationError(f"duplicate field names: {dup}")
        self._index = {f.name: f for f in self.fields}

    def __len__(self):
        return len(self.fields)

    def __iter__(self):
        return iter(self.fields)

    def __getitem__(self, name):
        return self._index[name]

    def __contains__(self, name):
        return name in self._index

    def __eq__(self, other):
        return isinstance(other, ParamSchema) and self.fields == other.fields

    @property
    def names(self):
        return [f.name for f in self.fields]

    @property
    def encoded_dim(self):
        return sum(f.width for f in self.fields)

    def without(self, names):
        drop = set(names)
        return ParamSchema([f for f in self.fields if f.name not in drop])

    def validate(self, record):
        missing = [n for n in self.names if n not in record]
        if missing:
            raise ValidationError(f"record is missing fields: {missing}")
        for f in self.fields:
            v = record[f.name]
            if f.kind == "categorical":
                if isinstance(v, bool) or not isinstance(v, (int, np.integer)) \
                        or not 0 <= v < f.n_classes:
                    raise ValidationError(
                        f"field {f.name}: category {v!r} not in 0..{f.n_classes - 1}")
            else:
                if not np.isfinite(v):
                    raise ValidationError(f"field {f.name}: non-finite value {v!r}")
                if f.kind == "integer" and float(v) != int(v):
                    raise ValidationError(f"field {f.name}: {v!r} is not an integer")

    def to_json(self):
        return [f.to_dict() for f in self.fields]

    @classmethod
    def from_json(cls, data):
        return cls([FieldSpec.from_dict(d) for d in data])


@dataclass
class CodecStats:
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)

    @property
    def pruned(self):
        return sorted(self.constants)

    def to_json(self):
        return {"mean": self.mean, "std": self.std, "constants": self.constants}

    @classmethod
    def from_json(cls, data):
        return cls(dict(data["mean"]), dict(data["std"]), dict(data["constants"]))


def fit_stats(schema: ParamSchema, samples) -> CodecStats:
    """Sample mean and population standard deviation of every numeric and
    integer field. Zero-variance fields land in ``constants`` instead."""
    samples = list(samples)
    if len(samples) < 2:
        raise ValidationError("need at least two samples to fit statistics")
    for rec in samples:
        schema.validate(rec)
    stats = CodecStats()
    for f in schema:
        if f.kind == "categorical":
            continue
        values = np.array([float(rec[f.name]) for rec in samples])
        if np.all(values == values[0]):
            v = values[0]
            stats.constants[f.name] = int(v) if f.kind == "integer" else float(v)
            continue
        mean = math.fsum(values) / len(values)
        var = math.fsum((values - mean) ** 2) / len(values)
        stats.mean[f.name] = mean
        stats.std[f.name] = math.sqrt(var)
    return stats


def encode(schema: ParamSchema, stats: CodecStats, record) -> np.ndarray:
    """Encode the fields of ``schema`` present in ``record`` into a flat vector.
    Fields listed in ``stats.constants`` must not be part of ``schema``."""
    schema.validate(record)
    out = np.zeros(schema.encoded_dim)
    pos = 0
    for f in schema:
        v = record[f.name]
        if f.kind == "categorical":
            out[pos + int(v)] = 1.0
        else:
            if f.name not in stats.mean:
                raise ValidationError(f"no statistics for field {f.name}")
            out[pos] = (float(v) - stats.mean[f.name]) / stats.std[f.name]
        pos += f.width
    if not np.all(np.isfinite(out)):
        raise ValidationError("encoding produced non-finite values")
    return out


def _round_half_away(x):
    return math.copysign(math.floor(abs(x) + 0.5), x)


def decode(schema: ParamSchema, stats: CodecStats, v) -> dict:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (schema.encoded_dim,):
        raise ValidationError(
            f"encoded vector has shape {v.shape}, expected ({schema.encoded_dim},)")
    if not np.all(np.isfinite(v)):
        raise ValidationError("cannot decode non-finite values")
    record = {}
    pos = 0
    for f in schema:
        if f.kind == "categorical":
            record[f.name] = int(np.argmax(v[pos:pos + f.width]))
        else:
            x = v[pos] * stats.std[f.name] + stats.mean[f.name]
            x = min(max(x, f.lo), f.hi)
            if f.kind == "integer":
                record[f.name] = int(min(max(_round_half_away(x), f.lo), f.hi))
            else:
                record[f.name] = x
        pos += f.width
    record.update(stats.constants)
    return record


class Codec:
    """A fitted (schema, stats) pair. ``full_schema`` includes pruned fields."""

    def __init__(self, full_schema: ParamSchema, stats: CodecStats):
        self.full_schema = full_schema
        self.stats = stats
        self.schema = full_schema.without(stats.constants)

    @classmethod
    def fit(cls, schema, samples):
        return cls(schema, fit_stats(schema, samples))

    @property
    def dim(self):
        return self.schema.encoded_dim

    def encode(self, record):
        return encode(self.schema, self.stats, record)

    def decode(self, v):
        rec = decode(self.schema, self.stats, v)
        return {name: rec[name] for name in self.full_schema.names}

    def to_json(self):
        return {"schema": self.full_schema.to_json(), "stats": self.stats.to_json()}

    @classmethod
    def from_json(cls, data):
        return cls(ParamSchema.from_json(data["schema"]), CodecStats.from_json(data["stats"]))

    def manifest(self):
        """Human-readable description of the encoded layout."""
        lines = [f"# encoded dimension {self.dim}"]
        pos = 0
        for f in self.schema:
            if f.kind == "categorical":
                lines.append(f"{pos}:{pos + f.width}\t{f.name}\tcategorical({f.n_classes})")
            else:
                lines.append(f"{pos}\t{f.name}\t{f.kind}\tmean={self.stats.mean[f.name]!r}"
                             f"\tstd={self.stats.std[f.name]!r}")
            pos += f.width
        for name in self.stats.pruned:
            lines.append(f"-\t{name}\tconstant={self.stats.constants[name]!r}")
        return "\n".join(lines) + "\n"

    def manifest_json(self):
        return json.dumps(self.to_json(), indent=2, sort_keys=True)
