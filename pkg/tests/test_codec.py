import math

import numpy as np
import pytest

from shapeflow.codec import Codec, CodecStats, FieldSpec, ParamSchema, decode, encode, fit_stats
from shapeflow.errors import ValidationError


@pytest.fixture
def schema():
    return ParamSchema([
        FieldSpec("height", "numeric", lo=0.0, hi=100.0),
        FieldSpec("count", "integer", lo=0, hi=10),
        FieldSpec("kind", "categorical", n_classes=3),
        FieldSpec("fixed", "numeric"),
    ])


@pytest.fixture
def samples():
    return [
        {"height": 2.0, "count": 1, "kind": 0, "fixed": 5.0},
        {"height": 4.0, "count": 3, "kind": 2, "fixed": 5.0},
        {"height": 6.0, "count": 5, "kind": 1, "fixed": 5.0},
    ]


def test_fit_uses_population_std(schema, samples):
    stats = fit_stats(schema, samples)
    assert stats.mean["height"] == 4.0
    assert stats.std["height"] == pytest.approx(math.sqrt(8.0 / 3.0), abs=1e-15)
    assert stats.constants == {"fixed": 5.0}


def test_encode_layout(schema, samples):
    codec = Codec.fit(schema, samples)
    assert codec.dim == 1 + 1 + 3
    v = codec.encode(samples[1])
    assert v[0] == 0.0 and v[1] == 0.0
    assert v[2:].tolist() == [0.0, 0.0, 1.0]


def test_roundtrip_restores_constants(schema, samples):
    codec = Codec.fit(schema, samples)
    for s in samples:
        assert codec.decode(codec.encode(s)) == s


def test_integer_rounds_half_away_from_zero():
    schema = ParamSchema([FieldSpec("n", "integer", lo=-10, hi=10)])
    stats = CodecStats({"n": 0.0}, {"n": 1.0}, {})
    assert decode(schema, stats, np.array([2.5]))["n"] == 3
    assert decode(schema, stats, np.array([-2.5]))["n"] == -3
    assert decode(schema, stats, np.array([2.49]))["n"] == 2


def test_decode_clamps_to_declared_range(schema, samples):
    codec = Codec.fit(schema, samples)
    rec = codec.decode(np.array([1e6, -1e6, 0.2, 0.1, 0.0]))
    assert rec["height"] == 100.0 and rec["count"] == 0


def test_categorical_argmax_lowest_index_tie(schema, samples):
    codec = Codec.fit(schema, samples)
    assert codec.decode(np.array([0.0, 0.0, 0.4, 0.4, 0.1]))["kind"] == 0
    assert codec.decode(np.array([0.0, 0.0, 0.1, 0.4, 0.4]))["kind"] == 1


def test_validation_errors(schema, samples):
    with pytest.raises(ValidationError):
        fit_stats(schema, samples[:1])
    with pytest.raises(ValidationError, match="missing"):
        schema.validate({"height": 1.0})
    with pytest.raises(ValidationError, match="category"):
        schema.validate({**samples[0], "kind": 3})
    with pytest.raises(ValidationError, match="not an integer"):
        schema.validate({**samples[0], "count": 1.5})
    with pytest.raises(ValidationError):
        ParamSchema([FieldSpec("a", "numeric"), FieldSpec("a", "numeric")])
    with pytest.raises(ValidationError):
        FieldSpec("c", "categorical", n_classes=1)
    codec = Codec.fit(schema, samples)
    with pytest.raises(ValidationError):
        codec.decode(np.zeros(4))
    with pytest.raises(ValidationError):
        codec.decode(np.array([np.nan, 0, 0, 0, 0]))


def test_json_roundtrip(schema, samples):
    codec = Codec.fit(schema, samples)
    back = Codec.from_json(codec.to_json())
    assert back.full_schema == codec.full_schema
    assert back.stats == codec.stats
    text = codec.manifest()
    assert "constant=5.0" in text and "categorical(3)" in text


def test_encode_needs_stats(schema):
    with pytest.raises(ValidationError, match="no statistics"):
        encode(schema.without(["fixed"]), CodecStats(), {"height": 1.0, "count": 1, "kind": 0})
