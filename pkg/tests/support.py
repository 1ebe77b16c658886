"""Shared builders for the test suite."""
import numpy as np

from shapeflow.checkpoint import animal_schema, betas_to_record
from shapeflow.codec import Codec
from shapeflow.embedding import EmbeddingManifest, mock_embed, prompt_for
from shapeflow.flow import CouplingFlow
from shapeflow.quadruped import ANIMAL_LABELS, build_animal_fixture
from shapeflow.trainer import ConditionNorm, TrainConfig, make_dataset
from shapeflow.tree import TREE_SCHEMA, list_presets, load_preset


def tree_records():
    out = {}
    for key in list_presets():
        rec, name = load_preset(key, with_name=True)
        out[name] = rec
    return out


def mock_manifest(kind, labels, dim=512):
    m = EmbeddingManifest(dim, "mock")
    for lab in labels:
        m.append(lab, "mock", mock_embed(prompt_for(kind, lab), dim).data)
    return m


def memorization_setup(kind, n_animals=12, epochs=2000, seed=0, normalize=True):
    """Returns ``(flow, dataset, config, codec, records)`` for the
    memorization protocol (default training hyperparameters, mock text
    embeddings).
    Dataset conditions are already passed through the fitted normalizer."""
    if kind == "tree":
        records = tree_records()
        schema = TREE_SCHEMA
    else:
        _, _, labels, betas = build_animal_fixture(ANIMAL_LABELS[:n_animals])
        records = {lab: betas_to_record(b) for lab, b in zip(labels, betas)}
        schema = animal_schema(betas.shape[1])
    codec = Codec.fit(schema, records.values())
    manifest = mock_manifest(kind, records)
    dataset = make_dataset(manifest, records, codec)
    config = TrainConfig(epochs=epochs, seed=seed, normalize_conditions=normalize)
    if normalize:
        dataset = ConditionNorm.fit([p.condition for p in dataset]).apply_pairs(dataset)
    flow = CouplingFlow.create(manifest.dimension, codec.dim, config.n_layers, config.mask_strategy,
                               config.hidden, config.compressed, config.compression, seed=seed)
    return flow, dataset, config, codec, records


def random_flow(dim_cond, dim_shape, strategy, seed, n_layers=5, hidden=16, compressed=8,
                compression=True, output_scale=1.0):
    """Small flow with non-trivial weights (and jittered learned logits)."""
    flow = CouplingFlow.create(dim_cond, dim_shape, n_layers, strategy, hidden, compressed,
                               compression, seed=seed, output_scale=output_scale)
    if strategy == "learned":
        rng = np.random.default_rng(seed + 1000)
        for layer in flow.layers:
            layer.mask.logits += rng.uniform(-0.5, 0.5, layer.mask.logits.shape)
    return flow


def random_record(schema, rng):
    """Schema-valid record with every field drawn uniformly in its range
    (unbounded sides are cut at +-10)."""
    rec = {}
    for f in schema:
        if f.kind == "categorical":
            rec[f.name] = int(rng.integers(f.n_classes))
        else:
            lo, hi = max(f.lo, -10.0), min(f.hi, 10.0)
            if f.kind == "integer":
                rec[f.name] = int(rng.integers(int(np.ceil(lo)), int(np.floor(hi)) + 1))
            else:
                rec[f.name] = float(rng.uniform(lo, hi))
    return rec
