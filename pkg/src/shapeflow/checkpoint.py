"""Trained-model bundles: flow, codec and (for animals) the shape space.

Checkpoints use the binary container (see :mod:`shapeflow.container`) with
kind ``"checkpoint"``. The header ``meta`` holds::

    format_version, model_kind ("tree" | "animal"), dim_cond, dim_shape, dim,
    n_layers, mask_strategy, compression, codec (schema + statistics),
    labels, config, condition_scale

Arrays follow a fixed order. For each layer ``i`` in turn::

    layer{i}.logits            (learned masks only)
    layer{i}.s.W0, layer{i}.s.b0, layer{i}.s.W1, layer{i}.s.b1[, .W2, .b2]
    layer{i}.t.W0, ...          (same layout as the scale network)

then ``condition.mean`` (the embedding normalizer) and, for animal models, the shape space prefixed ``shape_space.`` in the
order of :func:`shapeflow.animal.shape_space_arrays`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .animal import (Skeleton, ShapeSpace, animal_mesh, shape_space_arrays,
                     shape_space_from_arrays)
from .codec import Codec, FieldSpec, ParamSchema
from .container import container_bytes, read_container
from .errors import FormatError, ValidationError
from .flow import CouplingFlow, CouplingLayer, MaskSpec, ScaleTranslateNet, generate_params
from .mesh import TriMesh
from .trainer import ConditionNorm
from .tree import generate_tree

CHECKPOINT_VERSION = 1
MODEL_KINDS = ("tree", "animal")


def animal_schema(n_components) -> ParamSchema:
    return ParamSchema([FieldSpec(f"beta_{k}", "numeric") for k in range(n_components)])


def betas_to_record(beta):
    return {f"beta_{k}": float(b) for k, b in enumerate(beta)}


def record_to_betas(record, n_components):
    return np.array([record[f"beta_{k}"] for k in range(n_components)])


@dataclass
class ShapeModel:
    kind: str
    flow: CouplingFlow
    codec: Codec
    labels: list = field(default_factory=list)
    space: ShapeSpace | None = None
    skeleton: Skeleton | None = None
    config: dict = field(default_factory=dict)
    cond_norm: ConditionNorm | None = None

    def __post_init__(self):
        if self.cond_norm is None:
            self.cond_norm = ConditionNorm.identity(self.flow.dim_cond)
        if self.cond_norm.dim != self.flow.dim_cond:
            raise ValidationError(
                f"normalizer has dimension {self.cond_norm.dim}, flow expects C={self.flow.dim_cond}")
        if self.kind not in MODEL_KINDS:
            raise ValidationError(f"unknown model kind {self.kind!r}")
        if self.codec.dim != self.flow.dim_shape:
            raise ValidationError(
                f"schema mismatch: codec encodes {self.codec.dim} dims, flow expects "
                f"P={self.flow.dim_shape}")
        if self.kind == "animal" and (self.space is None or self.skeleton is None):
            raise ValidationError("animal models need a shape space and skeleton")

    def predict(self, embedding, z_shape=None) -> dict:
        """Decoded parameter record for one embedding vector."""
        c = self.cond_norm.apply(np.asarray(embedding, dtype=np.float64))
        v = generate_params(self.flow, c, z_shape)
        return self.codec.decode(v)

    def mesh(self, record, seed=0) -> TriMesh:
        if self.kind == "tree":
            return generate_tree(record, seed)
        beta = record_to_betas(record, self.space.n_components)
        return animal_mesh(self.space, self.skeleton, beta)


def _flow_arrays(flow: CouplingFlow):
    arrays = []
    for i, layer in enumerate(flow.layers):
        if layer.mask.strategy == "learned":
            arrays.append((f"layer{i}.logits", layer.mask.logits))
        for name, net in (("s", layer.s_net), ("t", layer.t_net)):
            for k, (w, b) in enumerate(zip(net.weights, net.biases)):
                arrays.append((f"layer{i}.{name}.W{k}", w))
                arrays.append((f"layer{i}.{name}.b{k}", b))
    return arrays


def checkpoint_bytes(model: ShapeModel) -> bytes:
    flow = model.flow
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "model_kind": model.kind,
        "dim_cond": flow.dim_cond,
        "dim_shape": flow.dim_shape,
        "dim": flow.dim,
        "n_layers": len(flow.layers),
        "mask_strategy": flow.strategy,
        "compression": flow.compression,
        "codec": model.codec.to_json(),
        "labels": list(model.labels),
        "config": model.config,
        "condition_scale": model.cond_norm.scale,
    }
    arrays = _flow_arrays(flow) + [("condition.mean", model.cond_norm.mean)]
    if model.kind == "animal":
        arrays += shape_space_arrays(model.space, model.skeleton, prefix="shape_space.")
        meta["joint_names"] = list(model.skeleton.names)
    return container_bytes("checkpoint", meta, arrays)


def save_checkpoint(model: ShapeModel, path):
    data = checkpoint_bytes(model)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise FormatError(f"cannot write checkpoint {path}: {exc}") from None


def load_checkpoint(path) -> ShapeModel:
    kind, meta, arrays = read_container(path)
    if kind != "checkpoint":
        raise FormatError(f"{path}: expected a checkpoint container, found {kind!r}")
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {meta.get('format_version')}")
    try:
        dim = int(meta["dim"])
        strategy = meta["mask_strategy"]
        layers = []
        for i in range(int(meta["n_layers"])):
            logits = arrays[f"layer{i}.logits"] if strategy == "learned" else None
            nets = []
            for name, head in (("s", "tanh"), ("t", "identity")):
                n_stages = 3 if meta["compression"] else 2
                ws = [arrays[f"layer{i}.{name}.W{k}"] for k in range(n_stages)]
                bs = [arrays[f"layer{i}.{name}.b{k}"] for k in range(n_stages)]
                nets.append(ScaleTranslateNet(ws, bs, head))
            layers.append(CouplingLayer(MaskSpec(strategy, i, dim, logits), *nets))
        flow = CouplingFlow(layers, int(meta["dim_cond"]), int(meta["dim_shape"]))
        codec = Codec.from_json(meta["codec"])
        cond_norm = ConditionNorm(arrays["condition.mean"], meta["condition_scale"])
    except KeyError as exc:
        raise FormatError(f"{path}: checkpoint missing entry {exc}") from None
    space = skeleton = None
    if meta["model_kind"] == "animal":
        space, skeleton, _ = shape_space_from_arrays(arrays, prefix="shape_space.")
        skeleton.names = list(meta.get("joint_names", []))
    return ShapeModel(meta["model_kind"], flow, codec, list(meta.get("labels", [])),
                      space, skeleton, dict(meta.get("config", {})), cond_norm)
