"""Command-line interface.

Exit codes: 0 success, 2 validation, 3 numeric failure, 4 I/O. Failures print a
single ``error <category>: <message>`` line on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
from pathlib import Path
import sys

import numpy as np

from . import __version__
from .animal import load_shape_space, save_shape_space
from .checkpoint import (ShapeModel, animal_schema, betas_to_record, load_checkpoint,
                         save_checkpoint)
from .codec import Codec
from .embedding import (EmbeddingManifest, EmbeddingVector, classify_zero_shot, interpolate,
                        load_manifest, mock_embed, prompt_for, save_manifest)
from .errors import FormatError, NumericRangeError, ShapeflowError, ValidationError
from .flow import CouplingFlow
from .harness import binomial_test, read_labels, vote_compare, write_vote_csv
from .mesh import export_obj
from .quadruped import ANIMAL_LABELS, build_animal_fixture
from .trainer import ConditionNorm, TrainConfig, make_dataset, mean_l1, train, write_history_csv
from .tree import TREE_SCHEMA, list_presets, load_preset, preset_text, read_preset_file, save_preset

SHAPE_SPACE_FILE = "shape_space.bin"
log = logging.getLogger("shapeflow")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"usage: {message}")


# ----------------------------------------------------------------------------
# parameter directories


def load_params_dir(kind, path):
    """Returns ``(schema, {label: record}, extras)`` for a training directory.

    Tree directories hold ``*.tree`` preset files (label = ``name`` key or file
    stem). Animal directories hold ``shape_space.bin`` with labels and betas.
    """
    path = Path(path)
    if not path.is_dir():
        raise FormatError(f"params directory {path} not found")
    if kind == "tree":
        records = {}
        for f in sorted(path.glob("*.tree")):
            rec, name = read_preset_file(f)
            records[name or f.stem] = rec
        if not records:
            raise ValidationError(f"no .tree files in {path}")
        return TREE_SCHEMA, records, {}
    space, skeleton, labels, betas = load_shape_space(path / SHAPE_SPACE_FILE)
    if betas is None or not labels:
        raise ValidationError(f"{path / SHAPE_SPACE_FILE} carries no labelled betas")
    records = {lab: betas_to_record(b) for lab, b in zip(labels, betas)}
    return animal_schema(space.n_components), records, {"space": space, "skeleton": skeleton}


# ----------------------------------------------------------------------------
# commands


def cmd_train(args):
    config = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    if args.epochs is not None:
        config = TrainConfig(**{**config.to_dict(), "epochs": args.epochs})
    schema, records, extras = load_params_dir(args.kind, args.params)
    manifest = load_manifest(args.embeddings)
    if args.init:
        model = load_checkpoint(args.init)
        if model.kind != args.kind:
            raise ValidationError(f"init checkpoint is a {model.kind} model, not {args.kind}")
        codec, flow, cond_norm = model.codec, model.flow, model.cond_norm
    else:
        codec = Codec.fit(schema, records.values())
        flow = CouplingFlow.create(manifest.dimension, codec.dim, config.n_layers,
                                   config.mask_strategy, config.hidden, config.compressed,
                                   config.compression, seed=config.seed)
        cond_norm = None
    if flow.dim_cond != manifest.dimension:
        raise ValidationError(f"schema mismatch: manifest dimension {manifest.dimension}, "
                              f"flow expects C={flow.dim_cond}")
    dataset = make_dataset(manifest, records, codec, args.provenance)
    if cond_norm is None:
        cond_norm = (ConditionNorm.fit([p.condition for p in dataset])
                     if config.normalize_conditions else ConditionNorm.identity(flow.dim_cond))
    dataset = cond_norm.apply_pairs(dataset)
    model = ShapeModel(args.kind, flow, codec, sorted(records), extras.get("space"),
                       extras.get("skeleton"), config.to_dict(), cond_norm)

    def checkpoint(_, epoch):
        save_checkpoint(model, args.out)

    def progress(epoch, lr, loss):
        if (epoch + 1) % max(1, args.log_every) == 0:
            log.info("epoch %d lr %.3g loss %.6f", epoch + 1, lr, loss)

    _, history = train(flow, dataset, config, checkpoint, progress)
    if args.history:
        write_history_csv(history, args.history)
    print(json.dumps({"pairs": len(dataset), "epochs": len(history), "final_loss": history[-1][2],
                      "mean_l1": mean_l1(flow, dataset), "out": str(args.out)}))


def _condition(model, args, text):
    if getattr(args, "embedding", None):
        path, _, label = args.embedding.rpartition(":")
        if not path:
            raise ValidationError("--embedding must look like <manifest>:<label>")
        vec = load_manifest(path).first(label)
    else:
        vec = mock_embed(text, model.flow.dim_cond)
    if vec.dim != model.flow.dim_cond:
        raise ValidationError(f"schema mismatch: embedding dimension {vec.dim}, checkpoint "
                              f"expects C={model.flow.dim_cond} (P={model.flow.dim_shape})")
    return vec


def _latent(model, args):
    if not getattr(args, "sample", False):
        return None
    return np.random.default_rng(args.seed).standard_normal(model.flow.dim_shape)


def cmd_generate(args):
    if not args.prompt and not args.embedding:
        raise ValidationError("generate needs --prompt or --embedding")
    model = load_checkpoint(args.ckpt)
    vec = _condition(model, args, args.prompt)
    record = model.predict(vec.data, _latent(model, args))
    export_obj(model.mesh(record, args.seed), args.out)
    if args.params_out:
        if model.kind == "tree":
            Path(args.params_out).write_text(preset_text(record, args.prompt or None),
                                             encoding="utf-8", newline="\n")
        else:
            Path(args.params_out).write_text(json.dumps(record, indent=1, sort_keys=True) + "\n")
    print(args.out)


def cmd_interpolate(args):
    if args.steps < 1:
        raise ValidationError("--steps must be >= 1")
    model = load_checkpoint(args.ckpt)
    a = _condition(model, args, args.from_text)
    b = _condition(model, args, args.to_text)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(args.steps):
        t = i / (args.steps - 1) if args.steps > 1 else 0.0
        vec = interpolate(a, b, t)
        record = model.predict(vec.data, _latent(model, args))
        name = f"step_{i:03d}.obj"
        export_obj(model.mesh(record, args.seed), out / name)
        rows.append(f"{name},{t!r}")
    (out / "steps.csv").write_text("file,t\n" + "\n".join(rows) + "\n")
    print(out)


def cmd_ablate(args):
    models = [load_checkpoint(p) for p in (args.ckpt_a, args.ckpt_b)]
    labels = read_labels(args.labels)
    renders = load_manifest(args.render_embeddings)
    if args.text_embeddings:
        text = load_manifest(args.text_embeddings)
    else:
        text = {lab: mock_embed(prompt_for("animal" if models[0].kind == "animal" else "tree", lab),
                                renders.dimension).data for lab in labels}
    table = vote_compare(labels, renders, text)
    write_vote_csv(table, args.out)
    print(json.dumps({"labels": len(table.records), "wins_a": table.wins_a,
                      "wins_b": table.wins_b, "ties": table.ties, "p_value_a": table.p_value()}))


def cmd_binom(args):
    print(repr(binomial_test(args.wins, args.total)))


def cmd_preset(args):
    if args.action == "list":
        print("\n".join(list_presets()))
        return
    if not args.name:
        raise ValidationError("preset show needs a name")
    record, name = load_preset(args.name, with_name=True)
    sys.stdout.write(preset_text(record, name))


def cmd_embed_mock(args):
    vec = mock_embed(args.text, args.dim, args.label or args.text)
    if args.out:
        path = Path(args.out)
        manifest = load_manifest(path) if path.exists() else EmbeddingManifest(args.dim, "mock")
        manifest.append(vec.label, "mock", vec.data)
        save_manifest(manifest, path)
    print(json.dumps({"label": vec.label, "norm": float(np.linalg.norm(vec.data)),
                      "head": [round(float(x), 6) for x in vec.data[:4]]}))


def _resolve_vector(spec, dim):
    path, _, label = spec.rpartition(":")
    if path and Path(path).exists():
        return load_manifest(path).first(label)
    return mock_embed(spec, dim)


def cmd_classify(args):
    cand_path = Path(args.candidates)
    if cand_path.exists():
        manifest = load_manifest(cand_path)
        candidates = [e.vector for e in manifest.entries]
        dim = manifest.dimension
    else:
        dim = args.dim
        candidates = [mock_embed(t.strip(), dim) for t in args.candidates.split(",") if t.strip()]
    query = _resolve_vector(args.query, dim)
    label, scores = classify_zero_shot(query, candidates)
    print(json.dumps({"label": label, "scores": {c.label: float(s) for c, s in zip(candidates, scores)}}))


def cmd_fixture(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = EmbeddingManifest(args.dim, "mock text embeddings of prompt templates")
    if args.kind == "tree":
        for key in list_presets():
            record, name = load_preset(key, with_name=True)
            save_preset(record, out / f"{key}.tree", name)
            manifest.append(name, "mock", mock_embed(prompt_for("tree", name), args.dim).data)
    else:
        if not 2 <= args.labels <= len(ANIMAL_LABELS):
            raise ValidationError(f"--labels must be in [2, {len(ANIMAL_LABELS)}]")
        space, skeleton, labels, betas = build_animal_fixture(ANIMAL_LABELS[:args.labels])
        save_shape_space(out / SHAPE_SPACE_FILE, space, skeleton, labels, betas)
        for name in labels:
            manifest.append(name, "mock", mock_embed(prompt_for("animal", name), args.dim).data)
    save_manifest(manifest, out / "embeddings.manifest")
    print(out)


# ----------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="shapeflow", description="Embedding-conditioned 3D shape generation.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("train", help="train a flow on labelled parameters and embeddings")
    s.add_argument("--kind", choices=("animal", "tree"), required=True)
    s.add_argument("--params", required=True)
    s.add_argument("--embeddings", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--init", help="fine-tune from this checkpoint")
    s.add_argument("--epochs", type=int, help="override the configured epoch count")
    s.add_argument("--provenance", choices=("text", "image", "mock"))
    s.add_argument("--history", help="write the loss history CSV here")
    s.add_argument("--log-every", type=int, default=100)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("generate", help="predict a shape from a prompt or embedding")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--prompt")
    s.add_argument("--embedding", help="<manifest>:<label>")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sample", action="store_true", help="draw the shape latent instead of zero")
    s.add_argument("--params-out")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("interpolate", help="meshes along a slerp between two prompts")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--from", dest="from_text", required=True)
    s.add_argument("--to", dest="to_text", required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sample", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_interpolate)

    s = sub.add_parser("ablate", help="paired embedding vote between two checkpoints")
    s.add_argument("--ckpt-a", required=True)
    s.add_argument("--ckpt-b", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--render-embeddings", required=True)
    s.add_argument("--text-embeddings")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("binom", help="one-sided binomial test against p=0.5")
    s.add_argument("--wins", type=int, required=True)
    s.add_argument("--total", type=int, required=True)
    s.set_defaults(func=cmd_binom)

    s = sub.add_parser("preset", help="list or show shipped tree presets")
    s.add_argument("action", choices=("list", "show"))
    s.add_argument("name", nargs="?")
    s.set_defaults(func=cmd_preset)

    s = sub.add_parser("embed-mock", help="deterministic stand-in text embedding")
    s.add_argument("--text", required=True)
    s.add_argument("--label")
    s.add_argument("--dim", type=int, default=512)
    s.add_argument("--out", help="append to this manifest")
    s.set_defaults(func=cmd_embed_mock)

    s = sub.add_parser("classify", help="zero-shot classification by cosine similarity")
    s.add_argument("--query", required=True, help="<manifest>:<label> or free text")
    s.add_argument("--candidates", required=True, help="manifest path or comma-separated texts")
    s.add_argument("--dim", type=int, default=512)
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("fixture", help="write a synthetic training directory")
    s.add_argument("--kind", choices=("animal", "tree"), required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--labels", type=int, default=12, help="animal species count")
    s.add_argument("--dim", type=int, default=512)
    s.set_defaults(func=cmd_fixture)
    return p


def _one_line(text):
    return " ".join(str(text).split())


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        args.func(args)
    except ShapeflowError as exc:
        print(f"error {exc.category}: {_one_line(exc)}", file=sys.stderr)
        return exc.exit_code
    except (OSError, UnicodeDecodeError) as exc:
        print(f"error io: {_one_line(exc)}", file=sys.stderr)
        return FormatError.exit_code
    except FloatingPointError as exc:
        print(f"error numeric: {_one_line(exc)}", file=sys.stderr)
        return NumericRangeError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
