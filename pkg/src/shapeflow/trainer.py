"""Dataset assembly, losses with gradients, Adam and the training loop."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, fields
import json
import logging
import math
from pathlib import Path

import numba
import numpy as np

from .errors import NumericRangeError, ValidationError
from .flow import CouplingFlow, LOG_2PI

log = logging.getLogger(__name__)

LOSS_MODES = ("L1", "L2", "NLL")


@dataclass
class TrainingPair:
    condition: np.ndarray
    target: np.ndarray
    label: str


@dataclass
class TrainConfig:
    epochs: int = 6000
    batch_size: int = 16
    lr_start: float = 1e-4
    lr_end: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss_mode: str = "L1"
    seed: int = 0
    checkpoint_every: int = 500
    early_stop: bool = False
    plateau_epochs: int = 200
    # architecture, used when a fresh flow is built from a config
    n_layers: int = 5
    mask_strategy: str = "learned"
    hidden: int = 1024
    compressed: int = 512
    compression: bool = True
    normalize_conditions: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if not (self.lr_start >= self.lr_end > 0):
            raise ValidationError("need lr_start >= lr_end > 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.loss_mode not in LOSS_MODES:
            raise ValidationError(f"loss_mode must be one of {LOSS_MODES}")

    @classmethod
    def from_file(cls, path):
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path}: {exc}") from None
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self):
        return asdict(self)


def make_dataset(manifest, labeled_params, codec, provenance=None):
    """Join parameter records with manifest embeddings by label.

    Every embedding of a label (optionally restricted to one provenance) gives
    one pair. Labels with parameters but no embedding are an error; manifest
    labels without parameters are logged and skipped.
    """
    missing = [lab for lab in labeled_params if not manifest.get(lab, provenance)]
    if missing:
        raise ValidationError(f"labels missing from embedding manifest: {missing}")
    known = set(labeled_params)
    extra = [lab for lab in manifest.labels() if lab not in known]
    if extra:
        log.warning("manifest labels without parameters ignored: %s", extra)
    pairs = []
    for label, record in labeled_params.items():
        target = codec.encode(record)
        for vec in manifest.get(label, provenance):
            pairs.append(TrainingPair(vec.data.copy(), target.copy(), label))
    return pairs


class ConditionNorm:
    """Affine map applied to embeddings before they reach the flow.

    ``fit`` subtracts the training mean and divides by a single scalar chosen
    so the centred training vectors have unit RMS per coordinate. Prompt
    embeddings that share most of their tokens are nearly parallel; centring
    exposes the part that tells them apart.
    """

    def __init__(self, mean, scale=1.0):
        self.mean = np.asarray(mean, dtype=np.float64).reshape(-1)
        self.scale = float(scale)
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValidationError(f"condition scale must be positive, got {scale}")

    @classmethod
    def identity(cls, dim):
        return cls(np.zeros(dim), 1.0)

    @classmethod
    def fit(cls, vectors):
        c = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        mean = c.mean(axis=0)
        rms = math.sqrt(float(((c - mean) ** 2).mean()))
        # a single distinct vector leaves nothing to scale
        return cls(mean, rms if rms > 1e-12 else 1.0)

    @property
    def dim(self):
        return self.mean.size

    def apply(self, c):
        c = np.asarray(c, dtype=np.float64)
        if c.shape[-1] != self.dim:
            raise ValidationError(
                f"embedding has dimension {c.shape[-1]}, normalizer expects {self.dim}")
        return (c - self.mean) / self.scale

    def apply_pairs(self, pairs):
        return [TrainingPair(self.apply(p.condition), p.target, p.label) for p in pairs]


def lr_at(config: TrainConfig, epoch: int) -> float:
    """Learning rate for ``epoch`` (0-based), decaying geometrically from
    ``lr_start`` at the first epoch to ``lr_end`` at the last."""
    if not 0 <= epoch < config.epochs:
        raise ValidationError(f"epoch {epoch} outside [0, {config.epochs})")
    if config.epochs == 1:
        return config.lr_start
    frac = epoch / (config.epochs - 1)
    return config.lr_start * (config.lr_end / config.lr_start) ** frac


def stack_batch(batch):
    c = np.stack([p.condition for p in batch])
    target = np.stack([p.target for p in batch])
    return c, target


def loss_and_grads(flow: CouplingFlow, batch, loss_mode="L1"):
    """Loss over ``batch`` (a list of TrainingPair) and its gradient for every
    flow parameter, keyed like ``flow.parameters()``.

    L1/L2 compare the generated parameters (inverse pass on ``[c || 0]``) with
    the targets, averaged over batch and dimensions. NLL is the negative mean
    log-density of ``[c || target]`` under the flow.
    """
    c, target = stack_batch(batch)
    n = c.shape[0]
    if loss_mode in ("L1", "L2"):
        x, caches = flow.inverse(flow.condition_input(c), return_cache=True)
        diff = x[:, flow.dim_cond:] - target
        denom = diff.size
        if loss_mode == "L1":
            loss = np.abs(diff).sum() / denom
            gdiff = np.sign(diff) / denom
        else:
            loss = (diff * diff).sum() / denom
            gdiff = 2.0 * diff / denom
        gx = np.zeros_like(x)
        gx[:, flow.dim_cond:] = gdiff
        _, grads = flow.backward_inverse(caches, gx)
    elif loss_mode == "NLL":
        z, logdet, caches = flow.forward(flow.condition_input(c, target), return_cache=True)
        lp = -0.5 * (z * z).sum(axis=1) - 0.5 * flow.dim * LOG_2PI + logdet
        loss = -lp.mean()
        gz = z / n
        glogdet = np.full(n, -1.0 / n)
        _, grads = flow.backward_forward(caches, gz, glogdet)
    else:
        raise ValidationError(f"unknown loss mode {loss_mode!r}")
    if not math.isfinite(loss):
        raise NumericRangeError(f"non-finite {loss_mode} loss")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            pos = int(np.argwhere(~np.isfinite(g))[0][-1])
            raise NumericRangeError(f"non-finite gradient in {name} at position {pos}")
    return float(loss), grads


@numba.njit(cache=True)
def _adam_kernel(p, g, m, v, lr, b1, b2, corr1, corr2, eps):
    for i in range(p.size):
        mi = b1 * m[i] + (1.0 - b1) * g[i]
        vi = b2 * v[i] + (1.0 - b2) * g[i] * g[i]
        m[i] = mi
        v[i] = vi
        p[i] -= lr * (mi / corr1) / (np.sqrt(vi / corr2) + eps)


class Adam:
    """Adam over a dict of parameter arrays, updated in place."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros(v.size) for k, v in params.items()}
        self.v = {k: np.zeros(v.size) for k, v in params.items()}
        self.step_count = 0

    def step(self, grads, lr):
        self.step_count += 1
        corr1 = 1.0 - self.beta1 ** self.step_count
        corr2 = 1.0 - self.beta2 ** self.step_count
        for name, g in grads.items():
            p = self.params[name]
            if not p.flags.c_contiguous:
                raise ValueError(f"parameter {name} is not contiguous")
            _adam_kernel(p.reshape(-1), np.ascontiguousarray(g).reshape(-1),
                         self.m[name], self.v[name], lr, self.beta1, self.beta2,
                         corr1, corr2, self.eps)


def train(flow: CouplingFlow, dataset, config: TrainConfig, checkpoint_fn=None,
          progress=None):
    """Train ``flow`` in place. Returns ``(flow, history)`` where history is a
    list of ``(epoch, lr, mean_loss)``.

    ``checkpoint_fn(flow, epoch)`` is called every ``config.checkpoint_every``
    epochs and once at the end.
    """
    if not dataset:
        raise ValidationError("empty training set")
    rng = np.random.default_rng(config.seed)
    opt = Adam(flow.parameters(), config.beta1, config.beta2, config.eps)
    history = []
    best = math.inf
    best_epoch = 0
    n = len(dataset)
    for epoch in range(config.epochs):
        lr = lr_at(config, epoch)
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = [dataset[i] for i in order[start:start + config.batch_size]]
            try:
                loss, grads = loss_and_grads(flow, batch, config.loss_mode)
            except NumericRangeError as exc:
                raise NumericRangeError(f"epoch {epoch} batch {start // config.batch_size}: {exc}") from None
            opt.step(grads, lr)
            total += loss * len(batch)
        mean_loss = total / n
        history.append((epoch, lr, mean_loss))
        if progress is not None:
            progress(epoch, lr, mean_loss)
        if checkpoint_fn is not None and config.checkpoint_every > 0 \
                and (epoch + 1) % config.checkpoint_every == 0 and epoch + 1 < config.epochs:
            checkpoint_fn(flow, epoch)
        if mean_loss < best - 1e-6:
            best, best_epoch = mean_loss, epoch
        elif config.early_stop and epoch - best_epoch >= config.plateau_epochs:
            log.info("loss plateau since epoch %d, stopping at %d", best_epoch, epoch)
            break
    if checkpoint_fn is not None:
        checkpoint_fn(flow, history[-1][0])
    return flow, history


def write_history_csv(history, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "lr", "loss"])
        for epoch, lr, loss in history:
            writer.writerow([epoch, repr(lr), repr(loss)])


def mean_l1(flow, dataset):
    c, target = stack_batch(dataset)
    x = flow.inverse(flow.condition_input(c))
    return float(np.abs(x[:, flow.dim_cond:] - target).mean())
