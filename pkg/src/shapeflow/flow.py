"""Conditional Real-NVP flow over concatenated (embedding, shape) vectors.

Everything is plain numpy in float64. Each coupling layer keeps a binary mask
``b``; positions with ``b == 1`` pass through unchanged and condition the scale
and translation networks, the remaining positions are transformed affinely::

    y = b*x + (1 - b) * (x * exp(s(b*x)) + t(b*x))

Forward and inverse passes can return caches which the ``backward_*`` methods
consume to produce gradients for every weight, bias and mask logit. The
trainer builds its losses on top of those.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .errors import NumericRangeError, ValidationError

STRATEGIES = ("checkerboard", "dimwise", "learned")
LEAKY_SLOPE = 0.01
SCALE_CLAMP = 8.0
LOG_2PI = math.log(2.0 * math.pi)


# ----------------------------------------------------------------------------
# masks


@dataclass
class MaskSpec:
    strategy: str
    layer_index: int
    dim: int
    logits: np.ndarray | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"unknown mask strategy {self.strategy!r}")
        if self.dim <= 1:
            raise ValidationError(f"mask dimension must exceed 1, got {self.dim}")
        if self.layer_index < 0:
            raise ValidationError("layer_index must be non-negative")
        if self.strategy == "learned":
            if self.logits is None:
                raise ValidationError("learned mask requires logits")
            self.logits = np.asarray(self.logits, dtype=np.float64)
            if self.logits.shape != (self.dim,):
                raise ValidationError(
                    f"mask logits have length {self.logits.size}, expected {self.dim}")


def checkerboard_logits(dim: int, layer_index: int) -> np.ndarray:
    """Logits of +-1 reproducing the checkerboard pattern (learned-mask init)."""
    pattern = (np.arange(dim) + layer_index) % 2 == 0
    return np.where(pattern, 1.0, -1.0)


def binarize_learned_mask(logits) -> tuple[np.ndarray, np.ndarray]:
    """Hard-threshold ``logits`` at zero.

    Returns the binary mask and the straight-through gradient path: the
    derivative of ``sigmoid(logits)``, which the backward pass uses in place of
    the (zero almost everywhere) derivative of the step function.

    If every logit falls on the same side of zero, the entry closest to the
    threshold is flipped so that both values occur; among equal candidates the
    lowest-index entries keep their value (the last one flips).
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.size < 2:
        raise ValidationError("learned mask needs at least two logits")
    mask = (logits > 0).astype(np.float64)
    if mask.min() == mask.max():
        if mask[0] == 1.0:
            target = np.flatnonzero(logits == logits.min())[-1]
        else:
            target = np.flatnonzero(logits == logits.max())[-1]
        mask[target] = 1.0 - mask[target]
    sig = _sigmoid(logits)
    return mask, sig * (1.0 - sig)


def build_mask(spec: MaskSpec) -> np.ndarray:
    dim = spec.dim
    if spec.strategy == "checkerboard":
        return ((np.arange(dim) + spec.layer_index + 1) % 2).astype(np.float64)
    if spec.strategy == "dimwise":
        half = (dim + 1) // 2
        mask = np.zeros(dim)
        mask[:half] = 1.0
        return mask if spec.layer_index % 2 == 0 else 1.0 - mask
    return binarize_learned_mask(spec.logits)[0]


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


# ----------------------------------------------------------------------------
# scale / translation networks


def _leaky(a):
    return np.where(a > 0, a, LEAKY_SLOPE * a)


def _leaky_grad(a):
    return np.where(a > 0, 1.0, LEAKY_SLOPE)


class ScaleTranslateNet:
    """Three-stage MLP ``in -> hidden -> compressed -> out`` (two stages when
    compression is disabled). ``head`` is ``"tanh"`` for the scale network and
    ``"identity"`` for the translation network."""

    def __init__(self, weights, biases, head):
        if head not in ("tanh", "identity"):
            raise ValidationError(f"unknown head {head!r}")
        if len(weights) != len(biases) or len(weights) not in (2, 3):
            raise ValidationError("network needs 2 or 3 affine stages")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.head = head

    @classmethod
    def create(cls, dim, head, rng, hidden=1024, compressed=512,
               compression=True, output_scale=0.0):
        """Fan-in uniform init for hidden stages; the output stage is drawn with
        ``output_scale`` (zero gives an identity coupling)."""
        sizes = [dim, hidden] + ([compressed] if compression else []) + [dim]
        weights, biases = [], []
        for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = k == len(sizes) - 2
            bound = output_scale / math.sqrt(fan_in) if last else 1.0 / math.sqrt(fan_in)
            if bound == 0.0:
                weights.append(np.zeros((fan_in, fan_out)))
                biases.append(np.zeros(fan_out))
            else:
                weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
                biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(weights, biases, head)

    @property
    def compression_enabled(self):
        return len(self.weights) == 3

    def forward(self, u):
        pre = []
        h = u
        acts = [u]
        n = len(self.weights)
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = h @ w + b
            pre.append(a)
            if k < n - 1:
                h = _leaky(a)
                acts.append(h)
        a = pre[-1]
        if self.head == "tanh":
            out = np.clip(np.tanh(a), -SCALE_CLAMP, SCALE_CLAMP)
        else:
            out = a
        return out, (acts, pre, out)

    def backward(self, cache, gout):
        acts, pre, out = cache
        if self.head == "tanh":
            inside = np.abs(out) < SCALE_CLAMP
            g = gout * (1.0 - out * out) * inside
        else:
            g = gout
        gws = [None] * len(self.weights)
        gbs = [None] * len(self.weights)
        for k in range(len(self.weights) - 1, -1, -1):
            gws[k] = acts[k].T @ g
            gbs[k] = g.sum(axis=0)
            g = g @ self.weights[k].T
            if k > 0:
                g = g * _leaky_grad(pre[k - 1])
        return g, gws, gbs


# ----------------------------------------------------------------------------
# coupling layer


class CouplingLayer:
    def __init__(self, mask: MaskSpec, s_net: ScaleTranslateNet, t_net: ScaleTranslateNet):
        self.mask = mask
        self.s_net = s_net
        self.t_net = t_net

    @property
    def dim(self):
        return self.mask.dim

    def mask_values(self, relaxed=False):
        """Mask used by the passes plus its straight-through derivative
        (``None`` for fixed masks). ``relaxed`` swaps the hard threshold for
        ``sigmoid(logits)``, the surrogate the learned-mask gradients follow."""
        if self.mask.strategy != "learned":
            return build_mask(self.mask), None
        if relaxed:
            sig = _sigmoid(self.mask.logits)
            return sig, sig * (1.0 - sig)
        return binarize_learned_mask(self.mask.logits)

    def _st(self, u):
        s, s_cache = self.s_net.forward(u)
        t, t_cache = self.t_net.forward(u)
        return s, t, s_cache, t_cache

    def forward(self, x, relaxed=False):
        b, dmask = self.mask_values(relaxed)
        keep = 1.0 - b
        u = b * x
        s, t, s_cache, t_cache = self._st(u)
        es = np.exp(s)
        y = u + keep * (x * es + t)
        logdet = (keep * s).sum(axis=-1)
        cache = (x, b, dmask, s, t, es, s_cache, t_cache)
        return y, logdet, cache

    def inverse(self, y, relaxed=False):
        b, dmask = self.mask_values(relaxed)
        keep = 1.0 - b
        u = b * y
        s, t, s_cache, t_cache = self._st(u)
        ems = np.exp(-s)
        x = u + keep * ((y - t) * ems)
        cache = (y, b, dmask, s, t, ems, s_cache, t_cache)
        return x, cache

    def _net_backward(self, gs, gt, s_cache, t_cache):
        gu_s, gws_s, gbs_s = self.s_net.backward(s_cache, gs)
        gu_t, gws_t, gbs_t = self.t_net.backward(t_cache, gt)
        grads = {}
        for k in range(len(gws_s)):
            grads[f"s.W{k}"] = gws_s[k]
            grads[f"s.b{k}"] = gbs_s[k]
            grads[f"t.W{k}"] = gws_t[k]
            grads[f"t.b{k}"] = gbs_t[k]
        return gu_s + gu_t, grads

    def backward_forward(self, cache, gy, glogdet):
        x, b, dmask, s, t, es, s_cache, t_cache = cache
        keep = 1.0 - b
        gl = glogdet[:, None]
        gx = gy * (b + keep * es)
        gs = gy * keep * x * es + gl * keep
        gt = gy * keep
        gu, grads = self._net_backward(gs, gt, s_cache, t_cache)
        gx = gx + gu * b
        if dmask is not None:
            gb = (gy * (x - (x * es + t)) - gl * s + gu * x).sum(axis=0)
            grads["logits"] = gb * dmask
        return gx, grads

    def backward_inverse(self, cache, gx):
        y, b, dmask, s, t, ems, s_cache, t_cache = cache
        keep = 1.0 - b
        shifted = (y - t) * ems
        gy = gx * (b + keep * ems)
        gt = -gx * keep * ems
        gs = -gx * keep * shifted
        gu, grads = self._net_backward(gs, gt, s_cache, t_cache)
        gy = gy + gu * b
        if dmask is not None:
            gb = (gx * (y - shifted) + gu * y).sum(axis=0)
            grads["logits"] = gb * dmask
        return gy, grads

    def parameters(self):
        params = {}
        for name, net in (("s", self.s_net), ("t", self.t_net)):
            for k, (w, b) in enumerate(zip(net.weights, net.biases)):
                params[f"{name}.W{k}"] = w
                params[f"{name}.b{k}"] = b
        if self.mask.strategy == "learned":
            params["logits"] = self.mask.logits
        return params


def coupling_forward(layer: CouplingLayer, x):
    x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y, logdet, _ = layer.forward(x2)
    _check_finite(y, 0)
    if np.ndim(x) == 1:
        return y[0], float(logdet[0])
    return y, logdet


def coupling_inverse(layer: CouplingLayer, y):
    y2 = np.atleast_2d(np.asarray(y, dtype=np.float64))
    x, _ = layer.inverse(y2)
    _check_finite(x, 0)
    return x[0] if np.ndim(y) == 1 else x


def _check_finite(arr, layer_index):
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise NumericRangeError(
            f"non-finite value in coupling layer {layer_index} at position {int(bad[-1])}")


# ----------------------------------------------------------------------------
# flow


class CouplingFlow:
    """Stack of coupling layers acting on ``[embedding || shape]`` vectors of
    size ``dim_cond + dim_shape`` with a unit Gaussian prior."""

    def __init__(self, layers, dim_cond, dim_shape):
        if not layers:
            raise ValidationError("flow needs at least one coupling layer")
        dim = dim_cond + dim_shape
        for layer in layers:
            if layer.dim != dim:
                raise ValidationError(f"layer dimension {layer.dim} != {dim}")
        self.layers = list(layers)
        self.dim_cond = int(dim_cond)
        self.dim_shape = int(dim_shape)
        self.relaxed_masks = False

    @property
    def dim(self):
        return self.dim_cond + self.dim_shape

    @property
    def strategy(self):
        return self.layers[0].mask.strategy

    @property
    def compression(self):
        return self.layers[0].s_net.compression_enabled

    @classmethod
    def create(cls, dim_cond, dim_shape, n_layers=5, strategy="learned",
               hidden=1024, compressed=512, compression=True, seed=0,
               output_scale=0.0):
        """Build a flow with fresh weights. With ``output_scale=0`` (the
        default) every coupling starts as the identity."""
        dim = dim_cond + dim_shape
        rng = np.random.default_rng(seed)
        layers = []
        for i in range(n_layers):
            logits = checkerboard_logits(dim, i) if strategy == "learned" else None
            mask = MaskSpec(strategy, i, dim, logits)
            kw = dict(hidden=hidden, compressed=compressed,
                      compression=compression, output_scale=output_scale)
            s_net = ScaleTranslateNet.create(dim, "tanh", rng, **kw)
            t_net = ScaleTranslateNet.create(dim, "identity", rng, **kw)
            layers.append(CouplingLayer(mask, s_net, t_net))
        return cls(layers, dim_cond, dim_shape)

    def parameters(self):
        params = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.parameters().items():
                params[f"layer{i}.{name}"] = arr
        return params

    # -- passes -------------------------------------------------------------

    def forward(self, x, return_cache=False):
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        self._check_dim(h.shape[-1])
        logdet = np.zeros(h.shape[0])
        caches = []
        for i, layer in enumerate(self.layers):
            h, ld, cache = layer.forward(h, self.relaxed_masks)
            _check_finite(h, i)
            logdet = logdet + ld
            caches.append(cache)
        if return_cache:
            return h, logdet, caches
        return h, logdet

    def inverse(self, z, return_cache=False):
        h = np.atleast_2d(np.asarray(z, dtype=np.float64))
        self._check_dim(h.shape[-1])
        caches = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            h, caches[i] = self.layers[i].inverse(h, self.relaxed_masks)
            _check_finite(h, i)
        if return_cache:
            return h, caches
        return h

    def backward_forward(self, caches, gz, glogdet):
        """Gradients of a loss given its derivatives w.r.t. the forward outputs."""
        grads = {}
        g = gz
        for i in range(len(self.layers) - 1, -1, -1):
            g, layer_grads = self.layers[i].backward_forward(caches[i], g, glogdet)
            for name, val in layer_grads.items():
                grads[f"layer{i}.{name}"] = val
        return g, grads

    def backward_inverse(self, caches, gx):
        """Gradients of a loss given its derivative w.r.t. the inverse output."""
        grads = {}
        g = gx
        for i, layer in enumerate(self.layers):
            g, layer_grads = layer.backward_inverse(caches[i], g)
            for name, val in layer_grads.items():
                grads[f"layer{i}.{name}"] = val
        return g, grads

    def _check_dim(self, d):
        if d != self.dim:
            raise ValidationError(f"flow expects vectors of size {self.dim}, got {d}")

    # -- conditional use ----------------------------------------------------

    def condition_input(self, c, z_shape=None):
        c = np.atleast_2d(np.asarray(c, dtype=np.float64))
        if c.shape[-1] != self.dim_cond:
            raise ValidationError(
                f"embedding has dimension {c.shape[-1]}, flow expects {self.dim_cond}")
        if z_shape is None:
            z_shape = np.zeros((c.shape[0], self.dim_shape))
        z_shape = np.atleast_2d(np.asarray(z_shape, dtype=np.float64))
        if z_shape.shape[-1] != self.dim_shape:
            raise ValidationError(
                f"shape latent has dimension {z_shape.shape[-1]}, flow expects {self.dim_shape}")
        z_shape = np.broadcast_to(z_shape, (c.shape[0], self.dim_shape))
        return np.concatenate([c, z_shape], axis=1)


def flow_forward(flow: CouplingFlow, x):
    z, logdet = flow.forward(x)
    if np.ndim(x) == 1:
        return z[0], float(logdet[0])
    return z, logdet


def flow_inverse(flow: CouplingFlow, z):
    x = flow.inverse(z)
    return x[0] if np.ndim(z) == 1 else x


def generate_params(flow: CouplingFlow, c, z_shape=None):
    """Encoded shape parameters for embedding(s) ``c``: the trailing
    ``dim_shape`` outputs of the inverse pass applied to ``[c || z_shape]``."""
    x = flow.inverse(flow.condition_input(c, z_shape))
    out = x[:, flow.dim_cond:]
    return out[0] if np.ndim(c) == 1 else out


def log_prob(flow: CouplingFlow, c, p):
    c = np.atleast_2d(np.asarray(c, dtype=np.float64))
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    if p.shape[-1] != flow.dim_shape:
        raise ValidationError(
            f"shape vector has dimension {p.shape[-1]}, flow expects {flow.dim_shape}")
    z, logdet = flow.forward(flow.condition_input(c, p))
    lp = -0.5 * (z * z).sum(axis=1) - 0.5 * flow.dim * LOG_2PI + logdet
    return float(lp[0]) if lp.shape[0] == 1 else lp


def standard_normal_logpdf(z):
    z = np.atleast_2d(z)
    return -0.5 * (z * z).sum(axis=1) - 0.5 * z.shape[1] * LOG_2PI
