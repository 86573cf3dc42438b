"""
Texture codes, frequency encoding, the MLP decoder and its training loop.

A pixel's feature is the barycentric blend of the codes on its triangle's
three nodes. The decoder maps the frequency-encoded tuple
``[feature, t, x, y]`` to RGB. Gradients are derived by hand (float64
throughout): node positions are data and never receive gradients.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import NonFiniteLossError
from .representation import FORMAT_VERSION, Representation

__all__ = [
    "TrainConfig",
    "DecoderParams",
    "AdamState",
    "SampleTable",
    "interpolate_feature",
    "freq_encode",
    "freq_encode_backward",
    "encoding_width",
    "decode",
    "normalize_coords",
    "loss_and_grads",
    "adam_step",
    "build_sample_table",
    "optimize",
    "fit",
    "write_loss_csv",
    "psnr_from_loss",
]

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    steps: int = 3000
    batch_size: int = 4096
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    code_dim: int = 32
    hidden: int = 128
    n_layers: int = 6
    n_freq: int = 6
    include_raw: bool = True
    code_init: float = 1e-2
    disable_position_input: bool = False
    disable_freq_encoding: bool = False
    disable_layering: bool = False
    log_every: int = 0

    def __post_init__(self):
        if self.steps < 0 or self.batch_size <= 0:
            raise ValueError("steps must be >= 0 and batch_size positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.code_dim < 1 or self.n_layers < 1 or self.hidden < 1:
            raise ValueError("code_dim, hidden and n_layers must be positive")

    @classmethod
    def paper(cls, **kw):
        """Full-scale settings: c=128, 8 layers of width 256, 9 frequencies, 10000 steps."""
        base = dict(code_dim=128, hidden=256, n_layers=8, n_freq=9, steps=10000)
        base.update(kw)
        return cls(**base)


# -- encoding ------------------------------------------------------------------

def encoding_width(in_dim, n_freq, include_raw=True, use_freq=True):
    if not use_freq:
        return in_dim
    return in_dim * 2 * n_freq + (in_dim if include_raw else 0)


def freq_encode(v, n_freq, include_raw=True):
    """Sinusoidal encoding of every component at frequencies ``2^k * pi``.

    Parameters
    ----------
    v : (..., d) array
    n_freq : int

    Returns
    -------
    (..., d * 2 * n_freq [+ d]) array
        For each component ``u``: ``sin(2^0 pi u), cos(2^0 pi u), ...,
        sin(2^(n-1) pi u), cos(2^(n-1) pi u)``; raw ``v`` first when
        ``include_raw``.

    Notes
    -----
    Higher octaves come from the double-angle identities rather than fresh
    sin/cos calls; the rounding error grows like ``2^k`` ulps, far below
    anything training can see.
    """
    v = np.asarray(v, dtype=np.float64)
    d = v.shape[-1]
    off = d if include_raw else 0
    full = np.empty(v.shape[:-1] + (off + d * 2 * n_freq,))
    if include_raw:
        full[..., :d] = v
    out = full[..., off:].reshape(v.shape + (n_freq, 2))
    s = np.sin(np.pi * v)
    c = np.cos(np.pi * v)
    for k in range(n_freq):
        out[..., k, 0] = s
        out[..., k, 1] = c
        if k + 1 < n_freq:
            s, c = 2.0 * s * c, (c - s) * (c + s)
    return full


def freq_encode_backward(v, grad, n_freq, include_raw=True, n_components=None, encoded=None):
    """Gradient w.r.t. ``v`` given the gradient w.r.t. ``freq_encode(v)``.

    Only the first ``n_components`` components are differentiated when given.
    ``encoded`` (the forward output) is reused for the sin/cos values.
    """
    v = np.asarray(v, dtype=np.float64)
    d = v.shape[-1]
    m = d if n_components is None else n_components
    lead = v.shape[:-1]
    off = d if include_raw else 0
    if encoded is None:
        encoded = freq_encode(v, n_freq, include_raw)
    sc = encoded[..., off:].reshape(lead + (d, n_freq, 2))[..., :m, :, :]
    g = grad[..., off:].reshape(lead + (d, n_freq, 2))[..., :m, :, :]
    freqs = np.pi * 2.0 ** np.arange(n_freq)
    # d sin(a u)/du = a cos(a u), d cos(a u)/du = -a sin(a u)
    out = (g[..., 0] * sc[..., 1] - g[..., 1] * sc[..., 0]) @ freqs
    if include_raw:
        out = out + grad[..., :m]
    return out


# -- decoder -------------------------------------------------------------------

@dataclass
class DecoderParams:
    """Fully connected decoder: ``n_layers`` affine maps, ReLU between, sigmoid out."""

    weights: list
    biases: list
    code_dim: int
    n_freq: int
    include_raw: bool = True
    use_position: bool = True
    use_freq: bool = True
    activation: str = "relu"

    @property
    def raw_dim(self):
        return self.code_dim + (3 if self.use_position else 0)

    @property
    def input_width(self):
        return encoding_width(self.raw_dim, self.n_freq, self.include_raw, self.use_freq)

    @property
    def hidden(self):
        return self.weights[0].shape[1] if len(self.weights) > 1 else 0

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def n_params(self):
        return int(sum(w.size for w in self.weights) + sum(b.size for b in self.biases))

    @classmethod
    def init(cls, code_dim, hidden, n_layers, n_freq, rng, include_raw=True, use_position=True,
             use_freq=True):
        """He-uniform weights, zero biases."""
        proto = cls([], [], code_dim, n_freq, include_raw, use_position, use_freq)
        dims = [proto.input_width] + [hidden] * (n_layers - 1) + [3]
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            lim = math.sqrt(6.0 / fan_in)
            proto.weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
            proto.biases.append(np.zeros(fan_out))
        return proto

    def check(self):
        problems = []
        if not self.weights:
            return ["decoder has no layers"]
        if self.weights[0].shape[0] != self.input_width:
            problems.append(f"decoder input width {self.weights[0].shape[0]} != expected {self.input_width}")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (w.shape[1],):
                problems.append(f"decoder layer {k}: bias shape {b.shape} does not match {w.shape}")
            if k + 1 < len(self.weights) and self.weights[k + 1].shape[0] != w.shape[1]:
                problems.append(f"decoder layer {k}: output width does not chain")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                problems.append(f"decoder layer {k}: non-finite parameter")
        if self.weights[-1].shape[1] != 3:
            problems.append("decoder output width must be 3")
        return problems

    def copy(self):
        return replace(self, weights=[w.copy() for w in self.weights], biases=[b.copy() for b in self.biases])

    def inputs(self, f, t, x, y):
        """Decoder input rows for features ``f`` and normalized coordinates."""
        f = np.asarray(f, dtype=np.float64)
        if self.use_position:
            n = len(f)
            cols = [np.broadcast_to(np.asarray(c, dtype=np.float64).reshape(-1), (n,))[:, None]
                    for c in (t, x, y)]
            raw = np.concatenate([f] + cols, axis=1)
        else:
            raw = f
        if self.use_freq:
            return raw, freq_encode(raw, self.n_freq, self.include_raw)
        return raw, raw

    def forward(self, enc, keep=False):
        h = enc
        acts = [enc]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if k < last:
                h = np.maximum(z, 0.0)
            else:
                h = 1.0 / (1.0 + np.exp(-z))
            if keep:
                acts.append(h)
        return (h, acts) if keep else h

    def backward(self, acts, dout, need_input=True):
        """Backprop ``dL/d(output)``; returns (weight grads, bias grads, dL/d(input))."""
        gw = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        y = acts[-1]
        dz = dout * y * (1.0 - y)
        for k in range(len(self.weights) - 1, -1, -1):
            h_in = acts[k]
            gw[k] = h_in.T @ dz
            gb[k] = dz.sum(axis=0)
            if k == 0 and not need_input:
                return gw, gb, None
            dh = dz @ self.weights[k].T
            if k > 0:
                dz = dh * (acts[k] > 0)
        return gw, gb, dh


def normalize_coords(t, x, y, n_frames, height, width):
    """Map frame index and pixel coordinates to [-1, 1]."""
    tn = 2.0 * np.asarray(t, dtype=np.float64) / max(n_frames - 1, 1) - 1.0
    xn = 2.0 * np.asarray(x, dtype=np.float64) / width - 1.0
    yn = 2.0 * np.asarray(y, dtype=np.float64) / height - 1.0
    return tn, xn, yn


def interpolate_feature(codes, node_ids, weights):
    """Barycentric blend of node codes: ``sum_k weights[:, k] * codes[node_ids[:, k]]``."""
    codes = np.asarray(codes, dtype=np.float64)
    ids = np.asarray(node_ids).reshape(-1, 3)
    w = np.asarray(weights, dtype=np.float64).reshape(-1, 3)
    return w[:, 0:1] * codes[ids[:, 0]] + w[:, 1:2] * codes[ids[:, 1]] + w[:, 2:3] * codes[ids[:, 2]]


def decode(f, t_norm, x_norm, y_norm, params):
    """RGB in (0, 1) for features and normalized coordinates."""
    f = np.atleast_2d(np.asarray(f, dtype=np.float64))
    _, enc = params.inputs(f, t_norm, x_norm, y_norm)
    return params.forward(enc)


# -- training data ---------------------------------------------------------------

@dataclass
class SampleTable:
    """Every training pixel with its layer, triangle nodes and barycentric weights.

    ``node_ids`` index the concatenated code table of all layers.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    layer: np.ndarray
    node_ids: np.ndarray  # (N, 3)
    weights: np.ndarray  # (N, 3)
    target: np.ndarray  # (N, 3)
    norm: np.ndarray = None  # (N, 3) normalized (t, x, y)

    def __len__(self):
        return len(self.t)

    def subset(self, idx):
        return SampleTable(self.t[idx], self.x[idx], self.y[idx], self.layer[idx], self.node_ids[idx],
                           self.weights[idx], self.target[idx], self.norm[idx])


def pixel_samples(rep, t, pix, layer_index, offsets):
    """Node ids (global) and weights for pixels ``pix`` of one layer at frame ``t``."""
    ids, w = rep.mesh(layer_index, t).weights(pix, extend=True)
    return ids + offsets[layer_index], w


def build_sample_table(rep, frames, frame_indices=None, pixel_mask=None):
    """Tabulate training pixels of ``frames`` (n, h, w, 3) with their layer assignment."""
    n, h, w = rep.n_frames, rep.height, rep.width
    offsets = rep.code_offsets()
    parts = []
    yy, xx = np.mgrid[0:h, 0:w]
    frame_indices = range(n) if frame_indices is None else frame_indices
    for t in frame_indices:
        owner = np.full((h, w), -1, dtype=np.int64)
        for i, m in enumerate(rep.masks):
            owner[m.mask_at(t)] = i
        if pixel_mask is not None:
            owner[~pixel_mask] = -1
        for i in range(len(rep.layers)):
            sel = owner == i
            if not sel.any():
                continue
            pix = np.stack([xx[sel], yy[sel]], axis=1).astype(np.float64)
            ids, wts = pixel_samples(rep, t, pix, i, offsets)
            parts.append((np.full(len(pix), t), pix[:, 0], pix[:, 1], np.full(len(pix), i), ids, wts,
                          frames[t][sel]))
    if not parts:
        raise ValueError("no training pixels")
    cols = list(zip(*parts))
    table = SampleTable(*(np.concatenate(c) for c in cols))
    tn, xn, yn = normalize_coords(table.t, table.x, table.y, n, h, w)
    table.norm = np.stack([tn, xn, yn], axis=1)
    return table


# -- loss and optimizer ----------------------------------------------------------

def loss_and_grads(batch, codes, params, need_decoder=True):
    """Mean squared RGB error of a batch and its gradients.

    Returns
    -------
    loss : float
        ``mean_i ||I_i - I_hat_i||^2``.
    grads : dict
        ``"codes"`` (same shape as ``codes``; rows outside the batch's
        triangles are exactly zero), ``"weights"`` and ``"biases"`` lists.
    """
    f = interpolate_feature(codes, batch.node_ids, batch.weights)
    tn, xn, yn = batch.norm[:, 0], batch.norm[:, 1], batch.norm[:, 2]
    raw, enc = params.inputs(f, tn, xn, yn)
    out, acts = params.forward(enc, keep=True)
    diff = out - batch.target
    b = len(diff)
    loss = float((diff * diff).sum() / b)
    gw, gb, genc = params.backward(acts, 2.0 * diff / b)
    c = codes.shape[1]
    if params.use_freq:
        gf = freq_encode_backward(raw, genc, params.n_freq, params.include_raw, n_components=c,
                                  encoded=enc)
    else:
        gf = genc[:, :c]
    gcodes = np.zeros_like(codes)
    for k in range(3):
        np.add.at(gcodes, batch.node_ids[:, k], batch.weights[:, k:k + 1] * gf)
    grads = {"codes": gcodes}
    if need_decoder:
        grads["weights"] = gw
        grads["biases"] = gb
    return loss, grads


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0

    @classmethod
    def zeros_like(cls, arrays):
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], 0)


def adam_step(params, grads, state, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, masks=None):
    """In-place bias-corrected Adam update of a list of arrays.

    ``masks`` optionally restricts each update to selected rows (moments of
    frozen rows are left untouched).
    """
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    for k, (p, g) in enumerate(zip(params, grads)):
        m, v = state.m[k], state.v[k]
        if masks is not None and masks[k] is not None:
            rows = masks[k]
            m[rows] = beta1 * m[rows] + (1.0 - beta1) * g[rows]
            v[rows] = beta2 * v[rows] + (1.0 - beta2) * g[rows] * g[rows]
            p[rows] -= lr * (m[rows] / bc1) / (np.sqrt(v[rows] / bc2) + eps)
            continue
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, state


def psnr_from_loss(loss):
    mse = loss / 3.0
    return 99.0 if mse <= 0 else min(99.0, 10.0 * math.log10(1.0 / mse))


@dataclass
class FitResult:
    codes: np.ndarray
    decoder: DecoderParams
    losses: list = field(default_factory=list)


def optimize(table, codes, decoder, config, trainable_rows=None, train_decoder=True, rng=None,
             batch_size=None, steps=None, lr=None):
    """Adam over codes (optionally only ``trainable_rows``) and optionally the decoder.

    Returns the loss curve; ``codes`` and ``decoder`` are updated in place.
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    batch_size = batch_size or config.batch_size
    steps = config.steps if steps is None else steps
    lr = config.learning_rate if lr is None else lr
    params = [codes]
    masks = [trainable_rows]
    if train_decoder:
        params += decoder.weights + decoder.biases
        masks += [None] * (2 * decoder.n_layers)
    state = AdamState.zeros_like(params)
    losses = []
    n = len(table)
    full = batch_size >= n
    for step in range(steps):
        batch = table if full else table.subset(rng.integers(0, n, size=batch_size))
        loss, grads = loss_and_grads(batch, codes, decoder, need_decoder=train_decoder)
        if not math.isfinite(loss):
            raise NonFiniteLossError(f"non-finite loss at step {step}", step=step, batch=batch)
        g = [grads["codes"]]
        if train_decoder:
            g += grads["weights"] + grads["biases"]
        adam_step(params, g, state, lr, config.beta1, config.beta2, config.eps, masks)
        losses.append(loss)
        if config.log_every and step % config.log_every == 0:
            log.info("step %d loss %.6f psnr %.2f", step, loss, psnr_from_loss(loss))
    return losses


def _f32(a):
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def fit(video, proxy_layers, config=None, masks=None, meta_extra=None):
    """Fit codes and decoder to a video.

    Parameters
    ----------
    video : FrameSequence
    proxy_layers : list of ProxyLayer
        One per mask track, in the same order.
    config : TrainConfig
    masks : list of LayerMaskTrack, optional
        Defaults to ``video.layers``.

    Returns
    -------
    representation : Representation
        Positions, codes and decoder are rounded to float32 so the saved
        artifact renders bit-identically.
    losses : list of float
    """
    config = config or TrainConfig()
    masks = video.layers if masks is None else masks
    rng = np.random.default_rng(config.seed)
    layers = []
    for layer in proxy_layers:
        layer = replace(layer, positions=_f32(layer.positions), confidence=_f32(layer.confidence))
        layers.append(layer)
    decoder = DecoderParams.init(config.code_dim, config.hidden, config.n_layers, config.n_freq, rng,
                                 include_raw=config.include_raw,
                                 use_position=not config.disable_position_input,
                                 use_freq=not config.disable_freq_encoding)
    codes = [rng.uniform(-config.code_init, config.code_init, size=(l.n_nodes, config.code_dim))
             for l in layers]
    n, h, w = video.frames.shape[:3]
    meta = {"height": h, "width": w, "n_frames": n, "format_version": FORMAT_VERSION}
    if meta_extra:
        meta.update(meta_extra)
    rep = Representation(layers, codes, decoder, list(masks), meta)
    table = build_sample_table(rep, video.frames)
    all_codes = rep.all_codes()
    losses = optimize(table, all_codes, decoder, config, rng=rng)
    offsets = rep.code_offsets()
    rep.codes = [_f32(all_codes[offsets[i]:offsets[i + 1]]) for i in range(len(layers))]
    rep.decoder = replace(decoder, weights=[_f32(x) for x in decoder.weights],
                          biases=[_f32(x) for x in decoder.biases])
    rep.meta["final_loss"] = float(np.mean(losses[-50:])) if losses else None
    return rep, losses


def write_loss_csv(path, losses):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["step", "loss", "psnr_estimate"])
        for i, l in enumerate(losses):
            wr.writerow([i, repr(float(l)), f"{psnr_from_loss(l):.4f}"])
