"""Dual-domain transformer encoder with hand-derived gradients.

Inputs are (B, L, C) pooled time and frequency matrices. Each domain is
projected to ``d_model``, the projections are summed with a sinusoidal
position code and passed through ``n_layers`` post-norm encoder layers.
Two linear heads reconstruct the inputs; an optional mean-pool + linear head
classifies.

Parameters live in an insertion-ordered dict so checkpoints can write them
in declaration order.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np
from scipy.special import erf

from .errors import ValidationError

DOMAINS = ("both", "time", "freq")
_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class ModelConfig:
    seq_len: int = 256
    c_in: int = 32
    d_model: int = 128
    n_layers: int = 6
    n_heads: int = 8
    ffn_dim: int = 512
    n_classes: int | None = None
    dropout: float = 0.0
    domains: str = "both"
    ln_eps: float = 1e-5

    def __post_init__(self) -> None:
        if self.d_model % self.n_heads:
            raise ValidationError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.domains not in DOMAINS:
            raise ValidationError(f"domains must be one of {DOMAINS}, got {self.domains!r}")
        if min(self.seq_len, self.c_in, self.d_model, self.n_layers, self.ffn_dim) < 1:
            raise ValidationError("model sizes must be positive")
        if self.n_classes is not None and self.n_classes < 2:
            raise ValidationError(f"n_classes must be >= 2, got {self.n_classes}")
        if not 0 <= self.dropout < 1:
            raise ValidationError(f"dropout must lie in [0, 1), got {self.dropout}")

    @property
    def use_time(self) -> bool:
        return self.domains in ("both", "time")

    @property
    def use_freq(self) -> bool:
        return self.domains in ("both", "freq")

    def to_dict(self) -> dict:
        return asdict(self)


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    c, d, f = cfg.c_in, cfg.d_model, cfg.ffn_dim
    shapes: dict[str, tuple[int, ...]] = {}
    if cfg.use_time:
        shapes["embed.time.weight"] = (c, d)
        shapes["embed.time.bias"] = (d,)
    if cfg.use_freq:
        shapes["embed.freq.weight"] = (c, d)
        shapes["embed.freq.bias"] = (d,)
    for i in range(cfg.n_layers):
        p = f"layers.{i}."
        for proj in "qkvo":
            shapes[p + f"attn.{proj}.weight"] = (d, d)
            shapes[p + f"attn.{proj}.bias"] = (d,)
        shapes[p + "norm1.scale"] = (d,)
        shapes[p + "norm1.offset"] = (d,)
        shapes[p + "ffn.in.weight"] = (d, f)
        shapes[p + "ffn.in.bias"] = (f,)
        shapes[p + "ffn.out.weight"] = (f, d)
        shapes[p + "ffn.out.bias"] = (d,)
        shapes[p + "norm2.scale"] = (d,)
        shapes[p + "norm2.offset"] = (d,)
    if cfg.use_time:
        shapes["head.time.weight"] = (d, c)
        shapes["head.time.bias"] = (c,)
    if cfg.use_freq:
        shapes["head.freq.weight"] = (d, c)
        shapes["head.freq.bias"] = (c,)
    if cfg.n_classes is not None:
        shapes["classifier.weight"] = (d, cfg.n_classes)
        shapes["classifier.bias"] = (cfg.n_classes,)
    return shapes


CLASSIFIER_PARAMS = ("classifier.weight", "classifier.bias")


def init_params(cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32) -> dict[str, np.ndarray]:
    """Xavier-uniform weights, zero biases/offsets, unit layer-norm scales."""
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".weight"):
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
        elif name.endswith(".scale"):
            params[name] = np.ones(shape, dtype=dtype)
        else:
            params[name] = np.zeros(shape, dtype=dtype)
    return params


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    rates = np.exp(-np.log(10000.0) * (np.arange(0, dim, 2) / dim))
    pe = np.zeros((length, dim))
    pe[:, 0::2] = np.sin(pos * rates)
    pe[:, 1::2] = np.cos(pos * rates[: dim // 2])
    return pe


# --------------------------------------------------------------------------- primitives


def _linear_backward(x, w, dy, grads, wname, bname, need_dx=True):
    flat_x = x.reshape(-1, x.shape[-1])
    flat_dy = dy.reshape(-1, dy.shape[-1])
    grads[wname] = grads.get(wname, 0) + flat_x.T @ flat_dy
    grads[bname] = grads.get(bname, 0) + flat_dy.sum(axis=0)
    return dy @ w.T if need_dx else None


def _layer_norm(x, scale, offset, eps):
    # statistics in float64 regardless of storage precision
    x64 = x.astype(np.float64)
    mu = x64.mean(axis=-1, keepdims=True)
    var = x64.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((x64 - mu) * inv).astype(x.dtype)
    return xhat * scale + offset, (xhat, inv.astype(x.dtype))


def _layer_norm_backward(dy, cache, scale, grads, sname, oname):
    xhat, inv = cache
    grads[sname] = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    grads[oname] = dy.reshape(-1, dy.shape[-1]).sum(axis=0)
    dxhat = dy * scale
    return inv * (
        dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def _gelu_grad(x):
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def _softmax(s):
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def masked_recon_loss(t_pred, f_pred, t_target, f_target, mask_time, mask_freq, shared_n: bool = False):
    """Masked squared error, per domain averaged over masked positions and features.

    Positions outside the masks never enter the sum. Returns
    ``(loss, d_t_pred, d_f_pred)`` where the gradients are exactly zero off
    the mask. Either domain may be ``None``.
    """
    ref = t_pred if t_pred is not None else f_pred
    batch = ref.shape[0]
    mask_time = np.asarray(mask_time, dtype=bool)
    mask_freq = np.asarray(mask_freq, dtype=bool)
    n_time = mask_time.sum(axis=1)
    n_freq = n_time if shared_n else mask_freq.sum(axis=1)
    loss = 0.0
    grads = []
    for pred, target, mask, n in ((t_pred, t_target, mask_time, n_time), (f_pred, f_target, mask_freq, n_freq)):
        if pred is None:
            grads.append(None)
            continue
        if pred.shape != target.shape or pred.shape[:2] != mask.shape:
            raise ValidationError(f"loss shape mismatch: pred {pred.shape}, target {target.shape}, mask {mask.shape}")
        if np.any(n == 0):
            raise ValidationError("every item needs at least one masked position")
        b_idx, pos = np.nonzero(mask)
        diff = pred[b_idx, pos].astype(np.float64) - target[b_idx, pos].astype(np.float64)
        denom = (n[b_idx] * pred.shape[-1]).astype(np.float64)[:, None]
        loss += float(np.sum(diff * diff / denom)) / batch
        g = np.zeros(pred.shape, dtype=pred.dtype)
        g[b_idx, pos] = (2.0 * diff / denom / batch).astype(pred.dtype)
        grads.append(g)
    return loss, grads[0], grads[1]


def cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    labels = np.asarray(labels)
    n = labels.shape[0]
    loss = -float(logp[np.arange(n), labels].mean())
    d = np.exp(logp)
    d[np.arange(n), labels] -= 1.0
    return loss, (d / n).astype(logits.dtype)


def softmax(logits):
    return _softmax(np.asarray(logits, dtype=np.float64))


# --------------------------------------------------------------------------- model


class AdaptModel:
    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray] | None = None, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        if params is None:
            params = init_params(config, np.random.default_rng(seed), self.dtype)
        expected = param_shapes(config)
        if list(params) != list(expected):
            raise ValidationError(f"parameter names do not match config: {sorted(set(params) ^ set(expected))}")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ValidationError(f"{name}: shape {params[name].shape} != expected {shape}")
        self.params = {k: np.asarray(v, dtype=self.dtype) for k, v in params.items()}
        self._pe = sinusoidal_positions(config.seq_len, config.d_model).astype(self.dtype)

    # ---------------------------------------------------------------- forward

    def _check_input(self, x, name):
        cfg = self.config
        if x is None:
            return None
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 3 or x.shape[1:] != (cfg.seq_len, cfg.c_in):
            raise ValidationError(f"{name} must have shape (B, {cfg.seq_len}, {cfg.c_in}), got {x.shape}")
        return x

    def embed(self, x_time, x_freq):
        p, cfg = self.params, self.config
        x_time = self._check_input(x_time, "input_time") if cfg.use_time else None
        x_freq = self._check_input(x_freq, "input_freq") if cfg.use_freq else None
        if x_time is not None and x_freq is not None and x_time.shape[0] != x_freq.shape[0]:
            raise ValidationError("time and frequency batches differ in size")
        out = self._pe
        if x_time is not None:
            out = out + x_time @ p["embed.time.weight"] + p["embed.time.bias"]
        if x_freq is not None:
            out = out + x_freq @ p["embed.freq.weight"] + p["embed.freq.bias"]
        return out

    def _attention(self, x, i):
        p = self.params
        pre = f"layers.{i}.attn."
        b, length, d = x.shape
        h = self.config.n_heads
        dh = d // h
        q = (x @ p[pre + "q.weight"] + p[pre + "q.bias"]).reshape(b, length, h, dh).transpose(0, 2, 1, 3)
        k = (x @ p[pre + "k.weight"] + p[pre + "k.bias"]).reshape(b, length, h, dh).transpose(0, 2, 1, 3)
        v = (x @ p[pre + "v.weight"] + p[pre + "v.bias"]).reshape(b, length, h, dh).transpose(0, 2, 1, 3)
        scale = self.dtype.type(1.0 / np.sqrt(dh))
        attn = _softmax((q @ k.transpose(0, 1, 3, 2)) * scale)
        ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(b, length, d)
        out = ctx @ p[pre + "o.weight"] + p[pre + "o.bias"]
        return out, {"x": x, "q": q, "k": k, "v": v, "attn": attn, "ctx": ctx, "scale": scale}

    def _attention_backward(self, dout, c, i, grads):
        p = self.params
        pre = f"layers.{i}.attn."
        x = c["x"]
        b, length, d = x.shape
        h = self.config.n_heads
        dh = d // h
        dctx = _linear_backward(c["ctx"], p[pre + "o.weight"], dout, grads, pre + "o.weight", pre + "o.bias")
        dctx = dctx.reshape(b, length, h, dh).transpose(0, 2, 1, 3)
        attn = c["attn"]
        dattn = dctx @ c["v"].transpose(0, 1, 3, 2)
        dv = attn.transpose(0, 1, 3, 2) @ dctx
        ds = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True)) * c["scale"]
        dq = ds @ c["k"]
        dk = ds.transpose(0, 1, 3, 2) @ c["q"]

        def merge(t):
            return t.transpose(0, 2, 1, 3).reshape(b, length, d)

        dx = _linear_backward(x, p[pre + "q.weight"], merge(dq), grads, pre + "q.weight", pre + "q.bias")
        dx = dx + _linear_backward(x, p[pre + "k.weight"], merge(dk), grads, pre + "k.weight", pre + "k.bias")
        dx = dx + _linear_backward(x, p[pre + "v.weight"], merge(dv), grads, pre + "v.weight", pre + "v.bias")
        return dx

    def _dropout(self, x, rng):
        rate = self.config.dropout
        if rate == 0 or rng is None:
            return x, None
        keep = (rng.random(x.shape) >= rate).astype(self.dtype) / self.dtype.type(1 - rate)
        return x * keep, keep

    def encode(self, e_in, rng: np.random.Generator | None = None, keep_cache: bool = False):
        """Run the encoder stack. Dropout is active only when ``rng`` is given.

        Returns ``E_o`` or ``(E_o, caches)`` when ``keep_cache`` is set.
        """
        p, eps = self.params, self.config.ln_eps
        x = np.asarray(e_in, dtype=self.dtype)
        caches = []
        for i in range(self.config.n_layers):
            pre = f"layers.{i}."
            a, attn_cache = self._attention(x, i)
            a, keep_a = self._dropout(a, rng)
            h, ln1 = _layer_norm(x + a, p[pre + "norm1.scale"], p[pre + "norm1.offset"], eps)
            u = h @ p[pre + "ffn.in.weight"] + p[pre + "ffn.in.bias"]
            g = _gelu(u)
            f = g @ p[pre + "ffn.out.weight"] + p[pre + "ffn.out.bias"]
            f, keep_f = self._dropout(f, rng)
            out, ln2 = _layer_norm(h + f, p[pre + "norm2.scale"], p[pre + "norm2.offset"], eps)
            if keep_cache:
                caches.append(
                    {"attn": attn_cache, "keep_a": keep_a, "ln1": ln1, "h": h, "u": u, "g": g, "keep_f": keep_f, "ln2": ln2}
                )
            x = out
        return (x, caches) if keep_cache else x

    def _encode_backward(self, d_out, caches, grads):
        p = self.params
        for i in reversed(range(self.config.n_layers)):
            c = caches[i]
            pre = f"layers.{i}."
            d_res2 = _layer_norm_backward(d_out, c["ln2"], p[pre + "norm2.scale"], grads, pre + "norm2.scale", pre + "norm2.offset")
            df = d_res2 if c["keep_f"] is None else d_res2 * c["keep_f"]
            dg = _linear_backward(c["g"], p[pre + "ffn.out.weight"], df, grads, pre + "ffn.out.weight", pre + "ffn.out.bias")
            du = dg * _gelu_grad(c["u"])
            dh = d_res2 + _linear_backward(c["h"], p[pre + "ffn.in.weight"], du, grads, pre + "ffn.in.weight", pre + "ffn.in.bias")
            d_res1 = _layer_norm_backward(dh, c["ln1"], p[pre + "norm1.scale"], grads, pre + "norm1.scale", pre + "norm1.offset")
            da = d_res1 if c["keep_a"] is None else d_res1 * c["keep_a"]
            d_out = d_res1 + self._attention_backward(da, c["attn"], i, grads)
        return d_out

    def reconstruct(self, e_out):
        p, cfg = self.params, self.config
        t = e_out @ p["head.time.weight"] + p["head.time.bias"] if cfg.use_time else None
        f = e_out @ p["head.freq.weight"] + p["head.freq.bias"] if cfg.use_freq else None
        return t, f

    def classify(self, e_out):
        if self.config.n_classes is None:
            raise ValidationError("model has no classifier head (n_classes unset)")
        pooled = e_out.mean(axis=1)
        return pooled @ self.params["classifier.weight"] + self.params["classifier.bias"]

    def forward(self, x_time, x_freq, rng=None):
        e_out = self.encode(self.embed(x_time, x_freq), rng)
        return e_out

    # ---------------------------------------------------------------- losses + gradients

    def _embed_backward(self, d_e, x_time, x_freq, grads):
        cfg = self.config
        if cfg.use_time:
            _linear_backward(x_time, self.params["embed.time.weight"], d_e, grads, "embed.time.weight", "embed.time.bias", need_dx=False)
        if cfg.use_freq:
            _linear_backward(x_freq, self.params["embed.freq.weight"], d_e, grads, "embed.freq.weight", "embed.freq.bias", need_dx=False)

    def _inputs(self, x_time, x_freq):
        cfg = self.config
        return (
            self._check_input(x_time, "input_time") if cfg.use_time else None,
            self._check_input(x_freq, "input_freq") if cfg.use_freq else None,
        )

    def recon_loss_and_grads(self, x_time, x_freq, t_target, f_target, mask_time, mask_freq, shared_n=False, rng=None):
        """Masked reconstruction loss and gradients for every parameter it touches."""
        x_time, x_freq = self._inputs(x_time, x_freq)
        e_out, caches = self.encode(self.embed(x_time, x_freq), rng, keep_cache=True)
        t_pred, f_pred = self.reconstruct(e_out)
        t_target = None if t_pred is None else np.asarray(t_target, dtype=self.dtype)
        f_target = None if f_pred is None else np.asarray(f_target, dtype=self.dtype)
        loss, dt, df = masked_recon_loss(t_pred, f_pred, t_target, f_target, mask_time, mask_freq, shared_n)
        grads: dict[str, np.ndarray] = {}
        d_e = np.zeros_like(e_out)
        if dt is not None:
            d_e += _linear_backward(e_out, self.params["head.time.weight"], dt, grads, "head.time.weight", "head.time.bias")
        if df is not None:
            d_e += _linear_backward(e_out, self.params["head.freq.weight"], df, grads, "head.freq.weight", "head.freq.bias")
        d_e = self._encode_backward(d_e, caches, grads)
        self._embed_backward(d_e, x_time, x_freq, grads)
        return loss, self._ordered(grads)

    def recon_loss(self, x_time, x_freq, t_target, f_target, mask_time, mask_freq, shared_n=False):
        t_pred, f_pred = self.reconstruct(self.forward(x_time, x_freq))
        t_target = None if t_pred is None else np.asarray(t_target, dtype=self.dtype)
        f_target = None if f_pred is None else np.asarray(f_target, dtype=self.dtype)
        return masked_recon_loss(t_pred, f_pred, t_target, f_target, mask_time, mask_freq, shared_n)[0]

    def classify_loss_and_grads(self, x_time, x_freq, labels, trainable: Iterable[str] | None = None, rng=None):
        """Cross-entropy and gradients.

        ``trainable`` restricted to the classifier head skips the encoder
        backward pass entirely, so frozen parameters get no gradient arrays.
        """
        x_time, x_freq = self._inputs(x_time, x_freq)
        trainable = set(self.params) if trainable is None else set(trainable)
        head_only = trainable <= set(CLASSIFIER_PARAMS)
        if head_only:
            e_out, caches = self.encode(self.embed(x_time, x_freq), rng), None
        else:
            e_out, caches = self.encode(self.embed(x_time, x_freq), rng, keep_cache=True)
        logits = self.classify(e_out)
        loss, dlogits = cross_entropy(logits, labels)
        grads: dict[str, np.ndarray] = {}
        pooled = e_out.mean(axis=1)
        dpooled = _linear_backward(pooled, self.params["classifier.weight"], dlogits, grads, *CLASSIFIER_PARAMS)
        if not head_only:
            d_e = np.broadcast_to(dpooled[:, None, :] / self.dtype.type(e_out.shape[1]), e_out.shape)
            d_e = self._encode_backward(d_e, caches, grads)
            self._embed_backward(d_e, x_time, x_freq, grads)
        return loss, {k: v for k, v in self._ordered(grads).items() if k in trainable}

    def predict(self, x_time, x_freq, batch_size: int = 256):
        out = []
        n = (np.shape(x_time) if x_time is not None else np.shape(x_freq))[0]
        for s in range(0, n, batch_size):
            xt = None if x_time is None else x_time[s : s + batch_size]
            xf = None if x_freq is None else x_freq[s : s + batch_size]
            out.append(self.classify(self.forward(xt, xf)))
        return np.concatenate(out, axis=0) if out else np.zeros((0, self.config.n_classes))

    def _ordered(self, grads):
        return {k: np.asarray(grads[k], dtype=self.dtype) for k in self.params if k in grads}

    # ---------------------------------------------------------------- utilities

    def with_classifier(self, n_classes: int, seed: int = 0) -> "AdaptModel":
        """Copy of this model with a freshly initialized classifier head."""
        cfg = ModelConfig(**{**self.config.to_dict(), "n_classes": n_classes})
        fresh = init_params(cfg, np.random.default_rng(seed), self.dtype)
        params = {k: (self.params[k].copy() if k in self.params and k not in CLASSIFIER_PARAMS else fresh[k]) for k in fresh}
        return AdaptModel(cfg, params, dtype=self.dtype)

    def copy(self) -> "AdaptModel":
        return AdaptModel(self.config, {k: v.copy() for k, v in self.params.items()}, dtype=self.dtype)
