"""A small post-norm self-attention encoder with a hand-written backward pass.

Parameters live in a flat ``dict`` of float64 arrays so the optimizer and the
checkpoint writer can treat every tensor the same way.  Layer ``i`` owns the
keys ``layers.{i}.*``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

__all__ = [
    "EncoderConfig",
    "Activation",
    "BadConfig",
    "TooLong",
    "MaskLengthMismatch",
    "init_params",
    "forward",
    "backward",
    "param_shapes",
]

EncoderParams = Dict[str, np.ndarray]

LN_EPS = 1e-12
_GELU_C = np.sqrt(2.0 / np.pi)


class BadConfig(ValueError):
    pass


class TooLong(ValueError):
    pass


class MaskLengthMismatch(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 256
    max_len: int = 128
    dropout_rate: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        for name in ("vocab_size", "d_model", "n_heads", "n_layers", "d_ff", "max_len"):
            if getattr(self, name) < 1:
                raise BadConfig(f"{name} must be positive")
        if self.d_model % self.n_heads:
            raise BadConfig("d_model must be divisible by n_heads")
        if self.max_len < 3:
            raise BadConfig("max_len must be at least 3")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise BadConfig("dropout_rate must lie in [0, 1)")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


_LAYER_KEYS = (
    "q_w", "q_b", "k_w", "k_b", "v_w", "v_b", "o_w", "o_b",
    "ln1_g", "ln1_b", "ff1_w", "ff1_b", "ff2_w", "ff2_b", "ln2_g", "ln2_b",
)


def param_shapes(config: EncoderConfig) -> Dict[str, Tuple[int, ...]]:
    d, f = config.d_model, config.d_ff
    shapes = {"tok_emb": (config.vocab_size, d), "pos_emb": (config.max_len, d)}
    for i in range(config.n_layers):
        p = f"layers.{i}."
        for n in "qkvo":
            shapes[p + f"{n}_w"] = (d, d)
            shapes[p + f"{n}_b"] = (d,)
        shapes[p + "ln1_g"] = (d,)
        shapes[p + "ln1_b"] = (d,)
        shapes[p + "ff1_w"] = (d, f)
        shapes[p + "ff1_b"] = (f,)
        shapes[p + "ff2_w"] = (f, d)
        shapes[p + "ff2_b"] = (d,)
        shapes[p + "ln2_g"] = (d,)
        shapes[p + "ln2_b"] = (d,)
    return shapes


def init_params(config: EncoderConfig) -> EncoderParams:
    """Gaussian weights scaled by 1/sqrt(fan_in); embeddings use fan_in = d_model.
    Biases start at 0 and layer-norm gains at 1."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    params = {}
    for name, shape in param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf.endswith("_g"):
            params[name] = np.ones(shape)
        elif leaf.endswith("_b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = shape[1] if leaf.endswith("emb") else shape[0]
            params[name] = rng.standard_normal(shape) / np.sqrt(fan_in)
    return params


@dataclass
class Activation:
    """Forward result plus everything backward needs."""

    output: np.ndarray  # (batch, seq, d_model), or (seq, d_model) for unbatched input
    ids: np.ndarray
    mask: np.ndarray
    layers: List[dict] = field(repr=False)
    emb_drop: Optional[np.ndarray] = field(repr=False)
    batched: bool = True
    train_mode: bool = False


def _layer_norm(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(-1, keepdims=True) + LN_EPS)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd)


def _layer_norm_back(dy, g, cache):
    xhat, rstd = cache
    dg = (dy * xhat).sum(axis=(0, 1))
    db = dy.sum(axis=(0, 1))
    dxhat = dy * g
    n = xhat.shape[-1]
    dx = rstd / n * (
        n * dxhat - dxhat.sum(-1, keepdims=True) - xhat * (dxhat * xhat).sum(-1, keepdims=True)
    )
    return dx, dg, db


def _gelu(u):
    t = np.tanh(_GELU_C * (u + 0.044715 * u ** 3))
    return 0.5 * u * (1.0 + t), t


def _gelu_back(u, t):
    return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * u * u)


def _split_heads(x, h):
    b, s, d = x.shape
    return x.reshape(b, s, h, d // h).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, s, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, s, h * dh)


def _dropout_mask(rng, shape, rate):
    if rate <= 0.0:
        return None
    return (rng.random(shape) >= rate) / (1.0 - rate)


def forward(
    subword_ids,
    attention_mask,
    params: EncoderParams,
    config: EncoderConfig,
    train_mode: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Activation:
    """Run the encoder on one sequence ``(seq,)`` or a padded batch ``(batch, seq)``.

    Keys where ``attention_mask`` is false get -inf scores before the softmax.
    Dropout is applied to the embeddings and to both sublayer outputs, only in
    ``train_mode``; its masks are kept for the backward pass.
    """
    ids = np.asarray(subword_ids, dtype=np.int64)
    mask = np.asarray(attention_mask, dtype=bool)
    if mask.shape != ids.shape:
        raise MaskLengthMismatch(f"mask shape {mask.shape} != ids shape {ids.shape}")
    batched = ids.ndim == 2
    if not batched:
        ids, mask = ids[None], mask[None]
    bsz, seq = ids.shape
    if seq > config.max_len:
        raise TooLong(f"sequence of {seq} exceeds max_len {config.max_len}")
    if not mask.any(axis=1).all():
        raise MaskLengthMismatch("every sequence needs at least one unmasked position")

    drop = config.dropout_rate if train_mode else 0.0
    if drop > 0.0 and rng is None:
        rng = np.random.default_rng(config.seed)

    h = config.n_heads
    scale = 1.0 / np.sqrt(config.head_dim)
    key_bias = np.where(mask, 0.0, -np.inf)[:, None, None, :]

    x = params["tok_emb"][ids] + params["pos_emb"][:seq]
    emb_drop = _dropout_mask(rng, x.shape, drop)
    if emb_drop is not None:
        x = x * emb_drop

    caches = []
    for i in range(config.n_layers):
        p = f"layers.{i}."
        c = {"x": x}
        q = _split_heads(x @ params[p + "q_w"] + params[p + "q_b"], h)
        k = _split_heads(x @ params[p + "k_w"] + params[p + "k_b"], h)
        v = _split_heads(x @ params[p + "v_w"] + params[p + "v_b"], h)
        scores = q @ k.transpose(0, 1, 3, 2) * scale + key_bias
        scores = scores - scores.max(-1, keepdims=True)
        probs = np.exp(scores)
        probs /= probs.sum(-1, keepdims=True)
        ctx = _merge_heads(probs @ v)
        attn = ctx @ params[p + "o_w"] + params[p + "o_b"]
        c["drop1"] = _dropout_mask(rng, attn.shape, drop)
        if c["drop1"] is not None:
            attn = attn * c["drop1"]
        h1, c["ln1"] = _layer_norm(x + attn, params[p + "ln1_g"], params[p + "ln1_b"])

        u = h1 @ params[p + "ff1_w"] + params[p + "ff1_b"]
        f, t = _gelu(u)
        o = f @ params[p + "ff2_w"] + params[p + "ff2_b"]
        c["drop2"] = _dropout_mask(rng, o.shape, drop)
        if c["drop2"] is not None:
            o = o * c["drop2"]
        x, c["ln2"] = _layer_norm(h1 + o, params[p + "ln2_g"], params[p + "ln2_b"])
        c.update(q=q, k=k, v=v, probs=probs, ctx=ctx, h1=h1, u=u, f=f, t=t)
        caches.append(c)

    return Activation(
        output=x if batched else x[0],
        ids=ids,
        mask=mask,
        layers=caches,
        emb_drop=emb_drop,
        batched=batched,
        train_mode=train_mode,
    )


def backward(
    activation: Activation,
    output_gradient: np.ndarray,
    params: EncoderParams,
    config: EncoderConfig,
) -> Tuple[EncoderParams, np.ndarray]:
    """Reverse-mode pass through :func:`forward`.

    Returns ``(grads, grad_embeddings)``: one gradient per parameter name, and
    the gradient with respect to the summed token + position embeddings.
    """
    dx = np.asarray(output_gradient, dtype=np.float64)
    if not activation.batched:
        dx = dx[None]
    bsz, seq = activation.ids.shape
    if dx.shape != (bsz, seq, config.d_model):
        raise ShapeMismatch(f"output gradient {dx.shape} != {(bsz, seq, config.d_model)}")

    h = config.n_heads
    scale = 1.0 / np.sqrt(config.head_dim)
    grads = {name: np.zeros_like(arr) for name, arr in params.items()}

    for i in range(config.n_layers - 1, -1, -1):
        p = f"layers.{i}."
        c = activation.layers[i]
        # second sublayer
        dsum, grads[p + "ln2_g"], grads[p + "ln2_b"] = _layer_norm_back(dx, params[p + "ln2_g"], c["ln2"])
        do = dsum if c["drop2"] is None else dsum * c["drop2"]
        grads[p + "ff2_w"] = np.einsum("bsf,bsd->fd", c["f"], do)
        grads[p + "ff2_b"] = do.sum(axis=(0, 1))
        du = (do @ params[p + "ff2_w"].T) * _gelu_back(c["u"], c["t"])
        grads[p + "ff1_w"] = np.einsum("bsd,bsf->df", c["h1"], du)
        grads[p + "ff1_b"] = du.sum(axis=(0, 1))
        dh1 = dsum + du @ params[p + "ff1_w"].T
        # first sublayer
        dsum, grads[p + "ln1_g"], grads[p + "ln1_b"] = _layer_norm_back(dh1, params[p + "ln1_g"], c["ln1"])
        dattn = dsum if c["drop1"] is None else dsum * c["drop1"]
        grads[p + "o_w"] = np.einsum("bsd,bse->de", c["ctx"], dattn)
        grads[p + "o_b"] = dattn.sum(axis=(0, 1))
        dctx = _split_heads(dattn @ params[p + "o_w"].T, h)
        probs = c["probs"]
        dprobs = dctx @ c["v"].transpose(0, 1, 3, 2)
        dv = probs.transpose(0, 1, 3, 2) @ dctx
        dscores = probs * (dprobs - (dprobs * probs).sum(-1, keepdims=True)) * scale
        dq = dscores @ c["k"]
        dk = dscores.transpose(0, 1, 3, 2) @ c["q"]
        x_in = c["x"]
        dx = dsum
        for name, dproj in (("q", dq), ("k", dk), ("v", dv)):
            dproj = _merge_heads(dproj)
            grads[p + f"{name}_w"] = np.einsum("bsd,bse->de", x_in, dproj)
            grads[p + f"{name}_b"] = dproj.sum(axis=(0, 1))
            dx = dx + dproj @ params[p + f"{name}_w"].T

    if activation.emb_drop is not None:
        dx = dx * activation.emb_drop
    np.add.at(grads["tok_emb"], activation.ids, dx)
    grads["pos_emb"][:seq] = dx.sum(axis=0)
    return grads, (dx if activation.batched else dx[0])
