"""Embedding -> projection -> stacked self-attention -> 11 conv/pool/FC heads.

Parameters live in a flat ``dict[str, ndarray]`` keyed by path names such as
``layers.0.ffn.W1`` or ``heads.joy.conv3.F``. ``embedding`` is frozen and never
receives a gradient.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import tensor_core as tc
from .labels import LABELS, NUM_LABELS

WEIGHT_SUFFIXES = ("W", "W_O", "W1", "W2", "F", "w")


@dataclass
class ModelConfig:
    num_layers: int = 3
    d_e: int = 30
    h: int = 2
    d_f: int = 64
    p_drop: float = 0.1
    l2_coeff: float = 0.001
    conv_widths: list[int] = field(default_factory=lambda: [3, 4, 5])
    filters_per_width: int = 32
    use_attention: bool = True
    use_nrc1: bool = False
    use_nrc2: bool = False
    nrc2_coeff: float = 0.4
    threshold: float = 0.5
    ln_eps: float = 1e-6

    def __post_init__(self):
        self.conv_widths = [int(k) for k in self.conv_widths]
        for name in ("num_layers", "d_e", "h", "d_f", "filters_per_width"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.conv_widths or min(self.conv_widths) <= 0:
            raise ValueError("conv_widths must be non-empty positive integers")
        if self.d_e % self.h:
            raise ValueError(f"d_e={self.d_e} is not divisible by h={self.h}")
        if not 0.0 <= self.p_drop < 1.0:
            raise ValueError("p_drop must be in [0, 1)")

    @property
    def max_width(self) -> int:
        return max(self.conv_widths)

    @property
    def pooled_dim(self) -> int:
        extra = NUM_LABELS if self.use_nrc1 else 0
        return len(self.conv_widths) * self.filters_per_width + extra

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def is_weight(name: str) -> bool:
    """Weight matrices take L2; biases, layer-norm terms and the frozen
    embedding do not."""
    return name != "embedding" and name.rsplit(".", 1)[-1] in WEIGHT_SUFFIXES


def param_shapes(config: ModelConfig, embed_dim: int) -> dict[str, tuple]:
    d, df = config.d_e, config.d_f
    shapes = {"proj.W": (embed_dim, d), "proj.b": (d,)}
    if config.use_attention:
        for l in range(config.num_layers):
            p = f"layers.{l}."
            shapes.update({
                p + "W": (d, 3 * d),
                p + "W_O": (d, d),
                p + "ln1.gain": (d,), p + "ln1.bias": (d,),
                p + "ffn.W1": (d, df), p + "ffn.b1": (df,),
                p + "ffn.W2": (df, d), p + "ffn.b2": (d,),
                p + "ln2.gain": (d,), p + "ln2.bias": (d,),
            })
    for label in LABELS:
        p = f"heads.{label}."
        for k in config.conv_widths:
            shapes[p + f"conv{k}.F"] = (k, d, config.filters_per_width)
            shapes[p + f"conv{k}.b"] = (config.filters_per_width,)
        shapes[p + "fc.w"] = (config.pooled_dim,)
        shapes[p + "fc.b"] = (1,)
    return shapes


def _fans(name, shape):
    if name.endswith(".F"):
        k, d, f = shape
        return k * d, f
    if len(shape) == 1:
        return shape[0], 1
    return shape[0], shape[1]


def init_params(config: ModelConfig, vocab_matrix, seed: int) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases, unit layer-norm gains."""
    vocab_matrix = tc.as_tensor(vocab_matrix)
    if np.any(vocab_matrix[0] != 0):
        raise ValueError("vocabulary row 0 must be the zero pad vector")
    rng = np.random.default_rng(seed)
    params = {"embedding": vocab_matrix.copy()}
    for name, shape in param_shapes(config, vocab_matrix.shape[1]).items():
        if is_weight(name):
            fan_in, fan_out = _fans(name, shape)
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-bound, bound, size=shape)
        elif name.endswith(".gain"):
            params[name] = np.ones(shape)
        else:
            params[name] = np.zeros(shape)
    return params


def trainable(params: dict) -> list[str]:
    return [k for k in params if k != "embedding"]


# -- attention block ---------------------------------------------------------

def _split_heads(X, h):
    B, n, d = X.shape
    return X.reshape(B, n, h, d // h).transpose(0, 2, 1, 3)


def _merge_heads(X):
    B, h, n, dh = X.shape
    return X.transpose(0, 2, 1, 3).reshape(B, n, h * dh)


def attention_block(X, lp: dict, mask, rng, training: bool, config: ModelConfig):
    """One self-attention layer: X <- LN(X + drop(MHA(X))); X <- LN(X + drop(FFN(X))).

    ``lp`` holds the layer's tensors without the ``layers.{l}.`` prefix.
    ``mask`` is [B, n] with 1 on real tokens.
    """
    d, h, p = config.d_e, config.h, config.p_drop
    qkv, c_qkv = tc.matmul(X, lp["W"])
    Q, K, V = (_split_heads(qkv[..., i * d:(i + 1) * d], h) for i in range(3))
    key_mask = np.asarray(mask, dtype=bool)[:, None, None, :]
    A, c_att = tc.scaled_dot_attention(Q, K, V, key_mask, scale_dim=d,
                                       p_drop=p, rng=rng, training=training)
    M, c_mix = tc.matmul(_merge_heads(A), lp["W_O"])
    Md, c_d1 = tc.dropout(M, p, rng, training)
    X1, c_ln1 = tc.layer_norm(X + Md, lp["ln1.gain"], lp["ln1.bias"], config.ln_eps)
    Fo, c_ffn = tc.ffn(X1, lp["ffn.W1"], lp["ffn.b1"], lp["ffn.W2"], lp["ffn.b2"])
    Fd, c_d2 = tc.dropout(Fo, p, rng, training)
    X2, c_ln2 = tc.layer_norm(X1 + Fd, lp["ln2.gain"], lp["ln2.bias"], config.ln_eps)
    return X2, (h, c_qkv, c_att, c_mix, c_d1, c_ln1, c_ffn, c_d2, c_ln2)


def attention_block_backward(dX2, cache):
    """Returns (dX, grads keyed like ``lp``)."""
    h, c_qkv, c_att, c_mix, c_d1, c_ln1, c_ffn, c_d2, c_ln2 = cache
    g = {}
    dY2, g["ln2.gain"], g["ln2.bias"] = tc.layer_norm_backward(dX2, c_ln2)
    dFo = tc.dropout_backward(dY2, c_d2)
    dX1_ffn, g["ffn.W1"], g["ffn.b1"], g["ffn.W2"], g["ffn.b2"] = tc.ffn_backward(dFo, c_ffn)
    dX1 = dY2 + dX1_ffn
    dY1, g["ln1.gain"], g["ln1.bias"] = tc.layer_norm_backward(dX1, c_ln1)
    dM = tc.dropout_backward(dY1, c_d1)
    dA_merged, g["W_O"] = tc.matmul_backward(dM, c_mix)
    dQ, dK, dV = tc.scaled_dot_attention_backward(_split_heads(dA_merged, h), c_att)
    dqkv = np.concatenate([_merge_heads(dQ), _merge_heads(dK), _merge_heads(dV)], axis=-1)
    dX_att, g["W"] = tc.matmul_backward(dqkv, c_qkv)
    return dY1 + dX_att, g


# -- full network --------------------------------------------------------------

@dataclass
class ForwardTrace:
    logits: np.ndarray  # [B, 11], before any nrc2 adjustment
    probs: np.ndarray   # sigmoid(logits)
    cache: tuple = field(repr=False, default=())


def valid_windows(lengths, n: int, k: int) -> np.ndarray:
    """[B, n-k+1] mask of windows lying inside the real tokens.

    Sentences shorter than ``k`` keep only the first window, which overhangs
    into zero padding.
    """
    starts = np.arange(n - k + 1)
    last = np.maximum(np.asarray(lengths) - k, 0)
    return starts[None, :] <= last[:, None]


def _stack_heads(params, config, k):
    F = np.concatenate([params[f"heads.{e}.conv{k}.F"] for e in LABELS], axis=-1)
    b = np.concatenate([params[f"heads.{e}.conv{k}.b"] for e in LABELS])
    return F, b


def forward(token_ids, mask, params: dict, config: ModelConfig, lexvecs=None,
            rng: np.random.Generator | None = None, training: bool = False) -> ForwardTrace:
    """Run the network on a padded batch. ``mask`` marks real positions.

    ``lexvecs`` [B, 11] raw lexicon counts are required when ``use_nrc1``.
    """
    token_ids = np.asarray(token_ids)
    mask = np.asarray(mask, dtype=bool)
    if token_ids.ndim != 2 or token_ids.shape != mask.shape:
        raise tc.ShapeError(f"token ids {token_ids.shape} and mask {mask.shape} must match [B, n]")
    B, n = token_ids.shape
    if n < config.max_width:
        pad = config.max_width - n
        token_ids = np.pad(token_ids, ((0, 0), (0, pad)))
        mask = np.pad(mask, ((0, 0), (0, pad)))
        n = config.max_width
    if config.use_nrc1 and lexvecs is None:
        raise ValueError("use_nrc1 requires lexicon count vectors")
    if training and config.p_drop > 0 and rng is None:
        raise ValueError("training with dropout needs an rng")
    lengths = mask.sum(axis=1)

    E = params["embedding"][token_ids]
    X, c_proj = tc.matmul(E, params["proj.W"])
    X = X + params["proj.b"]

    block_caches = []
    if config.use_attention:
        for l in range(config.num_layers):
            prefix = f"layers.{l}."
            lp = {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}
            X, c = attention_block(X, lp, mask, rng, training, config)
            block_caches.append(c)

    Hm = X * mask[..., None]
    pooled, conv_caches = [], []
    fpw = config.filters_per_width
    for k in config.conv_widths:
        F, b = _stack_heads(params, config, k)
        C, c_conv = tc.conv1d_valid(Hm, F, b)
        P, c_pool = tc.max_over_time(C, valid_windows(lengths, n, k))
        pooled.append(P.reshape(B, NUM_LABELS, fpw))
        conv_caches.append((c_conv, c_pool))
    feats = np.concatenate(pooled, axis=-1)  # [B, 11, widths*fpw]
    if config.use_nrc1:
        lex = np.asarray(lexvecs, dtype=np.float64)
        feats = np.concatenate([feats, np.broadcast_to(lex[:, None, :], (B, NUM_LABELS, NUM_LABELS))], axis=-1)

    Wfc = np.stack([params[f"heads.{e}.fc.w"] for e in LABELS])      # [11, P]
    bfc = np.concatenate([params[f"heads.{e}.fc.b"] for e in LABELS])  # [11]
    logits = tc.check_finite(np.einsum("bep,ep->be", feats, Wfc) + bfc, "logits")
    cache = (c_proj, block_caches, conv_caches, feats, Wfc, mask)
    return ForwardTrace(logits=logits, probs=tc.sigmoid(logits), cache=cache)


def backward(dlogits, trace: ForwardTrace, config: ModelConfig) -> dict[str, np.ndarray]:
    """Gradients of a scalar w.r.t. every trainable tensor, given dL/dlogits."""
    c_proj, block_caches, conv_caches, feats, Wfc, mask = trace.cache
    grads: dict[str, np.ndarray] = {}
    dWfc = np.einsum("be,bep->ep", dlogits, feats)
    dbfc = dlogits.sum(axis=0)
    dfeats = dlogits[:, :, None] * Wfc[None]
    for i, e in enumerate(LABELS):
        grads[f"heads.{e}.fc.w"] = dWfc[i]
        grads[f"heads.{e}.fc.b"] = dbfc[i:i + 1]

    B = dlogits.shape[0]
    fpw = config.filters_per_width
    dHm = 0.0
    for j, (k, (c_conv, c_pool)) in enumerate(zip(config.conv_widths, conv_caches)):
        dP = dfeats[:, :, j * fpw:(j + 1) * fpw].reshape(B, NUM_LABELS * fpw)
        dC = tc.max_over_time_backward(dP, c_pool)
        dH_k, dF, db = tc.conv1d_valid_backward(dC, c_conv)
        dHm = dHm + dH_k
        for i, e in enumerate(LABELS):
            grads[f"heads.{e}.conv{k}.F"] = dF[..., i * fpw:(i + 1) * fpw]
            grads[f"heads.{e}.conv{k}.b"] = db[i * fpw:(i + 1) * fpw]

    dX = dHm * mask[..., None]
    for l in reversed(range(len(block_caches))):
        dX, g = attention_block_backward(dX, block_caches[l])
        for name, val in g.items():
            grads[f"layers.{l}.{name}"] = val
    _, grads["proj.W"] = tc.matmul_backward(dX, c_proj)
    grads["proj.b"] = dX.sum(axis=(0, 1))
    return grads


def l2_penalty(params: dict) -> float:
    return float(sum(np.sum(v * v) for k, v in params.items() if is_weight(k)))


def loss(trace: ForwardTrace, labels, params: dict, config: ModelConfig) -> float:
    """Summed-class BCE (batch mean) plus ``l2_coeff`` times the squared
    norm of every weight matrix. Never includes the nrc2 adjustment."""
    bce, _ = tc.bce_sum_loss(trace.logits, labels)
    return bce + config.l2_coeff * l2_penalty(params)


def loss_and_grads(token_ids, mask, labels, params, config, lexvecs=None, rng=None, training=True):
    trace = forward(token_ids, mask, params, config, lexvecs, rng, training)
    bce, dlogits = tc.bce_sum_loss(trace.logits, labels)
    grads = backward(dlogits, trace, config)
    if config.l2_coeff:
        for k in grads:
            if is_weight(k):
                grads[k] = grads[k] + 2.0 * config.l2_coeff * params[k]
    return bce + config.l2_coeff * l2_penalty(params), grads, trace


def apply_nrc2(logits, binarized, coeff: float):
    """Evaluation-time lexicon boost: logits + coeff * binarized flags."""
    return np.asarray(logits, dtype=np.float64) + coeff * np.asarray(binarized, dtype=np.float64)


def predict_proba(token_ids, mask, params, config, lexvecs=None) -> np.ndarray:
    """Eval-mode probabilities, with the nrc2 boost applied when configured."""
    trace = forward(token_ids, mask, params, config, lexvecs, training=False)
    logits = trace.logits
    if config.use_nrc2:
        if lexvecs is None:
            raise ValueError("use_nrc2 requires lexicon count vectors")
        logits = apply_nrc2(logits, np.asarray(lexvecs) > 0, config.nrc2_coeff)
    return tc.sigmoid(logits)
