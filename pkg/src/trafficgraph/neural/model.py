"""Two-layer recurrent classifier with optional additive attention and dense head."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass

import numpy as np

from .cells import GATES, LAYERS, param_names

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class TemporalModelConfig:
    cell: str = "gru"
    layer_sizes: tuple = (100, 50)
    attention: bool = False
    dense_units: int | None = 30
    num_classes: int = 3
    input_dim: int = 147
    attention_units: int | None = None  # defaults to the layer-2 width

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(h) for h in self.layer_sizes))
        if self.cell not in GATES:
            raise ValueError(f"unknown cell type {self.cell!r}")
        if len(self.layer_sizes) != 2 or min(self.layer_sizes) < 1:
            raise ValueError("layer_sizes must be two positive integers")
        if self.num_classes != 3:
            raise ValueError("num_classes must be 3")
        if self.dense_units is not None and self.dense_units < 1:
            raise ValueError("dense_units must be positive")
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")

    @property
    def attn_dim(self) -> int:
        return self.attention_units or self.layer_sizes[1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_sizes"] = list(self.layer_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TemporalModelConfig":
        return cls(**d)


def param_shapes(cfg: TemporalModelConfig) -> dict[str, tuple]:
    """Parameter names and shapes in declaration order."""
    shapes = {}
    dims = [cfg.input_dim, *cfg.layer_sizes]
    for li in range(2):
        D, H = dims[li], dims[li + 1]
        for name in param_names(cfg.cell):
            kind = name[0]
            shapes[f"layer{li + 1}.{name}"] = {"W": (H, D), "U": (H, H), "b": (H,)}[kind]
    H2 = cfg.layer_sizes[1]
    if cfg.attention:
        shapes["attn.W_a"] = (cfg.attn_dim, H2)
        shapes["attn.v"] = (cfg.attn_dim,)
    rep = H2
    if cfg.dense_units:
        shapes["dense.W"] = (cfg.dense_units, H2)
        shapes["dense.b"] = (cfg.dense_units,)
        rep = cfg.dense_units
    shapes["head.W"] = (cfg.num_classes, rep)
    shapes["head.b"] = (cfg.num_classes,)
    return shapes


def _glorot(rng, shape):
    fan_out, fan_in = (shape[0], shape[1]) if len(shape) == 2 else (1, shape[0])
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


class TemporalModel:
    """Parameters live in ``params``, an insertion-ordered dict of float64 arrays."""

    def __init__(self, config: TemporalModelConfig, params: dict | None = None):
        self.config = config
        shapes = param_shapes(config)
        if params is None:
            params = {k: np.zeros(s) for k, s in shapes.items()}
        if list(params) != list(shapes):
            raise ValueError("parameter names do not match the configuration")
        for k, s in shapes.items():
            if params[k].shape != s:
                raise ValueError(f"{k}: shape {params[k].shape}, expected {s}")
        self.params = {k: np.asarray(params[k], dtype=float) for k in shapes}

    @classmethod
    def initialize(cls, config: TemporalModelConfig, seed: int = 0) -> "TemporalModel":
        """Glorot-uniform input kernels, orthogonal recurrent kernels, zero biases
        (LSTM forget-gate bias starts at 1)."""
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in param_shapes(config).items():
            local = name.split(".", 1)[1]
            if local.startswith("U_"):
                params[name] = _orthogonal(rng, shape[0])
            elif local.startswith("b"):
                params[name] = np.ones(shape) if local == "b_f" else np.zeros(shape)
            else:
                params[name] = _glorot(rng, shape)
        return cls(config, params)

    def copy(self) -> "TemporalModel":
        return TemporalModel(self.config, copy.deepcopy(self.params))

    def layer_params(self, li: int) -> dict:
        return {n: self.params[f"layer{li}.{n}"] for n in param_names(self.config.cell)}

    def predict_proba(self, X) -> np.ndarray:
        """Inference, one sequence at a time so results never depend on batching."""
        X = np.asarray(X, dtype=float)
        return np.stack([forward_batch(self, x[None])[0][0] for x in X]) if len(X) else np.zeros((0, 3))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)  # first max on ties


# ---------------------------------------------------------------------------
# building blocks


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def attention(hs, W_a, v):
    """Additive attention over time: returns ``(context, alpha)``.

    ``score_t = v . tanh(W_a h_t)``; alpha is the softmax over scores.
    Accepts (T, H) or batched (B, T, H).
    """
    s = np.tanh(hs @ W_a.T)
    alpha = softmax(s @ v)
    ctx = np.einsum("...t,...th->...h", alpha, hs)
    return ctx, alpha


def _attention_backward(hs, W_a, v, s, alpha, dctx):
    dalpha = np.einsum("bh,bth->bt", dctx, hs)
    dscore = alpha * (dalpha - np.sum(alpha * dalpha, axis=1, keepdims=True))
    dv = np.einsum("bt,bta->a", dscore, s)
    da = dscore[:, :, None] * v * (1.0 - s * s)
    dW_a = da.reshape(-1, da.shape[-1]).T @ hs.reshape(-1, hs.shape[-1])
    dhs = alpha[:, :, None] * dctx[:, None, :] + da @ W_a
    return dhs, dW_a, dv


def dropout_masks(model: TemporalModel, batch: int, rate: float, rng):
    """One Bernoulli keep-mask per sequence and layer, scaled by 1 / keep."""
    if rate <= 0:
        return None
    keep = 1.0 - rate
    return [(rng.random((batch, h)) < keep) / keep for h in model.config.layer_sizes]


# ---------------------------------------------------------------------------
# forward / loss / backward


def forward_batch(model: TemporalModel, X, masks=None):
    """Class probabilities for a batch ``X`` of shape (B, T, F), plus a cache for backward."""
    cfg = model.config
    X = np.asarray(X, dtype=float)
    if X.ndim != 3 or X.shape[2] != cfg.input_dim or X.shape[1] < 1:
        raise ValueError(f"expected input (B, T, {cfg.input_dim}), got {X.shape}")
    layer_fwd, _ = LAYERS[cfg.cell]
    p = model.params
    h1, c1 = layer_fwd(model.layer_params(1), X, None if masks is None else masks[0])
    h2, c2 = layer_fwd(model.layer_params(2), h1, None if masks is None else masks[1])
    cache = {"c1": c1, "c2": c2, "h2": h2}
    if cfg.attention:
        s = np.tanh(h2 @ p["attn.W_a"].T)
        alpha = softmax(s @ p["attn.v"])
        rep = np.einsum("bt,bth->bh", alpha, h2)
        cache.update(s=s, alpha=alpha)
    else:
        rep = h2[:, -1]
    cache["rep"] = rep
    if cfg.dense_units:
        pre = rep @ p["dense.W"].T + p["dense.b"]
        y = np.maximum(pre, 0.0)
        cache["pre"] = pre
    else:
        y = rep
    cache["y"] = y
    probs = softmax(y @ p["head.W"].T + p["head.b"])
    cache["probs"] = probs
    return probs, cache


def forward(model: TemporalModel, fs, train_mode: bool = False, rng=None,
            dropout: float = 0.0) -> np.ndarray:
    """Probabilities for a single sequence (``FeatureSequence`` or (T, F) array)."""
    steps = getattr(fs, "steps", fs)
    masks = dropout_masks(model, 1, dropout, rng) if train_mode else None
    return forward_batch(model, np.asarray(steps)[None], masks)[0][0]


def loss(probs, label) -> float:
    """Cross-entropy with the probability floored at 1e-12."""
    return float(-np.log(max(float(probs[label]), PROB_FLOOR)))


def batch_loss(probs, labels) -> np.ndarray:
    picked = probs[np.arange(len(labels)), labels]
    return -np.log(np.maximum(picked, PROB_FLOOR))


def backward_batch(model: TemporalModel, cache, labels) -> dict:
    """Gradients of the mean batch loss with respect to every parameter."""
    cfg = model.config
    p = model.params
    probs = cache["probs"]
    B = len(probs)
    labels = np.asarray(labels)
    dlogits = probs.copy()
    dlogits[np.arange(B), labels] -= 1.0
    # floor active -> loss is constant in the logits
    dlogits[probs[np.arange(B), labels] < PROB_FLOOR] = 0.0
    dlogits /= B
    g = {}
    y = cache["y"]
    g["head.W"] = dlogits.T @ y
    g["head.b"] = dlogits.sum(axis=0)
    dy = dlogits @ p["head.W"]
    if cfg.dense_units:
        dpre = dy * (cache["pre"] > 0)
        g["dense.W"] = dpre.T @ cache["rep"]
        g["dense.b"] = dpre.sum(axis=0)
        drep = dpre @ p["dense.W"]
    else:
        drep = dy
    h2 = cache["h2"]
    if cfg.attention:
        dh2, g["attn.W_a"], g["attn.v"] = _attention_backward(
            h2, p["attn.W_a"], p["attn.v"], cache["s"], cache["alpha"], drep)
    else:
        dh2 = np.zeros_like(h2)
        dh2[:, -1] = drep
    _, layer_bwd = LAYERS[cfg.cell]
    dh1, g2 = layer_bwd(model.layer_params(2), cache["c2"], dh2)
    _, g1 = layer_bwd(model.layer_params(1), cache["c1"], dh1)
    for k, v in g1.items():
        g[f"layer1.{k}"] = v
    for k, v in g2.items():
        g[f"layer2.{k}"] = v
    return {k: g[k] for k in p}


def backward(model: TemporalModel, fs, label, masks=None) -> dict:
    """Exact gradients of ``loss(forward(fs), label)`` for one sequence."""
    steps = np.asarray(getattr(fs, "steps", fs))
    _, cache = forward_batch(model, steps[None], masks)
    return backward_batch(model, cache, [label])


__all__ = [
    "TemporalModel", "TemporalModelConfig", "attention", "backward", "backward_batch",
    "batch_loss", "dropout_masks", "forward", "forward_batch", "loss", "param_shapes",
    "softmax",
]
