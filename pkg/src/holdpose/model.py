"""Stacked bidirectional LSTM classifier and linear baseline, in numpy.

Gates are packed as ``[input, forget, candidate, output]`` along the first
axis of each layer's weights. Logit order is (Stable, NotStable).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import BinaryLabel

CHECKPOINT_VERSION = 1
DIRECTIONS = ("fwd", "bwd")
HEADS = ("both_terminal", "last_index")


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    hidden: int = 500
    layers: int = 2
    head: str = "both_terminal"
    dtype: str = "float32"

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}")
        if self.input_dim < 1 or self.hidden < 1 or self.layers < 1:
            raise ValueError("input_dim, hidden and layers must be positive")


@dataclass(eq=False)
class ModelParams:
    config: ModelConfig
    tensors: dict[str, np.ndarray]

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype) -> "ModelParams":
        cfg = ModelConfig(**{**asdict(self.config), "dtype": np.dtype(dtype).name})
        return ModelParams(cfg, {k: v.astype(dtype) for k, v in self.tensors.items()})


@dataclass(eq=False)
class LinearParams:
    seq_len: int
    input_dim: int
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "LinearParams":
        return LinearParams(self.seq_len, self.input_dim, {k: v.copy() for k, v in self.tensors.items()})


def tensor_name(layer: int, direction: str, kind: str) -> str:
    return f"l{layer}_{direction}_{kind}"


def init_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights, forget-gate bias +1."""
    rng = np.random.default_rng(seed)
    H = config.hidden
    bound = 1.0 / np.sqrt(H)
    dtype = np.dtype(config.dtype)
    tensors = {}
    for layer in range(config.layers):
        d_in = config.input_dim if layer == 0 else 2 * H
        for d in DIRECTIONS:
            tensors[tensor_name(layer, d, "Wx")] = rng.uniform(-bound, bound, (4 * H, d_in)).astype(dtype)
            tensors[tensor_name(layer, d, "Wh")] = rng.uniform(-bound, bound, (4 * H, H)).astype(dtype)
            b = rng.uniform(-bound, bound, 4 * H)
            b[H:2 * H] += 1.0
            tensors[tensor_name(layer, d, "b")] = b.astype(dtype)
    tensors["head_W"] = rng.uniform(-bound, bound, (2, 2 * H)).astype(dtype)
    tensors["head_b"] = np.zeros(2, dtype=dtype)
    return ModelParams(config, tensors)


def init_linear(seq_len: int, input_dim: int, seed: int = 0, dtype="float32") -> LinearParams:
    rng = np.random.default_rng(seed)
    n = seq_len * input_dim
    bound = 1.0 / np.sqrt(n)
    return LinearParams(seq_len, input_dim, {
        "weight": rng.uniform(-bound, bound, (2, n)).astype(dtype),
        "bias": np.zeros(2, dtype=dtype),
    })


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _lstm_forward(X, Wx, Wh, b):
    """One direction over (B, T, D); states are kept time-major internally."""
    B, T, _ = X.shape
    H = Wh.shape[1]
    Z = (np.ascontiguousarray(X.transpose(1, 0, 2)).reshape(T * B, -1) @ Wx.T + b).reshape(T, B, 4 * H)
    WhT = np.ascontiguousarray(Wh.T)
    h = np.zeros((B, H), dtype=X.dtype)
    c = np.zeros((B, H), dtype=X.dtype)
    hs = np.empty((T + 1, B, H), dtype=X.dtype)
    hs[0] = 0.0
    gates = np.empty((T, B, 4 * H), dtype=X.dtype)
    cs = np.empty((T + 1, B, H), dtype=X.dtype)
    cs[0] = 0.0
    for t in range(T):
        z = Z[t] + h @ WhT
        a = gates[t]
        a[:, :2 * H] = _sigmoid(z[:, :2 * H])
        a[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
        a[:, 3 * H:] = _sigmoid(z[:, 3 * H:])
        c = a[:, H:2 * H] * c + a[:, :H] * a[:, 2 * H:3 * H]
        cs[t + 1] = c
        h = a[:, 3 * H:] * np.tanh(c)
        hs[t + 1] = h
    return hs[1:].transpose(1, 0, 2), (gates, cs, hs)


def _lstm_backward(dH, X, Wx, Wh, cache):
    gates, cs, hs = cache
    B, T, _ = X.shape
    H = Wh.shape[1]
    dHt = dH.transpose(1, 0, 2)
    dZ = np.empty((T, B, 4 * H), dtype=X.dtype)
    dh_next = np.zeros((B, H), dtype=X.dtype)
    dc_next = np.zeros((B, H), dtype=X.dtype)
    for t in reversed(range(T)):
        a = gates[t]
        i, f, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
        tc = np.tanh(cs[t + 1])
        dh = dHt[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = dZ[t]
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc * cs[t] * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dz @ Wh
    flatZ = dZ.reshape(T * B, 4 * H)
    dWh = flatZ.T @ hs[:-1].reshape(T * B, H)
    dWx = flatZ.T @ np.ascontiguousarray(X.transpose(1, 0, 2)).reshape(T * B, -1)
    db = flatZ.sum(axis=0)
    dX = (flatZ @ Wx).reshape(T, B, -1).transpose(1, 0, 2)
    return dX, dWx, dWh, db


def _as_batch(p, x):
    x = np.asarray(x)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3:
        raise ValueError(f"expected (T, D) or (B, T, D) input, got shape {x.shape}")
    dim = p.config.input_dim if isinstance(p, ModelParams) else p.input_dim
    if x.shape[2] != dim:
        raise ValueError(f"feature dimension {x.shape[2]} does not match model input {dim}")
    if isinstance(p, LinearParams) and x.shape[1] != p.seq_len:
        raise ValueError(f"sequence length {x.shape[1]} does not match linear model {p.seq_len}")
    dtype = next(iter(p.tensors.values())).dtype
    return x.astype(dtype, copy=False), single


def _run(p: ModelParams, X, dropout_rate, rng, keep_cache):
    cfg = p.config
    P = p.tensors
    layer_in = X
    caches = []
    outputs = []
    for layer in range(cfg.layers):
        mask = None
        if layer > 0 and dropout_rate > 0:
            if rng is None:
                raise ValueError("dropout needs an rng")
            keep = 1.0 - dropout_rate
            mask = (rng.random(layer_in.shape) < keep).astype(layer_in.dtype) / keep
            layer_in = layer_in * mask
        dir_out = {}
        dir_cache = {}
        for d in DIRECTIONS:
            xin = layer_in if d == "fwd" else layer_in[:, ::-1]
            hs, cache = _lstm_forward(xin, P[tensor_name(layer, d, "Wx")], P[tensor_name(layer, d, "Wh")],
                                      P[tensor_name(layer, d, "b")])
            dir_out[d] = hs if d == "fwd" else hs[:, ::-1]
            dir_cache[d] = (xin, cache)
        caches.append((layer_in, mask, dir_cache))
        outputs.append(dir_out)
        layer_in = np.concatenate([dir_out["fwd"], dir_out["bwd"]], axis=2)
    top = outputs[-1]
    T = X.shape[1]
    bwd_index = 0 if cfg.head == "both_terminal" else T - 1
    feat = np.concatenate([top["fwd"][:, T - 1], top["bwd"][:, bwd_index]], axis=1)
    logits = feat @ P["head_W"].T + P["head_b"]
    return logits, (feat, caches, outputs, bwd_index) if keep_cache else None


def layer_outputs(p: ModelParams, x) -> list[dict[str, np.ndarray]]:
    """Per-layer time-aligned hidden states ``{"fwd": (B,T,H), "bwd": (B,T,H)}``."""
    X, _ = _as_batch(p, x)
    _, cache = _run(p, X, 0.0, None, keep_cache=True)
    return cache[2]


def forward(p, x, dropout_rate: float = 0.0, rng=None) -> np.ndarray:
    """Logits for one sequence (T, D) -> (2,) or a batch (B, T, D) -> (B, 2)."""
    X, single = _as_batch(p, x)
    if isinstance(p, LinearParams):
        logits = X.reshape(len(X), -1) @ p.tensors["weight"].T + p.tensors["bias"]
    else:
        logits, _ = _run(p, X, dropout_rate, rng, keep_cache=False)
    return logits[0] if single else logits


def _softmax_xent(logits, y):
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted - logz[:, None]
    loss = -logp[np.arange(len(y)), y].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(len(y)), y] -= 1.0
    return float(loss), dlogits / len(y)


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {name}")


def loss_and_grad(p, X, y, dropout_rate: float = 0.0, rng=None):
    """Mean cross-entropy and its exact gradient (for the realized dropout mask)."""
    X, _ = _as_batch(p, X)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0 or len(y) != len(X):
        raise ValueError("batch must be nonempty and labels must match inputs")
    P = p.tensors
    if isinstance(p, LinearParams):
        flat = X.reshape(len(X), -1)
        logits = flat @ P["weight"].T + P["bias"]
        _check_finite("logits", logits)
        loss, dlogits = _softmax_xent(logits, y)
        return loss, {"weight": (dlogits.T @ flat).astype(X.dtype), "bias": dlogits.sum(axis=0).astype(X.dtype)}

    logits, (feat, caches, outputs, bwd_index) = _run(p, X, dropout_rate, rng, keep_cache=True)
    _check_finite("logits", logits)
    loss, dlogits = _softmax_xent(logits, y)
    dlogits = dlogits.astype(X.dtype)
    grads = {"head_W": dlogits.T @ feat, "head_b": dlogits.sum(axis=0)}
    dfeat = dlogits @ P["head_W"]
    B, T, _ = X.shape
    H = p.config.hidden
    d_out = {"fwd": np.zeros((B, T, H), X.dtype), "bwd": np.zeros((B, T, H), X.dtype)}
    d_out["fwd"][:, T - 1] = dfeat[:, :H]
    d_out["bwd"][:, bwd_index] += dfeat[:, H:]
    for layer in reversed(range(p.config.layers)):
        layer_in, mask, dir_cache = caches[layer]
        d_in = np.zeros_like(layer_in)
        for d in DIRECTIONS:
            xin, cache = dir_cache[d]
            dH = d_out[d] if d == "fwd" else d_out[d][:, ::-1]
            dX, dWx, dWh, db = _lstm_backward(dH, xin, P[tensor_name(layer, d, "Wx")],
                                              P[tensor_name(layer, d, "Wh")], cache)
            grads[tensor_name(layer, d, "Wx")] = dWx
            grads[tensor_name(layer, d, "Wh")] = dWh
            grads[tensor_name(layer, d, "b")] = db
            d_in += dX if d == "fwd" else dX[:, ::-1]
        if layer > 0:
            if mask is not None:
                d_in = d_in * mask
            d_out = {"fwd": d_in[:, :, :H], "bwd": d_in[:, :, H:]}
    for name, g in grads.items():
        _check_finite(f"gradient of {name}", g)
    return loss, grads


def predict(p, x) -> BinaryLabel | np.ndarray:
    """Argmax of the logits with dropout off; an exact tie goes to Stable."""
    logits = forward(p, x)
    return predict_from_logits(logits)


def predict_from_logits(logits):
    logits = np.asarray(logits)
    if logits.ndim == 1:
        return BinaryLabel.NOT_STABLE if logits[1] > logits[0] else BinaryLabel.STABLE
    return (logits[:, 1] > logits[:, 0]).astype(np.int64)


def swap_directions(p: ModelParams) -> ModelParams:
    """Exchange forward/backward weights so that reversed input gives mirrored states.

    Input columns of layers above the first and the head columns are permuted
    to follow the swapped concatenation order.
    """
    H = p.config.hidden
    out = {}
    for layer in range(p.config.layers):
        for d, other in (("fwd", "bwd"), ("bwd", "fwd")):
            for kind in ("Wx", "Wh", "b"):
                w = p.tensors[tensor_name(layer, other, kind)].copy()
                if kind == "Wx" and layer > 0:
                    w = np.concatenate([w[:, H:], w[:, :H]], axis=1)
                out[tensor_name(layer, d, kind)] = w
    W = p.tensors["head_W"]
    out["head_W"] = np.concatenate([W[:, H:], W[:, :H]], axis=1)
    out["head_b"] = p.tensors["head_b"].copy()
    return ModelParams(p.config, out)


def flatten(tensors: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([tensors[k].ravel() for k in sorted(tensors)])


def param_norm(p) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(v, dtype=np.float64))) for v in p.tensors.values())))


# --- checkpoints -------------------------------------------------------------


def save_checkpoint(path, p, extra: dict | None = None) -> Path:
    """Named tensors plus a JSON header in one ``.npz`` container."""
    path = Path(path)
    if isinstance(p, ModelParams):
        kind, spec = "bilstm", asdict(p.config)
    else:
        kind, spec = "linear", {"seq_len": p.seq_len, "input_dim": p.input_dim}
    header = {"format_version": CHECKPOINT_VERSION, "kind": kind, "config": spec, "extra": extra or {}}
    arrays = {f"t/{k}": v for k, v in p.tensors.items()}
    arrays["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    with path.open("wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path):
    with np.load(Path(path)) as z:
        header = json.loads(bytes(z["header"]).decode())
        if header.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('format_version')!r}")
        tensors = {k[2:]: z[k].copy() for k in z.files if k.startswith("t/")}
    if header["kind"] == "bilstm":
        params = ModelParams(ModelConfig(**header["config"]), tensors)
    else:
        params = LinearParams(header["config"]["seq_len"], header["config"]["input_dim"], tensors)
    return params, header["extra"]
