"""SGD training with learning-rate annealing and deferred resampling (DRS).

Before the anneal step batches are uniform draws of ``pre_batch_size``
examples. After it, if DRS is configured, examples whose pose-phase and
shake-phase labels agree are thinned so that disagreeing examples make up a
``sigma`` fraction relative to agreeing ones in expectation.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import FeatureSequence, stack
from .model import LinearParams, ModelParams, loss_and_grad, predict_from_logits, forward

log = logging.getLogger(__name__)

VAL_EVERY = 10


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, detail: str):
        super().__init__(f"training diverged at iteration {iteration}: {detail}")
        self.iteration = iteration


@dataclass(frozen=True)
class DrsConfig:
    sigma: float = 1.0
    pre_batch_size: int = 200

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.pre_batch_size < 1:
            raise ValueError("pre_batch_size must be positive")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    weight_decay: float = 0.01
    dropout: float = 0.1
    hidden: int = 500
    iterations: int = 600
    anneal_at: int = 300
    anneal_factor: float = 0.1
    seed: int = 0
    batch_size: int = 200
    val_every: int = VAL_EVERY

    def __post_init__(self):
        if not 0 < self.anneal_at < self.iterations:
            raise ValueError(f"need 0 < anneal_at < iterations, got {self.anneal_at} and {self.iterations}")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.batch_size < 1 or self.val_every < 1:
            raise ValueError("batch_size and val_every must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


# Iteration presets for the unseen-pose and unseen-object protocols.
POSE_PRESET = dict(iterations=600, anneal_at=300)
OBJECT_PRESET = dict(iterations=500, anneal_at=30)


@dataclass(frozen=True, eq=False)
class Partition:
    s_eq: np.ndarray
    s_neq: np.ndarray

    @property
    def r(self) -> float:
        return len(self.s_neq) / len(self.s_eq)

    @property
    def size(self) -> int:
        return len(self.s_eq) + len(self.s_neq)


def partition(label_pose: Sequence[int], label_shake: Sequence[int]) -> Partition:
    """Split example indices by whether pose and shake labels agree."""
    lp = np.asarray(label_pose, dtype=np.int64)
    ls = np.asarray(label_shake, dtype=np.int64)
    if lp.shape != ls.shape:
        raise ValueError("pose and shake label arrays differ in length")
    same = lp == ls
    if not same.any():
        raise ValueError("no examples with matching pose and shake labels; r is undefined")
    return Partition(np.flatnonzero(same), np.flatnonzero(~same))


def partition_sequences(seqs: Sequence[FeatureSequence]) -> Partition:
    return partition([int(s.label_pose) for s in seqs], [int(s.label_shake) for s in seqs])


def uniform_batch(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` distinct indices drawn uniformly from ``range(n)`` (all of them if n <= size)."""
    if n <= size:
        return rng.permutation(n)
    return rng.choice(n, size=size, replace=False)


def keep_probability(part: Partition, cfg: DrsConfig) -> float:
    if cfg.sigma <= part.r:
        raise ValueError(f"DRS needs sigma > r; got sigma={cfg.sigma} and r={part.r:.4f}")
    return part.r / cfg.sigma


def drs_batch(part: Partition, cfg: DrsConfig, rng: np.random.Generator) -> np.ndarray:
    """Uniform pre-batch, then keep each agreeing example with probability r/sigma."""
    p_keep = keep_probability(part, cfg)
    pre = uniform_batch(part.size, cfg.pre_batch_size, rng)
    is_neq = np.zeros(part.size, dtype=bool)
    is_neq[part.s_neq] = True
    keep = is_neq[pre] | (rng.random(len(pre)) < p_keep)
    return pre[keep]


@dataclass(eq=False)
class TrainData:
    X: np.ndarray
    y: np.ndarray
    y_pose: np.ndarray

    def __post_init__(self):
        if len(self.X) == 0:
            raise ValueError("empty training set")
        if not len(self.X) == len(self.y) == len(self.y_pose):
            raise ValueError("inputs and label arrays differ in length")

    def __len__(self):
        return len(self.X)

    @classmethod
    def from_sequences(cls, seqs: Sequence[FeatureSequence], target: str = "shake") -> "TrainData":
        """``target`` picks which label the model is fit to ("shake" or "pose")."""
        X, y_shake, y_pose = stack(seqs)
        if target not in ("shake", "pose"):
            raise ValueError("target must be 'shake' or 'pose'")
        return cls(X, y_shake if target == "shake" else y_pose, y_pose)


@dataclass
class TrainResult:
    best: ModelParams | LinearParams
    best_iteration: int
    best_val_acc: float
    history: list[dict] = field(default_factory=list)


def sgd_step(p, grads: dict, lr: float, weight_decay: float) -> None:
    """In place: w <- w - lr * (grad + weight_decay * w)."""
    for name, w in p.tensors.items():
        g = grads.get(name)
        step = weight_decay * w if g is None else g + weight_decay * w
        w -= (lr * step).astype(w.dtype, copy=False)


def batched_logits(p, X: np.ndarray, chunk: int = 512) -> np.ndarray:
    return np.concatenate([forward(p, X[i:i + chunk]) for i in range(0, len(X), chunk)], axis=0)


def accuracy(p, X: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(predict_from_logits(batched_logits(p, X)) == y))


def train(params, data: TrainData, cfg: TrainConfig, drs: DrsConfig | None = None,
          val: tuple[np.ndarray, np.ndarray] | None = None, log_path=None) -> TrainResult:
    """Train ``params`` in place and return the best-validation snapshot with the history.

    ``val`` is ``(X_val, y_val)``; without it the final parameters are returned.
    """
    dtype = next(iter(params.tensors.values())).dtype
    X = data.X.astype(dtype, copy=False)
    part = partition(data.y_pose, data.y) if drs is not None else None
    if part is not None:
        keep_probability(part, drs)
    neq_mask = data.y_pose != data.y
    batch_rng, dropout_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(2))
    dropout = cfg.dropout if isinstance(params, ModelParams) else 0.0
    if val is not None:
        X_val, y_val = val[0].astype(dtype, copy=False), np.asarray(val[1])
        if len(X_val) == 0:
            raise ValueError("empty validation set")

    sink = Path(log_path).open("a") if log_path else None
    lr = cfg.learning_rate
    best, best_it, best_acc = params.copy(), -1, -np.inf
    history = []
    try:
        for it in range(cfg.iterations):
            if it == cfg.anneal_at:
                lr = cfg.learning_rate * cfg.anneal_factor
            use_drs = part is not None and it >= cfg.anneal_at
            if use_drs:
                idx = drs_batch(part, drs, batch_rng)
            else:
                idx = uniform_batch(len(data), cfg.batch_size, batch_rng)
            try:
                loss, grads = loss_and_grad(params, X[idx], data.y[idx], dropout, dropout_rng)
            except FloatingPointError as exc:
                raise TrainingDiverged(it, str(exc)) from exc
            if not np.isfinite(loss):
                raise TrainingDiverged(it, f"loss is {loss}")
            sgd_step(params, grads, lr, cfg.weight_decay)
            rec = {"iteration": it, "lr": lr, "loss": round(loss, 10), "sampler": "drs" if use_drs else "uniform",
                   "batch_size": int(len(idx)), "n_neq": int(neq_mask[idx].sum()), "val_acc": None}
            last = it == cfg.iterations - 1
            if val is not None and ((it + 1) % cfg.val_every == 0 or last):
                acc = accuracy(params, X_val, y_val)
                rec["val_acc"] = acc
                if acc > best_acc:
                    best, best_it, best_acc = params.copy(), it, acc
            history.append(rec)
            if sink:
                sink.write(json.dumps(rec) + "\n")
    finally:
        if sink:
            sink.close()
    if val is None:
        best, best_it, best_acc = params.copy(), cfg.iterations - 1, float("nan")
    return TrainResult(best, best_it, float(best_acc), history)
