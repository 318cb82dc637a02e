"""Experiment driver: split, assemble features, train one variant, score it.

A run is keyed by (protocol, split parameters, split seed, variant,
modalities, training seed) and is reproducible from that key alone.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from ..core import Dataset, filter_usable
from ..features import (
    DEFAULT_STEPS,
    FeatureSequence,
    ImageEmbedder,
    Modality,
    RandomProjectionEmbedder,
    Span,
    apply_standardizer,
    assemble,
    fit_standardizer,
    modality_tag,
    parse_modalities,
    stack,
)
from ..model import ModelConfig, init_linear, init_params
from ..posespace import NON_REFERENCE_GROUPS
from ..train import OBJECT_PRESET, POSE_PRESET, DrsConfig, TrainConfig, TrainData, partition, train
from .metrics import Metrics, ModelClassifier, evaluate, majority_baseline
from .splits import Protocol, SplitManifest, make_split, object_combinations

log = logging.getLogger(__name__)

SIGMA_CHOICES = (0.5, 1.0)
DEFAULT_SIGMA = {"T": 0.5, "V": 1.0, "VT": 1.0}
RESULT_COLUMNS = ("protocol", "variant", "modalities", "seed", "split_seed", "accuracy", "accuracy_on_Sneq", "n_test")


class Variant(str, Enum):
    LSTM = "LSTM"
    LSTM_DRS = "LSTM+DRS"
    LSTM_P = "LSTM-P"
    LSTM_WC = "LSTM-WC"
    LINEAR = "Linear"
    MAJORITY = "Majority"

    @classmethod
    def parse(cls, text) -> "Variant":
        if isinstance(text, cls):
            return text
        key = str(text).lower().replace("+", "").replace("-", "").replace("_", "")
        for v in cls:
            if v.value.lower().replace("+", "").replace("-", "") == key:
                return v
        raise ValueError(f"unknown variant {text!r}; choose from {[v.value for v in cls]}")

    @property
    def span(self) -> Span:
        return Span.GRASP_TO_RELEASE_END if self is Variant.LSTM_WC else Span.GRASP_TO_POSE_END


@dataclass(frozen=True)
class ExperimentConfig:
    hidden: int = 64
    embed_dim: int = 64
    embed_seed: int = 0
    n_steps: int = DEFAULT_STEPS
    learning_rate: float = 0.01
    weight_decay: float = 0.01
    dropout: float = 0.1
    anneal_factor: float = 0.1
    batch_size: int = 200
    iterations: int | None = None  # None: protocol preset
    anneal_at: int | None = None
    sigma: float | None = None  # None: per-modality default
    tune_sigma: bool = False

    def train_config(self, protocol: Protocol, seed: int) -> TrainConfig:
        preset = OBJECT_PRESET if Protocol(protocol) is Protocol.UNSEEN_OBJECTS else POSE_PRESET
        return TrainConfig(
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            dropout=self.dropout,
            hidden=self.hidden,
            iterations=self.iterations or preset["iterations"],
            anneal_at=self.anneal_at or preset["anneal_at"],
            anneal_factor=self.anneal_factor,
            seed=seed,
            batch_size=self.batch_size,
        )

    def to_dict(self) -> dict:
        return asdict(self)


class FeatureBank:
    """Assembled, unstandardized feature sequences cached per (cycle, modalities, span)."""

    def __init__(self, dataset: Dataset, emb_t: ImageEmbedder | None = None, emb_v: ImageEmbedder | None = None,
                 n_steps: int = DEFAULT_STEPS, embed_dim: int = 64, embed_seed: int = 0):
        self.dataset = filter_usable(dataset)
        self.cycles = self.dataset.by_id()
        self.emb_t = emb_t or RandomProjectionEmbedder(embed_dim, seed=embed_seed)
        self.emb_v = emb_v or RandomProjectionEmbedder(embed_dim, seed=embed_seed + 1)
        self.n_steps = n_steps
        self._cache: dict[tuple, FeatureSequence] = {}

    @classmethod
    def for_config(cls, dataset: Dataset, cfg: ExperimentConfig) -> "FeatureBank":
        return cls(dataset, n_steps=cfg.n_steps, embed_dim=cfg.embed_dim, embed_seed=cfg.embed_seed)

    def get(self, ids: Iterable[str], modalities, span: Span) -> list[FeatureSequence]:
        mods = parse_modalities(modalities)
        tag = modality_tag(mods)
        out = []
        for cid in ids:
            key = (cid, tag, Span(span))
            seq = self._cache.get(key)
            if seq is None:
                seq = assemble(self.cycles[cid], self.emb_t, self.emb_v, mods, self.n_steps, span)
                self._cache[key] = seq
            out.append(seq)
        return out


@dataclass(frozen=True)
class RunKey:
    protocol: Protocol
    variant: Variant
    modalities: str
    seed: int
    split_seed: int
    split_params: tuple = ()

    def manifest(self, dataset) -> SplitManifest:
        return make_split(dataset, self.protocol, seed=self.split_seed, **dict(self.split_params))


@dataclass
class RunResult:
    key: RunKey
    metrics: Metrics
    sigma: float | None = None
    best_iteration: int | None = None
    val_accuracy: float | None = None
    manifest: SplitManifest | None = None
    history: list = field(default_factory=list)
    model: object = None
    standardizer: object = None

    def row(self) -> dict:
        return {
            "protocol": self.key.protocol.value,
            "variant": self.key.variant.value,
            "modalities": self.key.modalities,
            "seed": self.key.seed,
            "split_seed": self.key.split_seed,
            "accuracy": self.metrics.accuracy,
            "accuracy_on_Sneq": self.metrics.accuracy_on_sneq,
            "n_test": self.metrics.n,
        }


def _prepare(bank: FeatureBank, m: SplitManifest, mods, span: Span):
    tr = bank.get(m.train, mods, span)
    st = fit_standardizer(tr)
    out = [[apply_standardizer(st, s) for s in part] for part in (tr, bank.get(m.val, mods, span),
                                                                   bank.get(m.test, mods, span))]
    return st, out


def run_one(bank: FeatureBank, key: RunKey, cfg: ExperimentConfig = ExperimentConfig(),
            manifest: SplitManifest | None = None) -> RunResult:
    m = manifest or key.manifest(bank.dataset)
    mods = parse_modalities(key.modalities)
    st, (tr, va, te) = _prepare(bank, m, mods, key.variant.span)
    X_te, y_te, yp_te = stack(te)
    if key.variant is Variant.MAJORITY:
        clf = majority_baseline([int(s.label_shake) for s in tr])
        return RunResult(key, evaluate(clf, X_te, y_te, yp_te), manifest=m, model=clf, standardizer=st)

    target = "pose" if key.variant is Variant.LSTM_P else "shake"
    data = TrainData.from_sequences(tr, target=target)
    X_va, ys_va, yp_va = stack(va)
    val = (X_va, yp_va if target == "pose" else ys_va)
    tcfg = cfg.train_config(key.protocol, key.seed)
    T, D = data.X.shape[1:]

    def fit(drs):
        if key.variant is Variant.LINEAR:
            params = init_linear(T, D, seed=key.seed)
        else:
            params = init_params(ModelConfig(D, cfg.hidden), seed=key.seed)
        return train(params, data, tcfg, drs, val)

    sigma = None
    if key.variant is Variant.LSTM_DRS:
        r = partition(data.y_pose, data.y).r
        if cfg.tune_sigma:
            options = [s for s in SIGMA_CHOICES if s > r]
            if not options:
                raise ValueError(f"no sigma in {SIGMA_CHOICES} exceeds r={r:.3f}")
        else:
            options = [cfg.sigma if cfg.sigma is not None else DEFAULT_SIGMA[modality_tag(mods)]]
        best = None
        for s in options:
            res = fit(DrsConfig(sigma=s, pre_batch_size=cfg.batch_size))
            if best is None or res.best_val_acc > best[1].best_val_acc:
                best = (s, res)
        sigma, res = best
    else:
        res = fit(None)
    metrics = evaluate(ModelClassifier(res.best), X_te, y_te, yp_te)
    return RunResult(key, metrics, sigma, res.best_iteration, res.best_val_acc, m, res.history, res.best, st)


def protocol_plan(protocol, dataset=None, n_splits: int | None = None, n_seeds: int | None = None,
                  base_seed: int = 0) -> list[tuple[int, int, tuple]]:
    """(split_seed, train_seed, split_params) triples following the repeat scheme of each protocol.

    Uniform and random-pose splits: 15 splits, one training seed each.
    Pose groups: every held-out group times 5 seeds.
    Unseen objects: 20 distinct 4-object test sets times 5 seeds.
    """
    protocol = Protocol.parse(protocol)
    if protocol in (Protocol.UNIFORM, Protocol.RANDOM_POSES):
        n_splits = 15 if n_splits is None else n_splits
        n_seeds = 1 if n_seeds is None else n_seeds
        return [(base_seed + i, base_seed + j, ()) for i in range(n_splits) for j in range(n_seeds)]
    n_seeds = 5 if n_seeds is None else n_seeds
    if protocol is Protocol.POSE_GROUP:
        groups = NON_REFERENCE_GROUPS[: n_splits or 3]
        return [(base_seed + j, base_seed + j, (("held_group", g.value),)) for g in groups for j in range(n_seeds)]
    if dataset is None:
        raise ValueError("the unseen-object plan needs the dataset to enumerate objects")
    objects = {c.object_id for c in filter_usable(dataset).cycles}
    combos = object_combinations(objects, 20 if n_splits is None else n_splits, 4, seed=base_seed)
    return [(base_seed + i, base_seed + j, (("held_objects", combo),))
            for i, combo in enumerate(combos) for j in range(n_seeds)]


_WORKER_BANK: FeatureBank | None = None


def _init_worker(bank):
    global _WORKER_BANK
    _WORKER_BANK = bank


def _run_in_worker(args):
    key, cfg = args
    res = run_one(_WORKER_BANK, key, cfg)
    res.model = res.history = None
    return res


def run_experiment(bank: FeatureBank, protocol, variant, modalities, plan: Sequence[tuple] | None = None,
                   cfg: ExperimentConfig = ExperimentConfig(), workers: int = 1,
                   on_result: Callable[[RunResult], None] | None = None) -> list[RunResult]:
    """Run every entry of ``plan`` (default: the protocol's full repeat scheme)."""
    protocol = Protocol.parse(protocol)
    variant = Variant.parse(variant)
    tag = modality_tag(parse_modalities(modalities))
    plan = plan if plan is not None else protocol_plan(protocol, bank.dataset)
    keys = [RunKey(protocol, variant, tag, seed, split_seed, params) for split_seed, seed, params in plan]
    return run_keys(bank, keys, cfg, workers, on_result)


def run_keys(bank: FeatureBank, keys: Sequence[RunKey], cfg: ExperimentConfig = ExperimentConfig(),
             workers: int = 1, on_result=None) -> list[RunResult]:
    results = []
    if workers > 1 and len(keys) > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(bank,)) as pool:
            for res in pool.map(_run_in_worker, [(k, cfg) for k in keys]):
                results.append(res)
                if on_result:
                    on_result(res)
    else:
        for k in keys:
            res = run_one(bank, k, cfg)
            log.info("%s %s %s seed=%d split=%d acc=%.4f", k.protocol.value, k.variant.value, k.modalities,
                     k.seed, k.split_seed, res.metrics.accuracy)
            results.append(res)
            if on_result:
                on_result(res)
    return results


@dataclass(frozen=True)
class Summary:
    protocol: str
    variant: str
    modalities: str
    mean: float
    std: float
    mean_sneq: float
    n_runs: int


def summarize(rows: Iterable[dict]) -> list[Summary]:
    """Mean and population std of accuracy per (protocol, variant, modalities)."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["protocol"], r["variant"], r["modalities"]), []).append(r)
    out = []
    for (p, v, m), rs in sorted(groups.items()):
        acc = np.array([float(r["accuracy"]) for r in rs])
        sneq = np.array([float(r["accuracy_on_Sneq"]) for r in rs])
        sneq = sneq[np.isfinite(sneq)]
        out.append(Summary(p, v, m, float(acc.mean()), float(acc.std()),
                           float(sneq.mean()) if sneq.size else float("nan"), len(rs)))
    return out


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})


__all__ = [
    "ExperimentConfig", "FeatureBank", "Modality", "RESULT_COLUMNS", "RunKey", "RunResult", "Summary", "Variant",
    "protocol_plan", "run_experiment", "run_keys", "run_one", "summarize", "with_overrides",
]
