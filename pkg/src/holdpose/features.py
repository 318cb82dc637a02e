"""Fixed-length feature sequences from grasp cycles.

Each row is ``tactile embedding | rgb embedding | wrench (6) | grip force``;
the embeddings are present only for the selected modalities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .core import BinaryLabel, GraspCycle, Phase

STD_FLOOR = 1e-8
DEFAULT_STEPS = 20


class Span(str, Enum):
    GRASP_TO_POSE_END = "GraspToPoseEnd"
    GRASP_TO_RELEASE_END = "GraspToReleaseEnd"


class Modality(str, Enum):
    VISION = "V"
    TACTILE = "T"


def parse_modalities(text) -> frozenset[Modality]:
    """``"vt"``, ``"V+T"``, ``{"T"}`` ... -> frozenset of modalities."""
    if isinstance(text, (set, frozenset, list, tuple)):
        mods = frozenset(m if isinstance(m, Modality) else Modality(str(m).upper()) for m in text)
    else:
        letters = str(text).upper().replace("+", "").replace(",", "").replace(" ", "")
        if not letters or any(ch not in "VT" for ch in letters):
            raise ValueError(f"invalid modalities {text!r}; use V, T or VT")
        mods = frozenset(Modality(ch) for ch in letters)
    if not mods:
        raise ValueError("at least one modality is required")
    return mods


def modality_tag(mods: Iterable[Modality]) -> str:
    mods = frozenset(mods)
    return "".join(m.value for m in (Modality.VISION, Modality.TACTILE) if m in mods)


@dataclass(frozen=True)
class FrameKey:
    cycle_id: str
    stream: str
    timestamp: float


class ImageEmbedder(Protocol):
    dimension: int
    deterministic: bool

    def embed(self, image: np.ndarray, key: FrameKey | None = None) -> np.ndarray: ...


def _block_mean(img: np.ndarray, max_side: int) -> np.ndarray:
    h, w = img.shape[:2]
    fy, fx = max(1, -(-h // max_side)), max(1, -(-w // max_side))
    hh, ww = h - h % fy, w - w % fx
    img = img[:hh, :ww]
    return img.reshape(hh // fy, fy, ww // fx, fx, *img.shape[2:]).mean(axis=(1, 3))


class RandomProjectionEmbedder:
    """Frozen seeded Gaussian projection of a downsampled image.

    Stands in for a pretrained image backbone: never trained, same image in,
    same vector out.
    """

    deterministic = True

    def __init__(self, dimension: int = 64, seed: int = 0, max_side: int = 16):
        self.dimension = int(dimension)
        self.seed = int(seed)
        self.max_side = int(max_side)
        self._mats: dict[tuple, np.ndarray] = {}

    def _matrix(self, n_in: int) -> np.ndarray:
        m = self._mats.get(n_in)
        if m is None:
            rng = np.random.default_rng([self.seed, n_in, self.dimension])
            m = rng.standard_normal((self.dimension, n_in)) / np.sqrt(n_in)
            self._mats[n_in] = m
        return m

    def embed(self, image, key=None) -> np.ndarray:
        arr = np.asarray(image)
        img = arr.astype(np.float64) / (255.0 if arr.dtype == np.uint8 else 1.0)
        flat = _block_mean(img, self.max_side).ravel()
        return self._matrix(flat.size) @ flat

    def embed_many(self, images: np.ndarray) -> np.ndarray:
        imgs = np.asarray(images)
        scale = 1.0 / 255.0 if imgs.dtype == np.uint8 else 1.0
        flat = np.stack([_block_mean(im.astype(np.float64) * scale, self.max_side).ravel() for im in imgs])
        return flat @ self._matrix(flat.shape[1]).T


class PrecomputedEmbedder:
    """Looks up vectors extracted elsewhere, keyed by (cycle_id, stream, timestamp).

    The file is JSON Lines, one record per frame::

        {"cycle_id": "...", "stream": "tactile", "timestamp": 1.25, "vector": [...]}
    """

    deterministic = True

    def __init__(self, path, stream: str | None = None, time_tol: float = 1e-6):
        self.path = Path(path)
        self.stream = stream
        self.time_tol = time_tol
        self._table: dict[tuple[str, str], list[tuple[float, np.ndarray]]] = {}
        dim = None
        with self.path.open() as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                vec = np.asarray(rec["vector"], dtype=np.float64)
                if dim is None:
                    dim = vec.size
                elif vec.size != dim:
                    raise ValueError(f"{self.path}: inconsistent embedding sizes {dim} and {vec.size}")
                self._table.setdefault((rec["cycle_id"], rec["stream"]), []).append((float(rec["timestamp"]), vec))
        if dim is None:
            raise ValueError(f"{self.path}: no embedding records")
        self.dimension = dim

    def embed(self, image, key: FrameKey | None = None) -> np.ndarray:
        if key is None:
            raise ValueError("precomputed embeddings need a frame key")
        rows = self._table.get((key.cycle_id, self.stream or key.stream))
        if rows:
            for ts, vec in rows:
                if abs(ts - key.timestamp) <= self.time_tol:
                    return vec
        raise KeyError(f"no precomputed embedding for {key}")


def write_embeddings(path, records: Iterable[tuple[FrameKey, np.ndarray]]) -> None:
    with Path(path).open("w") as fh:
        for key, vec in records:
            fh.write(json.dumps({"cycle_id": key.cycle_id, "stream": key.stream,
                                 "timestamp": key.timestamp, "vector": [float(v) for v in vec]}) + "\n")


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    matrix: np.ndarray
    label_shake: BinaryLabel
    label_pose: BinaryLabel
    cycle_id: str
    pose_id: int

    @property
    def differs(self) -> bool:
        return self.label_pose != self.label_shake


def span_bounds(c: GraspCycle, span: Span) -> tuple[float, float]:
    span = Span(span)
    last = Phase.POSE if span is Span.GRASP_TO_POSE_END else Phase.RETRACT
    return c.span(Phase.GRASP, last)


def sample_timesteps(c: GraspCycle, n: int = DEFAULT_STEPS, span: Span = Span.GRASP_TO_POSE_END) -> np.ndarray:
    """``n`` evenly spaced timestamps from span start to span end inclusive."""
    if n < 1:
        raise ValueError("need at least one timestep")
    start, end = span_bounds(c, span)
    for name, (times, _) in c.streams().items():
        if len(times) == 0 or times[0] > start + 1e-9 or times[-1] < end - 1e-9:
            raise ValueError(f"stream {name!r} of {c.cycle_id} does not cover [{start}, {end}]")
    if n == 1:
        return np.array([end])
    return np.linspace(start, end, n)


def nearest_indices(times: np.ndarray, query: np.ndarray) -> np.ndarray:
    idx = np.clip(np.searchsorted(times, query), 1, len(times) - 1)
    left = times[idx - 1]
    right = times[idx]
    return np.where(query - left <= right - query, idx - 1, idx)


def tactile_delta(frame: np.ndarray, pre_contact: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame)
    pre_contact = np.asarray(pre_contact)
    if frame.shape != pre_contact.shape:
        raise ValueError(f"tactile frame shape {frame.shape} != pre-contact shape {pre_contact.shape}")
    return frame.astype(np.float64) - pre_contact.astype(np.float64)


def _embed_all(emb, images, keys) -> np.ndarray:
    if hasattr(emb, "embed_many"):
        return emb.embed_many(images)
    return np.stack([emb.embed(im, k) for im, k in zip(images, keys)])


def assemble(c: GraspCycle, emb_t: ImageEmbedder | None, emb_v: ImageEmbedder | None,
             modalities=frozenset({Modality.TACTILE, Modality.VISION}), n: int = DEFAULT_STEPS,
             span: Span = Span.GRASP_TO_POSE_END) -> FeatureSequence:
    mods = parse_modalities(modalities)
    ts = sample_timesteps(c, n, span)
    cols = []
    if Modality.TACTILE in mods:
        if emb_t is None:
            raise ValueError("tactile modality selected without a tactile embedder")
        idx = nearest_indices(c.tactile_times, ts)
        deltas = c.tactile_frames[idx].astype(np.float64) - c.pre_contact_tactile.astype(np.float64)
        if deltas.shape[1:] != c.pre_contact_tactile.shape:
            raise ValueError(f"{c.cycle_id}: tactile/pre-contact shape mismatch")
        keys = [FrameKey(c.cycle_id, "tactile", float(c.tactile_times[i])) for i in idx]
        cols.append(_embed_all(emb_t, deltas, keys))
    if Modality.VISION in mods:
        if emb_v is None:
            raise ValueError("vision modality selected without an RGB embedder")
        idx = nearest_indices(c.rgb_times, ts)
        keys = [FrameKey(c.cycle_id, "rgb", float(c.rgb_times[i])) for i in idx]
        cols.append(_embed_all(emb_v, c.rgb_frames[idx], keys))
    cols.append(c.wrench_series[nearest_indices(c.wrench_times, ts)].astype(np.float64))
    cols.append(np.full((len(ts), 1), c.grip_force))
    matrix = np.hstack(cols)
    if not np.all(np.isfinite(matrix)):
        raise ValueError(f"{c.cycle_id}: non-finite features")
    return FeatureSequence(
        matrix=matrix,
        label_shake=c.binary(Phase.SHAKE),
        label_pose=c.binary(Phase.POSE),
        cycle_id=c.cycle_id,
        pose_id=c.pose_id,
    )


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @property
    def dimension(self) -> int:
        return self.mean.size

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Standardizer":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.shape[-1] != self.dimension:
            raise ValueError(f"feature dimension {matrix.shape[-1]} != standardizer dimension {self.dimension}")
        return (matrix - self.mean) / self.std


def fit_standardizer(seqs: Sequence[FeatureSequence]) -> Standardizer:
    """Pooled per-coordinate mean and population std over all rows of all sequences."""
    if len(seqs) == 0:
        raise ValueError("cannot fit a standardizer on no sequences")
    rows = np.concatenate([np.asarray(s.matrix, dtype=np.float64) for s in seqs], axis=0)
    mean = rows.mean(axis=0)
    std = np.sqrt(((rows - mean) ** 2).mean(axis=0))
    constant = rows.min(axis=0) == rows.max(axis=0)
    mean[constant] = rows[0, constant]  # exact, so the column maps to 0
    std = np.maximum(std, STD_FLOOR)
    return Standardizer(mean, std)


def apply_standardizer(s: Standardizer, seq: FeatureSequence) -> FeatureSequence:
    return FeatureSequence(s.transform(seq.matrix), seq.label_shake, seq.label_pose, seq.cycle_id, seq.pose_id)


def stack(seqs: Sequence[FeatureSequence], dtype=np.float32):
    """(X, y_shake, y_pose) arrays for a list of sequences."""
    X = np.stack([s.matrix for s in seqs]).astype(dtype)
    y_shake = np.array([int(s.label_shake) for s in seqs], dtype=np.int64)
    y_pose = np.array([int(s.label_pose) for s in seqs], dtype=np.int64)
    return X, y_shake, y_pose
