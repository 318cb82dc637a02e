"""Train/val/test split protocols.

Every protocol decides which usable cycles go to training; the rest are
shuffled with the manifest seed and halved into validation (first
``m // 2``) and test.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from math import comb, floor
from pathlib import Path
from typing import Callable

import numpy as np

from ..core import Dataset, GraspCycle, filter_usable
from ..posespace import NON_REFERENCE_GROUPS, PoseGroup, pose_group

UNIFORM_TRAIN_FRACTION = 0.6875


class Protocol(str, Enum):
    UNIFORM = "Uniform"
    RANDOM_POSES = "RandomPoses"
    POSE_GROUP = "PoseGroup"
    UNSEEN_OBJECTS = "UnseenObjects"

    @classmethod
    def parse(cls, text) -> "Protocol":
        if isinstance(text, cls):
            return text
        key = str(text).replace("-", "").replace("_", "").lower()
        for p in cls:
            if p.value.lower() == key:
                return p
        raise ValueError(f"unknown protocol {text!r}; choose from {[p.value for p in cls]}")


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class SplitManifest:
    protocol: Protocol
    seed: int
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        for name in ("train", "val", "test"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        a, b, c = set(self.train), set(self.val), set(self.test)
        if a & b or a & c or b & c:
            raise SplitError("train, val and test must be disjoint")

    def to_dict(self) -> dict:
        return {"protocol": self.protocol.value, "seed": self.seed, "params": self.params,
                "train": list(self.train), "val": list(self.val), "test": list(self.test)}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitManifest":
        return cls(Protocol(d["protocol"]), int(d["seed"]), d["train"], d["val"], d["test"], d.get("params", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "SplitManifest":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _usable(d: Dataset | list) -> list[GraspCycle]:
    d = d if isinstance(d, Dataset) else Dataset(tuple(d))
    return list(filter_usable(d).cycles)


def _build(protocol: Protocol, seed: int, cycles: list[GraspCycle], is_train: Callable[[GraspCycle], bool],
           params: dict) -> SplitManifest:
    train = [c.cycle_id for c in cycles if is_train(c)]
    rest = [c.cycle_id for c in cycles if not is_train(c)]
    if not train:
        raise SplitError(f"{protocol.value} split leaves no training cycles")
    if len(rest) < 2:
        raise SplitError(f"{protocol.value} split leaves fewer than 2 cycles for val/test")
    rng = np.random.default_rng([seed, 1])
    order = rng.permutation(len(rest))
    half = len(rest) // 2
    val = [rest[i] for i in order[:half]]
    test = [rest[i] for i in order[half:]]
    return SplitManifest(protocol, seed, tuple(train), tuple(val), tuple(test), params)


def split_uniform(d, train_fraction: float = UNIFORM_TRAIN_FRACTION, seed: int = 0) -> SplitManifest:
    cycles = _usable(d)
    if len(cycles) < 10:
        raise SplitError(f"uniform split needs at least 10 usable cycles, got {len(cycles)}")
    if not 0 < train_fraction < 1:
        raise SplitError("train_fraction must lie strictly between 0 and 1")
    n_train = floor(train_fraction * len(cycles))
    chosen = set(np.random.default_rng([seed, 0]).permutation(len(cycles))[:n_train].tolist())
    ids = {c.cycle_id: i for i, c in enumerate(cycles)}
    return _build(Protocol.UNIFORM, seed, cycles, lambda c: ids[c.cycle_id] in chosen,
                  {"train_fraction": train_fraction})


def split_random_poses(d, n_test_poses: int = 5, seed: int = 0, held_poses=None) -> SplitManifest:
    cycles = _usable(d)
    poses = sorted({c.pose_id for c in cycles})
    if held_poses is not None:
        n_test_poses = len(set(held_poses))
    if len(poses) < 6 or not 1 <= n_test_poses < len(poses):
        raise SplitError(f"cannot hold out {n_test_poses} poses from {len(poses)} covered poses")
    if held_poses is None:
        rng = np.random.default_rng([seed, 0])
        held = sorted(int(p) for p in rng.choice(poses, size=n_test_poses, replace=False))
    else:
        held = sorted({int(p) for p in held_poses})
    held_set = set(held)
    return _build(Protocol.RANDOM_POSES, seed, cycles, lambda c: c.pose_id not in held_set,
                  {"held_out_poses": held})


def split_pose_group(d, held_group, seed: int = 0, include_reference: bool = True) -> SplitManifest:
    """Hold out one pose group; the reference pose stays in training unless excluded."""
    try:
        group = PoseGroup(held_group)
    except ValueError:
        raise SplitError(f"unknown pose group {held_group!r}") from None
    if group not in NON_REFERENCE_GROUPS:
        raise SplitError("the held-out group must be G1, G2 or G3")
    cycles = _usable(d)
    if not include_reference:
        cycles = [c for c in cycles if pose_group(c.pose_id) is not PoseGroup.REFERENCE]
    if not any(pose_group(c.pose_id) is group for c in cycles):
        raise SplitError(f"pose group {group.value} has no usable cycles")
    return _build(Protocol.POSE_GROUP, seed, cycles, lambda c: pose_group(c.pose_id) is not group,
                  {"held_out_group": group.value, "include_reference": include_reference})


def split_unseen_objects(d, n_test_objects: int = 4, seed: int = 0, held_objects=None) -> SplitManifest:
    cycles = _usable(d)
    objects = sorted({c.object_id for c in cycles})
    if held_objects is not None:
        n_test_objects = len(set(held_objects))
    if len(objects) < 5 or not 1 <= n_test_objects < len(objects):
        raise SplitError(f"cannot hold out {n_test_objects} objects from {len(objects)}")
    if held_objects is None:
        rng = np.random.default_rng([seed, 0])
        held = sorted(str(o) for o in rng.choice(objects, size=n_test_objects, replace=False))
    else:
        unknown = set(map(str, held_objects)) - set(objects)
        if unknown:
            raise SplitError(f"held-out objects not in the usable dataset: {sorted(unknown)}")
        held = sorted(set(map(str, held_objects)))
    held_set = set(held)
    return _build(Protocol.UNSEEN_OBJECTS, seed, cycles, lambda c: c.object_id not in held_set,
                  {"held_out_objects": held})


def object_combinations(object_ids, n_combos: int = 20, k: int = 4, seed: int = 0) -> list[tuple[str, ...]]:
    """``n_combos`` distinct k-subsets of the objects, drawn at random."""
    objects = sorted(set(map(str, object_ids)))
    if len(objects) <= k:
        raise SplitError(f"need more than {k} objects, got {len(objects)}")
    total = comb(len(objects), k)
    if n_combos > total:
        raise SplitError(f"only {total} distinct {k}-object combinations exist")
    rng = np.random.default_rng([seed, 2])
    seen: list[tuple[str, ...]] = []
    while len(seen) < n_combos:
        pick = tuple(sorted(str(o) for o in rng.choice(objects, size=k, replace=False)))
        if pick not in seen:
            seen.append(pick)
    return seen


def make_split(d, protocol, seed: int = 0, **kw) -> SplitManifest:
    protocol = Protocol.parse(protocol)
    if protocol is Protocol.UNIFORM:
        return split_uniform(d, seed=seed, **kw)
    if protocol is Protocol.RANDOM_POSES:
        return split_random_poses(d, seed=seed, **kw)
    if protocol is Protocol.POSE_GROUP:
        return split_pose_group(d, seed=seed, **kw)
    return split_unseen_objects(d, seed=seed, **kw)


def _unit(protocol: Protocol) -> Callable[[GraspCycle], object]:
    return {
        Protocol.UNIFORM: lambda c: c.cycle_id,
        Protocol.RANDOM_POSES: lambda c: c.pose_id,
        Protocol.POSE_GROUP: lambda c: pose_group(c.pose_id),
        Protocol.UNSEEN_OBJECTS: lambda c: c.object_id,
    }[protocol]


def audit(m: SplitManifest, d) -> list[str]:
    """Leakage and bookkeeping problems of a manifest against its dataset (empty = clean)."""
    problems = []
    usable = {c.cycle_id: c for c in _usable(d)}
    for name in ("train", "val", "test"):
        ids = getattr(m, name)
        if len(set(ids)) != len(ids):
            problems.append(f"{name} contains duplicate ids")
        missing = [i for i in ids if i not in usable]
        if missing:
            problems.append(f"{name} has {len(missing)} ids outside the usable dataset")
    sets = [set(m.train), set(m.val), set(m.test)]
    if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
        problems.append("cycle-level overlap between train, val and test")
    unit = _unit(m.protocol)
    train_units = {unit(usable[i]) for i in m.train if i in usable}
    for name in ("val", "test"):
        leaked = {unit(usable[i]) for i in getattr(m, name) if i in usable} & train_units
        if leaked:
            problems.append(f"{len(leaked)} {m.protocol.value} units shared by train and {name}")
    n_rest = len(m.val) + len(m.test)
    if len(m.val) != n_rest // 2:
        problems.append(f"val/test sizes {len(m.val)}/{len(m.test)} break the 50/50 rule")
    if m.protocol is Protocol.POSE_GROUP and m.params.get("include_reference", True):
        placed = set(m.train) | set(m.val) | set(m.test)
        if placed != set(usable):
            problems.append("pose-group manifest does not place every usable cycle")
    return problems
