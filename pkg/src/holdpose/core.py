"""Domain types and label algebra for grasp cycles.

A grasp cycle is one trial: grasp and lift, move to a holding pose, shake,
retract. Each phase carries a four-way annotation which collapses to a
binary stable / not-stable label for learning.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Any, Mapping, Sequence

import numpy as np

PRE_GRASP_SECONDS = 1.0  # recording starts this long before the grasp
_TIME_TOL = 1e-6


class SchemaError(ValueError):
    """A cycle or dataset violates the on-disk / in-memory schema."""

    def __init__(self, cycle_id: str | None, field_name: str, rule: str):
        self.cycle_id = cycle_id
        self.field = field_name
        self.rule = rule
        where = f"cycle {cycle_id!r}" if cycle_id is not None else "dataset"
        super().__init__(f"{where}: field {field_name!r}: {rule}")


class Phase(IntEnum):
    GRASP = 0
    POSE = 1
    SHAKE = 2
    RETRACT = 3

    @property
    def key(self) -> str:
        return self.name.lower()

    @classmethod
    def from_key(cls, key: str) -> "Phase":
        return cls[key.upper()]


class PhaseLabel(str, Enum):
    PASS = "Pass"
    SLIP = "Slip"
    DROP = "Drop"
    NOT_PRESENT = "NotPresent"


class BinaryLabel(IntEnum):
    """Class index order used by every classifier: Stable=0, NotStable=1."""

    STABLE = 0
    NOT_STABLE = 1


class Provenance(str, Enum):
    SYNTHETIC = "Synthetic"
    INGESTED = "Ingested"


def binary_label(p: PhaseLabel) -> BinaryLabel:
    """Collapse a phase annotation: only Pass counts as stable."""
    return BinaryLabel.STABLE if PhaseLabel(p) is PhaseLabel.PASS else BinaryLabel.NOT_STABLE


def encode_label(p: PhaseLabel) -> str:
    return PhaseLabel(p).value


def decode_label(s: str) -> PhaseLabel:
    return PhaseLabel(s)


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str

    def __str__(self) -> str:
        return f"{self.field}: {self.rule}"


def _readonly(a: Any, dtype=None) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GraspCycle:
    """One grasp trial with per-phase labels and time-indexed sensor streams.

    Timestamps are seconds relative to the start of recording. Tactile frames
    are (N, H, W), RGB frames (N, H, W, 3), the wrench series (N, 6) with
    force in N followed by torque in N*m, all in the wrist sensor frame.
    """

    cycle_id: str
    object_id: str
    grasp_point_id: str
    grip_force: float
    pose_id: int
    phase_labels: Mapping[Phase, PhaseLabel]
    phase_boundaries: Mapping[Phase, tuple[float, float]]
    tactile_times: np.ndarray
    tactile_frames: np.ndarray
    rgb_times: np.ndarray
    rgb_frames: np.ndarray
    wrench_times: np.ndarray
    wrench_series: np.ndarray
    pre_contact_tactile: np.ndarray
    raw: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        labels = {Phase(k): PhaseLabel(v) for k, v in dict(self.phase_labels).items()}
        bounds = {Phase(k): (float(v[0]), float(v[1])) for k, v in dict(self.phase_boundaries).items()}
        object.__setattr__(self, "phase_labels", labels)
        object.__setattr__(self, "phase_boundaries", bounds)
        object.__setattr__(self, "grip_force", float(self.grip_force))
        object.__setattr__(self, "pose_id", int(self.pose_id))
        for name in ("tactile_times", "rgb_times", "wrench_times"):
            object.__setattr__(self, name, _readonly(getattr(self, name), np.float64))
        for name in ("tactile_frames", "rgb_frames", "wrench_series", "pre_contact_tactile"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    def label(self, phase: Phase) -> PhaseLabel:
        return self.phase_labels[phase]

    def binary(self, phase: Phase) -> BinaryLabel:
        return binary_label(self.phase_labels[phase])

    def span(self, first: Phase, last: Phase) -> tuple[float, float]:
        return self.phase_boundaries[first][0], self.phase_boundaries[last][1]

    def streams(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        return {
            "tactile": (self.tactile_times, self.tactile_frames),
            "rgb": (self.rgb_times, self.rgb_frames),
            "wrench": (self.wrench_times, self.wrench_series),
        }


def _check_labels(c: GraspCycle) -> list[Violation]:
    out = []
    seen_drop = False
    for ph in Phase:
        lab = c.phase_labels.get(ph)
        if lab is None:
            out.append(Violation(f"labels.{ph.key}", "missing phase label"))
            continue
        if lab is PhaseLabel.NOT_PRESENT and not seen_drop:
            out.append(Violation(f"labels.{ph.key}", "NotPresent without prior Drop"))
        if lab is PhaseLabel.DROP:
            seen_drop = True
    return out


def _check_boundaries(c: GraspCycle) -> list[Violation]:
    out = []
    missing = [ph for ph in Phase if ph not in c.phase_boundaries]
    for ph in missing:
        out.append(Violation(f"phase_boundaries.{ph.key}", "missing phase boundary"))
    if missing:
        return out
    prev_end = None
    for ph in Phase:
        start, end = c.phase_boundaries[ph]
        if not (np.isfinite(start) and np.isfinite(end)) or end <= start:
            out.append(Violation(f"phase_boundaries.{ph.key}", "empty or reversed interval"))
        if prev_end is not None:
            if start < prev_end - _TIME_TOL:
                out.append(Violation(f"phase_boundaries.{ph.key}", "phase boundaries overlap"))
            elif start > prev_end + _TIME_TOL:
                out.append(Violation(f"phase_boundaries.{ph.key}", "phase boundaries not contiguous"))
        prev_end = end
    return out


def _check_streams(c: GraspCycle) -> list[Violation]:
    out = []
    t0 = t1 = None
    if all(ph in c.phase_boundaries for ph in (Phase.GRASP, Phase.RETRACT)):
        t0 = c.phase_boundaries[Phase.GRASP][0] - PRE_GRASP_SECONDS
        t1 = c.phase_boundaries[Phase.RETRACT][1]
    pre = c.pre_contact_tactile
    if pre.ndim != 2:
        out.append(Violation("pre_contact_tactile", "expected an H x W image"))
    shapes = {"tactile": 3, "rgb": 4, "wrench": 2}
    for name, (times, data) in c.streams().items():
        if times.ndim != 1 or data.ndim != shapes[name] or len(times) != len(data):
            out.append(Violation(name, "stream shape does not match its timestamps"))
            continue
        if len(times) == 0:
            out.append(Violation(name, "empty stream"))
            continue
        if np.any(np.diff(times) <= 0):
            out.append(Violation(name, "timestamps not strictly increasing"))
        if not np.all(np.isfinite(data)):
            out.append(Violation(name, "non-finite samples"))
        if t0 is not None and (times[0] > t0 + _TIME_TOL or times[-1] < t1 - _TIME_TOL):
            out.append(Violation(name, "stream does not cover [grasp start - 1 s, retract end]"))
    if c.tactile_frames.ndim == 3 and pre.ndim == 2 and c.tactile_frames.shape[1:] != pre.shape:
        out.append(Violation("tactile", "frame shape differs from pre-contact image"))
    if c.rgb_frames.ndim == 4 and c.rgb_frames.shape[-1] != 3:
        out.append(Violation("rgb", "expected 3 colour channels"))
    if c.wrench_series.ndim == 2 and c.wrench_series.shape[1] != 6:
        out.append(Violation("wrench", "expected 6-vectors"))
    return out


def validate_cycle(c: GraspCycle) -> list[Violation]:
    """Return every invariant violation of ``c``; empty means valid."""
    out = []
    if not c.cycle_id:
        out.append(Violation("cycle_id", "empty id"))
    if not (c.grip_force > 0 and np.isfinite(c.grip_force)):
        out.append(Violation("grip_force_n", "grip force must be positive"))
    if not 1 <= c.pose_id <= 16:
        out.append(Violation("pose_id", "pose id outside 1..16"))
    out += _check_labels(c)
    out += _check_boundaries(c)
    out += _check_streams(c)
    return out


def require_valid(c: GraspCycle) -> None:
    problems = validate_cycle(c)
    if problems:
        raise SchemaError(c.cycle_id, problems[0].field, problems[0].rule)


@dataclass(frozen=True, eq=False)
class Dataset:
    cycles: tuple[GraspCycle, ...]
    provenance: Provenance = Provenance.SYNTHETIC
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "cycles", tuple(self.cycles))
        object.__setattr__(self, "provenance", Provenance(self.provenance))
        seen = set()
        for c in self.cycles:
            if c.cycle_id in seen:
                raise SchemaError(c.cycle_id, "cycle_id", "duplicate cycle id")
            seen.add(c.cycle_id)

    def __len__(self) -> int:
        return len(self.cycles)

    def __iter__(self):
        return iter(self.cycles)

    def by_id(self) -> dict[str, GraspCycle]:
        return {c.cycle_id: c for c in self.cycles}

    def subset(self, cycles: Sequence[GraspCycle]) -> "Dataset":
        return Dataset(tuple(cycles), self.provenance, self.meta)


def filter_usable(d: Dataset) -> Dataset:
    """Drop cycles whose object fell during the grasp or pose phase.

    Such cycles have no object left to shake. Order is preserved.
    """
    kept = []
    for c in d.cycles:
        require_valid(c)
        if c.label(Phase.GRASP) is PhaseLabel.DROP or c.label(Phase.POSE) is PhaseLabel.DROP:
            continue
        kept.append(c)
    return d.subset(kept)
