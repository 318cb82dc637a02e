"""Dataset directory format and the release-ingestion adapter.

Layout::

    <root>/dataset.json               provenance, ordered cycle ids, metadata
    <root>/cycles/<cycle_id>/meta.json
    <root>/cycles/<cycle_id>/<stream>.npy, <stream>_times.npy
    <root>/cycles/<cycle_id>/pre_contact_tactile.npy
"""

from __future__ import annotations

import json
import logging
import re
from pathlib import Path
from typing import Any

import numpy as np

from .core import Dataset, GraspCycle, Phase, PhaseLabel, Provenance, SchemaError

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
_STREAM_FILES = {
    "tactile": ("tactile.npy", "tactile_times.npy"),
    "rgb": ("rgb.npy", "rgb_times.npy"),
    "wrench": ("wrench.npy", "wrench_times.npy"),
}
_EMPTY = {"tactile": (0, 0, 0), "rgb": (0, 0, 0, 3), "wrench": (0, 6)}


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"cannot serialize {type(o).__name__}")


def cycle_record(c: GraspCycle) -> dict:
    return {
        "cycle_id": c.cycle_id,
        "object_id": c.object_id,
        "grasp_point_id": c.grasp_point_id,
        "grip_force_n": c.grip_force,
        "pose_id": c.pose_id,
        "labels": {ph.key: lab.value for ph, lab in sorted(c.phase_labels.items())},
        "phase_boundaries": {ph.key: list(b) for ph, b in sorted(c.phase_boundaries.items())},
        "streams": {name: {"data": f[0], "times": f[1]} for name, f in _STREAM_FILES.items()},
        "raw": dict(c.raw),
    }


def write_cycle(c: GraspCycle, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "meta.json").write_text(_dumps(cycle_record(c)))
    for name, (times, data) in c.streams().items():
        data_file, times_file = _STREAM_FILES[name]
        np.save(d / data_file, np.ascontiguousarray(data))
        np.save(d / times_file, np.ascontiguousarray(times))
    np.save(d / "pre_contact_tactile.npy", np.ascontiguousarray(c.pre_contact_tactile))


def _require(rec: dict, key: str, cid):
    if key not in rec:
        raise SchemaError(cid, key, "missing field")
    return rec[key]


def read_cycle(directory) -> GraspCycle:
    d = Path(directory)
    rec = json.loads((d / "meta.json").read_text())
    cid = rec.get("cycle_id")
    try:
        labels = {Phase.from_key(k): PhaseLabel(v) for k, v in _require(rec, "labels", cid).items()}
        bounds = {Phase.from_key(k): tuple(v) for k, v in _require(rec, "phase_boundaries", cid).items()}
    except (KeyError, ValueError) as exc:
        raise SchemaError(cid, "labels", f"unreadable label or phase: {exc}") from exc
    arrays = {}
    for name, (data_file, times_file) in _STREAM_FILES.items():
        if (d / data_file).exists():
            arrays[name] = (np.load(d / times_file), np.load(d / data_file))
        else:
            arrays[name] = (np.zeros(0), np.zeros(_EMPTY[name]))
    pre = np.load(d / "pre_contact_tactile.npy") if (d / "pre_contact_tactile.npy").exists() else np.zeros((0, 0))
    return GraspCycle(
        cycle_id=_require(rec, "cycle_id", cid),
        object_id=str(_require(rec, "object_id", cid)),
        grasp_point_id=str(_require(rec, "grasp_point_id", cid)),
        grip_force=float(_require(rec, "grip_force_n", cid)),
        pose_id=int(_require(rec, "pose_id", cid)),
        phase_labels=labels,
        phase_boundaries=bounds,
        tactile_times=arrays["tactile"][0],
        tactile_frames=arrays["tactile"][1],
        rgb_times=arrays["rgb"][0],
        rgb_frames=arrays["rgb"][1],
        wrench_times=arrays["wrench"][0],
        wrench_series=arrays["wrench"][1],
        pre_contact_tactile=pre,
        raw=rec.get("raw", {}),
    )


def save_dataset(d: Dataset, root, extra_meta: dict | None = None) -> Path:
    root = Path(root)
    (root / "cycles").mkdir(parents=True, exist_ok=True)
    for c in d.cycles:
        write_cycle(c, root / "cycles" / c.cycle_id)
    header = {
        "format_version": FORMAT_VERSION,
        "provenance": d.provenance.value,
        "n_cycles": len(d),
        "cycle_ids": [c.cycle_id for c in d.cycles],
        "meta": {**dict(d.meta), **(extra_meta or {})},
    }
    (root / "dataset.json").write_text(_dumps(header))
    return root


def load_dataset(root) -> Dataset:
    root = Path(root)
    header_path = root / "dataset.json"
    if not header_path.is_file():
        raise FileNotFoundError(f"no dataset.json under {root}")
    header = json.loads(header_path.read_text())
    if header.get("format_version") != FORMAT_VERSION:
        raise SchemaError(None, "format_version", f"unsupported version {header.get('format_version')!r}")
    cycles = [read_cycle(root / "cycles" / cid) for cid in header["cycle_ids"]]
    return Dataset(tuple(cycles), Provenance(header["provenance"]), header.get("meta", {}))


# --- ingestion of the public release ----------------------------------------

_ALIASES = {
    "cycle_id": ("cycle_id", "id", "trial_id", "datapoint"),
    "object_id": ("object_id", "object", "object_name", "obj"),
    "grasp_point_id": ("grasp_point_id", "grasp_point", "grasp_location", "grasp_id"),
    "grip_force_n": ("grip_force_n", "grip_force", "gripper_force", "force"),
    "pose_id": ("pose_id", "pose", "holding_pose", "pose_num"),
    "phase_boundaries": ("phase_boundaries", "phase_times", "phases"),
}
_LABEL_KEYS = {
    Phase.GRASP: ("grasp", "grasp_label", "grasping"),
    Phase.POSE: ("pose", "pose_label", "holding"),
    Phase.SHAKE: ("shake", "shake_label", "shaking", "stability_check", "stability"),
    Phase.RETRACT: ("retract", "retract_label", "release"),
}
_STREAM_ALIASES = {
    "tactile": ("tactile", "gelsight"),
    "rgb": ("rgb", "camera", "image"),
    "wrench": ("wrench", "ft", "force_torque"),
}


def normalize_label(text: Any) -> PhaseLabel:
    key = re.sub(r"[^a-z]", "", str(text).lower())
    table = {
        "pass": PhaseLabel.PASS,
        "stable": PhaseLabel.PASS,
        "slip": PhaseLabel.SLIP,
        "drop": PhaseLabel.DROP,
        "notpresent": PhaseLabel.NOT_PRESENT,
        "na": PhaseLabel.NOT_PRESENT,
        "none": PhaseLabel.NOT_PRESENT,
    }
    if key not in table:
        raise ValueError(f"unknown phase label {text!r}")
    return table[key]


def _pick(rec: dict, names) -> tuple[str | None, Any]:
    for n in names:
        if n in rec:
            return n, rec[n]
    return None, None


def _find_stream(d: Path, stream: str):
    for alias in _STREAM_ALIASES[stream]:
        data, times = d / f"{alias}.npy", d / f"{alias}_times.npy"
        if data.exists() and times.exists():
            return np.load(times), np.load(data)
    return None


def ingest_cycle_dir(d: Path) -> GraspCycle:
    """Map one release cycle directory (``*.json`` metadata plus ``.npy`` streams)."""
    meta_files = sorted(d.glob("*.json"))
    if not meta_files:
        raise SchemaError(d.name, "meta", "no JSON metadata record")
    rec = json.loads(meta_files[0].read_text())
    used = set()
    fields = {}
    for target, names in _ALIASES.items():
        key, value = _pick(rec, names)
        if key is not None:
            used.add(key)
        fields[target] = value
    cid = str(fields["cycle_id"] or d.name)
    for target in ("object_id", "grasp_point_id", "grip_force_n", "pose_id"):
        if fields[target] is None:
            raise SchemaError(cid, target, "missing field")

    label_src = rec.get("labels")
    if isinstance(label_src, dict):
        used.add("labels")
    else:
        label_src = rec
    labels = {}
    for ph, names in _LABEL_KEYS.items():
        key, value = _pick(label_src, names)
        if key is None:
            raise SchemaError(cid, f"labels.{ph.key}", "missing phase label")
        if label_src is rec:
            used.add(key)
        try:
            labels[ph] = normalize_label(value)
        except ValueError as exc:
            raise SchemaError(cid, f"labels.{ph.key}", str(exc)) from exc

    bounds_raw = fields["phase_boundaries"]
    if bounds_raw:
        bounds = {Phase.from_key(k): tuple(float(x) for x in v) for k, v in bounds_raw.items()}
    else:
        bounds = {}

    streams = {}
    for name in _STREAM_FILES:
        found = _find_stream(d, name)
        streams[name] = found if found is not None else (np.zeros(0), np.zeros(_EMPTY[name]))
    pre_path = d / "pre_contact_tactile.npy"
    pre = np.load(pre_path) if pre_path.exists() else np.zeros((0, 0))

    raw = {k: v for k, v in rec.items() if k not in used}
    return GraspCycle(
        cycle_id=cid,
        object_id=str(fields["object_id"]),
        grasp_point_id=str(fields["grasp_point_id"]),
        grip_force=float(fields["grip_force_n"]),
        pose_id=int(fields["pose_id"]),
        phase_labels=labels,
        phase_boundaries=bounds,
        tactile_times=streams["tactile"][0],
        tactile_frames=streams["tactile"][1],
        rgb_times=streams["rgb"][0],
        rgb_frames=streams["rgb"][1],
        wrench_times=streams["wrench"][0],
        wrench_series=streams["wrench"][1],
        pre_contact_tactile=pre,
        raw=raw,
    )


def ingest_release(src) -> Dataset:
    """Walk a release tree; every directory holding a JSON record is one cycle."""
    src = Path(src)
    if not src.is_dir():
        raise FileNotFoundError(f"release directory not found: {src}")
    dirs = sorted({p.parent for p in src.rglob("*.json")})
    cycles = []
    for d in dirs:
        cycles.append(ingest_cycle_dir(d))
    log.info("ingested %d cycles from %s", len(cycles), src)
    return Dataset(tuple(cycles), Provenance.INGESTED, {"source": str(src)})
