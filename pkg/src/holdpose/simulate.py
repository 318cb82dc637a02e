"""Physics-lite generator of labelled grasp cycles.

Stability is judged with a quasi-static friction model of a parallel-jaw
grasp: two circular contact patches of radius ``patch_halfwidth`` with
uniform pressure. The translational capacity is ``2 mu F``; the torsional
capacity about the closing axis is ``2 * (2/3) mu F R``. The demand is the
gravitational plus inertial load of a point mass at the centre of mass.
Margins are ``(capacity - demand) / capacity``; phase labels follow from the
worst margin over the phase's acceleration envelope.

Accelerations passed to this module are *inertial* terms added to gravity,
i.e. ``-a`` for a body accelerating with ``a``.
"""

from __future__ import annotations

import json
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import product
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .core import (
    PRE_GRASP_SECONDS,
    Dataset,
    GraspCycle,
    Phase,
    PhaseLabel,
    Provenance,
)
from .posespace import (
    APPROACH_LOCAL,
    CLOSING_AXIS_LOCAL,
    HoldingPose,
    PoseGroup,
    PoseSpaceConfig,
    generate_pose_space,
    pose_table,
)

GRAVITY = 9.81
HIGH_FORCE = 80.0
LIFT_FORCES = (5.0, 15.0, 40.0)
TORSION_FACTOR = 2.0 / 3.0
REFERENCE_POSE = HoldingPose(1, PoseGroup.REFERENCE, (0.0, 0.0, 0.0, 1.0), 0)


@dataclass(frozen=True)
class GraspPoint:
    grasp_point_id: str
    com_offset: tuple[float, float, float]  # gripper frame, metres from the grasp point


@dataclass(frozen=True)
class ObjectSpec:
    object_id: str
    mass: float
    friction_coeff: float
    patch_halfwidth: float
    grasp_points: tuple[GraspPoint, ...]
    min_lift_force: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "grasp_points", tuple(self.grasp_points))
        if not self.mass > 0:
            raise ValueError(f"{self.object_id}: mass must be positive")
        if not self.friction_coeff > 0:
            raise ValueError(f"{self.object_id}: friction coefficient must be positive")
        if not self.patch_halfwidth > 0:
            raise ValueError(f"{self.object_id}: patch half-width must be positive")
        if not self.grasp_points:
            raise ValueError(f"{self.object_id}: at least one grasp point required")

    def grasp_point(self, gid: str | GraspPoint) -> GraspPoint:
        if isinstance(gid, GraspPoint):
            return gid
        for gp in self.grasp_points:
            if gp.grasp_point_id == gid:
                return gp
        raise KeyError(f"{self.object_id} has no grasp point {gid!r}")


@dataclass(frozen=True)
class ShakeProfile:
    """Rotational burst about the gripper axis, then per-axis arm shaking (mostly vertical)."""

    rot_impulse: float = 40.0  # rad/s^2
    lin_accel_amplitude: tuple[float, float, float] = (1.5, 1.5, 12.0)  # m/s^2, world axes, mostly vertical
    duration: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "lin_accel_amplitude", tuple(float(a) for a in self.lin_accel_amplitude))
        if self.rot_impulse < 0 or self.duration < 0 or min(self.lin_accel_amplitude) < 0:
            raise ValueError("shake profile entries must be nonnegative")


@dataclass(frozen=True)
class SimConfig:
    gravity: float = GRAVITY
    slip_band: float = 0.15
    lift_accel: float = 2.0
    transit_accel: float = 1.5
    shake: ShakeProfile = field(default_factory=ShakeProfile)
    grasp_duration: float = 3.0
    pose_duration: float = 5.0
    retract_duration: float = 4.0
    frame_rate: float = 4.0
    wrench_rate: float = 20.0
    tactile_shape: tuple[int, int] = (16, 16)
    rgb_shape: tuple[int, int] = (16, 16)
    tactile_noise: float = 0.005
    rgb_noise: float = 2.0
    force_noise: float = 0.05
    torque_noise: float = 0.005
    finger_length: float = 0.15
    pose_space: PoseSpaceConfig = field(default_factory=PoseSpaceConfig)

    def __post_init__(self):
        if self.slip_band <= 0:
            raise ValueError("slip_band must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        if "shake" in d:
            d["shake"] = ShakeProfile(**d["shake"])
        if "pose_space" in d:
            d["pose_space"] = PoseSpaceConfig(**{k: tuple(tuple(x) if isinstance(x, list) else x for x in v)
                                                  for k, v in d["pose_space"].items()})
        for k in ("tactile_shape", "rgb_shape"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)

    def boundaries(self) -> dict[Phase, tuple[float, float]]:
        t = PRE_GRASP_SECONDS
        out = {}
        for ph, dur in zip(Phase, (self.grasp_duration, self.pose_duration, self.shake.duration, self.retract_duration)):
            out[ph] = (t, t + dur)
            t += dur
        return out


@dataclass(frozen=True)
class StabilityMargin:
    translational: float
    rotational: float

    @property
    def value(self) -> float:
        return min(self.translational, self.rotational)

    @property
    def holds(self) -> bool:
        return self.value > 0


def _gravity_vec(gravity: float) -> np.ndarray:
    return np.array([0.0, 0.0, -gravity])


def capacities(obj: ObjectSpec, grip_force: float) -> tuple[float, float]:
    """Translational (N) and torsional (N*m) friction capacity of the grasp."""
    trans = 2.0 * obj.friction_coeff * grip_force
    rot = 2.0 * TORSION_FACTOR * obj.friction_coeff * grip_force * obj.patch_halfwidth
    return trans, rot


def load_demands(obj, gp, pose, accel, gravity=GRAVITY) -> tuple[float, float, float]:
    """Tangential force magnitude, signed torque about the closing axis, normal force."""
    R = pose.matrix
    n = R @ CLOSING_AXIS_LOCAL
    r = R @ np.asarray(gp.com_offset, dtype=float)
    f = obj.mass * (_gravity_vec(gravity) + np.asarray(accel, dtype=float))
    f_normal = float(f @ n)
    f_tan = f - f_normal * n
    torque = float(n @ np.cross(r, f))
    return float(np.linalg.norm(f_tan)), torque, f_normal


def stability_margin(obj: ObjectSpec, grasp_point, grip_force: float, pose: HoldingPose,
                     accel=(0.0, 0.0, 0.0), gravity: float = GRAVITY) -> StabilityMargin:
    if not grip_force > 0:
        raise ValueError("grip force must be positive")
    gp = obj.grasp_point(grasp_point)
    tan, torque, _ = load_demands(obj, gp, pose, accel, gravity)
    cap_t, cap_r = capacities(obj, grip_force)
    return StabilityMargin((cap_t - tan) / cap_t, (cap_r - abs(torque)) / cap_r)


def phase_accelerations(phase: Phase, obj: ObjectSpec, gp: GraspPoint, pose: HoldingPose,
                        cfg: SimConfig) -> list[tuple[HoldingPose, np.ndarray]]:
    """Vertices of the inertial-acceleration envelope of a phase.

    Both demands are convex in the acceleration, so the worst case over the
    envelope's convex hull is attained at one of these vertices.
    """
    zero = np.zeros(3)
    eye = np.eye(3)
    transit = [zero] + [s * cfg.transit_accel * eye[i] for i in range(3) for s in (1.0, -1.0)]
    if phase is Phase.GRASP:
        return [(REFERENCE_POSE, np.array([0.0, 0.0, s * cfg.lift_accel])) for s in (1.0, -1.0)]
    if phase is Phase.POSE:
        return [(pose, a) for a in transit]
    if phase is Phase.SHAKE:
        sh = cfg.shake
        r = pose.matrix @ np.asarray(gp.com_offset, dtype=float)
        tangential = sh.rot_impulse * np.cross(pose.approach, r)
        verts = [tangential, -tangential]
        amp = np.asarray(sh.lin_accel_amplitude)
        verts += [amp * np.array(signs) for signs in product((1.0, -1.0), repeat=3)]
        return [(pose, a) for a in verts]
    return [(pose, a) for a in transit] + [(REFERENCE_POSE, a) for a in transit]


def phase_margin(obj, grasp_point, grip_force, pose, phase: Phase, cfg: SimConfig) -> StabilityMargin:
    gp = obj.grasp_point(grasp_point)
    ms = [stability_margin(obj, gp, grip_force, p, a, cfg.gravity)
          for p, a in phase_accelerations(phase, obj, gp, pose, cfg)]
    return StabilityMargin(min(m.translational for m in ms), min(m.rotational for m in ms))


def label_from_margin(margin: float, slip_band: float) -> PhaseLabel:
    if margin > 0:
        return PhaseLabel.PASS
    if margin > -slip_band:
        return PhaseLabel.SLIP
    return PhaseLabel.DROP


def cycle_labels(obj, grasp_point, grip_force, pose, cfg: SimConfig):
    """Per-phase labels and scalar margins; phases after a Drop are NotPresent."""
    labels, margins = {}, {}
    dropped = False
    for ph in Phase:
        m = phase_margin(obj, grasp_point, grip_force, pose, ph, cfg).value
        margins[ph] = m
        if dropped:
            labels[ph] = PhaseLabel.NOT_PRESENT
            continue
        labels[ph] = label_from_margin(m, cfg.slip_band)
        dropped = labels[ph] is PhaseLabel.DROP
    return labels, margins


# --- tactile rendering -------------------------------------------------------

SLIP_MIN, SLIP_MAX = 0.1, 0.3  # accumulated slip added by one Slip phase
DROP_AT = 0.5  # fraction of the phase after which a dropping object is gone


@dataclass(frozen=True, eq=False)
class ContactHistory:
    """What the tactile sensor needs to know about a cycle over time.

    ``shear_ratio`` and ``torsion_ratio`` are static load / capacity ratios
    sampled at ``ratio_times`` (torsion is signed).
    """

    boundaries: dict
    labels: dict
    margins: dict
    slip_band: float
    contact_time: float
    ratio_times: np.ndarray
    shear_ratio: np.ndarray
    torsion_ratio: np.ndarray

    def _phase_slip(self, ph: Phase, frac: float) -> float:
        lab = self.labels[ph]
        if lab is PhaseLabel.SLIP:
            depth = min(1.0, -self.margins[ph] / self.slip_band)
            return frac * (SLIP_MIN + (SLIP_MAX - SLIP_MIN) * depth)
        if lab is PhaseLabel.DROP:
            return frac / DROP_AT
        return 0.0 * frac

    def slip_curve(self, t) -> np.ndarray:
        """Accumulated slip at each time; 1 or more means the object has left the fingers."""
        t = np.asarray(t, dtype=float)
        total = np.zeros_like(t)
        for ph in Phase:
            start, end = self.boundaries[ph]
            frac = np.clip((t - start) / (end - start), 0.0, 1.0)
            total = total + self._phase_slip(ph, frac)
            if self.labels[ph] in (PhaseLabel.DROP, PhaseLabel.NOT_PRESENT):
                break
        return total

    def slip_at(self, t: float) -> float:
        return float(self.slip_curve(t))

    def attached(self, t) -> np.ndarray | bool:
        out = self.slip_curve(t) < 1.0
        return bool(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ImprintParams:
    shape: tuple[int, int] = (16, 16)
    center: tuple[float, float] = (9.0, 7.5)
    sigma: float = 2.0  # pixels
    amplitude: float = 0.5
    max_shift: float = 6.0  # pixels travelled toward the top at full slip


def imprint_params_for(obj: ObjectSpec, grip_force: float, shape=(16, 16)) -> ImprintParams:
    h, w = shape
    scale = h / 16.0
    return ImprintParams(
        shape=tuple(shape),
        center=(9.0 * scale, (w - 1) / 2.0),
        sigma=scale * (1.8 + 40.0 * obj.patch_halfwidth),
        amplitude=0.45 + 0.15 * grip_force / HIGH_FORCE,
        max_shift=6.0 * scale,
    )


def sensor_background(shape) -> np.ndarray:
    h, w = shape
    rows = np.arange(h)[:, None] / max(h - 1, 1)
    cols = np.arange(w)[None, :] / max(w - 1, 1)
    return (0.1 + 0.04 * rows + 0.02 * np.cos(np.pi * cols)).astype(np.float32)


def render_tactile(history: ContactHistory, imprint: ImprintParams, t: float) -> np.ndarray:
    """Noise-free tactile image at time ``t``: sensor background plus imprint.

    The imprint is an anisotropic Gaussian. Shear load stretches it along
    the rows; torsional load widens it along the columns and twists it.
    Accumulated slip moves it toward row 0 and scales its amplitude by
    ``max(0, 1 - slip)``.
    """
    bg = sensor_background(imprint.shape)
    if t < history.contact_time:
        return bg
    s = history.slip_at(t)
    amp = imprint.amplitude * max(0.0, 1.0 - s)
    if amp <= 0.0:
        return bg
    shear = float(np.interp(t, history.ratio_times, history.shear_ratio))
    torsion = float(np.interp(t, history.ratio_times, history.torsion_ratio))
    cy = imprint.center[0] - imprint.max_shift * min(s, 1.0)
    cx = imprint.center[1]
    sig_long = imprint.sigma * (1.0 + 1.5 * min(shear, 1.5))
    sig_short = imprint.sigma * (1.0 + 1.2 * min(abs(torsion), 1.5))
    theta = 0.3 * float(np.clip(torsion, -1.5, 1.5))
    h, w = imprint.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    dy, dx = yy - cy, xx - cx
    u = np.cos(theta) * dy + np.sin(theta) * dx
    v = -np.sin(theta) * dy + np.cos(theta) * dx
    blob = np.exp(-0.5 * ((u / sig_long) ** 2 + (v / sig_short) ** 2))
    return (bg + amp * blob).astype(np.float32)


# --- cycle synthesis ---------------------------------------------------------


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


class _Trajectory:
    """Arm orientation, inertial acceleration and carried load over a cycle."""

    def __init__(self, obj, gp, grip_force, pose, cfg: SimConfig, history: ContactHistory):
        self.obj, self.gp, self.pose, self.cfg, self.history = obj, gp, pose, cfg, history
        self.b = cfg.boundaries()
        g0, g1 = self.b[Phase.GRASP]
        self.lift_start = g0 + 1.0
        self.lift_end = min(g1, self.lift_start + 1.5)
        self.slerp = Slerp([0.0, 1.0], Rotation.concatenate([Rotation.identity(), pose.rotation]))
        chord = pose.approach - APPROACH_LOCAL
        nrm = np.linalg.norm(chord)
        self.transit_dir = chord / nrm if nrm > 1e-9 else np.array([1.0, 0.0, 0.0])

    def _move_fraction(self, t, phase: Phase):
        s, e = self.b[phase]
        return np.clip((t - s) / (0.8 * (e - s)), 0.0, 1.0)

    def blend(self, t):
        """0 at the reference orientation, 1 at the target pose."""
        t = np.asarray(t, dtype=float)
        u = np.zeros_like(t)
        p0 = self.b[Phase.POSE][0]
        r0 = self.b[Phase.RETRACT][0]
        going = (t >= p0) & (t < r0)
        u[going] = _smoothstep(self._move_fraction(t[going], Phase.POSE))
        back = t >= r0
        u[back] = 1.0 - _smoothstep(self._move_fraction(t[back], Phase.RETRACT))
        return u

    def rotations(self, t) -> Rotation:
        return self.slerp(self.blend(t))

    def load(self, t):
        t = np.asarray(t, dtype=float)
        lift = np.clip((t - self.lift_start) / 0.5, 0.0, 1.0)
        end = self.b[Phase.RETRACT][1]
        release = np.clip((end - t) / 0.5, 0.0, 1.0)
        return lift * release * self.history.attached(t)

    def inertial_accel(self, t, rots: Rotation):
        cfg = self.cfg
        t = np.asarray(t, dtype=float)
        a = np.zeros(t.shape + (3,))
        u = np.clip((t - self.lift_start) / (self.lift_end - self.lift_start), 0.0, 1.0)
        lifting = (t >= self.lift_start) & (t < self.lift_end)
        a[lifting, 2] = -cfg.lift_accel * np.sin(2 * np.pi * u[lifting])
        for phase, sign in ((Phase.POSE, 1.0), (Phase.RETRACT, -1.0)):
            s, e = self.b[phase]
            m = (t >= s) & (t < s + 0.8 * (e - s))
            um = self._move_fraction(t[m], phase)
            a[m] = -sign * cfg.transit_accel * np.sin(2 * np.pi * um)[:, None] * self.transit_dir
        s, e = self.b[Phase.SHAKE]
        burst_end = s + 0.25 * (e - s)
        m = (t >= s) & (t < burst_end)
        if np.any(m):
            r = rots[np.flatnonzero(m)].apply(np.asarray(self.gp.com_offset, dtype=float))
            axis = rots[np.flatnonzero(m)].apply(APPROACH_LOCAL)
            alpha = cfg.shake.rot_impulse * np.sin(2 * np.pi * 2 * (t[m] - s) / max(burst_end - s, 1e-9))
            a[m] = -alpha[:, None] * np.cross(axis, r)
        m = (t >= burst_end) & (t < e)
        amp = np.asarray(cfg.shake.lin_accel_amplitude)
        phases = np.array([0.0, np.pi / 3, 2 * np.pi / 3])
        a[m] = amp * np.sin(2 * np.pi * 2.0 * (t[m, None] - burst_end) + phases)
        return a


def _static_ratios(obj, gp, grip_force, rots: Rotation, load, gravity):
    cap_t, cap_r = capacities(obj, grip_force)
    n = rots.apply(CLOSING_AXIS_LOCAL)
    r = rots.apply(np.asarray(gp.com_offset, dtype=float))
    f = obj.mass * load[:, None] * _gravity_vec(gravity)
    fn = np.sum(f * n, axis=1)
    tan = np.linalg.norm(f - fn[:, None] * n, axis=1)
    torque = np.sum(n * np.cross(r, f), axis=1)
    return tan / cap_t, torque / cap_r


def _render_rgb(cfg: SimConfig, obj, gp, traj: _Trajectory, times, rots: Rotation, rng) -> np.ndarray:
    """Schematic side view: gripper silhouette plus an object disc coloured by material."""
    h, w = cfg.rgb_shape
    times = np.asarray(times, dtype=float)
    n = len(times)
    x_lo, x_hi, z_lo, z_hi = -0.45, 0.45, -0.05, 0.75
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    img = np.empty((n, h, w, 3))
    img[...] = (110.0 + 30.0 * yy / h)[None, ..., None]
    img[:, yy >= h - 2] = (120.0, 90.0, 60.0)  # table

    def alpha(points, radius):
        # points: (n, k, 2) world (x, z) -> coverage map (n, h, w)
        py = (z_hi - points[..., 1]) / (z_hi - z_lo) * (h - 1)
        px = (points[..., 0] - x_lo) / (x_hi - x_lo) * (w - 1)
        d = np.sqrt((yy[None, None] - py[..., None, None]) ** 2 + (xx[None, None] - px[..., None, None]) ** 2)
        return np.clip(np.asarray(radius).reshape(-1, 1, 1, 1) + 0.5 - d, 0.0, 1.0).max(axis=1)

    def paint(a, colour):
        img[...] = img * (1 - a[..., None]) + a[..., None] * np.asarray(colour, dtype=float)

    g0 = traj.b[Phase.GRASP][0]
    L = cfg.finger_length
    table_z = 0.06
    before = times < g0 + 0.5
    wrist_z = np.where(
        before,
        0.5 - (0.5 - (table_z + L)) * np.clip((times - g0) / 0.5, 0.0, 1.0),
        table_z + L + (0.5 - table_z - L) * _smoothstep((times - traj.lift_start) / 1.5),
    )
    wrist = np.stack([np.zeros(n), np.zeros(n), wrist_z], axis=1)
    tip = wrist + rots.apply(np.array([0.0, 0.0, -L]))
    u = np.linspace(0.0, 1.0, 10)
    finger = wrist[:, None] + u[None, :, None] * (tip - wrist)[:, None]
    paint(alpha(finger[..., [0, 2]], 0.6), (30.0, 30.0, 35.0))

    s = traj.history.slip_curve(times)
    offset = np.asarray(gp.com_offset, dtype=float)
    com = tip + rots.apply(offset) + 0.04 * s[:, None] * rots.apply(APPROACH_LOCAL)
    gone = s >= 1.0
    com[gone] = np.stack([tip[gone, 0], np.zeros(gone.sum()), np.full(gone.sum(), table_z)], axis=1)
    com[before] = (offset[0], 0.0, table_z)
    hue = float(np.clip((obj.friction_coeff - 0.2) / 1.0, 0.0, 1.0))
    colour = (60.0 + 180.0 * hue, 90.0, 240.0 - 180.0 * hue)
    radius = 1.2 + 2.5 * obj.mass ** (1.0 / 3.0)
    paint(alpha(com[:, None][..., [0, 2]], radius), colour)
    img += rng.normal(0.0, cfg.rgb_noise, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def cycle_id_for(object_id: str, grasp_point_id: str, grip_force: float, pose_id: int) -> str:
    return f"{object_id}-{grasp_point_id}-f{grip_force:g}-p{pose_id:02d}"


def _seed_for(noise_seed, cycle_id: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(noise_seed) & 0xFFFFFFFF, zlib.crc32(cycle_id.encode())])


def simulate_cycle(obj: ObjectSpec, grasp_point, grip_force: float, pose: HoldingPose,
                   shake: ShakeProfile | None = None, noise_seed: int = 0,
                   cfg: SimConfig | None = None) -> GraspCycle:
    """Simulate one grasp cycle with labels and all sensor streams."""
    cfg = cfg or SimConfig()
    if shake is not None and shake != cfg.shake:
        cfg = replace(cfg, shake=shake)
    gp = obj.grasp_point(grasp_point)
    cid = cycle_id_for(obj.object_id, gp.grasp_point_id, grip_force, pose.pose_id)
    rng = np.random.default_rng(_seed_for(noise_seed, cid))
    labels, margins = cycle_labels(obj, gp, grip_force, pose, cfg)
    bounds = cfg.boundaries()
    end = bounds[Phase.RETRACT][1]
    contact_time = bounds[Phase.GRASP][0] + 0.5

    # ratio knots need the trajectory, which needs the history for "attached";
    # build it in two steps with a placeholder ratio track.
    knots = np.linspace(0.0, end, int(round(end * 10)) + 1)
    history = ContactHistory(bounds, labels, margins, cfg.slip_band, contact_time,
                             knots, np.zeros_like(knots), np.zeros_like(knots))
    traj = _Trajectory(obj, gp, grip_force, pose, cfg, history)
    shear, torsion = _static_ratios(obj, gp, grip_force, traj.rotations(knots), traj.load(knots), cfg.gravity)
    history = ContactHistory(bounds, labels, margins, cfg.slip_band, contact_time, knots, shear, torsion)
    traj.history = history

    frame_t = np.arange(int(np.floor(end * cfg.frame_rate + 1e-9)) + 1) / cfg.frame_rate
    imprint = imprint_params_for(obj, grip_force, cfg.tactile_shape)
    tactile = np.stack([render_tactile(history, imprint, t) for t in frame_t])
    tactile = (tactile + rng.normal(0.0, cfg.tactile_noise, tactile.shape)).astype(np.float32)
    pre_contact = (sensor_background(cfg.tactile_shape)
                   + rng.normal(0.0, cfg.tactile_noise, cfg.tactile_shape)).astype(np.float32)

    rgb = _render_rgb(cfg, obj, gp, traj, frame_t, traj.rotations(frame_t), rng)

    wrench_t = np.arange(int(np.floor(end * cfg.wrench_rate + 1e-9)) + 1) / cfg.wrench_rate
    rots = traj.rotations(wrench_t)
    load = traj.load(wrench_t)
    accel = traj.inertial_accel(wrench_t, rots)
    f_world = obj.mass * load[:, None] * (_gravity_vec(cfg.gravity) + accel)
    f_sensor = rots.inv().apply(f_world)
    lever = np.array([0.0, 0.0, -cfg.finger_length]) + np.asarray(gp.com_offset, dtype=float)
    torque = np.cross(lever, f_sensor)
    wrench = np.hstack([
        f_sensor + rng.normal(0.0, cfg.force_noise, f_sensor.shape),
        torque + rng.normal(0.0, cfg.torque_noise, torque.shape),
    ])

    return GraspCycle(
        cycle_id=cid,
        object_id=obj.object_id,
        grasp_point_id=gp.grasp_point_id,
        grip_force=grip_force,
        pose_id=pose.pose_id,
        phase_labels=labels,
        phase_boundaries=bounds,
        tactile_times=frame_t,
        tactile_frames=tactile,
        rgb_times=frame_t,
        rgb_frames=rgb,
        wrench_times=wrench_t,
        wrench_series=wrench,
        pre_contact_tactile=pre_contact,
        raw={"margins": {ph.key: float(m) for ph, m in margins.items()}},
    )


# --- catalogs and datasets ---------------------------------------------------


def _grasp_ok(obj: ObjectSpec, force: float, cfg: SimConfig) -> bool:
    return all(
        label_from_margin(phase_margin(obj, gp, force, REFERENCE_POSE, Phase.GRASP, cfg).value, cfg.slip_band)
        is not PhaseLabel.DROP
        for gp in obj.grasp_points
    )


def min_lift_force(obj: ObjectSpec, cfg: SimConfig | None = None) -> float:
    """Smallest of 5/15/40 N that lifts the object at every grasp point without a drop."""
    cfg = cfg or SimConfig()
    for force in LIFT_FORCES:
        if _grasp_ok(obj, force, cfg):
            return force
    return LIFT_FORCES[-1]


def make_catalog(n_objects: int = 26, seed: int = 0, cfg: SimConfig | None = None) -> list[ObjectSpec]:
    """Random household-like objects; about 2.2 grasp points each on average."""
    if n_objects < 1:
        raise ValueError("catalog needs at least one object")
    cfg = cfg or SimConfig()
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n_objects:
        i = len(out)
        n_gp = int(rng.choice([1, 2, 3], p=[0.2, 0.4, 0.4]))
        gps = tuple(
            GraspPoint(
                f"g{j}",
                (
                    float(rng.uniform(-0.06, 0.06)),
                    float(rng.uniform(-0.01, 0.01)),
                    float(rng.uniform(-0.12, 0.04)),
                ),
            )
            for j in range(n_gp)
        )
        obj = ObjectSpec(
            object_id=f"obj{i:02d}",
            mass=float(np.exp(rng.uniform(np.log(0.05), np.log(1.2)))),
            friction_coeff=float(rng.uniform(0.3, 1.1)),
            patch_halfwidth=float(rng.uniform(0.004, 0.012)),
            grasp_points=gps,
        )
        if not _grasp_ok(obj, LIFT_FORCES[-1], cfg):
            continue  # cannot be lifted at all; draw again
        out.append(replace(obj, min_lift_force=min_lift_force(obj, cfg)))
    return out


def catalog_to_records(catalog: Sequence[ObjectSpec]) -> list[dict]:
    return [
        {
            "object_id": o.object_id,
            "mass_kg": o.mass,
            "friction_coeff": o.friction_coeff,
            "patch_halfwidth_m": o.patch_halfwidth,
            "min_lift_force_n": o.min_lift_force,
            "grasp_points": [{"id": g.grasp_point_id, "com_offset_m": list(g.com_offset)} for g in o.grasp_points],
        }
        for o in catalog
    ]


def catalog_from_records(records: Iterable[dict]) -> list[ObjectSpec]:
    return [
        ObjectSpec(
            object_id=r["object_id"],
            mass=float(r["mass_kg"]),
            friction_coeff=float(r["friction_coeff"]),
            patch_halfwidth=float(r["patch_halfwidth_m"]),
            min_lift_force=float(r.get("min_lift_force_n", 5.0)),
            grasp_points=tuple(GraspPoint(g["id"], tuple(float(v) for v in g["com_offset_m"]))
                               for g in r["grasp_points"]),
        )
        for r in records
    ]


def save_catalog(catalog: Sequence[ObjectSpec], path) -> None:
    Path(path).write_text(json.dumps({"objects": catalog_to_records(catalog)}, indent=2))


def load_catalog(path) -> list[ObjectSpec]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"catalog file not found: {path}")
    return catalog_from_records(json.loads(path.read_text())["objects"])


def _simulate_job(args):
    obj, gp_id, force, pose, seed, cfg = args
    return simulate_cycle(obj, gp_id, force, pose, noise_seed=seed, cfg=cfg)


def synthesize_dataset(catalog: Sequence[ObjectSpec], cfg: SimConfig | None = None, seed: int = 0,
                       workers: int = 1) -> Dataset:
    """Every (grasp point x {min lift force, 80 N} x 16 poses) cycle per object."""
    if not catalog:
        raise ValueError("catalog is empty")
    cfg = cfg or SimConfig()
    poses = generate_pose_space(cfg.pose_space)
    jobs = [
        (obj, gp.grasp_point_id, force, pose, seed, cfg)
        for obj in catalog
        for gp in obj.grasp_points
        for force in (obj.min_lift_force, HIGH_FORCE)
        for pose in poses
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cycles = list(pool.map(_simulate_job, jobs, chunksize=16))
    else:
        cycles = [_simulate_job(j) for j in jobs]
    counts = {ph.key: {lab.value: 0 for lab in PhaseLabel} for ph in Phase}
    for c in cycles:
        for ph, lab in c.phase_labels.items():
            counts[ph.key][lab.value] += 1
    meta = {
        "seed": seed,
        "sim_config": cfg.to_dict(),
        "catalog": catalog_to_records(catalog),
        "pose_space": pose_table(poses),
        "label_counts": counts,
    }
    return Dataset(tuple(cycles), Provenance.SYNTHETIC, meta)
