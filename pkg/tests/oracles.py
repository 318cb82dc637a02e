"""Independent reference computations used by the tests.

Nothing here calls into the package's physics; the grasp oracle integrates
friction over a discretized contact patch and steps the load up from zero.
"""

import numpy as np


def quat_to_matrix(q):
    x, y, z, w = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def disk_points(radius, n=161):
    """Cell centres and areas of a square grid clipped to a disk."""
    h = 2 * radius / n
    c = (np.arange(n) + 0.5) * h - radius
    xx, yy = np.meshgrid(c, c)
    inside = xx ** 2 + yy ** 2 <= radius ** 2
    return xx[inside], yy[inside], h * h


def patch_capacities(mu, grip_force, radius, n=161):
    """Friction capacities of two pads with uniform pressure, by summation over patch cells.

    Returns (max tangential force, max torque about the pad normal).
    """
    x, y, dA = disk_points(radius, n)
    area = dA * len(x)
    p = grip_force / area
    dist = np.hypot(x, y)
    force = 2 * mu * p * dA * len(x)
    torque = 2 * mu * p * dA * dist.sum()
    return force, torque


def quasi_static_holds(mass, mu, radius, com_offset_local, grip_force, quat_xyzw, inertial_accel,
                       gravity=9.81, steps=400):
    """Ramp the load from zero to its full value and report whether the grasp ever slips.

    Loads are resolved in the gripper frame, whose y axis is the pad normal.
    """
    R = quat_to_matrix(quat_xyzw)
    f_world_full = mass * (np.array([0.0, 0.0, -gravity]) + np.asarray(inertial_accel, dtype=float))
    f_cap, t_cap = patch_capacities(mu, grip_force, radius)
    r = np.asarray(com_offset_local, dtype=float)
    for k in range(1, steps + 1):
        f_local = R.T @ (f_world_full * k / steps)
        shear = np.hypot(f_local[0], f_local[2])
        twist = abs(np.cross(r, f_local)[1])
        if shear > f_cap or twist > t_cap:
            return False
    return True


def finite_difference_errors(loss_fn, tensors, grads, eps=1e-4, floor=1e-8):
    """Per-tensor max relative error between analytic and central-difference gradients.

    Uses the fourth-order central stencil; the relative error of one entry is
    ``|a - n| / max(|a|, |n|, floor)``.
    """
    out = {}
    for name, w in tensors.items():
        num = np.zeros_like(w)
        it = np.nditer(w, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = w[i]
            f = {}
            for k in (-2, -1, 1, 2):
                w[i] = old + k * eps
                f[k] = loss_fn()
            w[i] = old
            num[i] = (f[-2] - 8 * f[-1] + 8 * f[1] - f[2]) / (12 * eps)
        a = grads[name]
        out[name] = float(np.max(np.abs(a - num) / np.maximum(np.maximum(np.abs(a), np.abs(num)), floor)))
    return out


def lstm_cell(x, h, c, Wx, Wh, b):
    """One LSTM step written out gate by gate (gate order i, f, g, o)."""
    H = len(h)
    z = Wx @ x + Wh @ h + b
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    i, f, g, o = sig(z[:H]), sig(z[H:2 * H]), np.tanh(z[2 * H:3 * H]), sig(z[3 * H:])
    c = f * c + i * g
    return o * np.tanh(c), c


def mean_xent(logits, y):
    logits = np.asarray(logits, dtype=np.float64)
    m = logits.max(axis=1, keepdims=True)
    logz = (m + np.log(np.exp(logits - m).sum(axis=1, keepdims=True)))[:, 0]
    return float(np.mean(logz - logits[np.arange(len(y)), y]))
