"""Stroke segmentation and hit-phase extraction from joint-state recordings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import KinematicChain, forward


@dataclass(frozen=True)
class Recording:
    """Raw joint-state log; velocities are finite-differenced when absent."""

    timestamps: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray | None = None
    joint_names: tuple[str, ...] | None = None

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        q = np.asarray(self.positions, dtype=float)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "positions", q)
        if len(t) < 5:
            raise ValueError("recording needs at least 5 samples")
        if np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if q.ndim != 2 or q.shape[0] != len(t):
            raise ValueError("positions must be (T, D) matching timestamps")
        if self.velocities is not None:
            v = np.asarray(self.velocities, dtype=float)
            if v.shape != q.shape:
                raise ValueError("velocities shape must match positions")
            object.__setattr__(self, "velocities", v)
        if self.joint_names is not None:
            object.__setattr__(self, "joint_names", tuple(self.joint_names))
            if len(self.joint_names) != q.shape[1]:
                raise ValueError("joint_names length must match DoF count")

    @property
    def n_dof(self) -> int:
        return self.positions.shape[1]

    def effective_velocities(self) -> np.ndarray:
        if self.velocities is not None:
            return self.velocities
        return np.gradient(self.positions, self.timestamps, axis=0)


class NoStroke(Exception):
    """The velocity envelope never reaches the onset threshold."""


class NoCrossing(Exception):
    """The end-effector never crosses the hit plane inside the segment."""


def velocity_envelope(rec: Recording, window: int = 5) -> np.ndarray:
    """Per-sample max of absolute joint velocities, box-smoothed.

    Smoothing is centered and edge-truncated so the output length matches
    the recording.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be odd and >= 1")
    raw = np.max(np.abs(rec.effective_velocities()), axis=1)
    if window == 1:
        return raw
    half = window // 2
    out = np.empty_like(raw)
    for i in range(len(raw)):
        lo, hi = max(0, i - half), min(len(raw), i + half + 1)
        out[i] = raw[lo:hi].mean()
    return out


def _walk_back_to_minimum(env: np.ndarray, idx: int, direction: int,
                          floor: float = 0.0) -> int:
    """Walk from idx along direction to the nearest local minimum of env.

    Stops early once the envelope drops to the floor: below it the joints
    are effectively at rest and further walking only accretes idle samples.
    """
    i = idx
    while (0 < i + direction < len(env) and env[i + direction] < env[i]
           and env[i] > floor):
        i += direction
    return i


def segment_stroke(
    rec: Recording,
    v_on: float = 0.5,
    v_off: float = 0.1,
    min_hold: int = 3,
    window: int = 5,
) -> tuple[int, int]:
    """Locate the first stroke as hysteresis threshold crossings of the
    velocity envelope, walked back/forward to the surrounding local minima."""
    if not (v_on >= v_off > 0):
        raise ValueError("need v_on >= v_off > 0")
    env = velocity_envelope(rec, window=window)
    n = len(env)

    onset = None
    for i in range(n - min_hold + 1):
        if np.all(env[i:i + min_hold] >= v_on):
            onset = i
            break
    if onset is None:
        raise NoStroke("velocity envelope never sustains the onset threshold")

    offset = None
    for i in range(onset + 1, n - min_hold + 1):
        if np.all(env[i:i + min_hold] <= v_off):
            offset = i
            break
    if offset is None:
        offset = n - 1

    floor = 0.25 * v_off
    start = _walk_back_to_minimum(env, onset, -1, floor)
    end = _walk_back_to_minimum(env, offset, +1, floor)
    if end <= start:
        end = min(start + 1, n - 1)
    return start, end


def hit_phase(
    rec: Recording,
    seg: tuple[int, int],
    chain: KinematicChain,
    plane_point: np.ndarray,
    plane_normal: np.ndarray,
) -> float:
    """Phase in (0,1) where the end-effector first crosses the hit plane.

    The recording's first column is the base rail offset; the rest are arm
    joints fed to forward kinematics.
    """
    start, end = seg
    if not (0 <= start < end < len(rec.timestamps)):
        raise ValueError("invalid segment indices")
    if rec.n_dof != chain.n_total:
        raise ValueError("recording DoF count must match chain")
    normal = np.asarray(plane_normal, dtype=float)
    normal = normal / np.linalg.norm(normal)
    point = np.asarray(plane_point, dtype=float)

    t_seg = rec.timestamps[start:end + 1]
    dist = np.array([
        float(normal @ (forward(chain, row[0], row[1:]) - point))
        for row in rec.positions[start:end + 1]
    ])
    for i in range(len(dist) - 1):
        if dist[i] == 0.0 and dist[i + 1] != 0.0:
            continue
        if dist[i] * dist[i + 1] < 0 or (dist[i] != 0.0 and dist[i + 1] == 0.0):
            frac = dist[i] / (dist[i] - dist[i + 1])
            t_cross = t_seg[i] + frac * (t_seg[i + 1] - t_seg[i])
            z = (t_cross - t_seg[0]) / (t_seg[-1] - t_seg[0])
            return float(min(max(z, 1e-9), 1 - 1e-9))
    raise NoCrossing("end-effector never crosses the hit plane in segment")


def save_recording(rec: Recording, path) -> None:
    """Write the line format `t, q_1..q_D[, qd_1..qd_D]` with a header row."""
    names = rec.joint_names or tuple(f"j{i}" for i in range(rec.n_dof))
    with open(path, "w") as fh:
        fh.write(f"# D={rec.n_dof} joints={','.join(names)} "
                 f"velocities={'yes' if rec.velocities is not None else 'no'}\n")
        for i, t in enumerate(rec.timestamps):
            row = [repr(float(t))] + [repr(float(v)) for v in rec.positions[i]]
            if rec.velocities is not None:
                row += [repr(float(v)) for v in rec.velocities[i]]
            fh.write(",".join(row) + "\n")


def load_recording(path) -> Recording:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# D="):
            raise ValueError(f"{path}: missing recording header")
        fields = dict(tok.split("=", 1) for tok in header[2:].split())
        n_dof = int(fields["D"])
        names = tuple(fields["joints"].split(","))
        has_vel = fields.get("velocities", "no") == "yes"
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    expected = 1 + n_dof * (2 if has_vel else 1)
    if data.shape[1] != expected:
        raise ValueError(f"{path}: expected {expected} columns, got {data.shape[1]}")
    return Recording(
        timestamps=data[:, 0],
        positions=data[:, 1:1 + n_dof],
        velocities=data[:, 1 + n_dof:] if has_vel else None,
        joint_names=names,
    )
