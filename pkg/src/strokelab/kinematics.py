"""Forward kinematics, Jacobian, and limit-clipped iterative IK.

The chain is serial with a prismatic first joint (the mobile base rail)
followed by revolute arm joints.  Each joint has a fixed parent transform
applied before its motion.  IK accumulates joint offsets from a seed
configuration and clamps the cumulative offsets to a safety box on every
iteration, so returned solutions can never leave the limits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

PRISMATIC = "prismatic"
REVOLUTE = "revolute"


def rpy_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Rotation from roll-pitch-yaw (x-y-z extrinsic)."""
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return rz @ ry @ rx


def axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    cc = 1.0 - c
    return np.array([
        [c + x * x * cc, x * y * cc - z * s, x * z * cc + y * s],
        [y * x * cc + z * s, c + y * y * cc, y * z * cc - x * s],
        [z * x * cc - y * s, z * y * cc + x * s, c + z * z * cc],
    ])


@dataclass(frozen=True)
class Joint:
    kind: str
    axis: np.ndarray
    translation: np.ndarray
    rotation: np.ndarray  # 3x3, fixed parent rotation applied before motion

    def __post_init__(self):
        object.__setattr__(self, "axis", np.asarray(self.axis, dtype=float))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        if self.kind not in (PRISMATIC, REVOLUTE):
            raise ValueError(f"unknown joint kind {self.kind!r}")
        if abs(np.linalg.norm(self.axis) - 1.0) > 1e-9:
            raise ValueError("joint axis must be unit norm")
        r = self.rotation
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-9):
            raise ValueError("fixed rotation must be orthonormal")


@dataclass(frozen=True)
class KinematicChain:
    joints: tuple[Joint, ...]
    tool: np.ndarray = None  # type: ignore[assignment]  # ee offset in last joint frame

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        tool = np.zeros(3) if self.tool is None else np.asarray(self.tool, dtype=float)
        object.__setattr__(self, "tool", tool)
        if len(self.joints) < 2:
            raise ValueError("chain needs at least 2 joints")
        if self.joints[0].kind != PRISMATIC:
            raise ValueError("first joint must be prismatic (base rail)")

    @property
    def n_arm(self) -> int:
        return len(self.joints) - 1

    @property
    def n_total(self) -> int:
        return len(self.joints)


@dataclass(frozen=True)
class Limits:
    """Per-DoF bounds on cumulative offsets from the seed configuration."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        up = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)
        if lo.shape != up.shape:
            raise ValueError("lower/upper must have the same shape")
        if np.any(lo > 0) or np.any(up < 0):
            raise ValueError("limits must contain the zero offset (seed admissible)")


@dataclass(frozen=True)
class IkResult:
    net_dr: float
    net_dq: np.ndarray
    converged: bool
    iterations: int
    residual: float


def _fk_frames(chain: KinematicChain, r: float, q: np.ndarray):
    """World axis and origin of every joint plus the end-effector position."""
    rot = np.eye(3)
    pos = np.zeros(3)
    values = np.concatenate([[float(r)], np.asarray(q, dtype=float)])
    if len(values) != chain.n_total:
        raise ValueError("configuration length does not match chain")
    axes = []
    origins = []
    for joint, val in zip(chain.joints, values):
        pos = pos + rot @ joint.translation
        rot = rot @ joint.rotation
        axis_w = rot @ joint.axis
        axes.append(axis_w)
        origins.append(pos.copy())
        if joint.kind == PRISMATIC:
            pos = pos + axis_w * val
        else:
            rot = rot @ axis_angle_matrix(joint.axis, val)
    ee = pos + rot @ chain.tool
    return axes, origins, ee


def forward(chain: KinematicChain, r: float, q: np.ndarray) -> np.ndarray:
    """End-effector position for base offset r and arm configuration q."""
    return _fk_frames(chain, r, q)[2]


def _jacobian_and_position(
    chain: KinematicChain, r: float, q: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Position Jacobian and end-effector position from a single FK pass."""
    axes, origins, ee = _fk_frames(chain, r, q)
    jac = np.empty((3, chain.n_total))
    for j, (joint, axis_w, origin) in enumerate(zip(chain.joints, axes, origins)):
        if joint.kind == PRISMATIC:
            jac[:, j] = axis_w
        else:
            dx, dy, dz = ee - origin
            ax, ay, az = axis_w
            jac[0, j] = ay * dz - az * dy
            jac[1, j] = az * dx - ax * dz
            jac[2, j] = ax * dy - ay * dx
    return jac, ee


def jacobian(chain: KinematicChain, r: float, q: np.ndarray) -> np.ndarray:
    """3x(1+n) position Jacobian: prismatic column is the axis, revolute
    columns are axis x (p_ee - p_joint)."""
    return _jacobian_and_position(chain, r, q)[0]


def clipped_increment(net: np.ndarray, delta: np.ndarray, limits: Limits) -> np.ndarray:
    """Clamp the cumulative offset net+delta into the limit box."""
    net = np.asarray(net, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if net.shape != delta.shape:
        raise ValueError("net and delta must have the same shape")
    return np.clip(net + delta, limits.lower, limits.upper)


def clipped_ik(
    chain: KinematicChain,
    x_d: np.ndarray,
    q_seed: np.ndarray,
    limits: Limits,
    max_iter: int = 100,
    tol: float = 1e-3,
    damping: float = 1e-3,
    step_cap: float | None = 0.2,
) -> IkResult:
    """Iterative damped-least-squares IK with cumulative limit clipping.

    Offsets (net_dr, net_dq) from the seed are updated by the damped
    pseudo-inverse step and clamped to the limits every iteration, so the
    result respects the limits even when the target is unreachable.
    Non-convergence is reported, not raised.
    """
    x_d = np.asarray(x_d, dtype=float)
    q_seed = np.asarray(q_seed, dtype=float)
    n = chain.n_arm
    if limits.lower.shape != (1 + n,):
        raise ValueError("limits must cover base + arm DoFs")
    if tol <= 0:
        raise ValueError("tol must be positive")

    net = np.zeros(1 + n)
    damping_term = (damping ** 2) * np.eye(3)
    jac, x_c = _jacobian_and_position(chain, 0.0, q_seed)
    converged = False
    iterations = 0
    older_net = None
    for iterations in range(1, max_iter + 1):
        err = x_d - x_c
        jjt = jac @ jac.T + damping_term
        delta = jac.T @ np.linalg.solve(jjt, err)
        if step_cap is not None:
            delta = np.clip(delta, -step_cap, step_cap)
        new_net = clipped_increment(net, delta, limits)
        # clipping can pin the offsets (fixed point) or bounce them between
        # two configurations (period-2 cycle); either way the iteration will
        # never make further progress, so stop early and report honestly
        cycling = np.abs(new_net - net).max() < 1e-12 or (
            older_net is not None and np.abs(new_net - older_net).max() < 1e-12
        )
        older_net = net
        net = new_net
        jac, x_c = _jacobian_and_position(chain, net[0], q_seed + net[1:])
        if np.linalg.norm(x_c - x_d) <= tol:
            converged = True
            break
        if cycling:
            break
    residual = float(np.linalg.norm(x_c - x_d))
    return IkResult(
        net_dr=float(net[0]),
        net_dq=net[1:].copy(),
        converged=converged,
        iterations=iterations,
        residual=residual,
    )


def default_chain() -> KinematicChain:
    """Synthetic rail + 7-revolute arm approximating an arm mounted on a chair.

    Link geometry is documented scaffolding, not measured hardware; swap in
    real geometry via the chain config file.
    """
    eye = np.eye(3)
    joints = [
        Joint(PRISMATIC, axis=[0, 1, 0], translation=[0, 0, 0], rotation=eye),
        Joint(REVOLUTE, axis=[0, 0, 1], translation=[0.20, 0.0, 0.80], rotation=eye),
        Joint(REVOLUTE, axis=[0, 1, 0], translation=[0.0, 0.0, 0.15], rotation=eye),
        Joint(REVOLUTE, axis=[0, 0, 1], translation=[0.0, 0.0, 0.25], rotation=eye),
        Joint(REVOLUTE, axis=[0, 1, 0], translation=[0.0, 0.0, 0.25], rotation=eye),
        Joint(REVOLUTE, axis=[0, 0, 1], translation=[0.0, 0.0, 0.20], rotation=eye),
        Joint(REVOLUTE, axis=[0, 1, 0], translation=[0.0, 0.0, 0.15], rotation=eye),
        Joint(REVOLUTE, axis=[1, 0, 0], translation=[0.0, 0.0, 0.08], rotation=eye),
    ]
    return KinematicChain(joints=tuple(joints), tool=np.array([0.30, 0.0, 0.05]))


def default_limits(chain: KinematicChain) -> Limits:
    n = chain.n_arm
    lower = -np.concatenate([[0.5], np.full(n, 0.6)])
    upper = np.concatenate([[0.5], np.full(n, 0.6)])
    return Limits(lower=lower, upper=upper)


def save_chain_config(chain: KinematicChain, limits: Limits, path) -> None:
    doc = {
        "joints": [
            {
                "kind": j.kind,
                "axis": j.axis.tolist(),
                "translation": j.translation.tolist(),
                "rotation_rpy": _rotation_to_rpy(j.rotation),
            }
            for j in chain.joints
        ],
        "tool": chain.tool.tolist(),
        "limits": {"LL": limits.lower.tolist(), "UL": limits.upper.tolist()},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_chain_config(path) -> tuple[KinematicChain, Limits]:
    with open(path) as fh:
        doc = json.load(fh)
    joints = tuple(
        Joint(
            kind=j["kind"],
            axis=np.array(j["axis"], dtype=float),
            translation=np.array(j["translation"], dtype=float),
            rotation=rpy_matrix(*j.get("rotation_rpy", (0.0, 0.0, 0.0))),
        )
        for j in doc["joints"]
    )
    chain = KinematicChain(joints=joints, tool=np.array(doc.get("tool", [0, 0, 0]), dtype=float))
    limits = Limits(
        lower=np.array(doc["limits"]["LL"], dtype=float),
        upper=np.array(doc["limits"]["UL"], dtype=float),
    )
    return chain, limits


def _rotation_to_rpy(rot: np.ndarray) -> list[float]:
    pitch = -np.arcsin(np.clip(rot[2, 0], -1.0, 1.0))
    if abs(abs(rot[2, 0]) - 1.0) < 1e-12:
        roll = np.arctan2(-rot[1, 2], rot[1, 1])
        yaw = 0.0
    else:
        roll = np.arctan2(rot[2, 1], rot[2, 2])
        yaw = np.arctan2(rot[1, 0], rot[0, 0])
    return [float(roll), float(pitch), float(yaw)]
