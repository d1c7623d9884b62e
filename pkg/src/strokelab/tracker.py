"""EKF ball tracking: state propagation, measurement fusion, and hit-plane
crossing prediction for a ballistic (optionally dragged) flight."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GRAVITY = np.array([0.0, 0.0, -9.81])

# process noise per axis per second: position m^2, velocity (m/s)^2
DEFAULT_Q_POS = 1e-4
DEFAULT_Q_VEL = 1e-2


@dataclass(frozen=True)
class BallEstimate:
    """Gaussian belief over ball position and velocity."""

    mean: np.ndarray  # (6,) position then velocity
    covariance: np.ndarray  # (6, 6)
    stamp: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float)
        c = np.asarray(self.covariance, dtype=float)
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "covariance", c)
        if m.shape != (6,) or c.shape != (6, 6):
            raise ValueError("mean must be (6,) and covariance (6,6)")
        if not np.allclose(c, c.T, atol=1e-9):
            raise ValueError("covariance must be symmetric")

    @property
    def position(self) -> np.ndarray:
        return self.mean[:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.mean[3:]


@dataclass(frozen=True)
class Observation:
    position: np.ndarray
    noise_std: float
    source_id: str = "cam0"
    stamp: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        if self.noise_std <= 0:
            raise ValueError("noise_std must be positive")


@dataclass(frozen=True)
class HitPlane:
    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.point, dtype=float)
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit norm")
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "normal", n)

    def signed_distance(self, pos: np.ndarray) -> float:
        return float(self.normal @ (np.asarray(pos) - self.point))


def _accel(v: np.ndarray, g: np.ndarray, k_d: float) -> np.ndarray:
    return g - k_d * np.linalg.norm(v) * v


def _accel_jac(v: np.ndarray, k_d: float) -> np.ndarray:
    """d(accel)/dv for quadratic drag."""
    s = np.linalg.norm(v)
    if s < 1e-12 or k_d == 0.0:
        return np.zeros((3, 3))
    return -k_d * (s * np.eye(3) + np.outer(v, v) / s)


def _rk4_step(state: np.ndarray, dt: float, g: np.ndarray, k_d: float) -> np.ndarray:
    def f(s):
        return np.concatenate([s[3:], _accel(s[3:], g, k_d)])

    k1 = f(state)
    k2 = f(state + 0.5 * dt * k1)
    k3 = f(state + 0.5 * dt * k2)
    k4 = f(state + dt * k3)
    return state + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _rk4_step_with_jac(state: np.ndarray, dt: float, g: np.ndarray, k_d: float):
    """One RK4 step of the state and of the variational (Jacobian) system."""

    def f(s):
        return np.concatenate([s[3:], _accel(s[3:], g, k_d)])

    def jac(s):
        j = np.zeros((6, 6))
        j[:3, 3:] = np.eye(3)
        j[3:, 3:] = _accel_jac(s[3:], k_d)
        return j

    phi0 = np.eye(6)
    k1 = f(state)
    p1 = jac(state) @ phi0
    s2 = state + 0.5 * dt * k1
    k2 = f(s2)
    p2 = jac(s2) @ (phi0 + 0.5 * dt * p1)
    s3 = state + 0.5 * dt * k2
    k3 = f(s3)
    p3 = jac(s3) @ (phi0 + 0.5 * dt * p2)
    s4 = state + dt * k3
    k4 = f(s4)
    p4 = jac(s4) @ (phi0 + dt * p3)
    new_state = state + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    phi = phi0 + (dt / 6.0) * (p1 + 2 * p2 + 2 * p3 + p4)
    return new_state, phi


def process_noise(dt: float, q_pos: float = DEFAULT_Q_POS, q_vel: float = DEFAULT_Q_VEL) -> np.ndarray:
    return np.diag([q_pos] * 3 + [q_vel] * 3) * dt


def ekf_predict(
    est: BallEstimate,
    dt: float,
    g: np.ndarray = GRAVITY,
    k_d: float = 0.0,
    q_pos: float = DEFAULT_Q_POS,
    q_vel: float = DEFAULT_Q_VEL,
) -> BallEstimate:
    """Propagate mean (RK4) and covariance (discrete-map Jacobian + Q*dt)."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt == 0:
        return est
    g = np.asarray(g, dtype=float)
    mean, phi = _rk4_step_with_jac(est.mean, dt, g, k_d)
    cov = phi @ est.covariance @ phi.T + process_noise(dt, q_pos, q_vel)
    cov = 0.5 * (cov + cov.T)
    return BallEstimate(mean=mean, covariance=cov, stamp=est.stamp + dt)


def ekf_update(est: BallEstimate, obs: Observation) -> BallEstimate:
    """Position-measurement update with Joseph-form covariance."""
    h = np.zeros((3, 6))
    h[:, :3] = np.eye(3)
    r = (obs.noise_std ** 2) * np.eye(3)
    s = h @ est.covariance @ h.T + r
    try:
        s_inv = np.linalg.inv(s)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular innovation covariance") from exc
    gain = est.covariance @ h.T @ s_inv
    innovation = obs.position - est.position
    mean = est.mean + gain @ innovation
    ikh = np.eye(6) - gain @ h
    cov = ikh @ est.covariance @ ikh.T + gain @ r @ gain.T
    cov = 0.5 * (cov + cov.T)
    return BallEstimate(mean=mean, covariance=cov, stamp=max(est.stamp, obs.stamp))


def propagate_mean(
    mean: np.ndarray, t: float, g: np.ndarray, k_d: float, max_step: float = 2e-3
) -> np.ndarray:
    """Integrate the mean forward by t seconds with bounded RK4 steps."""
    if t <= 0:
        return mean.copy()
    n = max(1, int(np.ceil(t / max_step)))
    dt = t / n
    state = mean.copy()
    for _ in range(n):
        state = _rk4_step(state, dt, g, k_d)
    return state


def predict_crossing(
    est: BallEstimate,
    plane: HitPlane,
    g: np.ndarray = GRAVITY,
    k_d: float = 0.0,
    horizon: float = 3.0,
) -> tuple[float, np.ndarray] | None:
    """Earliest future time/point where the mean flight crosses the plane.

    Drag-free flights use the closed-form quadratic; with drag the crossing
    is bisected on the integrated path to 1e-6 s.  Returns None when the
    flight never crosses within the horizon.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    g = np.asarray(g, dtype=float)
    n = plane.normal
    s0 = plane.signed_distance(est.position)

    if k_d == 0.0:
        a = 0.5 * float(n @ g)
        b = float(n @ est.velocity)
        roots: list[float] = []
        if abs(a) < 1e-14:
            if abs(b) > 1e-14:
                roots = [-s0 / b]
        else:
            disc = b * b - 4 * a * s0
            if disc >= 0:
                sq = np.sqrt(disc)
                roots = [(-b - sq) / (2 * a), (-b + sq) / (2 * a)]
        side = s0 if abs(s0) > 1e-12 else b  # side just after t=0
        candidates = []
        for t in sorted(roots):
            if t <= 1e-9 or t > horizon:
                continue
            sdot = 2 * a * t + b
            if side == 0.0 or sdot * np.sign(side) < 0:
                candidates.append(t)
        if not candidates:
            return None
        t_hit = float(candidates[0])
        x_hit = est.position + est.velocity * t_hit + 0.5 * g * t_hit ** 2
        return t_hit, x_hit

    # drag: march fixed steps, then bisect the bracketing interval
    dt = horizon / 1000.0
    state = est.mean.copy()
    t_prev, s_prev = 0.0, s0
    t_cur = 0.0
    while t_cur < horizon - 1e-12:
        state = _rk4_step(state, dt, g, k_d)
        t_cur += dt
        s_cur = plane.signed_distance(state[:3])
        if s_prev * s_cur < 0.0:
            lo, hi = t_prev, t_cur
            while hi - lo > 1e-6:
                mid = 0.5 * (lo + hi)
                s_mid = plane.signed_distance(
                    propagate_mean(est.mean, mid, g, k_d)[:3]
                )
                if s_prev * s_mid <= 0:
                    hi = mid
                else:
                    lo = mid
            t_hit = 0.5 * (lo + hi)
            x_hit = propagate_mean(est.mean, t_hit, g, k_d)[:3]
            return float(t_hit), x_hit
        t_prev, s_prev = t_cur, s_cur
    return None


@dataclass
class BallFilter:
    """Single-owner stateful wrapper: jitter buffer + EKF over observations.

    Observations within the reorder window are buffered and processed in
    stamp order; observations older than the filter time are dropped and
    counted.
    """

    est: BallEstimate | None = None
    g: np.ndarray = field(default_factory=lambda: GRAVITY.copy())
    k_d: float = 0.0
    reorder_window: float = 0.05
    q_pos: float = DEFAULT_Q_POS
    q_vel: float = DEFAULT_Q_VEL
    init_pos_std: float = 0.5
    init_vel_std: float = 5.0
    rejected: int = 0
    _buffer: list[Observation] = field(default_factory=list)

    @property
    def initialized(self) -> bool:
        return self.est is not None

    def add_observation(self, obs: Observation) -> None:
        if self.est is not None and obs.stamp < self.est.stamp:
            self.rejected += 1
            return
        self._buffer.append(obs)
        self._buffer.sort(key=lambda o: o.stamp)

    def advance(self, now: float) -> None:
        """Process buffered observations older than the reorder window."""
        while self._buffer and self._buffer[0].stamp <= now - self.reorder_window:
            self._apply(self._buffer.pop(0))

    def flush(self) -> None:
        while self._buffer:
            self._apply(self._buffer.pop(0))

    def _apply(self, obs: Observation) -> None:
        if self.est is None:
            cov = np.diag([self.init_pos_std ** 2] * 3 + [self.init_vel_std ** 2] * 3)
            self.est = BallEstimate(
                mean=np.concatenate([obs.position, np.zeros(3)]),
                covariance=cov,
                stamp=obs.stamp,
            )
            self.est = ekf_update(self.est, obs)
            return
        dt = obs.stamp - self.est.stamp
        if dt < 0:
            self.rejected += 1
            return
        pred = ekf_predict(self.est, dt, self.g, self.k_d, self.q_pos, self.q_vel)
        self.est = ekf_update(pred, obs)

    def snapshot(self, now: float) -> BallEstimate | None:
        """Belief propagated to `now` (pure; does not mutate the filter)."""
        if self.est is None:
            return None
        dt = now - self.est.stamp
        if dt <= 0:
            return self.est
        return ekf_predict(self.est, dt, self.g, self.k_d, self.q_pos, self.q_vel)


def load_observation_stream(path) -> list[Observation]:
    """Parse replay lines `stamp, source_id, x, y, z, noise_std`."""
    out = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 6:
                raise ValueError(f"{path}:{line_no}: expected 6 fields")
            out.append(Observation(
                stamp=float(parts[0]),
                source_id=parts[1],
                position=np.array([float(parts[2]), float(parts[3]), float(parts[4])]),
                noise_std=float(parts[5]),
            ))
    return out
