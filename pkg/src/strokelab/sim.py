"""Desk-scale striking simulator.

Ballistic ball flight, noisy observation generation, the stroke-controller
state machine, contact and return-flight classification, the reward oracle,
and the experiment runners (single episodes, consecutive-ball runs, and the
iterative feedback-refinement protocol).  Everything is deterministic per
seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import promp, refine, segment
from .kinematics import (
    KinematicChain,
    Limits,
    clipped_ik,
    default_chain,
    default_limits,
    forward,
)
from .promp import PrimitiveParams, Trajectory, block_phi
from .segment import NoStroke, Recording
from .tracker import BallFilter, HitPlane, Observation, _rk4_step, GRAVITY

# controller phases
IDLE = "IDLE"
TRACKING = "TRACKING"
CONDITIONING = "CONDITIONING"
EXECUTING = "EXECUTING"
RECOVERING = "RECOVERING"
PHASES = (IDLE, TRACKING, CONDITIONING, EXECUTING, RECOVERING)

REWARD_MISS_FAR = 0.0
REWARD_MISS_CLOSE = 0.25
REWARD_HIT_WEAK = 0.5
REWARD_HIT_PILLAR = 1.0
REWARD_HIT_NET_CLEAR = 2.0

CLOSE_MISS_THRESHOLD = 0.05  # m


@dataclass(frozen=True)
class LaunchSpec:
    p0: np.ndarray
    v0: np.ndarray
    jitter_p_std: np.ndarray = None  # type: ignore[assignment]
    jitter_v_std: np.ndarray = None  # type: ignore[assignment]
    drag: float = 0.0
    interval: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "p0", np.asarray(self.p0, dtype=float))
        object.__setattr__(self, "v0", np.asarray(self.v0, dtype=float))
        jp = np.zeros(3) if self.jitter_p_std is None else np.asarray(self.jitter_p_std, dtype=float)
        jv = np.zeros(3) if self.jitter_v_std is None else np.asarray(self.jitter_v_std, dtype=float)
        object.__setattr__(self, "jitter_p_std", jp)
        object.__setattr__(self, "jitter_v_std", jv)
        if np.any(jp < 0) or np.any(jv < 0):
            raise ValueError("jitter std must be non-negative")


@dataclass
class ScenarioConfig:
    """Full scenario: geometry, rates, controller and contact parameters."""

    chain: KinematicChain = field(default_factory=default_chain)
    limits: Limits = None  # type: ignore[assignment]
    plane: HitPlane = field(default_factory=lambda: HitPlane(
        point=np.array([0.6, 0.0, 1.0]), normal=np.array([1.0, 0.0, 0.0])))
    launch: LaunchSpec = field(default_factory=lambda: LaunchSpec(
        p0=np.array([6.0, 0.0, 2.0]), v0=np.array([-8.0, 0.0, 2.0])))
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())
    tick_rate: float = 200.0
    obs_rate: float = 60.0
    obs_noise_std: float = 0.005
    z_hit: float = 0.5
    phase_duration: float = 0.6
    min_lead: float = 0.2
    cond_obs_noise: float = 1e-8
    lag_tau_joint: float = 0.03
    lag_tau_base: float = 0.05
    racket_radius: float = 0.12
    restitution: float = 0.8
    racket_speed_min: float = 0.2  # below this the contact normal defaults forward
    net_x: float = 4.0
    net_height: float = 1.07
    net_half_width: float = 2.0
    pillar_band: float = 0.5
    recover_time: float = 0.3
    return_duration: float = 0.6
    episode_horizon: float = 2.5
    ik_max_iter: int = 100
    ik_tol: float = 1e-3
    ik_damping: float = 1e-3
    crossing_lost_ticks: int = 20
    rest_target: np.ndarray = field(default_factory=lambda: np.array([0.45, 0.0, 1.0]))
    demo_hit_velocity: np.ndarray = field(default_factory=lambda: np.array([2.0, 0.0, 1.2]))
    demo_hold: float = 0.3
    demo_rate: float = 100.0
    temperature: float = 0.5

    def __post_init__(self):
        if self.limits is None:
            self.limits = default_limits(self.chain)
        self._q_seed = None

    @property
    def n_arm(self) -> int:
        return self.chain.n_arm

    def q_seed(self) -> np.ndarray:
        """Rest arm pose: IK (base locked) onto the rest target."""
        if self._q_seed is None:
            locked = Limits(
                lower=np.concatenate([[0.0], np.full(self.n_arm, -2.0)]),
                upper=np.concatenate([[0.0], np.full(self.n_arm, 2.0)]),
            )
            res = clipped_ik(
                self.chain, self.rest_target, np.zeros(self.n_arm), locked,
                max_iter=300, tol=1e-6, damping=self.ik_damping,
            )
            self._q_seed = res.net_dq
        return self._q_seed


@dataclass(frozen=True)
class ControllerCommand:
    base_target: float
    joint_target: np.ndarray
    swinging: bool


@dataclass(frozen=True)
class EpisodeOutcome:
    hit: bool
    min_racket_ball_distance: float
    return_crossed_net: bool
    return_hit_pillar_zone: bool
    executed: Trajectory
    reward: float
    swung: bool = True
    ball_path: np.ndarray | None = None  # (T, 4): t, x, y, z
    ee_path: np.ndarray | None = None  # (T, 4)


def reward_oracle(
    hit: bool,
    min_distance: float,
    return_crossed_net: bool,
    return_hit_pillar_zone: bool,
) -> float:
    """Map outcome geometry onto the five feedback values."""
    if not hit:
        return REWARD_MISS_CLOSE if min_distance <= CLOSE_MISS_THRESHOLD else REWARD_MISS_FAR
    if return_crossed_net:
        return REWARD_HIT_NET_CLEAR
    if return_hit_pillar_zone:
        return REWARD_HIT_PILLAR
    return REWARD_HIT_WEAK


def mean_at_phase(p: PrimitiveParams, z: float) -> np.ndarray:
    """Mean joint configuration of the primitive at an arbitrary phase."""
    return block_phi(z, p.basis) @ p.mu_w


class StrokeController:
    """Stroke state machine: track, condition while repositioning the base,
    then execute the conditioned primitive open-loop against the predicted
    arrival time."""

    def __init__(self, primitive: PrimitiveParams, cfg: ScenarioConfig):
        self.primitive = primitive
        self.cfg = cfg
        self.q_seed = cfg.q_seed()
        self.duration = primitive.basis.phase_duration
        self.phase = IDLE
        self.base_target = 0.0
        self.conditioned: PrimitiveParams | None = None
        self.t_hit: float | None = None
        self.exec_start: float | None = None
        self.recover_start: float | None = None
        self.lost_count = 0
        self.aborted = False

    def _transition(self, new_phase: str) -> None:
        self.phase = new_phase

    def step(self, now: float, ball_filter: BallFilter) -> ControllerCommand:
        cfg = self.cfg
        if self.phase == IDLE:
            if ball_filter.initialized:
                self._transition(TRACKING)
            return self._command_rest()

        if self.phase == TRACKING:
            crossing = self._predict(now, ball_filter)
            if crossing is not None:
                t_hit, _ = crossing
                if t_hit - now > cfg.min_lead:
                    self._transition(CONDITIONING)
            return self._command_rest()

        if self.phase == CONDITIONING:
            crossing = self._predict(now, ball_filter)
            if crossing is None:
                self.lost_count += 1
                if self.lost_count >= cfg.crossing_lost_ticks:
                    self.aborted = True
                    self._transition(IDLE)
                return self._command_conditioning()
            self.lost_count = 0
            self.t_hit, x_hit = crossing
            res = clipped_ik(
                cfg.chain, x_hit, self.q_seed, cfg.limits,
                max_iter=cfg.ik_max_iter, tol=cfg.ik_tol, damping=cfg.ik_damping,
            )
            # non-convergence: keep conditioning on the best clipped solution
            self.base_target = res.net_dr
            q_star = self.q_seed + res.net_dq
            # anchor the stroke start at the held posture so execution begins
            # continuously, then pin the hit point (last, so it stays exact)
            anchored = promp.condition(
                self.primitive, 0.0, self.q_seed, cfg.cond_obs_noise)
            self.conditioned = promp.condition(
                anchored, cfg.z_hit, q_star, cfg.cond_obs_noise)
            if now >= self.t_hit - cfg.z_hit * self.duration:
                self.exec_start = now
                self._transition(EXECUTING)
                return self._command_executing(now)
            return self._command_conditioning()

        if self.phase == EXECUTING:
            z = (now - self.exec_start) / self.duration
            if z >= 1.0:
                self.recover_start = now
                self._transition(RECOVERING)
                return self._command_recovering(now)
            return self._command_executing(now)

        # RECOVERING: dwell at the stroke-end posture, then ramp back to rest
        if now - self.recover_start >= cfg.recover_time + cfg.return_duration:
            self._transition(IDLE)
            return self._command_rest()
        return self._command_recovering(now)

    def _predict(self, now: float, ball_filter: BallFilter):
        from .tracker import predict_crossing

        est = ball_filter.snapshot(now)
        if est is None:
            return None
        crossing = predict_crossing(
            est, self.cfg.plane, self.cfg.gravity, self.cfg.launch.drag,
            horizon=self.cfg.episode_horizon,
        )
        if crossing is None:
            return None
        t_rel, x_hit = crossing
        return now + t_rel, x_hit

    def _command_rest(self, base: float = None) -> ControllerCommand:
        return ControllerCommand(
            base_target=self.base_target if base is None else base,
            joint_target=self.q_seed.copy(),
            swinging=False,
        )

    def _command_conditioning(self) -> ControllerCommand:
        return ControllerCommand(
            base_target=self.base_target,
            joint_target=self.q_seed.copy(),
            swinging=False,
        )

    def _command_recovering(self, now: float) -> ControllerCommand:
        cfg = self.cfg
        q_end = mean_at_phase(self.conditioned, 1.0)
        held = now - self.recover_start
        if held <= cfg.recover_time:
            frac = 0.0
        else:
            frac = min((held - cfg.recover_time) / cfg.return_duration, 1.0)
        return ControllerCommand(
            base_target=self.base_target,
            joint_target=q_end + frac * (self.q_seed - q_end),
            swinging=False,
        )

    def _command_executing(self, now: float) -> ControllerCommand:
        z = (now - self.exec_start) / self.duration
        return ControllerCommand(
            base_target=self.base_target,
            joint_target=mean_at_phase(self.conditioned, min(z, 1.0)),
            swinging=True,
        )


def _lag_step(current: np.ndarray | float, target: np.ndarray | float,
              dt: float, tau: float):
    if tau <= 0:
        return target
    k = 1.0 - np.exp(-dt / tau)
    return current + (target - current) * k


def run_episode(
    primitive: PrimitiveParams,
    scenario: ScenarioConfig,
    seed,
) -> EpisodeOutcome:
    """Simulate one launch-track-condition-strike episode."""
    cfg = scenario
    rng = np.random.default_rng(seed)
    dt = 1.0 / cfg.tick_rate

    p0 = cfg.launch.p0 + rng.normal(size=3) * cfg.launch.jitter_p_std
    v0 = cfg.launch.v0 + rng.normal(size=3) * cfg.launch.jitter_v_std
    ball = np.concatenate([p0, v0])

    ball_filter = BallFilter(g=cfg.gravity, k_d=cfg.launch.drag, reorder_window=0.0)
    controller = StrokeController(primitive, cfg)

    n_arm = cfg.n_arm
    rail = 0.0
    q = cfg.q_seed().copy()
    ee_prev = forward(cfg.chain, rail, q)

    n_ticks = int(round(cfg.episode_horizon * cfg.tick_rate))
    times = np.empty(n_ticks)
    joints = np.empty((n_ticks, 1 + n_arm))
    ball_log = np.empty((n_ticks, 4))
    ee_log = np.empty((n_ticks, 4))

    next_obs_t = 0.0
    obs_period = 1.0 / cfg.obs_rate

    hit = False
    min_distance = np.inf
    incoming = True
    return_crossed_net = False
    return_hit_pillar = False
    return_done = False
    swung = False

    for i in range(n_ticks):
        now = i * dt

        # observations of the incoming flight only
        if incoming and now + 1e-12 >= next_obs_t:
            noisy = ball[:3] + rng.normal(size=3) * cfg.obs_noise_std
            ball_filter.add_observation(Observation(
                position=noisy, noise_std=max(cfg.obs_noise_std, 1e-6), stamp=now))
            ball_filter.advance(now + 1.0)  # in-order feed: process immediately
            next_obs_t += obs_period

        cmd = controller.step(now, ball_filter)
        swung = swung or cmd.swinging

        rail = float(_lag_step(rail, cmd.base_target, dt, cfg.lag_tau_base))
        rail = float(np.clip(rail, cfg.limits.lower[0], cfg.limits.upper[0]))
        q = _lag_step(q, cmd.joint_target, dt, cfg.lag_tau_joint)
        q = np.clip(q, cfg.q_seed() + cfg.limits.lower[1:], cfg.q_seed() + cfg.limits.upper[1:])

        ee = forward(cfg.chain, rail, q)
        ee_vel = (ee - ee_prev) / dt
        ee_prev = ee

        times[i] = now
        joints[i, 0] = rail
        joints[i, 1:] = q
        ball_log[i] = [now, *ball[:3]]
        ee_log[i] = [now, *ee]

        if incoming:
            d = float(np.linalg.norm(ball[:3] - ee))
            min_distance = min(min_distance, d)
            if d <= cfg.racket_radius:
                hit = True
                incoming = False
                ball[3:] = _reflect(ball[3:], ee_vel, cfg)
        if not incoming and not return_done and not return_crossed_net and not return_hit_pillar:
            if ball[0] >= cfg.net_x:
                if ball[2] >= cfg.net_height:
                    return_crossed_net = True
                elif cfg.net_half_width <= abs(ball[1]) <= cfg.net_half_width + cfg.pillar_band:
                    return_hit_pillar = True
                return_done = True

        # ball flight (incoming or return) until it lands
        if ball[2] > 0.0:
            ball = _rk4_step(ball, dt, cfg.gravity, cfg.launch.drag)
        else:
            if incoming:
                incoming = False
            return_done = True

    executed = Trajectory(timestamps=times, positions=joints)
    reward = reward_oracle(hit, float(min_distance), return_crossed_net, return_hit_pillar)
    return EpisodeOutcome(
        hit=hit,
        min_racket_ball_distance=float(min_distance),
        return_crossed_net=return_crossed_net,
        return_hit_pillar_zone=return_hit_pillar,
        executed=executed,
        reward=reward,
        swung=swung,
        ball_path=ball_log,
        ee_path=ee_log,
    )


def _reflect(v_ball: np.ndarray, v_racket: np.ndarray, cfg: ScenarioConfig) -> np.ndarray:
    """Instantaneous restitution reflection off the moving racket.

    Contact normal is the racket velocity direction when the racket is
    moving, else the forward court axis.
    """
    speed = np.linalg.norm(v_racket)
    if speed >= cfg.racket_speed_min:
        n = v_racket / speed
    else:
        n = np.array([1.0, 0.0, 0.0])
    v_rel = v_ball - v_racket
    vn = v_rel @ n
    if vn < 0:
        v_rel = v_rel - (1.0 + cfg.restitution) * vn * n
    return v_rel + v_racket


@dataclass(frozen=True)
class ExperimentMetrics:
    n_balls: int
    hit_rate: float
    success_rate: float
    avg_reward: float

    def as_dict(self) -> dict:
        return {
            "n_balls": self.n_balls,
            "hit_rate": self.hit_rate,
            "success_rate": self.success_rate,
            "avg_reward": self.avg_reward,
        }


def aggregate_metrics(rewards: list[float], hits: list[bool]) -> ExperimentMetrics:
    n = len(rewards)
    return ExperimentMetrics(
        n_balls=n,
        hit_rate=sum(hits) / n,
        success_rate=sum(1 for r in rewards if r >= 1.0) / n,
        avg_reward=sum(rewards) / n,
    )


def episode_seed(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))


def run_experiment(
    primitive: PrimitiveParams,
    n_balls: int,
    scenario: ScenarioConfig,
    seed: int,
    seed_key: tuple[int, ...] = (),
) -> tuple[ExperimentMetrics, list[EpisodeOutcome]]:
    """A consecutive run of n_balls episodes with per-episode derived seeds."""
    if n_balls < 1:
        raise ValueError("n_balls must be at least 1")
    outcomes = [
        run_episode(primitive, scenario, episode_seed(seed, *seed_key, i))
        for i in range(n_balls)
    ]
    metrics = aggregate_metrics([o.reward for o in outcomes], [o.hit for o in outcomes])
    return metrics, outcomes


def extract_stroke(executed: Trajectory, cfg: ScenarioConfig) -> Trajectory:
    """Segment the arm-joint stroke out of a full executed episode log."""
    arm = executed.positions[:, 1:]
    rec = Recording(timestamps=executed.timestamps, positions=arm)
    start, end = segment.segment_stroke(rec)
    return Trajectory(
        timestamps=executed.timestamps[start:end + 1],
        positions=arm[start:end + 1],
    )


@dataclass(frozen=True)
class RoundReport:
    round_index: int
    batch_n: int
    n_used: int
    rewards: list[float]
    eval_metrics: ExperimentMetrics


@dataclass(frozen=True)
class RefinementReport:
    base_metrics: ExperimentMetrics
    rounds: list[RoundReport]
    final_params: PrimitiveParams


def run_refinement_batch(
    primitive: PrimitiveParams,
    scenario: ScenarioConfig,
    batch_n: int,
    seed: int,
    round_index: int,
) -> list[EpisodeOutcome]:
    """The batch of executed episodes for one refinement round (shared by the
    oracle runner and the feedback service so both see identical episodes)."""
    _, outcomes = run_experiment(
        primitive, batch_n, scenario, seed, seed_key=(1, round_index))
    return outcomes


def apply_feedback_round(
    primitive: PrimitiveParams,
    outcomes: list[EpisodeOutcome],
    rewards: list[float],
    scenario: ScenarioConfig,
) -> tuple[PrimitiveParams, int]:
    """Refine the primitive from rated executed episodes.

    Episodes whose log contains no detectable stroke are dropped together
    with their reward.  Returns the refined parameters and how many episodes
    entered the EM dataset.
    """
    trajs = []
    used_rewards = []
    for outcome, r in zip(outcomes, rewards):
        try:
            trajs.append(extract_stroke(outcome.executed, scenario))
        except NoStroke:
            continue
        used_rewards.append(r)
    if not trajs:
        return primitive, 0
    refined = refine.refinement_round(
        primitive, trajs, np.array(used_rewards), temperature=scenario.temperature)
    return refined, len(trajs)


def refinement_experiment(
    base: PrimitiveParams,
    scenario: ScenarioConfig,
    rounds: int,
    batch_n: int,
    seed: int,
    eval_n: int = 10,
    rewards_for_round=None,
) -> RefinementReport:
    """The full iterative-refinement protocol with held-out evaluation.

    rewards_for_round(round_index, outcomes) supplies rewards; defaults to
    the reward oracle (each outcome's own reward).
    """
    base_metrics, _ = run_experiment(base, eval_n, scenario, seed, seed_key=(0, 0))
    current = base
    round_reports = []
    for k in range(rounds):
        outcomes = run_refinement_batch(current, scenario, batch_n, seed, k)
        if rewards_for_round is None:
            rewards = [o.reward for o in outcomes]
        else:
            rewards = rewards_for_round(k, outcomes)
        current, n_used = apply_feedback_round(current, outcomes, rewards, scenario)
        # same held-out ball set as the base evaluation: paired comparison
        eval_metrics, _ = run_experiment(
            current, eval_n, scenario, seed, seed_key=(0, 0))
        round_reports.append(RoundReport(
            round_index=k,
            batch_n=batch_n,
            n_used=n_used,
            rewards=[float(r) for r in rewards],
            eval_metrics=eval_metrics,
        ))
    return RefinementReport(
        base_metrics=base_metrics, rounds=round_reports, final_params=current)


def _min_jerk(u: np.ndarray) -> np.ndarray:
    return 10 * u ** 3 - 15 * u ** 4 + 6 * u ** 5


def _quintic(q0, v0, q1, v1, duration, t):
    """Per-DoF quintic with zero endpoint accelerations, sampled at t."""
    q0, v0, q1, v1 = (np.asarray(a, dtype=float) for a in (q0, v0, q1, v1))
    T = float(duration)
    u = (np.asarray(t, dtype=float) / T)[:, None]
    dq = q1 - q0 - v0 * T
    dv = (v1 - v0) * T
    # coefficients in u for boundary conditions (q,v,a) = (0,v0*T,0)->(dq+v0*T,v1*T,0)
    a3 = 10 * dq - 4 * dv
    a4 = -15 * dq + 7 * dv
    a5 = 6 * dq - 3 * dv
    return (q0[None, :] + v0[None, :] * T * u
            + a3[None, :] * u ** 3 + a4[None, :] * u ** 4 + a5[None, :] * u ** 5)


def scripted_demos(
    scenario: ScenarioConfig,
    n_demos: int = 20,
    seed: int = 0,
    variation_std: float = 0.02,
) -> list[Recording]:
    """Engineered stroke demonstrations for the scenario's nominal launch.

    Each demo holds the ready posture, accelerates through the hit pose
    (end-effector crossing the hit plane mid-stroke at the configured
    velocity), decelerates into a follow-through, and holds.  Per-demo
    variation perturbs the hit point so the fitted primitive has informative
    weight covariance.
    """
    from .tracker import BallEstimate, predict_crossing

    cfg = scenario
    rng = np.random.default_rng(seed)
    est = BallEstimate(
        mean=np.concatenate([cfg.launch.p0, cfg.launch.v0]),
        covariance=np.eye(6) * 1e-6,
    )
    crossing = predict_crossing(est, cfg.plane, cfg.gravity, cfg.launch.drag,
                                horizon=cfg.episode_horizon)
    if crossing is None:
        raise ValueError("nominal launch never crosses the hit plane")
    _, x_hit_nominal = crossing

    q_seed = cfg.q_seed()
    arm_locked_base = Limits(
        lower=np.concatenate([[0.0], cfg.limits.lower[1:]]),
        upper=np.concatenate([[0.0], cfg.limits.upper[1:]]),
    )
    dt = 1.0 / cfg.demo_rate
    names = tuple(["rail"] + [f"j{i+1}" for i in range(cfg.n_arm)])

    demos = []
    for _ in range(n_demos):
        x_hit = x_hit_nominal + np.array([0.0, 1.0, 1.0]) * rng.normal(size=3) * variation_std
        res = clipped_ik(cfg.chain, x_hit, q_seed, arm_locked_base,
                         max_iter=300, tol=1e-5, damping=cfg.ik_damping)
        q_hit = q_seed + res.net_dq

        from .kinematics import jacobian

        jac = jacobian(cfg.chain, 0.0, q_hit)[:, 1:]  # arm columns only
        v_des = cfg.demo_hit_velocity * (1.0 + rng.normal() * 0.05)
        jjt = jac @ jac.T + (cfg.ik_damping ** 2) * np.eye(3)
        qdot_hit = jac.T @ np.linalg.solve(jjt, v_des)

        # stroke starts from the ready posture (where executions begin),
        # passes the hit posture mid-stroke at the commanded velocity, and
        # decelerates into a short follow-through
        t_a = cfg.z_hit * cfg.phase_duration
        t_b = cfg.phase_duration - t_a
        q_end = q_hit + 0.35 * qdot_hit * t_b

        t_hold = np.arange(0.0, cfg.demo_hold, dt)
        t1 = np.arange(0.0, t_a, dt)
        t2 = np.arange(0.0, t_b + dt / 2, dt)
        zeros = np.zeros(cfg.n_arm)
        approach = _quintic(q_seed, zeros, q_hit, qdot_hit, t_a, t1)
        follow = _quintic(q_hit, qdot_hit, q_end, zeros, t_b, np.clip(t2, 0.0, t_b))

        blocks = [
            np.tile(q_seed, (len(t_hold), 1)),
            approach,
            follow,
            np.tile(q_end, (len(t_hold), 1)),
        ]
        arm = np.vstack(blocks)
        t = np.arange(len(arm)) * dt
        full = np.column_stack([np.zeros(len(arm)), arm])
        demos.append(Recording(timestamps=t, positions=full, joint_names=names))
    return demos


def train_base_primitive(
    scenario: ScenarioConfig,
    demos: list[Recording],
    n_basis: int = 8,
) -> tuple[PrimitiveParams, float]:
    """Segment demos, fit the arm-joint primitive, and return the mean hit
    phase measured on the demonstrations."""
    trajs = []
    hit_phases = []
    for rec in demos:
        arm_rec = Recording(timestamps=rec.timestamps, positions=rec.positions[:, 1:])
        start, end = segment.segment_stroke(arm_rec)
        trajs.append(Trajectory(
            timestamps=rec.timestamps[start:end + 1],
            positions=rec.positions[start:end + 1, 1:],
        ))
        try:
            z = segment.hit_phase(rec, (start, end), scenario.chain,
                                  scenario.plane.point, scenario.plane.normal)
            hit_phases.append(z)
        except segment.NoCrossing:
            pass
    # phase [0,1] spans the segmented stroke core, so play it back over the
    # demonstrated core duration rather than the scripted stroke length
    durations = [t.timestamps[-1] - t.timestamps[0] for t in trajs]
    basis = promp.BasisConfig(
        n_basis=n_basis,
        n_dof=scenario.n_arm,
        phase_duration=float(np.mean(durations)),
    )
    params = promp.fit_from_demos(trajs, basis=basis)
    z_hit = float(np.mean(hit_phases)) if hit_phases else scenario.z_hit
    return params, z_hit


# --- scenario (de)serialization -------------------------------------------

def save_scenario(cfg: ScenarioConfig, path) -> None:
    from .kinematics import _rotation_to_rpy

    doc = {
        "chain": {
            "joints": [
                {"kind": j.kind, "axis": j.axis.tolist(),
                 "translation": j.translation.tolist(),
                 "rotation_rpy": _rotation_to_rpy(j.rotation)}
                for j in cfg.chain.joints
            ],
            "tool": cfg.chain.tool.tolist(),
        },
        "limits": {"LL": cfg.limits.lower.tolist(), "UL": cfg.limits.upper.tolist()},
        "plane": {"point": cfg.plane.point.tolist(), "normal": cfg.plane.normal.tolist()},
        "launch": {
            "p0": cfg.launch.p0.tolist(), "v0": cfg.launch.v0.tolist(),
            "jitter_p_std": cfg.launch.jitter_p_std.tolist(),
            "jitter_v_std": cfg.launch.jitter_v_std.tolist(),
            "drag": cfg.launch.drag, "interval": cfg.launch.interval,
        },
        "gravity": cfg.gravity.tolist(),
        "scalars": {
            k: getattr(cfg, k) for k in (
                "tick_rate", "obs_rate", "obs_noise_std", "z_hit", "phase_duration",
                "min_lead", "cond_obs_noise", "lag_tau_joint", "lag_tau_base",
                "racket_radius", "restitution", "racket_speed_min", "net_x",
                "net_height", "net_half_width", "pillar_band", "recover_time", "return_duration",
                "episode_horizon", "ik_max_iter", "ik_tol", "ik_damping",
                "crossing_lost_ticks", "demo_hold", "demo_rate", "temperature",
            )
        },
        "rest_target": cfg.rest_target.tolist(),
        "demo_hit_velocity": cfg.demo_hit_velocity.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_scenario(path) -> ScenarioConfig:
    from .kinematics import Joint, rpy_matrix

    with open(path) as fh:
        doc = json.load(fh)
    joints = tuple(
        Joint(kind=j["kind"], axis=np.array(j["axis"], dtype=float),
              translation=np.array(j["translation"], dtype=float),
              rotation=rpy_matrix(*j.get("rotation_rpy", (0, 0, 0))))
        for j in doc["chain"]["joints"]
    )
    chain = KinematicChain(joints=joints,
                           tool=np.array(doc["chain"].get("tool", [0, 0, 0]), dtype=float))
    limits = Limits(lower=np.array(doc["limits"]["LL"], dtype=float),
                    upper=np.array(doc["limits"]["UL"], dtype=float))
    plane = HitPlane(point=np.array(doc["plane"]["point"], dtype=float),
                     normal=np.array(doc["plane"]["normal"], dtype=float))
    launch = LaunchSpec(
        p0=np.array(doc["launch"]["p0"], dtype=float),
        v0=np.array(doc["launch"]["v0"], dtype=float),
        jitter_p_std=np.array(doc["launch"]["jitter_p_std"], dtype=float),
        jitter_v_std=np.array(doc["launch"]["jitter_v_std"], dtype=float),
        drag=float(doc["launch"]["drag"]),
        interval=float(doc["launch"]["interval"]),
    )
    cfg = ScenarioConfig(chain=chain, limits=limits, plane=plane, launch=launch,
                         gravity=np.array(doc["gravity"], dtype=float),
                         rest_target=np.array(doc["rest_target"], dtype=float),
                         demo_hit_velocity=np.array(doc["demo_hit_velocity"], dtype=float))
    for key, value in doc["scalars"].items():
        setattr(cfg, key, type(getattr(cfg, key))(value))
    return cfg
