import numpy as np
import pytest

from strokelab import sim
from strokelab.kinematics import forward
from strokelab.promp import Trajectory, mean_trajectory
from strokelab.segment import NoStroke
from strokelab.sim import (
    CONDITIONING,
    EXECUTING,
    IDLE,
    RECOVERING,
    TRACKING,
    EpisodeOutcome,
    LaunchSpec,
    ScenarioConfig,
    StrokeController,
    aggregate_metrics,
    episode_seed,
    load_scenario,
    mean_at_phase,
    reward_oracle,
    run_episode,
    run_experiment,
    save_scenario,
)


@pytest.fixture(scope="module")
def scenario():
    cfg = ScenarioConfig()
    demos = sim.scripted_demos(cfg, n_demos=20, seed=0)
    base, z_hit = sim.train_base_primitive(cfg, demos)
    cfg.z_hit = z_hit
    return cfg, base, demos


class TestRewardOracle:
    def test_far_miss(self):
        assert reward_oracle(False, 0.3, False, False) == 0.0

    def test_close_miss(self):
        assert reward_oracle(False, 0.04, False, False) == 0.25

    def test_weak_hit(self):
        assert reward_oracle(True, 0.0, False, False) == 0.5

    def test_pillar_hit(self):
        assert reward_oracle(True, 0.0, False, True) == 1.0

    def test_net_clearing_hit(self):
        assert reward_oracle(True, 0.0, True, False) == 2.0

    def test_boundary_miss_distance(self):
        assert reward_oracle(False, 0.05, False, False) == 0.25
        assert reward_oracle(False, 0.0501, False, False) == 0.0


class TestLaunchSpec:
    def test_negative_jitter_rejected(self):
        with pytest.raises(ValueError):
            LaunchSpec(p0=np.zeros(3), v0=np.zeros(3),
                       jitter_v_std=np.array([-0.1, 0, 0]))

    def test_default_jitter_zero(self):
        spec = LaunchSpec(p0=np.zeros(3), v0=np.ones(3))
        np.testing.assert_array_equal(spec.jitter_p_std, 0.0)
        np.testing.assert_array_equal(spec.jitter_v_std, 0.0)


class TestScenarioConfig:
    def test_seed_posture_reaches_rest_target(self):
        cfg = ScenarioConfig()
        ee = forward(cfg.chain, 0.0, cfg.q_seed())
        assert np.linalg.norm(ee - cfg.rest_target) < 1e-4

    def test_round_trip(self, tmp_path):
        cfg = ScenarioConfig()
        cfg.z_hit = 0.57
        cfg.launch = LaunchSpec(p0=cfg.launch.p0, v0=cfg.launch.v0,
                                jitter_v_std=np.full(3, 0.15), drag=0.02)
        path = tmp_path / "scenario.json"
        save_scenario(cfg, path)
        back = load_scenario(path)
        assert back.z_hit == cfg.z_hit
        assert back.launch.drag == 0.02
        np.testing.assert_array_equal(back.launch.jitter_v_std, np.full(3, 0.15))
        np.testing.assert_allclose(forward(back.chain, 0.1, back.q_seed()),
                                   forward(cfg.chain, 0.1, cfg.q_seed()), atol=1e-12)


class TestScriptedDemos:
    def test_shape_and_rail_zero(self, scenario):
        cfg, _, demos = scenario
        assert len(demos) == 20
        for rec in demos:
            assert rec.positions.shape[1] == 1 + cfg.n_arm
            np.testing.assert_array_equal(rec.positions[:, 0], 0.0)

    def test_demos_start_at_seed_posture(self, scenario):
        cfg, _, demos = scenario
        for rec in demos:
            np.testing.assert_allclose(rec.positions[0, 1:], cfg.q_seed(),
                                       atol=1e-9)

    def test_demos_vary(self, scenario):
        _, _, demos = scenario
        spread = np.ptp([rec.positions[-1] for rec in demos], axis=0)
        assert spread.max() > 1e-3

    def test_deterministic(self):
        cfg = ScenarioConfig()
        a = sim.scripted_demos(cfg, n_demos=2, seed=0)
        b = sim.scripted_demos(cfg, n_demos=2, seed=0)
        np.testing.assert_array_equal(a[0].positions, b[0].positions)
        np.testing.assert_array_equal(a[1].positions, b[1].positions)


class TestBasePrimitive:
    def test_dimensions(self, scenario):
        cfg, base, _ = scenario
        assert base.basis.n_dof == cfg.n_arm
        assert 0.3 < base.basis.phase_duration < cfg.phase_duration + 0.1

    def test_hit_phase_in_range(self, scenario):
        cfg, _, _ = scenario
        assert 0.2 < cfg.z_hit < 0.9

    def test_mean_passes_near_nominal_hit_point(self, scenario):
        cfg, base, _ = scenario
        from strokelab.tracker import BallEstimate, predict_crossing

        est = BallEstimate(mean=np.concatenate([cfg.launch.p0, cfg.launch.v0]),
                           covariance=np.eye(6) * 1e-9)
        _, x_hit = predict_crossing(est, cfg.plane, cfg.gravity, 0.0)
        q = mean_at_phase(base, cfg.z_hit)
        ee = forward(cfg.chain, 0.0, q)
        assert np.linalg.norm(ee - x_hit) < 0.05

    def test_mean_starts_near_seed(self, scenario):
        cfg, base, _ = scenario
        q0 = mean_at_phase(base, 0.0)
        assert np.linalg.norm(q0 - cfg.q_seed()) < 0.08


class TestEpisode:
    def test_nominal_launch_is_struck(self, scenario):
        cfg, base, _ = scenario
        out = run_episode(base, cfg, seed=7)
        assert out.swung
        assert out.hit
        assert out.reward in (0.5, 1.0, 2.0)

    def test_deterministic_per_seed(self, scenario):
        cfg, base, _ = scenario
        a = run_episode(base, cfg, seed=3)
        b = run_episode(base, cfg, seed=3)
        assert a.reward == b.reward
        np.testing.assert_array_equal(a.executed.positions, b.executed.positions)
        np.testing.assert_array_equal(a.ball_path, b.ball_path)

    def test_paths_logged_at_tick_rate(self, scenario):
        cfg, base, _ = scenario
        out = run_episode(base, cfg, seed=3)
        n = int(round(cfg.episode_horizon * cfg.tick_rate))
        assert out.ball_path.shape == (n, 4)
        assert out.ee_path.shape == (n, 4)
        assert out.executed.positions.shape == (n, 1 + cfg.n_arm)

    def test_joint_log_respects_limits(self, scenario):
        cfg, base, _ = scenario
        out = run_episode(base, cfg, seed=11)
        rail = out.executed.positions[:, 0]
        arm = out.executed.positions[:, 1:] - cfg.q_seed()
        assert np.all(rail >= cfg.limits.lower[0] - 1e-12)
        assert np.all(rail <= cfg.limits.upper[0] + 1e-12)
        assert np.all(arm >= cfg.limits.lower[1:] - 1e-12)
        assert np.all(arm <= cfg.limits.upper[1:] + 1e-12)

    def test_unreachable_launch_is_a_scored_miss(self, scenario):
        cfg, base, _ = scenario
        wide = ScenarioConfig()
        wide.z_hit = cfg.z_hit
        wide.launch = LaunchSpec(p0=np.array([6.0, 3.0, 2.0]),
                                 v0=np.array([-8.0, 0.0, 2.0]))
        out = run_episode(base, wide, seed=5)
        assert not out.hit
        assert out.reward in (0.0, 0.25)


class TestControllerPhases:
    def test_progression(self, scenario):
        cfg, base, _ = scenario
        from strokelab.tracker import BallFilter, Observation, _rk4_step

        controller = StrokeController(base, cfg)
        f = BallFilter(g=cfg.gravity, k_d=0.0, reorder_window=0.0)
        ball = np.concatenate([cfg.launch.p0, cfg.launch.v0])
        seen = [controller.phase]
        dt = 1.0 / cfg.tick_rate
        for i in range(int(2.0 * cfg.tick_rate)):
            now = i * dt
            if i % 3 == 0 and ball[0] > cfg.plane.point[0]:
                f.add_observation(Observation(position=ball[:3].copy(),
                                              noise_std=1e-4, stamp=now))
                f.advance(now + 1.0)
            controller.step(now, f)
            if controller.phase != seen[-1]:
                seen.append(controller.phase)
            ball = _rk4_step(ball, dt, cfg.gravity, 0.0)
        assert seen[:4] == [IDLE, TRACKING, CONDITIONING, EXECUTING]
        assert RECOVERING in seen

    def test_execution_timed_to_arrival(self, scenario):
        cfg, base, _ = scenario
        out = run_episode(base, cfg, seed=2)
        assert out.hit
        # contact must happen inside the swing window
        d = np.linalg.norm(out.ball_path[:, 1:] - out.ee_path[:, 1:], axis=1)
        t_contact = out.ball_path[np.argmin(d), 0]
        vel = np.gradient(out.executed.positions[:, 1:], out.executed.timestamps,
                          axis=0)
        env = np.max(np.abs(vel), axis=1)
        swing_mask = env > 0.5
        swing_times = out.executed.timestamps[swing_mask]
        assert swing_times[0] - 0.05 <= t_contact <= swing_times[-1] + 0.05


class TestReflect:
    def test_stationary_racket_head_on(self):
        cfg = ScenarioConfig()
        v_out = sim._reflect(np.array([-8.0, 0.0, 0.0]), np.zeros(3), cfg)
        np.testing.assert_allclose(v_out, [8.0 * cfg.restitution, 0.0, 0.0],
                                   atol=1e-12)

    def test_moving_racket_adds_speed(self):
        cfg = ScenarioConfig()
        v_racket = np.array([2.0, 0.0, 0.0])
        v_out = sim._reflect(np.array([-8.0, 0.0, 0.0]), v_racket, cfg)
        assert v_out[0] > 8.0 * cfg.restitution

    def test_separating_ball_unaffected(self):
        cfg = ScenarioConfig()
        v_out = sim._reflect(np.array([5.0, 0.0, 0.0]), np.zeros(3), cfg)
        np.testing.assert_allclose(v_out, [5.0, 0.0, 0.0], atol=1e-12)


class TestMetrics:
    def test_aggregate(self):
        m = aggregate_metrics([0.0, 0.5, 1.0, 2.0], [False, True, True, True])
        assert m.n_balls == 4
        assert m.hit_rate == 0.75
        assert m.success_rate == 0.5
        assert m.avg_reward == 0.875

    def test_as_dict_keys(self):
        m = aggregate_metrics([1.0], [True])
        assert set(m.as_dict()) == {"n_balls", "hit_rate", "success_rate",
                                    "avg_reward"}

    def test_run_experiment_consistency(self, scenario):
        cfg, base, _ = scenario
        metrics, outcomes = run_experiment(base, 3, cfg, seed=42)
        assert metrics.n_balls == 3
        assert metrics.avg_reward == pytest.approx(
            np.mean([o.reward for o in outcomes]))

    def test_episode_seed_distinct_streams(self):
        a = episode_seed(42, 1, 0).generate_state(4)
        b = episode_seed(42, 1, 1).generate_state(4)
        c = episode_seed(42, 1, 0).generate_state(4)
        assert not np.array_equal(a, b)
        np.testing.assert_array_equal(a, c)


class TestRefinementPlumbing:
    def test_extract_stroke_duration_near_primitive(self, scenario):
        cfg, base, _ = scenario
        out = run_episode(base, cfg, seed=9)
        stroke = sim.extract_stroke(out.executed, cfg)
        dur = stroke.timestamps[-1] - stroke.timestamps[0]
        assert abs(dur - base.basis.phase_duration) < 0.15

    def test_stroke_free_episode_dropped(self, scenario):
        cfg, base, _ = scenario
        still = Trajectory(
            timestamps=np.arange(100) / cfg.tick_rate,
            positions=np.tile(np.concatenate([[0.0], cfg.q_seed()]), (100, 1)),
        )
        quiet = EpisodeOutcome(
            hit=False, min_racket_ball_distance=1.0, return_crossed_net=False,
            return_hit_pillar_zone=False, executed=still, reward=0.0, swung=False)
        real = run_episode(base, cfg, seed=4)
        refined, n_used = sim.apply_feedback_round(
            base, [quiet, real], [0.0, real.reward], cfg)
        assert n_used == 1
        assert refined.mu_w.shape == base.mu_w.shape

    def test_all_quiet_returns_input(self, scenario):
        cfg, base, _ = scenario
        still = Trajectory(
            timestamps=np.arange(100) / cfg.tick_rate,
            positions=np.tile(np.concatenate([[0.0], cfg.q_seed()]), (100, 1)),
        )
        quiet = EpisodeOutcome(
            hit=False, min_racket_ball_distance=1.0, return_crossed_net=False,
            return_hit_pillar_zone=False, executed=still, reward=0.0, swung=False)
        refined, n_used = sim.apply_feedback_round(base, [quiet], [0.0], cfg)
        assert n_used == 0
        assert refined is base

    def test_batch_shared_between_runners(self, scenario):
        cfg, base, _ = scenario
        a = sim.run_refinement_batch(base, cfg, 2, seed=42, round_index=0)
        b = sim.run_refinement_batch(base, cfg, 2, seed=42, round_index=0)
        assert [o.reward for o in a] == [o.reward for o in b]
        np.testing.assert_array_equal(a[0].executed.positions,
                                      b[0].executed.positions)

    def test_refined_primitive_still_strikes(self, scenario):
        cfg, base, _ = scenario
        _, outcomes = run_experiment(base, 4, cfg, seed=1, seed_key=(1, 0))
        refined, n_used = sim.apply_feedback_round(
            base, outcomes, [o.reward for o in outcomes], cfg)
        assert n_used >= 3
        out = run_episode(refined, cfg, seed=77)
        assert out.hit
