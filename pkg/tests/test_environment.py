import json

import numpy as np
import pytest

from pffplan.dynamics import double_integrator, integrate_rk4
from pffplan.environment import (Circle, Env, Rect, corridor_env, empty_env,
                                 point_free, points_free, random_env,
                                 segment_free, trajectory_free)


@pytest.fixture
def env():
    return corridor_env()


class TestPointQueries:
    def test_inside_obstacle(self, env):
        assert not point_free(env, [2.0, 5.0])

    def test_free_space(self, env):
        assert point_free(env, [5.0, 2.0])
        assert point_free(env, [4.75, 5.0])  # the corridor gap

    def test_outside_bounds(self, env):
        assert not point_free(env, [-0.1, 5.0])
        assert not point_free(env, [5.0, 10.1])

    def test_boundary_is_free(self, env):
        assert point_free(env, [0.0, 0.0])
        assert point_free(env, [10.0, 10.0])

    def test_circle_obstacle(self, env):
        assert not point_free(env, [7.0, 7.5])
        assert point_free(env, [7.0, 7.5 + 0.91])

    def test_vectorized_matches_scalar(self, env):
        rng = np.random.default_rng(2)
        P = rng.uniform(-1, 11, size=(200, 2))
        mask = points_free(env, P)
        for p, ok in zip(P, mask):
            assert ok == point_free(env, p)


class TestSegmentFree:
    def test_clear_segment(self, env):
        assert segment_free(env, [1.0, 1.0], [9.0, 1.0])

    def test_blocked_segment(self, env):
        assert not segment_free(env, [1.0, 5.0], [3.5, 5.0])

    def test_through_corridor(self, env):
        assert segment_free(env, [4.75, 4.0], [4.75, 6.0])

    def test_degenerate_segment(self, env):
        assert segment_free(env, [1.0, 1.0], [1.0, 1.0])
        assert not segment_free(env, [2.0, 5.0], [2.0, 5.0])


class TestTrajectoryFree:
    def test_free_trajectory(self, env):
        di = double_integrator()
        traj = integrate_rk4(di, np.array([2.0, 2.0, 1.0, 0.0]),
                             np.zeros(2), 0.01, 2.0)
        assert trajectory_free(env, traj)

    def test_colliding_trajectory(self, env):
        di = double_integrator()
        traj = integrate_rk4(di, np.array([1.0, 5.0, 1.0, 0.0]),
                             np.zeros(2), 0.01, 2.0)
        assert not trajectory_free(env, traj)

    def test_resampling_catches_fast_grazing(self, env):
        # sparse knots that straddle an obstacle must still collide
        di = double_integrator()
        traj = integrate_rk4(di, np.array([1.0, 5.0, 8.0, 0.0]),
                             np.zeros(2), 0.5, 1.0)
        assert not trajectory_free(env, traj)

    def test_grazing_corpus_vs_fine_recheck(self, env):
        # random short trajectories near obstacle boundaries: the
        # standard resolution should agree with a 10x finer recheck on
        # at least 99% of cases
        di = double_integrator()
        rng = np.random.default_rng(42)
        agree = 0
        total = 200
        for _ in range(total):
            x0 = np.concatenate([rng.uniform(0, 10, size=2),
                                 rng.uniform(-2, 2, size=2)])
            traj = integrate_rk4(di, x0, rng.uniform(-1, 1, size=2),
                                 0.05, 0.5)
            coarse = trajectory_free(env, traj)
            fine = trajectory_free(env, traj, step=0.005)
            agree += coarse == fine
        assert agree / total >= 0.99


class TestEnvConstruction:
    def test_rejects_inverted_bounds(self):
        with pytest.raises(ValueError):
            Env(bounds=((10.0, 0.0), (0.0, 10.0)), obstacles=())

    def test_rejects_degenerate_rect(self):
        with pytest.raises(ValueError):
            Rect(5.0, 5.0, 4.0, 6.0)

    def test_rejects_nonpositive_circle(self):
        with pytest.raises(ValueError):
            Circle(5.0, 5.0, 0.0)

    def test_inflated(self, env):
        fat = env.inflated(0.2)
        # a point just outside an obstacle becomes blocked
        assert point_free(env, [4.1, 5.0])
        assert not point_free(fat, [4.1, 5.0])


class TestRandomEnv:
    def test_deterministic(self):
        a = random_env(7)
        b = random_env(7)
        assert a.to_json() == b.to_json()

    def test_different_seeds_differ(self):
        assert random_env(1).to_json() != random_env(2).to_json()

    def test_start_goal_kept_clear(self):
        for seed in range(20):
            env = random_env(seed)
            assert point_free(env, [2.0, 2.0])
            assert point_free(env, [8.0, 8.0])
            # a clearance disk, not just the point itself
            for ang in np.linspace(0, 2 * np.pi, 8, endpoint=False):
                off = 0.5 * np.array([np.cos(ang), np.sin(ang)])
                assert point_free(env, np.array([2.0, 2.0]) + off)
                assert point_free(env, np.array([8.0, 8.0]) + off)

    def test_obstacle_count_in_range(self):
        for seed in range(10):
            env = random_env(seed, n_obstacles=(3, 8))
            assert 3 <= len(env.obstacles) <= 8


class TestSerialization:
    def test_json_roundtrip(self, env, tmp_path):
        p = tmp_path / "env.json"
        env.save(p)
        back = Env.load(p)
        assert back.to_json() == env.to_json()
        assert json.loads(p.read_text())["bounds"] == [[0.0, 0.0],
                                                       [10.0, 10.0]]

    def test_empty_env(self):
        env = empty_env()
        assert len(env.obstacles) == 0
        assert point_free(env, [5.0, 5.0])
