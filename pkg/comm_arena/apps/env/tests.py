"""
Tests for env app.
"""
import csv
import tempfile
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from apps.env.exceptions import EpisodeFinishedError, UnexpectedMessageError
from apps.env.modes import CommMode
from apps.env.trajectories import TRAJECTORY_COLUMNS, trajectory_rows, write_trajectories
from apps.env.world import (
    EnvConfig, WorldState, compute_rewards, observation_size, observe, reset, step,
)

NOOP = [0, 0, 0, 0]


def static_state(positions, target=(0, 1)):
    return WorldState(
        position=np.array(positions, dtype=float),
        velocity=np.zeros((4, 2)),
        target=np.array(target),
        step=0,
    )


class EnvConfigTest(SimpleTestCase):
    """Test environment configuration."""

    def test_defaults(self):
        """Test default episode length and reward bounds."""
        config = EnvConfig()
        self.assertEqual(config.episode_length, 30)
        self.assertAlmostEqual(config.step_reward_bound, -5.65685, places=4)
        self.assertAlmostEqual(config.episode_reward_bound, -169.7056, places=3)

    def test_rejects_non_positive_constant(self):
        """Test physics constants must be positive."""
        with self.assertRaises(ValidationError):
            EnvConfig(dt=0.0)

    def test_rejects_damping_above_one(self):
        """Test damping must lie in (0, 1]."""
        with self.assertRaises(ValidationError):
            EnvConfig(velocity_damping=1.5)

    def test_rejects_unknown_mode(self):
        """Test an unknown mode string is rejected."""
        with self.assertRaises(ValidationError):
            EnvConfig(mode='banana')

    def test_published_rewards_inside_episode_bound(self):
        """Test the published per-episode averages fit the reward scale."""
        low = EnvConfig().episode_reward_bound
        for value in (-50.93, -119.81, -64.49, -129.20):
            self.assertTrue(low <= value <= 0)


class ResetTest(SimpleTestCase):
    """Test episode reset."""

    def setUp(self):
        """Set up a default config."""
        self.config = EnvConfig()

    def test_same_seed_identical(self):
        """Test the same seed yields a bit-identical state."""
        a = reset(self.config, np.random.default_rng(42))
        b = reset(self.config, np.random.default_rng(42))
        self.assertEqual(a.position.tobytes(), b.position.tobytes())
        self.assertEqual(a.target.tolist(), b.target.tolist())

    def test_initial_invariants(self):
        """Test positions lie in the arena, velocities are zero, step is 0."""
        state = reset(self.config, np.random.default_rng(0))
        self.assertTrue(np.all(np.abs(state.position) <= 1.0))
        self.assertTrue(np.all(state.velocity == 0.0))
        self.assertEqual(state.step, 0)

    def test_target_frequency_balanced(self):
        """Test 1000 resets give each target with near-even frequency."""
        rng = np.random.default_rng(123)
        targets = np.array([reset(self.config, rng).target for _ in range(1000)])
        self.assertTrue(set(np.unique(targets)) <= {0, 1})
        frequency = np.mean(targets[:, 0] == 0)
        self.assertTrue(0.44 <= frequency <= 0.56, frequency)


class StepTest(SimpleTestCase):
    """Test world dynamics."""

    def setUp(self):
        """Set up a default config and a state at rest."""
        self.config = EnvConfig()
        self.state = static_state([[0, 0], [0.5, 0.5], [-0.5, 0.2], [0.3, -0.4]])

    def test_noop_keeps_positions(self):
        """Test all agents idle at rest stay put."""
        result = step(self.state, NOOP, self.config)
        np.testing.assert_array_equal(result.next_state.position, self.state.position)
        self.assertEqual(result.next_state.step, 1)

    def test_predator_accelerates(self):
        """Test a resting predator pushing +x gains velocity 0.3 and moves 0.03."""
        result = step(self.state, [1, 0, 0, 0], self.config)
        np.testing.assert_allclose(result.next_state.velocity[0], [0.3, 0.0])
        np.testing.assert_allclose(result.next_state.position[0], [0.03, 0.0])

    def test_speed_clamped(self):
        """Test speeds never exceed the kind's maximum."""
        state = self.state
        rng = np.random.default_rng(1)
        for _ in range(30):
            result = step(state, rng.integers(0, 5, size=4), self.config)
            state = result.next_state
            speeds = np.linalg.norm(state.velocity, axis=1)
            self.assertTrue(np.all(speeds <= self.config.max_speeds + 1e-12))
            self.assertTrue(np.all(np.abs(state.position) <= 1.0))

    def test_done_on_last_step(self):
        """Test the 30th step ends the episode and stepping further is rejected."""
        state = self.state
        for _ in range(29):
            result = step(state, NOOP, self.config)
            self.assertFalse(result.done)
            state = result.next_state
        result = step(state, NOOP, self.config)
        self.assertTrue(result.done)
        with self.assertRaises(EpisodeFinishedError):
            step(result.next_state, NOOP, self.config)

    def test_determinism(self):
        """Test (seed, actions) fully determine the trajectory."""
        def trajectory(seed):
            rng = np.random.default_rng(seed)
            state = reset(self.config, rng)
            positions = []
            for _ in range(30):
                state = step(state, rng.integers(0, 5, size=4), self.config).next_state
                positions.append(state.position.tobytes())
            return positions
        self.assertEqual(trajectory(9), trajectory(9))

    def test_rejects_bad_action(self):
        """Test an out-of-range action is rejected."""
        with self.assertRaises(ValueError):
            step(self.state, [5, 0, 0, 0], self.config)


class RewardTest(SimpleTestCase):
    """Test distance rewards."""

    def test_hand_computed_distance(self):
        """Test a 3-4-5 triangle gives rewards (-5, +5)."""
        state = static_state([[0, 0], [1, 1], [3, 4], [1, 1]], target=(0, 1))
        self.assertEqual(compute_rewards(state), (-5.0, 5.0))

    def test_coincident_targets(self):
        """Test predators on top of their targets earn zero."""
        state = static_state([[0.2, 0.2], [-0.1, 0.4], [0.2, 0.2], [-0.1, 0.4]], target=(0, 1))
        predator, prey = compute_rewards(state)
        self.assertEqual(predator, 0.0)
        self.assertEqual(prey, 0.0)

    def test_zero_sum_and_bounded_on_random_states(self):
        """Test 10,000 random states are exactly zero-sum and within the bound."""
        config = EnvConfig()
        rng = np.random.default_rng(77)
        for _ in range(10000):
            state = static_state(rng.uniform(-1, 1, size=(4, 2)), target=rng.integers(0, 2, size=2))
            predator, prey = compute_rewards(state)
            self.assertEqual(predator + prey, 0.0)
            self.assertTrue(config.step_reward_bound <= predator <= 0.0)


class ObserveTest(SimpleTestCase):
    """Test observation layouts."""

    def setUp(self):
        """Set up a fixed state."""
        self.state = static_state([[0, 0], [0.5, 0.5], [-0.5, 0.2], [0.3, -0.4]], target=(1, 0))

    def test_predator_sees_teammate_target(self):
        """Test predators see the teammate's target outside full observability."""
        obs = observe(self.state, 0, EnvConfig(mode=CommMode.PRIVATE_COMM))
        self.assertEqual(len(obs), 12)
        self.assertEqual(obs[-2:].tolist(), [1.0, 0.0])

    def test_full_obs_predator_sees_own_target(self):
        """Test full observability shows the predator its own target."""
        obs = observe(self.state, 0, EnvConfig(mode=CommMode.FULL_OBS))
        self.assertEqual(obs[-2:].tolist(), [0.0, 1.0])

    def test_relative_positions(self):
        """Test the predator layout uses egocentric relative positions."""
        obs = observe(self.state, 1, EnvConfig())
        np.testing.assert_allclose(obs[:2], [0.5, 0.5])
        np.testing.assert_allclose(obs[4:6], [-0.5, -0.5])
        np.testing.assert_allclose(obs[6:8], [-1.0, -0.3])
        np.testing.assert_allclose(obs[8:10], [-0.2, -0.9])

    def test_prey_lengths_per_mode(self):
        """Test private prey obs match no_comm and public prey get two extra values."""
        private = observe(self.state, 2, EnvConfig(mode=CommMode.PRIVATE_COMM))
        no_comm = observe(self.state, 2, EnvConfig(mode=CommMode.NO_COMM))
        public = observe(self.state, 2, EnvConfig(mode=CommMode.PUBLIC_COMM), messages=[0.0, 0.4])
        self.assertEqual(len(private), len(no_comm))
        self.assertEqual(len(public), len(private) + 2)
        self.assertEqual(public[-2:].tolist(), [0.0, 0.4])
        self.assertEqual(observation_size(CommMode.PUBLIC_COMM, 3), 12)

    def test_public_prey_silent_channel(self):
        """Test public prey read zeros before any message was sent."""
        obs = observe(self.state, 3, EnvConfig(mode=CommMode.PUBLIC_COMM))
        self.assertEqual(obs[-2:].tolist(), [0.0, 0.0])

    def test_unexpected_messages_rejected(self):
        """Test messages are refused by predators and by private-mode prey."""
        with self.assertRaises(UnexpectedMessageError):
            observe(self.state, 0, EnvConfig(mode=CommMode.PUBLIC_COMM), messages=[0.1, 0.2])
        with self.assertRaises(UnexpectedMessageError):
            observe(self.state, 2, EnvConfig(mode=CommMode.PRIVATE_COMM), messages=[0.1, 0.2])


class TrajectoryExportTest(SimpleTestCase):
    """Test trajectory CSV export."""

    def test_rows_and_columns(self):
        """Test one row per agent with the documented columns."""
        state = static_state([[0, 0], [0.5, 0.5], [-0.5, 0.2], [0.3, -0.4]], target=(1, 0))
        rows = trajectory_rows(0, state, [1, 2, 3, 4], -1.5, 1.5)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_trajectories(Path(tmp) / 'trajectories.csv', rows)
            with path.open() as handle:
                reader = csv.DictReader(handle)
                self.assertEqual(reader.fieldnames, TRAJECTORY_COLUMNS)
                loaded = list(reader)
        self.assertEqual(len(loaded), 4)
        self.assertEqual(loaded[0]['target'], '1')
        self.assertEqual(loaded[2]['target'], '')
        self.assertEqual(loaded[3]['reward'], '1.5')
