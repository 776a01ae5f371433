"""
Tests for training app.
"""
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from apps.agents.policies import compute_message
from apps.env.modes import CommMode, Team
from apps.env.world import EnvConfig
from apps.training.exceptions import WrongModeError
from apps.training.services import (
    TrainerState, TrainingConfig, dial_gradients, dial_update, iql_gradients, iql_update,
    run_episode, sync_targets, td_target, train_epoch, train_run,
)
from apps.training.transitions import TransitionBatch, minibatch_indices


def make_trainer(mode, seed=0, **overrides):
    config = TrainingConfig(mode=mode, seed=seed, **overrides)
    rng = np.random.default_rng(seed)
    return TrainerState.create(config, rng), EnvConfig(mode=mode), rng


def collect_batch(trainer, env_config, rng, size=200, epsilon=1.0):
    transitions = []
    while len(transitions) < size:
        transitions.extend(run_episode(trainer, env_config, rng, epsilon).transitions)
    return TransitionBatch.stack(transitions[:size])


def batch_loss(trainer, batch):
    return dial_gradients(trainer, batch)[0]


class TrainingConfigTest(SimpleTestCase):
    """Test training defaults."""

    def test_defaults(self):
        """Test the documented learning defaults."""
        config = TrainingConfig()
        self.assertEqual(config.gamma, 0.97)
        self.assertEqual(config.lr, 0.0005)
        self.assertEqual(config.batch_size, 200)
        self.assertEqual(config.episodes_per_epoch, 50)


class TdTargetTest(SimpleTestCase):
    """Test the TD target rule."""

    def test_bootstrapped(self):
        """Test r + gamma * max Q' when not done."""
        self.assertAlmostEqual(td_target(1.0, False, 2.0, 0.97), 2.94)

    def test_terminal(self):
        """Test a terminal step ignores the next value."""
        self.assertEqual(td_target(1.0, True, 1e9, 0.97), 1.0)

    def test_myopic(self):
        """Test gamma 0 returns the reward."""
        self.assertEqual(td_target(-3.0, False, 5.0, 0.0), -3.0)

    def test_vectorized(self):
        """Test element-wise evaluation over a batch."""
        result = td_target(np.array([1.0, 1.0]), np.array([False, True]), np.array([2.0, 2.0]), 0.5)
        np.testing.assert_allclose(result, [2.0, 1.0])


class RunEpisodeTest(SimpleTestCase):
    """Test episode rollouts."""

    def setUp(self):
        """Set up a private communication trainer."""
        self.trainer, self.env_config, self.rng = make_trainer(CommMode.PRIVATE_COMM)

    def test_thirty_transitions(self):
        """Test an episode records exactly 30 transitions and ends done."""
        episode = run_episode(self.trainer, self.env_config, self.rng)
        self.assertEqual(len(episode.transitions), 30)
        self.assertTrue(episode.transitions[-1].done)
        self.assertFalse(any(t.done for t in episode.transitions[:-1]))

    def test_return_is_reward_sum(self):
        """Test the episode return sums the per-step predator rewards."""
        episode = run_episode(self.trainer, self.env_config, self.rng)
        self.assertAlmostEqual(episode.predator_return, sum(t.predator_reward for t in episode.transitions))
        self.assertAlmostEqual(episode.prey_return, -episode.predator_return)

    def test_greedy_rollouts_identical(self):
        """Test two greedy rollouts from the same seed agree exactly."""
        a = run_episode(self.trainer, self.env_config, np.random.default_rng(4), epsilon=0.0)
        b = run_episode(self.trainer, self.env_config, np.random.default_rng(4), epsilon=0.0)
        self.assertEqual([t.actions.tolist() for t in a.transitions], [t.actions.tolist() for t in b.transitions])
        self.assertEqual(a.predator_return, b.predator_return)

    def test_message_is_function_of_teammate_observation(self):
        """Test the stored messages are the C-Net applied to the same-step observations."""
        episode = run_episode(self.trainer, self.env_config, self.rng)
        for transition in episode.transitions[:5]:
            expected = compute_message(self.trainer.online.cnet, transition.predator_obs)[:, 0]
            np.testing.assert_array_equal(transition.messages, expected)

    def test_public_prey_hear_current_messages(self):
        """Test public prey observations end with the same-step messages."""
        trainer, env_config, rng = make_trainer(CommMode.PUBLIC_COMM)
        episode = run_episode(trainer, env_config, rng)
        for transition in episode.transitions:
            for prey in range(2):
                np.testing.assert_array_equal(transition.prey_obs[prey, -2:], transition.messages)

    def test_non_communicating_modes_skip_messages(self):
        """Test no_comm rollouts carry no messages."""
        trainer, env_config, rng = make_trainer(CommMode.NO_COMM)
        episode = run_episode(trainer, env_config, rng)
        self.assertIsNone(episode.transitions[0].messages)


class DialUpdateTest(SimpleTestCase):
    """Test the DIAL update and gradient flow through the channel."""

    def setUp(self):
        """Set up a trainer whose C-Net sends positive messages and a random batch."""
        self.trainer, self.env_config, self.rng = make_trainer(CommMode.PRIVATE_COMM, seed=3)
        self.trainer.online.cnet.layers[0].bias[:] = 2.0
        self.batch = collect_batch(self.trainer, self.env_config, self.rng)

    def test_channel_gradient_matches_finite_difference(self):
        """Test the batch-loss sensitivity to C-Net weights matches the analytic gradient."""
        _, _, cnet_gradients = dial_gradients(self.trainer, self.batch)
        weights = self.trainer.online.cnet.layers[0].weights
        h = 1e-6
        for column in (0, 3, 10, 11):
            analytic = cnet_gradients.weight_gradients[0][0, column]
            original = weights[0, column]
            weights[0, column] = original + h
            plus = batch_loss(self.trainer, self.batch)
            weights[0, column] = original - h
            minus = batch_loss(self.trainer, self.batch)
            weights[0, column] = original
            numeric = (plus - minus) / (2 * h)
            self.assertNotEqual(analytic, 0.0)
            self.assertLessEqual(abs(analytic - numeric) / max(abs(analytic), abs(numeric)), 1e-3)

    def test_severed_channel_has_zero_gradient(self):
        """Test zeroing the A-Net's message weights cuts all C-Net gradient."""
        self.trainer.online.anet.layers[0].weights[:, 12] = 0.0
        _, _, cnet_gradients = dial_gradients(self.trainer, self.batch)
        for gradient in cnet_gradients.arrays():
            self.assertTrue(np.all(gradient == 0.0))

    def test_repeated_update_decreases_loss(self):
        """Test 50 updates on a fixed batch lower the loss."""
        first = dial_update(self.trainer, self.batch)
        for _ in range(49):
            last = dial_update(self.trainer, self.batch)
        self.assertLess(last, first)

    def test_update_moves_both_networks(self):
        """Test one DIAL update changes the A-Net and the C-Net."""
        before = self.trainer.online.clone()
        dial_update(self.trainer, self.batch)
        self.assertFalse(before.anet.parameters_equal(self.trainer.online.anet))
        self.assertFalse(before.cnet.parameters_equal(self.trainer.online.cnet))
        self.assertEqual(self.trainer.optimizers['cnet'].step_count, 1)

    def test_wrong_mode_rejected(self):
        """Test DIAL updates are refused without communication."""
        trainer, env_config, rng = make_trainer(CommMode.NO_COMM)
        batch = collect_batch(trainer, env_config, rng, size=30)
        with self.assertRaises(WrongModeError):
            dial_update(trainer, batch)


class IqlUpdateTest(SimpleTestCase):
    """Test independent Q-learning updates."""

    def test_prey_update_leaves_predators_untouched(self):
        """Test a full prey update keeps every predator parameter bit-identical."""
        trainer, env_config, rng = make_trainer(CommMode.PUBLIC_COMM, seed=1)
        batch = collect_batch(trainer, env_config, rng)
        before = trainer.online.clone()
        for _ in range(3):
            iql_update(trainer, batch, Team.PREY)
        self.assertTrue(before.cnet.parameters_equal(trainer.online.cnet))
        self.assertTrue(before.anet.parameters_equal(trainer.online.anet))
        self.assertFalse(before.prey.parameters_equal(trainer.online.prey))

    def test_prey_gradients_only_cover_prey_network(self):
        """Test the prey gradient set mirrors the prey network alone."""
        trainer, env_config, rng = make_trainer(CommMode.PUBLIC_COMM, seed=1)
        batch = collect_batch(trainer, env_config, rng, size=60)
        _, gradients = iql_gradients(trainer, batch, Team.PREY)
        self.assertEqual([g.shape for g in gradients.arrays()], [p.shape for p in trainer.online.prey.parameters()])

    def test_full_obs_predators_see_own_target(self):
        """Test full-observability predator IQL trains on own-target observations."""
        trainer, env_config, rng = make_trainer(CommMode.FULL_OBS, seed=2)
        episode = run_episode(trainer, env_config, rng)
        self.assertEqual(trainer.online.predator.input_size, 12)
        first = episode.transitions[0].predator_obs
        self.assertEqual(first.shape, (2, 12))
        np.testing.assert_array_equal(first[:, -2:].sum(axis=1), [1.0, 1.0])
        batch = collect_batch(trainer, env_config, rng, size=60)
        loss, _ = iql_gradients(trainer, batch, Team.PREDATORS)
        self.assertTrue(np.isfinite(loss))

    def test_repeated_update_decreases_loss(self):
        """Test 50 predator IQL updates on a fixed batch lower the loss."""
        trainer, env_config, rng = make_trainer(CommMode.NO_COMM, seed=5)
        batch = collect_batch(trainer, env_config, rng)
        first = iql_update(trainer, batch, Team.PREDATORS)
        for _ in range(49):
            last = iql_update(trainer, batch, Team.PREDATORS)
        self.assertLess(last, first)

    def test_predator_iql_refused_in_comm_mode(self):
        """Test communicating predators cannot be trained with IQL."""
        trainer, env_config, rng = make_trainer(CommMode.PRIVATE_COMM)
        batch = collect_batch(trainer, env_config, rng, size=30)
        with self.assertRaises(WrongModeError):
            iql_update(trainer, batch, Team.PREDATORS)


class SyncTargetsTest(SimpleTestCase):
    """Test target network synchronisation."""

    def setUp(self):
        """Set up a trainer and a batch."""
        self.trainer, self.env_config, self.rng = make_trainer(CommMode.PRIVATE_COMM, seed=6)
        self.batch = collect_batch(self.trainer, self.env_config, self.rng, size=60)

    def test_targets_start_as_initial_networks(self):
        """Test targets equal the online networks before any update."""
        self.assertTrue(self.trainer.target.parameters_equal(self.trainer.online))

    def test_sync_copies_online(self):
        """Test after an update and sync, targets agree with online networks."""
        dial_update(self.trainer, self.batch)
        self.assertFalse(self.trainer.target.parameters_equal(self.trainer.online))
        sync_targets(self.trainer)
        x = self.rng.normal(size=(4, 13))
        np.testing.assert_array_equal(self.trainer.target.anet(x), self.trainer.online.anet(x))

    def test_sync_idempotent(self):
        """Test syncing twice changes nothing further."""
        sync_targets(self.trainer)
        first = self.trainer.target.clone()
        sync_targets(self.trainer)
        self.assertTrue(first.parameters_equal(self.trainer.target))


class EpochAccountingTest(SimpleTestCase):
    """Test epoch bookkeeping."""

    def test_minibatch_split(self):
        """Test 1500 transitions split into 7 batches of 200 and one of 100."""
        sizes = [len(b) for b in minibatch_indices(np.arange(1500), 200)]
        self.assertEqual(sizes, [200] * 7 + [100])

    def test_full_epoch_store(self):
        """Test one default epoch gathers exactly 1500 transitions and trains on 8 minibatches."""
        trainer, env_config, rng = make_trainer(CommMode.NO_COMM, seed=8)
        record = train_epoch(trainer, env_config, rng)
        self.assertEqual(len(trainer.store), 1500)
        self.assertEqual(trainer.optimizers['predator'].step_count, 8)
        self.assertEqual(trainer.optimizers['prey'].step_count, 8)
        self.assertEqual(record.epoch, 0)
        self.assertEqual(trainer.epoch, 1)
        self.assertIsNone(record.dial_loss)
        self.assertIsNotNone(record.iql_loss_pred)


class TrainRunTest(SimpleTestCase):
    """Test whole training runs at toy scale."""

    def setUp(self):
        """Set up a short public communication run."""
        self.config = TrainingConfig(
            mode=CommMode.PUBLIC_COMM, epochs=3, episodes_per_epoch=2, batch_size=20, seed=7,
        )
        self.env_config = EnvConfig(mode=CommMode.PUBLIC_COMM)

    def test_log_length_and_bounds(self):
        """Test one record per epoch with rewards inside the episode bound."""
        result = train_run(self.config, self.env_config)
        self.assertEqual(len(result.log), 3)
        for record in result.log:
            self.assertTrue(self.env_config.episode_reward_bound <= record.mean_predator_reward <= 0.0)
            self.assertIsNotNone(record.dial_loss)
            self.assertIsNone(record.iql_loss_pred)

    def test_same_seed_same_log(self):
        """Test two runs with the same seed produce identical logs."""
        a = train_run(self.config, self.env_config)
        b = train_run(self.config, self.env_config)
        self.assertEqual(a.log.to_dicts(), b.log.to_dicts())
        self.assertTrue(a.policies.parameters_equal(b.policies))

    def test_seed_argument_overrides_config(self):
        """Test the seed argument changes the run."""
        a = train_run(self.config, self.env_config, seed=1)
        b = train_run(self.config, self.env_config, seed=2)
        self.assertNotEqual(a.log.to_dicts(), b.log.to_dicts())

    def test_resume_matches_uninterrupted_run(self):
        """Test a run continued from its resume file equals a straight run."""
        straight = train_run(self.config, self.env_config)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'run0.resume.json'
            # the file is written after epoch 2 only, so the second call replays epoch 2
            train_run(self.config, self.env_config, resume_path=path, resume_every=2)
            resumed = train_run(self.config, self.env_config, resume_path=path)
        self.assertEqual(straight.log.to_dicts(), resumed.log.to_dicts())
        self.assertTrue(straight.policies.parameters_equal(resumed.policies))
