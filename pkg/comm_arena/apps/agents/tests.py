"""
Tests for agents app.
"""
import tempfile

import numpy as np
from django.test import SimpleTestCase

from apps.agents.exceptions import InvalidQValuesError
from apps.agents.policies import (
    EpsilonSchedule, PolicySet, build_anet, build_cnet, compute_message, compute_q, select_action,
)
from apps.diffnet.exceptions import ShapeMismatchError
from apps.diffnet.gradcheck import finite_difference_check
from apps.diffnet.network import Activation, backward
from apps.env.modes import CommMode


class MessageTest(SimpleTestCase):
    """Test the C-Net message."""

    def setUp(self):
        """Set up a C-Net and a predator observation."""
        self.rng = np.random.default_rng(0)
        self.cnet = build_cnet(self.rng)
        self.obs = self.rng.uniform(-1, 1, size=12)

    def test_architecture(self):
        """Test the C-Net is one ReLU layer from 12 inputs to 1 message."""
        self.assertEqual(len(self.cnet.layers), 1)
        self.assertEqual(self.cnet.sizes, [12, 1])
        self.assertEqual(self.cnet.layers[0].activation, Activation.RELU)

    def test_constant_positive_message(self):
        """Test zero weights with bias 0.5 always send 0.5."""
        self.cnet.layers[0].weights[:] = 0.0
        self.cnet.layers[0].bias[:] = 0.5
        self.assertEqual(compute_message(self.cnet, self.obs).tolist(), [0.5])

    def test_negative_bias_clamped(self):
        """Test a negative pre-activation sends 0."""
        self.cnet.layers[0].weights[:] = 0.0
        self.cnet.layers[0].bias[:] = -0.5
        self.assertEqual(compute_message(self.cnet, self.obs).tolist(), [0.0])

    def test_one_hot_perturbation_linear(self):
        """Test bumping a target one-hot entry shifts the message by its weight."""
        self.cnet.layers[0].bias[:] = 5.0
        bumped = self.obs.copy()
        bumped[10] += 1.0
        delta = compute_message(self.cnet, bumped)[0] - compute_message(self.cnet, self.obs)[0]
        self.assertAlmostEqual(delta, self.cnet.layers[0].weights[0, 10], places=12)

    def test_messages_non_negative(self):
        """Test messages are never negative."""
        batch = self.rng.uniform(-3, 3, size=(200, 12))
        self.assertTrue(np.all(compute_message(self.cnet, batch) >= 0.0))

    def test_gradient_reaches_observation(self):
        """Test the traced message backpropagates into W, b and obs."""
        self.cnet.layers[0].bias[:] = 5.0
        _, trace = compute_message(self.cnet, self.obs, with_trace=True)
        grads = backward(self.cnet, trace, [1.0])
        np.testing.assert_array_equal(grads.input_gradient, self.cnet.layers[0].weights[0])
        np.testing.assert_array_equal(grads.weight_gradients[0][0], self.obs)

    def test_wrong_length_rejected(self):
        """Test a prey-sized observation is rejected."""
        with self.assertRaises(ShapeMismatchError):
            compute_message(self.cnet, np.zeros(10))

    def test_swapped_observations_swap_messages(self):
        """Test shared parameters: swapping observations swaps messages."""
        pair = self.rng.uniform(-1, 1, size=(2, 12))
        self.cnet.layers[0].bias[:] = 1.0
        messages = compute_message(self.cnet, pair)
        swapped = compute_message(self.cnet, pair[::-1])
        np.testing.assert_array_equal(messages[::-1], swapped)


class QValueTest(SimpleTestCase):
    """Test the A-Net."""

    def setUp(self):
        """Set up an A-Net and an observation."""
        self.rng = np.random.default_rng(1)
        self.anet = build_anet(self.rng)
        self.obs = self.rng.uniform(-1, 1, size=12)

    def test_architecture(self):
        """Test hidden widths 256 and 512 on a 13-wide input."""
        self.assertEqual(self.anet.sizes, [13, 256, 512, 5])

    def test_zero_last_layer_returns_bias(self):
        """Test a zeroed final layer outputs its bias."""
        last = self.anet.layers[-1]
        last.weights[:] = 0.0
        last.bias[:] = [1, 2, 3, 4, 5]
        np.testing.assert_array_equal(compute_q(self.anet, self.obs, [0.3]), [1, 2, 3, 4, 5])

    def test_message_slot_gradient_matches_finite_difference(self):
        """Test the message input gradient is nonzero and matches central differences."""
        x = np.concatenate([self.obs, [0.4]])
        report = finite_difference_check(self.anet, x, max_components_per_layer=20, rng=self.rng)
        self.assertTrue(report.passed, report)
        _, trace = compute_q(self.anet, self.obs, [0.4], with_trace=True)
        grads = backward(self.anet, trace, np.ones(5))
        self.assertNotEqual(grads.input_gradient[12], 0.0)

    def test_message_changes_q(self):
        """Test different messages give different Q-values."""
        a = compute_q(self.anet, self.obs, [0.0])
        b = compute_q(self.anet, self.obs, [2.0])
        self.assertFalse(np.array_equal(a, b))

    def test_length_mismatch_rejected(self):
        """Test a message of the wrong width is rejected."""
        with self.assertRaises(ShapeMismatchError):
            compute_q(self.anet, self.obs, [0.1, 0.2])


class SelectActionTest(SimpleTestCase):
    """Test epsilon-greedy selection."""

    def setUp(self):
        """Set up a seeded stream."""
        self.rng = np.random.default_rng(5)

    def test_greedy_argmax(self):
        """Test epsilon 0 picks the argmax."""
        self.assertEqual(select_action([1, 3, 2, 0, -1], 0.0, self.rng), 1)

    def test_tie_lowest_index(self):
        """Test ties resolve to the lowest index."""
        self.assertEqual(select_action([2, 2, 0, 0, 0], 0.0, self.rng), 0)

    def test_uniform_exploration(self):
        """Test epsilon 1 draws each action with frequency near 1/5."""
        draws = [select_action(np.zeros(5), 1.0, self.rng) for _ in range(10000)]
        frequency = np.bincount(draws, minlength=5) / len(draws)
        self.assertTrue(np.all((frequency >= 0.18) & (frequency <= 0.22)), frequency)

    def test_nan_rejected(self):
        """Test NaN Q-values are rejected."""
        with self.assertRaises(InvalidQValuesError):
            select_action([0, float('nan'), 0, 0, 0], 0.0, self.rng)


class EpsilonScheduleTest(SimpleTestCase):
    """Test exploration schedule."""

    def test_linear_then_flat(self):
        """Test 1.0 -> 0.05 over 20% of 100 epochs, flat afterwards."""
        schedule = EpsilonSchedule.for_run(100)
        self.assertEqual(schedule.anneal_epochs, 20)
        self.assertEqual(schedule.value(0), 1.0)
        self.assertAlmostEqual(schedule.value(10), 0.525)
        self.assertEqual(schedule.value(20), 0.05)
        self.assertEqual(schedule.value(99), 0.05)

    def test_rejects_increasing(self):
        """Test start below end is rejected."""
        with self.assertRaises(ValueError):
            EpsilonSchedule(start=0.1, end=0.5)


class PolicySetTest(SimpleTestCase):
    """Test per-mode parameter sets."""

    def test_roles_per_mode(self):
        """Test communication modes build C-Net/A-Net, others a predator IQL net."""
        rng = np.random.default_rng(0)
        self.assertEqual(sorted(PolicySet.for_mode(CommMode.PRIVATE_COMM, rng).networks()),
                         ['anet', 'cnet', 'prey'])
        self.assertEqual(sorted(PolicySet.for_mode(CommMode.FULL_OBS, rng).networks()),
                         ['predator', 'prey'])
        public = PolicySet.for_mode(CommMode.PUBLIC_COMM, rng)
        self.assertEqual(public.prey.input_size, 12)

    def test_save_load_round_trip(self):
        """Test checkpoints reload bit-identical."""
        policies = PolicySet.for_mode(CommMode.PUBLIC_COMM, np.random.default_rng(3))
        with tempfile.TemporaryDirectory() as tmp:
            policies.save(tmp)
            restored = PolicySet.load(tmp, CommMode.PUBLIC_COMM)
        self.assertTrue(policies.parameters_equal(restored))

    def test_teammate_message_routing(self):
        """Test predator i acts on the teammate's message."""
        rng = np.random.default_rng(2)
        policies = PolicySet.for_mode(CommMode.PRIVATE_COMM, rng)
        obs = rng.uniform(-1, 1, size=(2, 12))
        messages = np.array([[0.0], [1.5]])
        q = policies.predator_q(obs, messages)
        np.testing.assert_array_equal(q[0], compute_q(policies.anet, obs[0], [1.5]))
        np.testing.assert_array_equal(q[1], compute_q(policies.anet, obs[1], [0.0]))
