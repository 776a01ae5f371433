"""
Tests for diffnet app.
"""
import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from apps.diffnet.exceptions import NonFiniteGradientError, ShapeMismatchError
from apps.diffnet.gradcheck import finite_difference_check, run_gradcheck_suite
from apps.diffnet.network import (
    Activation, DenseLayer, DenseNet, GradientSet, backward, clone_parameters, forward,
)
from apps.diffnet.optimizer import AdamState, adam_step

RELU = Activation.RELU
IDENTITY = Activation.IDENTITY


def scalar_net(w, b, activation=IDENTITY):
    return DenseNet([DenseLayer([[w]], [b], activation)])


class ForwardTest(SimpleTestCase):
    """Test forward evaluation."""

    def test_affine_layer(self):
        """Test a single identity layer computes w*x + b."""
        net = scalar_net(2.0, 1.0)
        self.assertEqual(forward(net, [3.0]).output.tolist(), [7.0])

    def test_relu_clamps_negative(self):
        """Test ReLU clamps a negative pre-activation to zero."""
        net = scalar_net(1.0, 0.0, RELU)
        self.assertEqual(forward(net, [-2.0]).output.tolist(), [0.0])

    def test_two_layer_hand_computed(self):
        """Test a two-layer net against a hand matrix multiply."""
        net = DenseNet([
            DenseLayer([[1.0], [-1.0]], [0.0, 0.0], RELU),
            DenseLayer([[1.0, 1.0]], [0.5], IDENTITY),
        ])
        self.assertEqual(forward(net, [2.0]).output.tolist(), [2.5])

    def test_batch_matches_rows(self):
        """Test a batch forward equals row-by-row evaluation."""
        rng = np.random.default_rng(3)
        net = DenseNet.initialize([4, 8, 3], [RELU, IDENTITY], rng)
        batch = rng.normal(size=(5, 4))
        batched = forward(net, batch).output
        for row, expected in zip(batch, batched):
            np.testing.assert_array_equal(forward(net, row).output, expected)

    def test_trace_layer_count(self):
        """Test the trace has one entry per layer."""
        net = DenseNet.initialize([3, 4, 5, 2], [RELU, RELU, IDENTITY], np.random.default_rng(0))
        trace = forward(net, np.ones(3))
        self.assertEqual(len(trace.pre_activations), 3)
        self.assertEqual(len(trace.post_activations), 3)

    def test_dimension_mismatch_rejected(self):
        """Test a wrong input width is rejected."""
        net = scalar_net(1.0, 0.0)
        with self.assertRaises(ShapeMismatchError):
            forward(net, [1.0, 2.0])

    def test_layers_must_chain(self):
        """Test non-chaining layers are rejected."""
        with self.assertRaises(ShapeMismatchError):
            DenseNet([DenseLayer(np.ones((3, 2)), np.zeros(3)), DenseLayer(np.ones((1, 2)), np.zeros(1))])

    def test_deterministic(self):
        """Test identical inputs give bit-identical outputs."""
        net = DenseNet.initialize([6, 16, 4], [RELU, IDENTITY], np.random.default_rng(1))
        x = np.linspace(-1, 1, 6)
        self.assertEqual(net(x).tobytes(), net(x).tobytes())


class BackwardTest(SimpleTestCase):
    """Test reverse-mode gradients."""

    def test_linear_layer_gradients(self):
        """Test dL/dw, dL/db and input gradient of y = w*x + b."""
        net = scalar_net(1.5, 0.2)
        grads = backward(net, forward(net, [3.0]), [1.0])
        self.assertEqual(grads.weight_gradients[0].tolist(), [[3.0]])
        self.assertEqual(grads.bias_gradients[0].tolist(), [1.0])
        self.assertEqual(grads.input_gradient.tolist(), [1.5])

    def test_dead_relu_has_zero_gradient(self):
        """Test a negative pre-activation blocks the gradient."""
        net = scalar_net(1.0, -1.0, RELU)
        grads = backward(net, forward(net, [0.5]), [1.0])
        self.assertEqual(grads.weight_gradients[0].tolist(), [[0.0]])
        self.assertEqual(grads.bias_gradients[0].tolist(), [0.0])
        self.assertEqual(grads.input_gradient.tolist(), [0.0])

    def test_relu_subgradient_at_zero(self):
        """Test the ReLU subgradient at exactly zero is zero."""
        net = scalar_net(1.0, 0.0, RELU)
        grads = backward(net, forward(net, [0.0]), [1.0])
        self.assertEqual(grads.bias_gradients[0].tolist(), [0.0])

    def test_random_two_layer_matches_finite_differences(self):
        """Test every component of a random 2-layer net against central differences."""
        rng = np.random.default_rng(11)
        net = DenseNet.initialize([5, 7, 3], [RELU, IDENTITY], rng)
        report = finite_difference_check(net, rng.uniform(-1, 1, 5), h=1e-5, tol=1e-4, rng=rng)
        self.assertTrue(report.passed, report)
        self.assertGreater(report.checked_components, 0)

    def test_batch_gradients_accumulate(self):
        """Test batch parameter gradients equal the sum of per-row gradients."""
        rng = np.random.default_rng(5)
        net = DenseNet.initialize([3, 6, 2], [RELU, IDENTITY], rng)
        batch = rng.normal(size=(4, 3))
        upstream = rng.normal(size=(4, 2))
        total = backward(net, forward(net, batch), upstream)
        rows = backward(net, forward(net, batch[0]), upstream[0])
        for x, g in zip(batch[1:], upstream[1:]):
            rows.accumulate(backward(net, forward(net, x), g))
        for a, b in zip(total.arrays(), rows.arrays()):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
        self.assertEqual(total.input_gradient.shape, (4, 3))

    def test_output_gradient_shape_rejected(self):
        """Test a wrongly shaped output gradient is rejected."""
        net = scalar_net(1.0, 0.0)
        with self.assertRaises(ShapeMismatchError):
            backward(net, forward(net, [1.0]), [1.0, 2.0])

    def test_message_net_input_gradient_is_weight_transpose(self):
        """Test a positive single ReLU layer passes W^T g back to its input."""
        rng = np.random.default_rng(2)
        weights = rng.uniform(0.1, 0.5, size=(1, 12))
        net = DenseNet([DenseLayer(weights, [0.5], RELU)])
        obs = rng.uniform(0.0, 1.0, size=12)
        grads = backward(net, forward(net, obs), [0.7])
        np.testing.assert_allclose(grads.input_gradient, weights.T @ np.array([0.7]))


class AdamTest(SimpleTestCase):
    """Test the Adam optimizer."""

    def setUp(self):
        """Set up a scalar parameter at zero."""
        self.net = scalar_net(0.0, 0.0)
        self.state = AdamState.for_network(self.net, lr=0.0005)

    def grads(self, g):
        return GradientSet([np.array([[g]])], [np.array([0.0])], np.zeros(1))

    def test_first_step_moves_by_lr(self):
        """Test the bias-corrected first step moves by about lr * sign(g)."""
        adam_step(self.net, self.grads(1.0), self.state)
        self.assertAlmostEqual(self.net.layers[0].weights[0, 0], -0.0005, places=10)
        self.assertEqual(self.state.step_count, 1)

    def test_zero_gradient_leaves_parameters(self):
        """Test a zero gradient with fresh moments changes nothing."""
        adam_step(self.net, self.grads(0.0), self.state)
        self.assertEqual(self.net.layers[0].weights[0, 0], 0.0)

    def test_repeated_positive_gradient_decreases(self):
        """Test two positive gradients decrease the parameter on both steps."""
        adam_step(self.net, self.grads(1.0), self.state)
        first = self.net.layers[0].weights[0, 0]
        adam_step(self.net, self.grads(1.0), self.state)
        second = self.net.layers[0].weights[0, 0]
        self.assertLess(first, 0.0)
        self.assertLess(second, first)
        self.assertEqual(self.state.step_count, 2)

    def test_second_moments_non_negative(self):
        """Test second moments stay non-negative for mixed-sign gradients."""
        for g in (1.0, -3.0, 0.5):
            adam_step(self.net, self.grads(g), self.state)
        self.assertTrue(all(np.all(v >= 0) for v in self.state.second_moments))

    def test_non_finite_gradient_rejected(self):
        """Test a NaN gradient aborts the update and leaves state untouched."""
        with self.assertRaises(NonFiniteGradientError):
            adam_step(self.net, self.grads(float('nan')), self.state)
        self.assertEqual(self.state.step_count, 0)
        self.assertEqual(self.net.layers[0].weights[0, 0], 0.0)

    def test_state_round_trip(self):
        """Test optimizer state survives a dict round trip exactly."""
        adam_step(self.net, self.grads(0.3), self.state)
        restored = AdamState.from_dict(json.loads(json.dumps(self.state.to_dict())))
        self.assertEqual(restored.step_count, 1)
        for a, b in zip(restored.first_moments + restored.second_moments,
                        self.state.first_moments + self.state.second_moments):
            np.testing.assert_array_equal(a, b)


class CloneTest(SimpleTestCase):
    """Test parameter cloning."""

    def setUp(self):
        """Set up a random network."""
        self.rng = np.random.default_rng(8)
        self.net = DenseNet.initialize([4, 6, 2], [RELU, IDENTITY], self.rng)

    def test_clone_isolated_from_updates(self):
        """Test updating the source leaves the clone's output unchanged."""
        clone = clone_parameters(self.net)
        x = self.rng.normal(size=4)
        before = clone(x).copy()
        self.net.layers[0].weights += 1.0
        np.testing.assert_array_equal(clone(x), before)

    def test_clone_of_clone_equal(self):
        """Test cloning twice reproduces the original parameters exactly."""
        self.assertTrue(clone_parameters(clone_parameters(self.net)).parameters_equal(self.net))

    def test_clone_output_equal(self):
        """Test source and clone agree on random inputs."""
        clone = clone_parameters(self.net)
        x = self.rng.normal(size=(3, 4))
        np.testing.assert_array_equal(self.net(x), clone(x))


class CheckpointTest(SimpleTestCase):
    """Test the JSON checkpoint format."""

    def test_round_trip_exact(self):
        """Test save/load reproduces parameters bit for bit."""
        net = DenseNet.initialize([13, 256, 512, 5], [RELU, RELU, IDENTITY], np.random.default_rng(4))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'anet.json'
            net.save(path)
            data = json.loads(path.read_text())
            restored = DenseNet.load(path)
        self.assertEqual(sorted(data), ['0', '1', '2'])
        self.assertEqual(data['0']['activation'], 'relu')
        self.assertEqual(len(data['1']['weights']), 512)
        self.assertTrue(restored.parameters_equal(net))


class FiniteDifferenceCheckTest(SimpleTestCase):
    """Test the finite-difference harness."""

    def test_linear_net_passes_tightly(self):
        """Test a linear net passes with tolerance 1e-6."""
        rng = np.random.default_rng(0)
        net = DenseNet.initialize([3, 2], [IDENTITY], rng)
        self.assertTrue(finite_difference_check(net, rng.normal(size=3), h=1e-5, tol=1e-6))

    def test_action_net_shape_passes(self):
        """Test an in->256->512->out net passes at h=1e-5, tol=1e-4 (sampled)."""
        reports = run_gradcheck_suite(
            {'anet': ([13, 256, 512, 5], [RELU, RELU, IDENTITY])},
            seed=2, max_components_per_layer=200,
        )
        self.assertTrue(reports['anet'].passed, reports['anet'])

    def test_corrupted_gradient_fails(self):
        """Test doubling one gradient component is detected."""
        rng = np.random.default_rng(6)
        net = DenseNet.initialize([4, 5, 2], [RELU, IDENTITY], rng)
        x = rng.uniform(-1, 1, 4)
        projection = rng.normal(size=2)
        grads = backward(net, forward(net, x), projection)
        row, col = np.unravel_index(np.argmax(np.abs(grads.weight_gradients[1])), grads.weight_gradients[1].shape)
        grads.weight_gradients[1][row, col] *= 2.0
        report = finite_difference_check(net, x, projection=projection, gradients=grads)
        self.assertFalse(report.passed)
        self.assertIn('layer[1].weights', report.worst_component)

    def test_rejects_non_positive_step(self):
        """Test h must be positive."""
        with self.assertRaises(ValueError):
            finite_difference_check(scalar_net(1.0, 0.0), [1.0], h=0.0)
