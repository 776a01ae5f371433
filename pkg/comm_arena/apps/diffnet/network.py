"""
Dense feed-forward networks with exact reverse-mode gradients.

Inputs may be a single vector ``[in]`` or a batch ``[batch, in]``. Parameter
gradients are summed over the batch; input gradients stay per row, which is
what lets a receiving agent push gradient back into the sender's message.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from django.db import models

from apps.diffnet.exceptions import NonFiniteParameterError, ShapeMismatchError

logger = logging.getLogger(__name__)


class Activation(models.TextChoices):
    """Element-wise activation applied after a layer's affine map."""
    RELU = 'relu', 'ReLU'
    IDENTITY = 'identity', 'Identity'


@dataclass
class DenseLayer:
    """
    One affine layer followed by an activation.

    Attributes:
        weights: Weight matrix, shape [out, in]
        bias: Bias vector, shape [out]
        activation: Activation applied to ``weights @ x + bias``
    """
    weights: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.float64, ndmin=2)
        self.bias = np.array(self.bias, dtype=np.float64, ndmin=1)
        self.activation = Activation(self.activation)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeMismatchError(
                f"Bias of shape {self.bias.shape} does not fit weights of shape {self.weights.shape}"
            )
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise NonFiniteParameterError("Layer parameters must be finite reals.")

    @property
    def in_features(self):
        return self.weights.shape[1]

    @property
    def out_features(self):
        return self.weights.shape[0]


@dataclass
class ForwardTrace:
    """
    Everything ``backward`` needs from a forward pass.

    ``inputs`` is always stored as a batch; ``batched`` remembers whether the
    caller passed one.
    """
    inputs: np.ndarray
    pre_activations: list = field(default_factory=list)
    post_activations: list = field(default_factory=list)
    batched: bool = True

    @property
    def output(self):
        out = self.post_activations[-1]
        return out if self.batched else out[0]


@dataclass
class GradientSet:
    """Parameter and input gradients; shapes mirror the owning network."""
    weight_gradients: list
    bias_gradients: list
    input_gradient: np.ndarray

    def arrays(self):
        """Gradients in the same order as ``DenseNet.parameters()``."""
        result = []
        for dw, db in zip(self.weight_gradients, self.bias_gradients):
            result.extend([dw, db])
        return result

    def accumulate(self, other):
        """Add another gradient set (same network) into this one."""
        for mine, theirs in zip(self.arrays(), other.arrays()):
            if mine.shape != theirs.shape:
                raise ShapeMismatchError("Cannot accumulate gradients of different networks.")
            mine += theirs
        return self

    def is_finite(self):
        return all(np.all(np.isfinite(g)) for g in self.arrays())


class DenseNet:
    """
    Ordered stack of dense layers.

    Consecutive layers must chain: ``out`` of layer k equals ``in`` of
    layer k+1.
    """

    def __init__(self, layers):
        self.layers = list(layers)
        if not self.layers:
            raise ShapeMismatchError("A network needs at least one layer.")
        for index, (lower, upper) in enumerate(zip(self.layers, self.layers[1:])):
            if lower.out_features != upper.in_features:
                raise ShapeMismatchError(
                    f"Layer {index} outputs {lower.out_features} values but layer "
                    f"{index + 1} expects {upper.in_features}"
                )

    @classmethod
    def initialize(cls, sizes, activations, rng):
        """
        Build a network with uniform fan-in initialisation and zero biases.

        Args:
            sizes: Layer widths including input and output, e.g. [13, 256, 512, 5]
            activations: One activation per layer (len(sizes) - 1 entries)
            rng: numpy Generator owning the run's seed stream
        """
        if len(activations) != len(sizes) - 1:
            raise ShapeMismatchError(
                f"{len(sizes) - 1} layers need {len(sizes) - 1} activations, got {len(activations)}"
            )
        layers = []
        for fan_in, fan_out, activation in zip(sizes, sizes[1:], activations):
            limit = 1.0 / np.sqrt(fan_in)
            layers.append(DenseLayer(
                weights=rng.uniform(-limit, limit, size=(fan_out, fan_in)),
                bias=np.zeros(fan_out),
                activation=activation,
            ))
        return cls(layers)

    @property
    def input_size(self):
        return self.layers[0].in_features

    @property
    def output_size(self):
        return self.layers[-1].out_features

    @property
    def sizes(self):
        return [self.input_size] + [layer.out_features for layer in self.layers]

    def parameters(self):
        """Parameter arrays (weights, bias per layer). Mutating them mutates the net."""
        result = []
        for layer in self.layers:
            result.extend([layer.weights, layer.bias])
        return result

    def parameters_equal(self, other):
        if self.sizes != other.sizes:
            return False
        if any(a.activation != b.activation for a, b in zip(self.layers, other.layers)):
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.parameters(), other.parameters()))

    def __call__(self, inputs):
        return forward(self, inputs).output

    def __repr__(self):
        widths = ' -> '.join(str(size) for size in self.sizes)
        return f"DenseNet({widths})"

    # Checkpoints

    def to_checkpoint(self):
        """Flat JSON-ready mapping ``{layer_index: {weights, bias, activation}}``."""
        return {
            str(index): {
                'weights': layer.weights.tolist(),
                'bias': layer.bias.tolist(),
                'activation': layer.activation.value,
            }
            for index, layer in enumerate(self.layers)
        }

    @classmethod
    def from_checkpoint(cls, data):
        indices = sorted(data, key=int)
        if [int(i) for i in indices] != list(range(len(indices))):
            raise ShapeMismatchError(f"Checkpoint layer indices are not contiguous: {indices}")
        return cls([
            DenseLayer(
                weights=data[i]['weights'],
                bias=data[i]['bias'],
                activation=data[i]['activation'],
            )
            for i in indices
        ])

    def save(self, path):
        path = Path(path)
        path.write_text(json.dumps(self.to_checkpoint()))
        logger.debug(f"Saved {self!r} to {path}")

    @classmethod
    def load(cls, path):
        return cls.from_checkpoint(json.loads(Path(path).read_text()))


def _activate(activation, z):
    if activation == Activation.RELU:
        return np.maximum(z, 0.0)
    return z


def forward(net, inputs):
    """
    Evaluate ``net`` on a vector or batch of vectors.

    Raises:
        ShapeMismatchError: if the input width differs from the first layer's.
    """
    x = np.asarray(inputs, dtype=np.float64)
    batched = x.ndim == 2
    if x.ndim == 1:
        x = x[np.newaxis, :]
    if x.ndim != 2 or x.shape[1] != net.input_size:
        raise ShapeMismatchError(
            f"{net!r} expects inputs of width {net.input_size}, got shape {np.shape(inputs)}"
        )
    trace = ForwardTrace(inputs=x, batched=batched)
    activations = x
    for layer in net.layers:
        z = activations @ layer.weights.T + layer.bias
        activations = _activate(layer.activation, z)
        trace.pre_activations.append(z)
        trace.post_activations.append(activations)
    return trace


def backward(net, trace, output_gradient):
    """
    Reverse-mode gradients of ``sum(output * output_gradient)``.

    The ReLU subgradient at a pre-activation of exactly 0 is 0.

    Raises:
        ShapeMismatchError: if ``output_gradient`` or ``trace`` does not fit ``net``.
    """
    if len(trace.pre_activations) != len(net.layers):
        raise ShapeMismatchError("Trace was not produced by this network.")
    grad = np.asarray(output_gradient, dtype=np.float64)
    if not trace.batched:
        grad = grad[np.newaxis, ...] if grad.ndim == 1 else grad
    expected = trace.post_activations[-1].shape
    if grad.shape != expected:
        raise ShapeMismatchError(f"Output gradient of shape {np.shape(output_gradient)} does not match output {expected}")

    weight_gradients = [None] * len(net.layers)
    bias_gradients = [None] * len(net.layers)
    for index in reversed(range(len(net.layers))):
        layer = net.layers[index]
        if layer.activation == Activation.RELU:
            grad = grad * (trace.pre_activations[index] > 0.0)
        layer_input = trace.post_activations[index - 1] if index > 0 else trace.inputs
        weight_gradients[index] = grad.T @ layer_input
        bias_gradients[index] = grad.sum(axis=0)
        grad = grad @ layer.weights

    input_gradient = grad if trace.batched else grad[0]
    return GradientSet(weight_gradients, bias_gradients, input_gradient)


def clone_parameters(source):
    """Deep copy of a network; updates to either copy never reach the other."""
    return DenseNet([
        DenseLayer(layer.weights.copy(), layer.bias.copy(), layer.activation)
        for layer in source.layers
    ])
