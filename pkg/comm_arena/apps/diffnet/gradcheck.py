"""
Central finite-difference verification of ``backward``.

The scalar objective is ``sum(forward(net, x) * projection)``, so the
analytic gradient is ``backward(net, trace, projection)``.
"""
import logging
from dataclasses import dataclass

import numpy as np

from apps.diffnet.network import Activation, DenseNet, backward, forward

logger = logging.getLogger(__name__)

# floor of the relative-error denominator max(|analytic|, |numeric|, floor)
DENOMINATOR_FLOOR = 1e-5


@dataclass
class GradientCheckReport:
    """Outcome of one finite-difference comparison."""
    passed: bool
    max_relative_error: float
    worst_component: str
    checked_components: int
    skipped_components: int

    def __bool__(self):
        return self.passed


def _objective(net, x, projection):
    trace = forward(net, x)
    value = float(np.sum(trace.output * projection))
    pattern = [z > 0.0 for z, layer in zip(trace.pre_activations, net.layers)
               if layer.activation == Activation.RELU]
    return value, pattern


def _same_pattern(a, b):
    return all(np.array_equal(p, q) for p, q in zip(a, b))


def _component_indices(size, limit, rng):
    if limit is None or size <= limit:
        return np.arange(size)
    return np.sort(rng.choice(size, size=limit, replace=False))


def finite_difference_check(net, inputs, h=1e-5, tol=1e-4, *, projection=None,
                            gradients=None, max_components_per_layer=None, rng=None):
    """
    Compare analytic gradients with central differences.

    Args:
        net: Network under test (restored exactly after every perturbation)
        inputs: Single input vector
        h: Finite-difference step
        tol: Maximum allowed relative error
        projection: Output weighting; a seeded normal vector if omitted
        gradients: GradientSet to verify instead of computing one
        max_components_per_layer: Sample at most this many components of each
            parameter array; None checks every component
        rng: Generator used for the projection and the sampling

    Components whose perturbation flips a ReLU on or off straddle the kink
    and are skipped.
    """
    if h <= 0 or tol <= 0:
        raise ValueError("Finite-difference step and tolerance must be positive.")
    rng = rng if rng is not None else np.random.default_rng(0)
    x = np.array(inputs, dtype=np.float64)
    if projection is None:
        projection = rng.standard_normal(net.output_size)
    projection = np.asarray(projection, dtype=np.float64)

    if gradients is None:
        gradients = backward(net, forward(net, x), projection)
    _, base_pattern = _objective(net, x, projection)

    worst_error, worst_name = 0.0, ''
    checked = skipped = 0

    def compare(name, analytic, target, flat_index):
        nonlocal worst_error, worst_name, checked, skipped
        original = target.flat[flat_index]
        target.flat[flat_index] = original + h
        plus, plus_pattern = _objective(net, x, projection)
        target.flat[flat_index] = original - h
        minus, minus_pattern = _objective(net, x, projection)
        target.flat[flat_index] = original
        if not (_same_pattern(plus_pattern, base_pattern) and _same_pattern(minus_pattern, base_pattern)):
            skipped += 1
            return
        numeric = (plus - minus) / (2.0 * h)
        error = abs(analytic - numeric) / max(abs(analytic), abs(numeric), DENOMINATOR_FLOOR)
        checked += 1
        if error > worst_error:
            worst_error, worst_name = error, name
        if error > tol:
            logger.warning(f"Gradient mismatch at {name}: analytic={analytic:.6g} numeric={numeric:.6g}")

    for layer_index, layer in enumerate(net.layers):
        named = [('weights', layer.weights, gradients.weight_gradients[layer_index]),
                 ('bias', layer.bias, gradients.bias_gradients[layer_index])]
        for label, param, grad in named:
            for flat_index in _component_indices(param.size, max_components_per_layer, rng):
                position = np.unravel_index(flat_index, param.shape)
                compare(f"layer[{layer_index}].{label}{list(position)}",
                        float(grad.flat[flat_index]), param, flat_index)

    for flat_index in range(x.size):
        compare(f"input[{flat_index}]", float(gradients.input_gradient.flat[flat_index]), x, flat_index)

    return GradientCheckReport(
        passed=worst_error <= tol,
        max_relative_error=worst_error,
        worst_component=worst_name,
        checked_components=checked,
        skipped_components=skipped,
    )


def run_gradcheck_suite(shapes, seed=0, h=1e-5, tol=1e-4, max_components_per_layer=None):
    """
    Check freshly initialised networks of the given shapes.

    Args:
        shapes: Mapping of name -> (sizes, activations)

    Returns:
        Mapping of name -> GradientCheckReport
    """
    rng = np.random.default_rng(seed)
    reports = {}
    for name, (sizes, activations) in shapes.items():
        net = DenseNet.initialize(sizes, activations, rng)
        # non-zero biases
        for layer in net.layers:
            layer.bias[:] = rng.uniform(-0.1, 0.1, size=layer.bias.shape)
        x = rng.uniform(-1.0, 1.0, size=net.input_size)
        reports[name] = finite_difference_check(
            net, x, h=h, tol=tol, max_components_per_layer=max_components_per_layer, rng=rng,
        )
        logger.info(
            f"gradcheck {name}: passed={reports[name].passed} "
            f"max_rel_err={reports[name].max_relative_error:.3g} "
            f"checked={reports[name].checked_components} skipped={reports[name].skipped_components}"
        )
    return reports
