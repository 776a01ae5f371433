"""
Adam optimizer over DenseNet parameters.
"""
from dataclasses import dataclass, field

import numpy as np

from apps.diffnet.exceptions import NonFiniteGradientError, ShapeMismatchError

DEFAULT_LEARNING_RATE = 0.0005


@dataclass
class AdamState:
    """
    First/second moment estimates for every parameter array of one network.

    Moments are stored in ``DenseNet.parameters()`` order.
    """
    first_moments: list = field(default_factory=list)
    second_moments: list = field(default_factory=list)
    step_count: int = 0
    lr: float = DEFAULT_LEARNING_RATE
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_network(cls, net, lr=DEFAULT_LEARNING_RATE, beta1=0.9, beta2=0.999, eps=1e-8):
        params = net.parameters()
        return cls(
            first_moments=[np.zeros_like(p) for p in params],
            second_moments=[np.zeros_like(p) for p in params],
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )

    def to_dict(self):
        return {
            'first_moments': [m.tolist() for m in self.first_moments],
            'second_moments': [v.tolist() for v in self.second_moments],
            'step_count': self.step_count,
            'lr': self.lr,
            'beta1': self.beta1,
            'beta2': self.beta2,
            'eps': self.eps,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            first_moments=[np.array(m, dtype=np.float64) for m in data['first_moments']],
            second_moments=[np.array(v, dtype=np.float64) for v in data['second_moments']],
            step_count=int(data['step_count']),
            lr=float(data['lr']),
            beta1=float(data['beta1']),
            beta2=float(data['beta2']),
            eps=float(data['eps']),
        )


def adam_step(net, grads, state):
    """
    Apply one bias-corrected Adam update in place.

    Returns:
        (net, state), both updated

    Raises:
        ShapeMismatchError: if gradients or moments do not mirror the network.
        NonFiniteGradientError: if any gradient component is NaN or infinite;
            nothing is updated in that case.
    """
    params = net.parameters()
    gradients = grads.arrays()
    if len(gradients) != len(params) or len(state.first_moments) != len(params):
        raise ShapeMismatchError(
            f"Expected {len(params)} gradient/moment arrays, got "
            f"{len(gradients)} gradients and {len(state.first_moments)} moments"
        )
    for index, (p, g, m) in enumerate(zip(params, gradients, state.first_moments)):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeMismatchError(
                f"Parameter array {index} has shape {p.shape}, gradient {g.shape}, moment {m.shape}"
            )
        if not np.all(np.isfinite(g)):
            bad = np.argwhere(~np.isfinite(g))[0].tolist()
            raise NonFiniteGradientError(
                f"Non-finite gradient in parameter array {index} at {bad}; refusing to update"
            )

    state.step_count += 1
    bc1 = 1.0 - state.beta1 ** state.step_count
    bc2 = 1.0 - state.beta2 ** state.step_count
    step_size = state.lr / bc1

    for p, g, m, v in zip(params, gradients, state.first_moments, state.second_moments):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= step_size * m / (np.sqrt(v / bc2) + state.eps)

    return net, state
