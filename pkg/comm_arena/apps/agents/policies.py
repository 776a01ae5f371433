"""
Predator and prey policies.

Communicating predators split their policy in two: a C-Net (no hidden
layers, ReLU output) turns an observation into a one-dimensional message,
and an A-Net maps observation + teammate message to Q-values. Prey, and
predators that do not communicate, use a single IQL network with the same
hidden architecture as the A-Net.

Each team owns exactly one parameter set per role; both members evaluate it.
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from apps.agents.exceptions import InvalidQValuesError
from apps.diffnet.exceptions import ShapeMismatchError
from apps.diffnet.network import Activation, DenseNet, clone_parameters, forward
from apps.env.modes import CommMode
from apps.env.world import NUM_ACTIONS, PREDATOR_OBSERVATION_SIZE, PREY, observation_size

logger = logging.getLogger(__name__)

MESSAGE_SIZE = 1
HIDDEN_SIZES = (256, 512)

CHECKPOINT_FILES = {
    'cnet': 'cnet.json',
    'anet': 'anet.json',
    'predator': 'predator_iql.json',
    'prey': 'prey.json',
}


def build_cnet(rng):
    return DenseNet.initialize(
        [PREDATOR_OBSERVATION_SIZE, MESSAGE_SIZE], [Activation.RELU], rng,
    )


Q_ACTIVATIONS = [Activation.RELU, Activation.RELU, Activation.IDENTITY]


def _q_sizes(input_size):
    return [input_size, *HIDDEN_SIZES, NUM_ACTIONS]


def build_q_net(input_size, rng):
    """input -> 256 -> 512 -> 5 Q-values."""
    return DenseNet.initialize(_q_sizes(input_size), Q_ACTIVATIONS, rng)


def build_anet(rng):
    return build_q_net(PREDATOR_OBSERVATION_SIZE + MESSAGE_SIZE, rng)


def build_iql_net(input_size, rng):
    return build_q_net(input_size, rng)


def network_shapes():
    """Name -> (sizes, activations) of every network a run can train."""
    return {
        'cnet': ([PREDATOR_OBSERVATION_SIZE, MESSAGE_SIZE], [Activation.RELU]),
        'anet': (_q_sizes(PREDATOR_OBSERVATION_SIZE + MESSAGE_SIZE), Q_ACTIVATIONS),
        'predator_iql': (_q_sizes(PREDATOR_OBSERVATION_SIZE), Q_ACTIVATIONS),
        'prey_iql': (_q_sizes(observation_size(CommMode.NO_COMM, PREY[0])), Q_ACTIVATIONS),
        'prey_iql_public': (_q_sizes(observation_size(CommMode.PUBLIC_COMM, PREY[0])), Q_ACTIVATIONS),
    }


def _check_width(values, width, what):
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1:] != (width,):
        raise ShapeMismatchError(f"{what} must have width {width}, got shape {values.shape}")
    return values


def compute_message(cnet, obs, with_trace=False):
    """
    Message ``ReLU(W obs + b)`` for one predator observation (or a batch).

    Returns:
        message array of shape [1] (or [batch, 1]); with ``with_trace`` the
        ForwardTrace is returned too so gradients can reach W, b and obs.
    """
    obs = _check_width(obs, PREDATOR_OBSERVATION_SIZE, 'Predator observation')
    trace = forward(cnet, obs)
    return (trace.output, trace) if with_trace else trace.output


def compute_q(anet, obs, message, with_trace=False):
    """Q-values from an observation and the teammate's message."""
    obs = _check_width(obs, PREDATOR_OBSERVATION_SIZE, 'Predator observation')
    message = _check_width(message, MESSAGE_SIZE, 'Message')
    if obs.shape[:-1] != message.shape[:-1]:
        raise ShapeMismatchError(f"Observation batch {obs.shape} and message batch {message.shape} differ")
    trace = forward(anet, np.concatenate([obs, message], axis=-1))
    return (trace.output, trace) if with_trace else trace.output


def select_action(q, epsilon, rng):
    """
    Epsilon-greedy choice over the 5 actions.

    With probability ``epsilon`` a uniform action, otherwise the argmax with
    ties going to the lowest index.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (NUM_ACTIONS,):
        raise ShapeMismatchError(f"Expected {NUM_ACTIONS} Q-values, got shape {q.shape}")
    if np.any(np.isnan(q)):
        raise InvalidQValuesError(f"Q-values contain NaN: {q.tolist()}")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(NUM_ACTIONS))
    return int(np.argmax(q))


@dataclass
class EpsilonSchedule:
    """Linear decay from ``start`` to ``end`` over ``anneal_epochs``, then flat."""
    start: float = 1.0
    end: float = 0.05
    anneal_epochs: int = 1

    def __post_init__(self):
        if not (self.start >= self.end >= 0.0) or self.start > 1.0:
            raise ValueError(f"Need 1 >= start >= end >= 0, got start={self.start} end={self.end}")
        if self.anneal_epochs < 0:
            raise ValueError("anneal_epochs must be non-negative")

    @classmethod
    def for_run(cls, epochs, start=1.0, end=0.05, anneal_fraction=0.2):
        return cls(start=start, end=end, anneal_epochs=int(round(anneal_fraction * epochs)))

    def value(self, epoch):
        if self.anneal_epochs == 0 or epoch >= self.anneal_epochs:
            return self.end
        return self.start + (self.end - self.start) * (epoch / self.anneal_epochs)


@dataclass
class PolicySet:
    """
    All parameter sets of one run.

    Attributes:
        mode: Experiment configuration
        prey: IQL network shared by both prey
        cnet: Message network shared by both predators (communication modes)
        anet: Action network shared by both predators (communication modes)
        predator: IQL network shared by both predators (no_comm / full_obs)
    """
    mode: CommMode
    prey: DenseNet
    cnet: DenseNet = None
    anet: DenseNet = None
    predator: DenseNet = None

    @classmethod
    def for_mode(cls, mode, rng):
        mode = CommMode(mode)
        if mode.communicates:
            cnet, anet, predator = build_cnet(rng), build_anet(rng), None
        else:
            cnet, anet = None, None
            predator = build_iql_net(PREDATOR_OBSERVATION_SIZE, rng)
        prey = build_iql_net(observation_size(mode, PREY[0]), rng)
        return cls(mode=mode, prey=prey, cnet=cnet, anet=anet, predator=predator)

    def networks(self):
        """Role -> network for every role present in this mode."""
        roles = ('cnet', 'anet', 'predator', 'prey')
        return {role: getattr(self, role) for role in roles if getattr(self, role) is not None}

    def clone(self):
        return PolicySet(self.mode, **{role: clone_parameters(net) for role, net in self.networks().items()})

    def parameters_equal(self, other):
        mine, theirs = self.networks(), other.networks()
        return mine.keys() == theirs.keys() and all(mine[r].parameters_equal(theirs[r]) for r in mine)

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for role, net in self.networks().items():
            net.save(directory / CHECKPOINT_FILES[role])
        logger.debug(f"Saved {self.mode.value} checkpoints to {directory}")

    @classmethod
    def load(cls, directory, mode):
        directory = Path(directory)
        mode = CommMode(mode)
        nets = {
            role: DenseNet.load(directory / filename)
            for role, filename in CHECKPOINT_FILES.items()
            if (directory / filename).exists()
        }
        return cls(mode=mode, **nets)

    def predator_q(self, predator_obs, messages=None):
        """
        Q-values for both predators, shape [2, 5].

        In communication modes predator i consumes the message of its
        teammate, i.e. ``messages[1 - i]``.
        """
        if self.mode.communicates:
            return compute_q(self.anet, predator_obs, messages[::-1])
        return self.predator(predator_obs)

    def messages(self, predator_obs):
        """Both predators' messages, shape [2, 1]; None when they do not talk."""
        if not self.mode.communicates:
            return None
        return compute_message(self.cnet, predator_obs)
