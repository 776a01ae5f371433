"""
Two predators versus two prey in a bounded continuous arena.

Every predator is secretly assigned one prey per episode. Only its teammate
observes that assignment (except in full observability), so the predators
need to communicate to know whom to chase. Rewards are team-shared and
zero-sum: predators pay the summed distance to their targets, prey collect it.

All operations are pure functions over ``WorldState`` values; the numpy
Generator passed to ``reset`` is the only stateful input.
"""
from dataclasses import dataclass, field, fields

import numpy as np
from django.core.exceptions import ValidationError

from apps.env.exceptions import EpisodeFinishedError, UnexpectedMessageError
from apps.env.modes import CommMode, Team

PREDATORS = (0, 1)
PREY = (2, 3)
NUM_AGENTS = 4
AGENT_NAMES = ('predator0', 'predator1', 'prey0', 'prey1')

NUM_ACTIONS = 5
# no-op, +x, -x, +y, -y
ACTION_DIRECTIONS = np.array([
    [0.0, 0.0],
    [1.0, 0.0],
    [-1.0, 0.0],
    [0.0, 1.0],
    [0.0, -1.0],
])

PREDATOR_OBSERVATION_SIZE = 12
PREY_OBSERVATION_SIZE = 10


def is_predator(agent):
    return agent in PREDATORS


@dataclass(frozen=True)
class EnvConfig:
    """
    Physics and episode settings.

    Defaults follow the particle-environment family the game is built on;
    prey are faster than predators so evasion stays feasible.
    """
    arena_half_width: float = 1.0
    dt: float = 0.1
    velocity_damping: float = 0.75
    predator_accel: float = 3.0
    prey_accel: float = 4.0
    predator_max_speed: float = 1.0
    prey_max_speed: float = 1.3
    episode_length: int = 30
    mode: CommMode = CommMode.NO_COMM

    def __post_init__(self):
        try:
            object.__setattr__(self, 'mode', CommMode(self.mode))
        except ValueError:
            raise ValidationError(f"Unknown mode '{self.mode}'", code='invalid_mode')
        for f in fields(self):
            if f.name == 'mode':
                continue
            if getattr(self, f.name) <= 0:
                raise ValidationError(f"{f.name} must be strictly positive", code='invalid')
        if self.velocity_damping > 1:
            raise ValidationError("velocity_damping must lie in (0, 1]", code='invalid')
        if int(self.episode_length) != self.episode_length:
            raise ValidationError("episode_length must be an integer", code='invalid')

    @property
    def accelerations(self):
        return np.array([self.predator_accel] * 2 + [self.prey_accel] * 2)

    @property
    def max_speeds(self):
        return np.array([self.predator_max_speed] * 2 + [self.prey_max_speed] * 2)

    @property
    def step_reward_bound(self):
        """Most negative per-step predator reward: two arena diagonals."""
        return -2.0 * 2.0 * np.sqrt(2.0) * self.arena_half_width

    @property
    def episode_reward_bound(self):
        return self.episode_length * self.step_reward_bound


@dataclass
class WorldState:
    """
    Markov state of the game.

    Attributes:
        position: [4, 2] agent positions (predator0, predator1, prey0, prey1)
        velocity: [4, 2] agent velocities
        target: [2] prey index (0 or 1) assigned to each predator
        step: Steps taken so far in the episode
    """
    position: np.ndarray
    velocity: np.ndarray
    target: np.ndarray
    step: int = 0

    def copy(self):
        return WorldState(self.position.copy(), self.velocity.copy(), self.target.copy(), self.step)

    def target_position(self, predator):
        return self.position[PREY[int(self.target[predator])]]


@dataclass
class StepResult:
    next_state: WorldState
    predator_reward: float
    prey_reward: float
    done: bool = field(default=False)


def reset(config, rng):
    """
    Start an episode: uniform positions, zero velocities, independent
    uniform target per predator (both may pick the same prey).
    """
    w = config.arena_half_width
    return WorldState(
        position=rng.uniform(-w, w, size=(NUM_AGENTS, 2)),
        velocity=np.zeros((NUM_AGENTS, 2)),
        target=rng.integers(0, 2, size=len(PREDATORS)),
        step=0,
    )


def compute_rewards(state):
    """
    Team rewards for a state.

    Returns:
        (predator_reward, prey_reward) with prey_reward == -predator_reward
    """
    distance = sum(
        float(np.linalg.norm(state.position[predator] - state.target_position(predator)))
        for predator in PREDATORS
    )
    predator_reward = -distance
    return predator_reward, -predator_reward


def step(state, actions, config):
    """
    Advance the world by one tick.

    velocity <- velocity * damping + accel * direction * dt, clamped to the
    agent kind's max speed; position <- position + velocity * dt, clamped to
    the arena.

    Raises:
        EpisodeFinishedError: if the episode already reached its length.
        ValueError: if actions are not four indices in [0, 5).
    """
    if state.step >= config.episode_length:
        raise EpisodeFinishedError(
            f"Episode finished after {config.episode_length} steps; call reset first"
        )
    actions = np.asarray(actions, dtype=int)
    if actions.shape != (NUM_AGENTS,) or actions.min() < 0 or actions.max() >= NUM_ACTIONS:
        raise ValueError(f"Expected {NUM_AGENTS} actions in [0, {NUM_ACTIONS}), got {actions.tolist()}")

    directions = ACTION_DIRECTIONS[actions]
    velocity = state.velocity * config.velocity_damping + config.accelerations[:, None] * directions * config.dt
    speed = np.linalg.norm(velocity, axis=1)
    max_speed = config.max_speeds
    too_fast = speed > max_speed
    velocity[too_fast] *= (max_speed[too_fast] / speed[too_fast])[:, None]

    w = config.arena_half_width
    position = np.clip(state.position + velocity * config.dt, -w, w)

    next_state = WorldState(position, velocity, state.target.copy(), state.step + 1)
    predator_reward, prey_reward = compute_rewards(next_state)
    return StepResult(
        next_state=next_state,
        predator_reward=predator_reward,
        prey_reward=prey_reward,
        done=next_state.step == config.episode_length,
    )


def observation_size(mode, agent):
    """Observation length as a pure function of (mode, agent kind)."""
    if is_predator(agent):
        return PREDATOR_OBSERVATION_SIZE
    return PREY_OBSERVATION_SIZE + (len(PREDATORS) if CommMode(mode).prey_hear_messages else 0)


def _one_hot(index):
    vector = np.zeros(2)
    vector[int(index)] = 1.0
    return vector


def observe(state, agent, config, messages=None):
    """
    Build one agent's flat observation.

    Predator: [own pos, own vel, teammate rel pos, prey0 rel pos,
    prey1 rel pos, target one-hot] (12). The one-hot is the teammate's
    target, or the predator's own target under full observability.

    Prey: [own pos, own vel, other prey rel pos, predator0 rel pos,
    predator1 rel pos] (10); under public communication the two predator
    messages are appended (12). Omitted messages mean the channel has not
    carried anything yet and read as zeros.

    Raises:
        UnexpectedMessageError: if messages are given to an agent that
            cannot hear them in this mode.
    """
    mode = config.mode
    hears = not is_predator(agent) and mode.prey_hear_messages
    if messages is not None and not hears:
        raise UnexpectedMessageError(
            f"{AGENT_NAMES[agent]} cannot receive messages in mode {mode.value}"
        )

    own = state.position[agent]
    parts = [own, state.velocity[agent]]
    if is_predator(agent):
        teammate = PREDATORS[1 - agent]
        seen_target = state.target[agent] if mode == CommMode.FULL_OBS else state.target[teammate]
        parts += [state.position[teammate] - own]
        parts += [state.position[prey] - own for prey in PREY]
        parts += [_one_hot(seen_target)]
    else:
        other = PREY[1 - PREY.index(agent)]
        parts += [state.position[other] - own]
        parts += [state.position[predator] - own for predator in PREDATORS]
        if hears:
            channel = np.zeros(len(PREDATORS)) if messages is None else np.asarray(messages, dtype=np.float64)
            if channel.shape != (len(PREDATORS),):
                raise UnexpectedMessageError(f"Expected {len(PREDATORS)} message scalars, got shape {channel.shape}")
            parts += [channel]
    return np.concatenate(parts)


def observe_team(state, config, team, messages=None):
    """Stacked observations of one team, shape [2, observation size]."""
    if Team(team) == Team.PREDATORS:
        return np.stack([observe(state, agent, config) for agent in PREDATORS])
    return np.stack([observe(state, agent, config, messages) for agent in PREY])
