"""
Joint transition records and minibatch stacking.

Messages are kept for inspection only; updates recompute them from the
stored teammate observations so the gradient path into the C-Net exists.
"""
from dataclasses import dataclass

import numpy as np


@dataclass
class Transition:
    """
    One timestep of the whole game.

    Attributes:
        predator_obs: [2, 12] predator observations at t
        prey_obs: [2, P] prey observations at t (P = 12 when prey hear messages)
        messages: [2] messages sent at t, or None when predators do not talk
        actions: [4] actions of predator0, predator1, prey0, prey1
        predator_reward: Team reward after the step
        prey_reward: Team reward after the step
        next_predator_obs: [2, 12] observations at t+1
        next_prey_obs: [2, P] observations at t+1
        done: Whether t+1 ends the episode
        epoch: Epoch the transition was collected in
    """
    predator_obs: np.ndarray
    prey_obs: np.ndarray
    messages: np.ndarray
    actions: np.ndarray
    predator_reward: float
    prey_reward: float
    next_predator_obs: np.ndarray
    next_prey_obs: np.ndarray
    done: bool
    epoch: int = 0


@dataclass
class TransitionBatch:
    """Transitions stacked along a leading batch axis."""
    predator_obs: np.ndarray
    prey_obs: np.ndarray
    actions: np.ndarray
    predator_reward: np.ndarray
    prey_reward: np.ndarray
    next_predator_obs: np.ndarray
    next_prey_obs: np.ndarray
    done: np.ndarray

    @classmethod
    def stack(cls, transitions):
        return cls(
            predator_obs=np.stack([t.predator_obs for t in transitions]),
            prey_obs=np.stack([t.prey_obs for t in transitions]),
            actions=np.stack([t.actions for t in transitions]).astype(int),
            predator_reward=np.array([t.predator_reward for t in transitions], dtype=np.float64),
            prey_reward=np.array([t.prey_reward for t in transitions], dtype=np.float64),
            next_predator_obs=np.stack([t.next_predator_obs for t in transitions]),
            next_prey_obs=np.stack([t.next_prey_obs for t in transitions]),
            done=np.array([t.done for t in transitions], dtype=bool),
        )

    def __len__(self):
        return len(self.done)


def minibatch_indices(order, batch_size):
    """
    Split a permutation into consecutive minibatches.

    The final short batch is kept, so every transition trains once.
    """
    return [order[start:start + batch_size] for start in range(0, len(order), batch_size)]


def team_rows(pair):
    """
    Flatten [N, 2, ...] member data into [2N, ...] rows: member 0 first.
    """
    return np.concatenate([pair[:, 0], pair[:, 1]])


def teammate_rows(pair):
    """Same layout as ``team_rows`` but each row holds the teammate's data."""
    return np.concatenate([pair[:, 1], pair[:, 0]])
