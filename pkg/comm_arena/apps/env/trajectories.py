"""
CSV export of rolled-out episodes.
"""
import csv
from pathlib import Path

from apps.env.world import AGENT_NAMES, NUM_AGENTS, is_predator

TRAJECTORY_COLUMNS = ['episode', 'step', 'agent', 'px', 'py', 'vx', 'vy', 'action', 'reward', 'target']


def trajectory_rows(episode, state, actions, predator_reward, prey_reward):
    """
    One row per agent for a single transition.

    Positions and velocities are those the agents acted on; ``reward`` is
    the team reward that followed. Prey have no target.
    """
    rows = []
    for agent in range(NUM_AGENTS):
        predator = is_predator(agent)
        rows.append({
            'episode': episode,
            'step': state.step,
            'agent': AGENT_NAMES[agent],
            'px': repr(float(state.position[agent, 0])),
            'py': repr(float(state.position[agent, 1])),
            'vx': repr(float(state.velocity[agent, 0])),
            'vy': repr(float(state.velocity[agent, 1])),
            'action': int(actions[agent]),
            'reward': repr(float(predator_reward if predator else prey_reward)),
            'target': int(state.target[agent]) if predator else '',
        })
    return rows


def write_trajectories(path, rows):
    path = Path(path)
    with path.open('w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=TRAJECTORY_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return path
