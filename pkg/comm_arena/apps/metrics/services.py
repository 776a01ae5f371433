"""
Post-hoc analysis of finished runs.

Smoothing is only for display: peaks and averages are taken on the raw
per-epoch means. Standard deviations are population deviations.
"""
import csv
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from apps.env.modes import CommMode, Team
from apps.env.world import PREDATORS
from apps.metrics.exceptions import EmptySeriesError, MismatchedRunsError, NotCommunicatingError
from apps.training.services import rollout_episode

logger = logging.getLogger(__name__)

DEFAULT_EWMA_ALPHA = 0.0005
STD_FORMULA = (
    "average_std: mean over epochs of the population standard deviation across runs "
    "of that epoch's mean reward; peak_std: population standard deviation of per-run peaks"
)


def ewma(series, alpha=DEFAULT_EWMA_ALPHA):
    """
    Exponentially weighted moving average, seeded with the first value.

    s[0] = x[0]; s[t] = alpha * x[t] + (1 - alpha) * s[t-1]
    """
    values = np.asarray(series, dtype=np.float64)
    if values.size == 0:
        raise EmptySeriesError("Cannot smooth an empty series")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    smoothed = np.empty_like(values)
    smoothed[0] = values[0]
    for t in range(1, len(values)):
        smoothed[t] = alpha * values[t] + (1.0 - alpha) * smoothed[t - 1]
    return smoothed


def peak_performance(log, team=Team.PREDATORS):
    """Best raw per-epoch mean reward of a run."""
    rewards = log.rewards(team)
    if rewards.size == 0:
        raise EmptySeriesError("Cannot take the peak of an empty run log")
    return float(rewards.max())


@dataclass
class SummaryStats:
    """
    Cross-run summary of one configuration.

    Attributes:
        average_reward: Mean over runs of each run's mean epoch reward
        average_std: Mean over epochs of the cross-run std
        average_peak: Mean of per-run peaks
        peak_std: Std of per-run peaks
        runs: Number of runs aggregated
        epochs: Epochs per run
    """
    average_reward: float
    average_std: float
    average_peak: float
    peak_std: float
    runs: int
    epochs: int

    def to_dict(self):
        return asdict(self)


def aggregate_runs(logs, team=Team.PREDATORS):
    """
    Summarise equally long runs of one configuration.

    A single run is accepted; its deviations are 0.

    Raises:
        EmptySeriesError: no logs, or empty logs
        MismatchedRunsError: logs of different lengths
    """
    logs = list(logs)
    if not logs:
        raise EmptySeriesError("No run logs to aggregate")
    lengths = {len(log) for log in logs}
    if len(lengths) != 1:
        raise MismatchedRunsError(f"Run logs differ in length: {sorted(lengths)}")
    if lengths == {0}:
        raise EmptySeriesError("Run logs are empty")

    rewards = np.stack([log.rewards(team) for log in logs])
    peaks = rewards.max(axis=1)
    return SummaryStats(
        average_reward=float(rewards.mean(axis=1).mean()),
        average_std=float(rewards.std(axis=0).mean()),
        average_peak=float(peaks.mean()),
        peak_std=float(peaks.std()),
        runs=len(logs),
        epochs=rewards.shape[1],
    )


class ConfusionMatrix:
    """
    Counts of (teammate's target, message symbol) pairs.

    Rows are the target prey (0, 1); columns are the symbol (0 when the
    message is 0, 1 when it is positive).
    """

    def __init__(self, counts=None):
        self.counts = np.zeros((2, 2), dtype=np.int64) if counts is None else np.asarray(counts, dtype=np.int64)
        if self.counts.shape != (2, 2) or np.any(self.counts < 0):
            raise ValueError(f"Confusion counts must be a non-negative 2x2 array, got {self.counts!r}")

    @staticmethod
    def symbol(message):
        return int(float(message) > 0.0)

    def record(self, target, message):
        self.counts[int(target), self.symbol(message)] += 1

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def accuracy(self):
        """Share of messages explained by the better of the two symbol labellings."""
        if self.total == 0:
            return 0.0
        diagonal = self.counts[0, 0] + self.counts[1, 1]
        anti_diagonal = self.counts[0, 1] + self.counts[1, 0]
        return float(max(diagonal, anti_diagonal) / self.total)

    def to_csv(self, path):
        path = Path(path)
        with path.open('w', newline='') as handle:
            writer = csv.writer(handle)
            writer.writerow(['teammate_target', 'symbol_0', 'symbol_1'])
            for target in range(2):
                writer.writerow([f'prey{target}', *self.counts[target].tolist()])
            writer.writerow(['accuracy', repr(self.accuracy), ''])
        return path

    def __repr__(self):
        return f"ConfusionMatrix({self.counts.tolist()}, accuracy={self.accuracy:.3f})"


def build_confusion_matrix(policies, env_config, episodes, seed):
    """
    Roll greedy episodes and tabulate each message against the target of
    the predator receiving it.

    Raises:
        NotCommunicatingError: for modes without a message channel
    """
    mode = CommMode(policies.mode)
    if not mode.communicates:
        raise NotCommunicatingError(f"No messages to tabulate in mode {mode.value}")
    if episodes < 1:
        raise ValueError("episodes must be at least 1")

    matrix = ConfusionMatrix()

    def tabulate(state, messages, actions, result):
        for sender in PREDATORS:
            receiver = PREDATORS[1 - sender]
            matrix.record(state.target[receiver], messages[sender, 0])

    rng = np.random.default_rng(seed)
    for _ in range(episodes):
        rollout_episode(policies, env_config, rng, epsilon=0.0, on_step=tabulate)
    logger.info(f"Confusion over {episodes} greedy episodes ({mode.value}): {matrix}")
    return matrix


def write_summary(path, summaries, extra=None):
    """
    Write summary.json.

    Args:
        summaries: {team: SummaryStats}
        extra: Additional top-level keys (mode, runs, ...)
    """
    data = dict(extra or {})
    data['teams'] = {Team(team).value: stats.to_dict() for team, stats in summaries.items()}
    data['std_formula'] = STD_FORMULA
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True))
    return path


def read_summary(path):
    return json.loads(Path(path).read_text())


def mean_curve(logs, team=Team.PREDATORS):
    """Per-epoch mean over runs of the raw reward."""
    return np.stack([log.rewards(team) for log in logs]).mean(axis=0)


def write_curves(path, curves, alpha=DEFAULT_EWMA_ALPHA):
    """
    Write curves.csv: one row per (configuration, epoch) with raw and smoothed reward.

    Args:
        curves: {configuration label: raw per-epoch series}
    """
    path = Path(path)
    with path.open('w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(['configuration', 'epoch', 'raw', 'smoothed'])
        for label, raw in curves.items():
            for epoch, (value, smooth) in enumerate(zip(raw, ewma(raw, alpha))):
                writer.writerow([label, epoch, repr(float(value)), repr(float(smooth))])
    return path


def read_curves(path):
    """Inverse of ``write_curves``: {configuration: (raw, smoothed)}."""
    curves = {}
    with Path(path).open(newline='') as handle:
        for row in csv.DictReader(handle):
            raw, smoothed = curves.setdefault(row['configuration'], ([], []))
            raw.append(float(row['raw']))
            smoothed.append(float(row['smoothed']))
    return {label: (np.array(raw), np.array(smoothed)) for label, (raw, smoothed) in curves.items()}
