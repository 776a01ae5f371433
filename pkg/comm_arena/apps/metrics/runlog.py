"""
Per-epoch training records and their CSV form.
"""
import csv
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from apps.env.modes import Team

RUNLOG_COLUMNS = [
    'epoch', 'mean_predator_reward', 'mean_prey_reward', 'epsilon',
    'dial_loss', 'iql_loss_prey', 'iql_loss_pred',
]


@dataclass
class EpochRecord:
    """
    One epoch of a training run.

    Losses are the mean over the epoch's minibatches; a loss is None when
    the mode does not run that update.
    """
    epoch: int
    mean_predator_reward: float
    mean_prey_reward: float
    epsilon: float = 0.0
    dial_loss: float = None
    iql_loss_prey: float = None
    iql_loss_pred: float = None

    def losses(self):
        return [value for value in (self.dial_loss, self.iql_loss_prey, self.iql_loss_pred) if value is not None]

    def is_finite(self):
        values = [self.mean_predator_reward, self.mean_prey_reward, *self.losses()]
        return all(math.isfinite(value) for value in values)


def _format(value):
    if value is None:
        return ''
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def _parse(field_type, text):
    if text == '':
        return None
    return int(text) if field_type is int else float(text)


@dataclass
class RunLog:
    """Ordered epoch records; epoch indices are contiguous from 0."""
    records: list = None

    def __post_init__(self):
        self.records = list(self.records or [])
        for expected, record in enumerate(self.records):
            if record.epoch != expected:
                raise ValueError(f"RunLog epochs must be contiguous from 0; got {record.epoch} at {expected}")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def append(self, record):
        if record.epoch != len(self.records):
            raise ValueError(f"Expected epoch {len(self.records)}, got {record.epoch}")
        self.records.append(record)

    def rewards(self, team=Team.PREDATORS):
        """Raw per-epoch mean episode reward of one team."""
        attribute = 'mean_predator_reward' if Team(team) == Team.PREDATORS else 'mean_prey_reward'
        return np.array([getattr(record, attribute) for record in self.records], dtype=np.float64)

    @classmethod
    def from_rewards(cls, predator_rewards, prey_rewards=None):
        """Build a log from raw reward series (prey defaults to the zero-sum mirror)."""
        if prey_rewards is None:
            prey_rewards = [-value for value in predator_rewards]
        return cls([
            EpochRecord(epoch=i, mean_predator_reward=float(p), mean_prey_reward=float(q))
            for i, (p, q) in enumerate(zip(predator_rewards, prey_rewards))
        ])

    def to_dicts(self):
        return [asdict(record) for record in self.records]

    @classmethod
    def from_dicts(cls, rows):
        return cls([EpochRecord(**row) for row in rows])

    def to_csv(self, path):
        path = Path(path)
        with path.open('w', newline='') as handle:
            writer = csv.writer(handle)
            writer.writerow(RUNLOG_COLUMNS)
            for record in self.records:
                writer.writerow([_format(getattr(record, column)) for column in RUNLOG_COLUMNS])
        return path

    @classmethod
    def from_csv(cls, path):
        types = {f.name: (int if f.name == 'epoch' else float) for f in fields(EpochRecord)}
        with Path(path).open(newline='') as handle:
            reader = csv.DictReader(handle)
            return cls([
                EpochRecord(**{column: _parse(types[column], row[column]) for column in RUNLOG_COLUMNS})
                for row in reader
            ])
