"""
Experiment configuration: flat key=value files plus command-line overrides.

Files are parsed with python-decouple's ``RepositoryEnv`` (``#`` comments,
optional quotes). Precedence: flags > file > defaults.
"""
from dataclasses import dataclass, field
from pathlib import Path

from decouple import RepositoryEnv
from django.conf import settings
from django.core.exceptions import ValidationError

from apps.env.modes import CommMode
from apps.env.world import EnvConfig
from apps.metrics.services import DEFAULT_EWMA_ALPHA
from apps.training.services import TrainingConfig

RESOLVED_CONFIG_FILE = 'resolved_config.txt'

EXPERIMENT_KEYS = {
    'mode': str,
    'runs': int,
    'epochs': int,
    'seed': int,
    'out': str,
    'jobs': int,
    'eval_episodes': int,
    'ewma_alpha': float,
    'resume_every': int,
}
TRAINING_KEYS = {
    'gamma': float,
    'lr': float,
    'batch_size': int,
    'episodes_per_epoch': int,
    'epsilon_start': float,
    'epsilon_end': float,
    'epsilon_anneal_fraction': float,
}
ENV_KEYS = {
    'arena_half_width': float,
    'dt': float,
    'velocity_damping': float,
    'predator_accel': float,
    'prey_accel': float,
    'predator_max_speed': float,
    'prey_max_speed': float,
    'episode_length': int,
}
CONFIG_KEYS = {**EXPERIMENT_KEYS, **TRAINING_KEYS, **ENV_KEYS}


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One campaign: ``runs`` seeded runs of a single mode.

    Attributes:
        mode: Communication mode (no_comm when unset)
        runs: Number of runs; run i uses ``seed + i``
        epochs: Epochs per run
        seed: Base seed
        out: Results directory
        jobs: Runs executed concurrently (ARENA_DEFAULT_JOBS when unset)
        eval_episodes: Greedy episodes used for the confusion matrix
        ewma_alpha: Smoothing of the plotted curves
        resume_every: Write resume files every this many epochs (0 = never)
        training: TrainingConfig overrides resolved
        env: EnvConfig overrides resolved
    """
    mode: CommMode = CommMode.NO_COMM
    runs: int = 5
    epochs: int = 2000
    seed: int = 0
    out: Path = None
    jobs: int = None
    eval_episodes: int = 200
    ewma_alpha: float = DEFAULT_EWMA_ALPHA
    resume_every: int = 0
    training: TrainingConfig = None
    env: EnvConfig = None
    training_overrides: dict = field(default_factory=dict, repr=False)
    env_overrides: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        try:
            object.__setattr__(self, 'mode', CommMode(self.mode))
        except ValueError:
            choices = ', '.join(CommMode.values)
            raise ValidationError(f"Unknown mode '{self.mode}' (choose from {choices})", code='invalid_mode')
        if self.jobs is None:
            object.__setattr__(self, 'jobs', settings.ARENA_DEFAULT_JOBS)
        if self.runs < 1:
            raise ValidationError("runs must be at least 1", code='invalid')
        if self.jobs < 1:
            raise ValidationError("jobs must be at least 1", code='invalid')
        if self.eval_episodes < 1:
            raise ValidationError("eval_episodes must be at least 1", code='invalid')
        if self.resume_every < 0:
            raise ValidationError("resume_every cannot be negative", code='invalid')
        out = Path(self.out) if self.out else Path(settings.ARENA_RESULTS_DIR) / self.mode.value
        object.__setattr__(self, 'out', out)
        object.__setattr__(self, 'training', TrainingConfig(
            mode=self.mode, epochs=self.epochs, seed=self.seed, **self.training_overrides,
        ))
        object.__setattr__(self, 'env', EnvConfig(mode=self.mode, **self.env_overrides))

    def seeds(self):
        return [self.seed + index for index in range(self.runs)]

    def resolved(self):
        """Every configurable key with its effective value, in a stable order."""
        values = {name: getattr(self, name) for name in EXPERIMENT_KEYS}
        values['mode'] = self.mode.value
        values['out'] = str(self.out)
        values.update({name: getattr(self.training, name) for name in TRAINING_KEYS})
        values.update({name: getattr(self.env, name) for name in ENV_KEYS})
        return values

    def write_resolved(self, directory=None):
        path = Path(directory or self.out) / RESOLVED_CONFIG_FILE
        lines = [f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}"
                 for key, value in self.resolved().items()]
        path.write_text('\n'.join(lines) + '\n')
        return path


def _cast(key, raw):
    caster = CONFIG_KEYS[key]
    try:
        return caster(raw.strip() if isinstance(raw, str) else raw)
    except (TypeError, ValueError):
        kind = 'an integer' if caster is int else 'a number'
        raise ValidationError(f"Value for '{key}' must be {kind}, got '{raw}'", code='not_numeric')


def read_config_file(path):
    """Raw key -> string values of a key=value file."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"Config file {path} does not exist", code='missing_file')
    return dict(RepositoryEnv(str(path)).data)


def parse_config(path=None, overrides=None):
    """
    Resolve an ExperimentConfig from an optional file and flag overrides.

    Args:
        path: key=value file, or None
        overrides: Flag values; None entries are ignored

    Raises:
        ValidationError: unknown key, non-numeric value, invalid mode
    """
    values = read_config_file(path) if path else {}
    values.update({key: value for key, value in (overrides or {}).items() if value is not None})

    unknown = sorted(set(values) - set(CONFIG_KEYS))
    if unknown:
        raise ValidationError(f"Unknown config key '{unknown[0]}'", code='unknown_key')
    values = {key: _cast(key, value) for key, value in values.items()}

    return ExperimentConfig(
        **{key: values[key] for key in EXPERIMENT_KEYS if key in values},
        training_overrides={key: values[key] for key in TRAINING_KEYS if key in values},
        env_overrides={key: values[key] for key in ENV_KEYS if key in values},
    )


def load_resolved(directory, **overrides):
    """Rebuild the configuration a results directory was produced with."""
    path = Path(directory) / RESOLVED_CONFIG_FILE
    return parse_config(path, {'out': str(directory), **overrides})
