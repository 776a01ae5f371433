"""
Service layer for experiments.
Runs seeded training campaigns, writes their artifacts, and keeps the run
registry in step.
"""
import json
import logging
import re
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from apps.agents.policies import PolicySet
from apps.env.modes import CommMode, Team
from apps.env.trajectories import trajectory_rows, write_trajectories
from apps.experiments.config import load_resolved
from apps.experiments.exceptions import MissingArtifactsError, RunFailedError
from apps.experiments.models import Experiment, RunStatus, TrainingRun
from apps.experiments.workers import checkpoint_dir, execute_run
from apps.metrics.plotting import plot_curves
from apps.metrics.runlog import RunLog
from apps.metrics.services import (
    DEFAULT_EWMA_ALPHA, aggregate_runs, build_confusion_matrix, mean_curve, peak_performance, read_curves,
    read_summary, write_curves, write_summary,
)
from apps.training.services import rollout_episode

logger = logging.getLogger(__name__)

RUN_LOG_PATTERN = re.compile(r'^run(\d+)\.csv$')

# (better, worse, minimum peak gap) and (a, b, maximum absolute peak gap)
PEAK_GAP_CHECKS = [
    ('private_comm_beats_no_comm', CommMode.PRIVATE_COMM, CommMode.NO_COMM, 10.0),
    ('public_comm_beats_no_comm', CommMode.PUBLIC_COMM, CommMode.NO_COMM, 5.0),
]
PEAK_CLOSENESS_CHECKS = [
    ('private_comm_close_to_full_obs', CommMode.PRIVATE_COMM, CommMode.FULL_OBS, 8.0),
]


@dataclass
class AnalysisResult:
    """
    What ``analyze_directory`` produced.

    Attributes:
        summaries: {Team: SummaryStats}
        peaks: Raw predator peak of each run
        confusion: ConfusionMatrix of the best run, or None for non-communicating modes
        best_run: Index of the run with the highest predator peak
    """
    directory: Path
    mode: CommMode
    summaries: dict
    peaks: list
    confusion: object = None
    best_run: int = 0


class ExperimentService:
    """
    Registry bookkeeping for experiments and their runs.
    """

    @staticmethod
    def register(config):
        """Create the experiment and one pending run per seed."""
        experiment = Experiment.objects.create(
            mode=config.mode,
            runs=config.runs,
            epochs=config.epochs,
            seed=config.seed,
            output_dir=str(config.out),
        )
        TrainingRun.objects.bulk_create([
            TrainingRun(experiment=experiment, index=index, seed=seed)
            for index, seed in enumerate(config.seeds())
        ])
        return experiment

    @staticmethod
    def start(experiment):
        experiment.start()
        experiment.training_runs.filter(status=RunStatus.PENDING).update(status=RunStatus.RUNNING)
        return experiment

    @staticmethod
    def record_run(experiment, index, log):
        """Store the finished run's headline numbers."""
        run = experiment.training_runs.get(index=index)
        run.complete(
            average_reward=float(log.rewards(Team.PREDATORS).mean()),
            peak_reward=peak_performance(log),
        )
        logger.info(f"Experiment {experiment.id}: run{index} (seed {run.seed}) completed")
        return run

    @staticmethod
    def record_failure(experiment, error):
        """Mark the failing run and the experiment failed; unfinished runs fail with it."""
        message = str(error)
        experiment.training_runs.get(index=error.index).fail(message)
        for run in experiment.training_runs.filter(status=RunStatus.RUNNING):
            run.fail(f"Aborted after run{error.index} failed")
        experiment.fail(message)
        logger.error(f"Experiment {experiment.id} failed: {message}")
        return experiment


def _execute_all(config):
    """Yield (index, RunLog) as runs finish; wraps failures in RunFailedError."""
    indices = range(config.runs)
    if config.jobs == 1 or config.runs == 1:
        for index in indices:
            try:
                yield execute_run(config, index)
            except Exception as e:
                raise RunFailedError(index, config.seed + index, e) from e
        return

    with ProcessPoolExecutor(max_workers=min(config.jobs, config.runs)) as executor:
        futures = {executor.submit(execute_run, config, index): index for index in indices}
        for future in as_completed(futures):
            index = futures[future]
            try:
                yield future.result()
            except Exception as e:
                for pending in futures:
                    pending.cancel()
                raise RunFailedError(index, config.seed + index, e) from e


def run_experiment(config):
    """
    Train ``config.runs`` seeded runs and write every artifact.

    Returns:
        AnalysisResult

    Raises:
        RunFailedError: naming the first run that failed
    """
    config.out.mkdir(parents=True, exist_ok=True)
    config.write_resolved()
    experiment = ExperimentService.register(config)
    ExperimentService.start(experiment)
    logger.info(
        f"Experiment {experiment.id}: {config.runs} x {config.mode.value}, {config.epochs} epochs, "
        f"seeds {config.seed}..{config.seed + config.runs - 1}, jobs {config.jobs} -> {config.out}"
    )

    try:
        for index, log in _execute_all(config):
            ExperimentService.record_run(experiment, index, log)
    except RunFailedError as error:
        ExperimentService.record_failure(experiment, error)
        raise

    result = analyze_directory(config.out, config=config)
    experiment.complete()
    return result


def load_run_logs(directory):
    """run{i}.csv logs of a results directory, ordered by i."""
    directory = Path(directory)
    found = []
    for path in directory.iterdir() if directory.is_dir() else []:
        match = RUN_LOG_PATTERN.match(path.name)
        if match:
            found.append((int(match.group(1)), path))
    if not found:
        raise MissingArtifactsError(f"No run logs (run<i>.csv) in {directory}")
    return [RunLog.from_csv(path) for _, path in sorted(found)]


def load_checkpoints(directory, index, mode):
    path = checkpoint_dir(directory, index)
    if not path.is_dir():
        raise MissingArtifactsError(f"No checkpoints for run{index} in {directory}")
    return PolicySet.load(path, mode)


def analyze_directory(directory, config=None, trajectories=0):
    """
    (Re)compute summary.json, curves.csv/svg and, for communicating modes,
    confusion.csv from the run logs and checkpoints in ``directory``.

    Args:
        config: ExperimentConfig; read from resolved_config.txt when omitted
        trajectories: Also export this many greedy episodes of run0
    """
    directory = Path(directory)
    if config is None:
        if not (directory / 'resolved_config.txt').exists():
            raise MissingArtifactsError(f"No resolved_config.txt in {directory}")
        config = load_resolved(directory)
    logs = load_run_logs(directory)
    summaries = {team: aggregate_runs(logs, team) for team in Team}
    peaks = [peak_performance(log) for log in logs]
    best = int(np.argmax(peaks))

    confusion = None
    if config.mode.communicates:
        policies = load_checkpoints(directory, best, config.mode)
        confusion = build_confusion_matrix(policies, config.env, config.eval_episodes, seed=config.seed + best)
        confusion.to_csv(directory / 'confusion.csv')

    extra = {
        'mode': config.mode.value,
        'runs': len(logs),
        'epochs': len(logs[0]),
        'seeds': [config.seed + index for index in range(len(logs))],
        'peaks': peaks,
    }
    if confusion is not None:
        extra['confusion_run'] = best
        extra['confusion_accuracy'] = confusion.accuracy
    write_summary(directory / 'summary.json', summaries, extra=extra)

    curves = {config.mode.value: mean_curve(logs)}
    write_curves(directory / 'curves.csv', curves, config.ewma_alpha)
    plot_curves(directory / 'curves.svg', curves, config.ewma_alpha, title=config.mode.label)

    if trajectories:
        export_trajectories(directory, config, trajectories)

    predators = summaries[Team.PREDATORS]
    logger.info(
        f"{config.mode.value}: average {predators.average_reward:.2f} (std {predators.average_std:.2f}), "
        f"peak {predators.average_peak:.2f} (std {predators.peak_std:.2f}) over {len(logs)} runs"
    )
    return AnalysisResult(directory, config.mode, summaries, peaks, confusion, best_run=best)


def export_trajectories(directory, config, episodes):
    """Write trajectories.csv with ``episodes`` greedy episodes of run0."""
    policies = load_checkpoints(directory, 0, config.mode)
    rng = np.random.default_rng(config.seed)
    rows = []
    for episode in range(episodes):
        def record(state, messages, actions, result, episode=episode):
            rows.extend(trajectory_rows(episode, state, actions, result.predator_reward, result.prey_reward))

        rollout_episode(policies, config.env, rng, epsilon=0.0, on_step=record)
    return write_trajectories(Path(directory) / 'trajectories.csv', rows)


def _peak_gap_checks(peaks):
    checks = {}
    for name, better, worse, minimum in PEAK_GAP_CHECKS:
        if better in peaks and worse in peaks:
            gap = peaks[better] - peaks[worse]
            checks[name] = {'gap': gap, 'minimum': minimum, 'passed': gap >= minimum}
    for name, a, b, maximum in PEAK_CLOSENESS_CHECKS:
        if a in peaks and b in peaks:
            gap = abs(peaks[a] - peaks[b])
            checks[name] = {'gap': gap, 'maximum': maximum, 'passed': gap <= maximum}
    return checks


def compare_experiments(directories, out, alpha=DEFAULT_EWMA_ALPHA):
    """
    Put several analysed experiments side by side.

    Writes comparison.json (per-configuration stats and peak-gap checks)
    and combined curves.csv / curves.svg into ``out``.

    Returns:
        The comparison data written to comparison.json
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    configurations, curves, peaks = {}, {}, {}
    for directory in map(Path, directories):
        if not (directory / 'summary.json').exists():
            raise MissingArtifactsError(f"No summary.json in {directory}; run analyze first")
        summary = read_summary(directory / 'summary.json')
        label = summary['mode']
        if label in configurations:
            label = f"{label} ({directory.name})"
        configurations[label] = {'directory': str(directory), **summary['teams']}
        mode = CommMode(summary['mode'])
        peaks.setdefault(mode, summary['teams'][Team.PREDATORS.value]['average_peak'])
        for raw, _ in read_curves(directory / 'curves.csv').values():
            curves[label] = raw

    data = {'configurations': configurations, 'checks': _peak_gap_checks(peaks)}
    (out / 'comparison.json').write_text(json.dumps(data, indent=2, sort_keys=True))
    write_curves(out / 'curves.csv', curves, alpha)
    plot_curves(out / 'curves.svg', curves, alpha, title='Predator reward by configuration')
    for name, check in data['checks'].items():
        logger.info(f"{name}: gap {check['gap']:.2f} -> {'passed' if check['passed'] else 'failed'}")
    return data
