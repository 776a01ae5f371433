"""
Work done per seeded run. Kept free of ORM access so it can execute in
pool processes.
"""
from pathlib import Path

from apps.training.services import train_run


def run_log_path(directory, index):
    return Path(directory) / f'run{index}.csv'


def checkpoint_dir(directory, index):
    return Path(directory) / f'run{index}'


def resume_file(directory, index):
    return Path(directory) / f'run{index}.resume.json'


def execute_run(config, index):
    """
    Train run ``index`` of an experiment and write run{index}.csv and run{index}/.

    Returns:
        (index, RunLog)
    """
    result = train_run(
        config.training,
        config.env,
        seed=config.seed + index,
        resume_path=resume_file(config.out, index) if config.resume_every else None,
        resume_every=config.resume_every or None,
    )
    result.log.to_csv(run_log_path(config.out, index))
    result.policies.save(checkpoint_dir(config.out, index))
    return index, result.log
