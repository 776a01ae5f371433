"""
Experiment orchestration errors.
"""


class RunFailedError(RuntimeError):
    """A seeded run raised; the experiment is marked failed."""

    def __init__(self, index, seed, cause):
        self.index = index
        self.seed = seed
        self.cause = cause
        super().__init__(f"run{index} (seed {seed}) failed: {cause}")


class MissingArtifactsError(FileNotFoundError):
    """A results directory lacks the files an analysis needs."""
