"""
Run registry models.
"""
from django.db import models
from django.utils import timezone

from apps.env.modes import CommMode


class RunStatus(models.TextChoices):
    """Lifecycle of an experiment or a single training run."""
    PENDING = 'PENDING', 'Pending'
    RUNNING = 'RUNNING', 'Running'
    COMPLETED = 'COMPLETED', 'Completed'
    FAILED = 'FAILED', 'Failed'


class StatusMixin:
    """Status transitions shared by experiments and runs."""

    def start(self):
        """Mark as running."""
        if self.status == RunStatus.PENDING:
            self.status = RunStatus.RUNNING
            self.save()
            return True
        return False

    def complete(self, **values):
        """Mark as completed, storing any result fields given."""
        if self.status != RunStatus.RUNNING:
            return False
        for name, value in values.items():
            setattr(self, name, value)
        self.status = RunStatus.COMPLETED
        self.completed_at = timezone.now()
        self.save()
        return True

    def fail(self, message=''):
        """Mark as failed."""
        if self.status in (RunStatus.COMPLETED, RunStatus.FAILED):
            return False
        self.status = RunStatus.FAILED
        self.error_message = message
        self.completed_at = timezone.now()
        self.save()
        return True


class Experiment(StatusMixin, models.Model):
    """
    One invocation of ``run``: a batch of seeded runs of one mode.

    Attributes:
        mode: Communication mode of every run
        runs: Number of runs
        epochs: Epochs per run
        seed: Base seed (run i uses seed + i)
        output_dir: Results directory
        status: Current status
        error_message: Failure description
        created_at: Creation timestamp
        completed_at: When it finished or failed
    """
    mode = models.CharField(
        max_length=20,
        choices=CommMode.choices,
        help_text="Communication mode of every run"
    )
    runs = models.PositiveIntegerField(default=5, help_text="Number of seeded runs")
    epochs = models.PositiveIntegerField(help_text="Epochs per run")
    seed = models.IntegerField(default=0, help_text="Base seed; run i uses seed + i")
    output_dir = models.CharField(max_length=500, help_text="Results directory")
    status = models.CharField(
        max_length=20,
        choices=RunStatus.choices,
        default=RunStatus.PENDING,
        help_text="Current status of the experiment"
    )
    error_message = models.TextField(blank=True, default='')
    created_at = models.DateTimeField(auto_now_add=True)
    completed_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        db_table = 'experiments'
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['mode'], name='experiments_mode_idx'),
            models.Index(fields=['status'], name='experiments_status_idx'),
        ]

    def __str__(self):
        return f"{self.mode} x{self.runs} ({self.epochs} epochs) -> {self.output_dir} [{self.status}]"


class TrainingRun(StatusMixin, models.Model):
    """
    One seeded run of an experiment.

    Attributes:
        experiment: Owning experiment
        index: Position i within the experiment
        seed: Seed used (experiment seed + i)
        average_reward: Mean predator epoch reward once completed
        peak_reward: Best predator epoch reward once completed
    """
    experiment = models.ForeignKey(
        Experiment,
        on_delete=models.CASCADE,
        related_name='training_runs'
    )
    index = models.PositiveIntegerField()
    seed = models.IntegerField()
    status = models.CharField(
        max_length=20,
        choices=RunStatus.choices,
        default=RunStatus.PENDING
    )
    average_reward = models.FloatField(null=True, blank=True)
    peak_reward = models.FloatField(null=True, blank=True)
    error_message = models.TextField(blank=True, default='')
    completed_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        db_table = 'training_runs'
        ordering = ['experiment', 'index']
        constraints = [
            models.UniqueConstraint(fields=['experiment', 'index'], name='unique_run_index'),
        ]

    def __str__(self):
        return f"run{self.index} seed {self.seed} [{self.status}]"
