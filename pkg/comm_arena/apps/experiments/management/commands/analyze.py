from pathlib import Path

from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from apps.experiments.config import RESOLVED_CONFIG_FILE, load_resolved
from apps.experiments.exceptions import MissingArtifactsError
from apps.experiments.services import analyze_directory


class Command(BaseCommand):
    help = 'Recomputes summary, curves and confusion matrix from an existing results directory'

    def add_arguments(self, parser):
        parser.add_argument('--out', required=True, help='Results directory written by run')
        parser.add_argument('--trajectories', type=int, default=0,
                            help='Also export this many greedy episodes of run0 to trajectories.csv')
        parser.add_argument('--eval-episodes', dest='eval_episodes')
        parser.add_argument('--ewma-alpha', dest='ewma_alpha')

    def handle(self, *args, **options):
        directory = options['out']
        if options['trajectories'] < 0:
            raise CommandError('--trajectories cannot be negative', returncode=2)
        if not (Path(directory) / RESOLVED_CONFIG_FILE).exists():
            raise CommandError(f'{directory} has no {RESOLVED_CONFIG_FILE}; is it a results directory?', returncode=1)
        overrides = {key: options[key] for key in ('eval_episodes', 'ewma_alpha') if options[key] is not None}
        try:
            config = load_resolved(directory, **overrides)
            result = analyze_directory(directory, config=config, trajectories=options['trajectories'])
        except ValidationError as e:
            raise CommandError('; '.join(e.messages), returncode=2)
        except MissingArtifactsError as e:
            raise CommandError(str(e), returncode=1)

        for team, stats in result.summaries.items():
            self.stdout.write(
                f'{team.value}: average {stats.average_reward:.2f} (std {stats.average_std:.2f}), '
                f'peak {stats.average_peak:.2f} (std {stats.peak_std:.2f})'
            )
        if result.confusion is not None:
            self.stdout.write(f'Message protocol accuracy (run{result.best_run}): {result.confusion.accuracy:.3f}')
        self.stdout.write(self.style.SUCCESS(f'Analysis written to {directory}'))
