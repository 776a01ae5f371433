from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from apps.env.modes import Team
from apps.experiments.config import CONFIG_KEYS, parse_config
from apps.experiments.exceptions import RunFailedError
from apps.experiments.services import run_experiment


class Command(BaseCommand):
    help = 'Trains seeded runs of one communication mode and writes logs, checkpoints and metrics'

    def add_arguments(self, parser):
        parser.add_argument('--config', help='key=value file; flags override its values')
        for key in CONFIG_KEYS:
            parser.add_argument(f"--{key.replace('_', '-')}", dest=key, metavar=key.upper())

    def handle(self, *args, **options):
        overrides = {key: options.get(key) for key in CONFIG_KEYS}
        try:
            config = parse_config(options.get('config'), overrides)
        except ValidationError as e:
            raise CommandError('; '.join(e.messages), returncode=2)

        self.stdout.write(f'Training {config.runs} {config.mode.value} run(s) into {config.out}...')
        try:
            result = run_experiment(config)
        except RunFailedError as e:
            raise CommandError(str(e), returncode=1)
        except ValidationError as e:
            raise CommandError('; '.join(e.messages), returncode=1)

        stats = result.summaries[Team.PREDATORS]
        self.stdout.write(self.style.SUCCESS(
            f'{config.mode.value}: average reward {stats.average_reward:.2f} '
            f'(std {stats.average_std:.2f}), average peak {stats.average_peak:.2f} '
            f'(std {stats.peak_std:.2f})'
        ))
        if result.confusion is not None:
            self.stdout.write(f'Message protocol accuracy (run{result.best_run}): {result.confusion.accuracy:.3f}')
