from django.core.management.base import BaseCommand, CommandError

from apps.experiments.exceptions import MissingArtifactsError
from apps.experiments.services import compare_experiments
from apps.metrics.services import DEFAULT_EWMA_ALPHA


class Command(BaseCommand):
    help = 'Compares analysed results directories and checks the expected peak ordering'

    def add_arguments(self, parser):
        parser.add_argument('directories', nargs='+', help='Results directories written by run')
        parser.add_argument('--out', required=True, help='Where comparison.json and curves go')
        parser.add_argument('--ewma-alpha', dest='ewma_alpha', type=float, default=DEFAULT_EWMA_ALPHA)

    def handle(self, *args, **options):
        if not 0.0 < options['ewma_alpha'] <= 1.0:
            raise CommandError('--ewma-alpha must lie in (0, 1]', returncode=2)
        try:
            data = compare_experiments(options['directories'], options['out'], alpha=options['ewma_alpha'])
        except MissingArtifactsError as e:
            raise CommandError(str(e), returncode=1)

        for label, teams in data['configurations'].items():
            self.stdout.write(f"{label}: average peak {teams['predators']['average_peak']:.2f}")
        for name, check in data['checks'].items():
            style = self.style.SUCCESS if check['passed'] else self.style.WARNING
            self.stdout.write(style(f"{name}: gap {check['gap']:.2f} ({'passed' if check['passed'] else 'failed'})"))
