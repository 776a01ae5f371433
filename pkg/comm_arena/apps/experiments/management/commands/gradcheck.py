from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from apps.agents.policies import network_shapes
from apps.diffnet.gradcheck import run_gradcheck_suite


class Command(BaseCommand):
    help = 'Checks backpropagation of every network shape against central finite differences'

    def add_arguments(self, parser):
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--samples', type=int, default=settings.ARENA_GRADCHECK_SAMPLES,
                            help='Parameter components sampled per large layer (0 = all)')
        parser.add_argument('--tol', type=float, default=1e-4)
        parser.add_argument('--step', type=float, default=1e-5, help='Finite-difference step')

    def handle(self, *args, **options):
        if options['samples'] < 0 or options['tol'] <= 0 or options['step'] <= 0:
            raise CommandError('--samples must be >= 0, --tol and --step positive', returncode=2)
        reports = run_gradcheck_suite(
            network_shapes(),
            seed=options['seed'],
            h=options['step'],
            tol=options['tol'],
            max_components_per_layer=options['samples'] or None,
        )

        failed = []
        for name, report in reports.items():
            line = (f'{name}: max relative error {report.max_relative_error:.2e} over '
                    f'{report.checked_components} components ({report.skipped_components} skipped at kinks)')
            if report.passed:
                self.stdout.write(self.style.SUCCESS(f'PASS {line}'))
            else:
                failed.append(name)
                self.stdout.write(self.style.ERROR(f'FAIL {line}; worst {report.worst_component}'))
        if failed:
            raise CommandError(f"Gradient check failed for {', '.join(failed)}", returncode=1)
