from django.core.management.base import CommandError

from grounding.selfcheck import run_selfcheck

from ._base import PipelineCommand


class Command(PipelineCommand):
    help = 'Run the gradient and invariant suite; exits non-zero on any failure.'
    stage = 'selfcheck'

    def add_stage_arguments(self, parser):
        parser.add_argument('--seeds', type=int, default=20, help='random instances per gradient check')
        parser.add_argument('--shapes', type=int, default=1000, help='random shapes for the attention check')

    def run(self, config, **options):
        report = run_selfcheck(config, seeds=options['seeds'], shapes=options['shapes'])
        for result in report.results:
            style = self.style.SUCCESS if result.passed else self.style.ERROR
            self.stdout.write(style(f'{"ok" if result.passed else "FAIL":4} {result.name}: {result.detail}'))
        if not report.passed:
            raise CommandError(f'{len(report.failures)} check(s) failed: ' + ', '.join(r.name for r in report.failures))
        return {'checks': len(report.results)}
