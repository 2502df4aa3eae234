"""
Umbrella command line: ``python -m grounding.cli <subcommand> [options]``.

Subcommands are the hyphenated names of the management commands; each runs
through Django's command machinery so settings, logging and the run ledger
behave the same as under ``manage.py``.
"""

import os
import sys

SUBCOMMANDS = {
    'synth-gen': 'synth_gen',
    'train-language': 'train_language',
    'build-clusters': 'build_clusters',
    'train-video': 'train_video',
    'infer': 'infer',
    'eval': 'eval',
    'report': 'report',
    'selfcheck': 'selfcheck',
    'ablate': 'ablate',
}

USAGE = 'usage: dscnet {' + ','.join(SUBCOMMANDS) + '} [options]\n'


def cli_main(argv=None):
    """Run one subcommand and return its exit status (2 for usage errors)."""
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in SUBCOMMANDS:
        sys.stderr.write(USAGE)
        if argv and argv[0] not in ('-h', '--help'):
            sys.stderr.write(f'dscnet: unknown subcommand {argv[0]!r}\n')
            return 2
        return 0 if argv else 2

    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'dscnet_project.settings')
    from django.core.management import ManagementUtility

    utility = ManagementUtility(['dscnet', SUBCOMMANDS[argv[0]], *argv[1:]])
    try:
        utility.execute()
    except SystemExit as exc:
        if exc.code is None:
            return 0
        return exc.code if isinstance(exc.code, int) else 1
    return 0


if __name__ == '__main__':
    sys.exit(cli_main())
