"""Shared plumbing of the pipeline management commands."""

import logging

from django.core.management.base import BaseCommand, CommandError
from django.db import DatabaseError
from django.utils import timezone

from grounding.config import load_config
from grounding.exceptions import GroundingError
from grounding.models import EvaluationRecord, PipelineRun

logger = logging.getLogger('grounding.commands')


class PipelineCommand(BaseCommand):
    """
    Loads the run config, logs its digest and seed, records the invocation
    in the run ledger and turns pipeline errors into ``CommandError``.

    Subclasses set ``stage``, add their own arguments in
    ``add_stage_arguments`` and do the work in ``run``, returning a dict of
    metrics for the ledger.
    """
    stage = None
    config_overrides = ()

    def add_arguments(self, parser):
        parser.add_argument('--config', help='key=value run config file')
        parser.add_argument('--seed', type=int, help='override the config seed')
        self.add_stage_arguments(parser)

    def add_stage_arguments(self, parser):
        pass

    def run(self, config, **options):
        raise NotImplementedError

    def handle(self, *args, **options):
        overrides = {name: options.get(name) for name in self.config_overrides}
        try:
            config = load_config(options['config'], seed=options['seed'], **overrides)
        except GroundingError as exc:
            raise CommandError(str(exc)) from exc
        logger.info('%s: config %s, seed %d', self.stage, config.digest()[:12], config.seed)
        self.run_record = self._open_run(config)
        try:
            metrics = self.run(config, **{k: v for k, v in options.items() if k != 'config'}) or {}
        except CommandError as exc:
            self._close_run(PipelineRun.Status.FAILED, {'error': str(exc)})
            raise
        except GroundingError as exc:
            self._close_run(PipelineRun.Status.FAILED, {'error': str(exc)})
            raise CommandError(str(exc)) from exc
        except Exception as exc:
            self._close_run(PipelineRun.Status.FAILED, {'error': f'{type(exc).__name__}: {exc}'})
            raise
        self._close_run(PipelineRun.Status.SUCCEEDED, metrics)

    def _open_run(self, config):
        try:
            return PipelineRun.objects.create(stage=self.stage, config_digest=config.digest(), seed=config.seed)
        except DatabaseError as exc:
            logger.warning('run ledger unavailable (%s); run "manage.py migrate" to enable it', exc)
            return None

    def _close_run(self, status, metrics):
        if self.run_record is None:
            return
        self.run_record.status = status
        self.run_record.metrics = metrics
        self.run_record.finished_at = timezone.now()
        self.run_record.save()

    def record_table(self, table):
        """Store the rows of an evaluation table against this run."""
        if self.run_record is None:
            return
        EvaluationRecord.objects.bulk_create(
            EvaluationRecord(run=self.run_record, top_n=int(row.top_n), iou_threshold=float(row.iou_threshold),
                             recall=float(row.recall))
            for row in table.itertuples(index=False)
        )
