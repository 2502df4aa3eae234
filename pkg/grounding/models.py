from django.db import models


class PipelineRun(models.Model):
    """One invocation of a pipeline stage, keyed by config digest and seed."""

    class Status(models.TextChoices):
        RUNNING = 'running', 'Running'
        SUCCEEDED = 'succeeded', 'Succeeded'
        FAILED = 'failed', 'Failed'

    stage = models.CharField(max_length=40)
    config_digest = models.CharField(max_length=64)
    seed = models.IntegerField(default=0)
    status = models.CharField(max_length=16, choices=Status.choices, default=Status.RUNNING)
    metrics = models.JSONField(default=dict, blank=True)
    started_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        ordering = ['-started_at']

    def __str__(self):
        return f'{self.stage} [{self.config_digest[:8]}] seed={self.seed} ({self.status})'


class EvaluationRecord(models.Model):
    """A single R@N, IoU=theta cell of an evaluation table."""
    run = models.ForeignKey(PipelineRun, on_delete=models.CASCADE, related_name='evaluations')
    top_n = models.PositiveIntegerField()
    iou_threshold = models.FloatField()
    recall = models.FloatField()
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['top_n', 'iou_threshold']
        constraints = [
            models.UniqueConstraint(
                fields=['run', 'top_n', 'iou_threshold'],
                name='unique_cell_per_run'
            )
        ]

    def __str__(self):
        return f'R@{self.top_n} IoU={self.iou_threshold}: {self.recall:.2f}'
