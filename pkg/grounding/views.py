from rest_framework import generics, permissions

from .filters import EvaluationRecordFilter, PipelineRunFilter
from .models import EvaluationRecord, PipelineRun
from .serializers import EvaluationRecordSerializer, PipelineRunSerializer


class PipelineRunListView(generics.ListAPIView):
    """
    List ledger entries, newest first.

    Query Parameters:
        ?stage=train-video     # one stage only
        ?status=failed         # runs that raised
        ?config_digest=3fa2    # digest prefix
        ?ordering=started_at   # oldest first
    """
    queryset = PipelineRun.objects.prefetch_related('evaluations')
    serializer_class = PipelineRunSerializer
    permission_classes = [permissions.AllowAny]
    filterset_class = PipelineRunFilter
    ordering_fields = ['started_at', 'finished_at', 'stage']
    ordering = ['-started_at']


class PipelineRunDetailView(generics.RetrieveAPIView):
    queryset = PipelineRun.objects.prefetch_related('evaluations')
    serializer_class = PipelineRunSerializer
    permission_classes = [permissions.AllowAny]


class EvaluationRecordListView(generics.ListAPIView):
    """List evaluation cells across runs, e.g. ``?top_n=1&iou_threshold=0.5``."""
    queryset = EvaluationRecord.objects.select_related('run')
    serializer_class = EvaluationRecordSerializer
    permission_classes = [permissions.AllowAny]
    filterset_class = EvaluationRecordFilter
    ordering_fields = ['recall', 'created_at']
