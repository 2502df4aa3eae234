from django_filters import rest_framework as filters

from .models import EvaluationRecord, PipelineRun


class PipelineRunFilter(filters.FilterSet):
    stage = filters.CharFilter(help_text="Filter by pipeline stage (e.g. train-video)")
    status = filters.ChoiceFilter(choices=PipelineRun.Status.choices)
    config_digest = filters.CharFilter(lookup_expr='startswith', help_text="Filter by config digest prefix")
    started_at__gte = filters.DateTimeFilter(field_name='started_at', lookup_expr='gte')
    started_at__lte = filters.DateTimeFilter(field_name='started_at', lookup_expr='lte')

    class Meta:
        model = PipelineRun
        fields = ['stage', 'status', 'seed', 'config_digest', 'started_at__gte', 'started_at__lte']


class EvaluationRecordFilter(filters.FilterSet):
    top_n = filters.NumberFilter()
    iou_threshold = filters.NumberFilter()
    recall__gte = filters.NumberFilter(field_name='recall', lookup_expr='gte')
    stage = filters.CharFilter(field_name='run__stage')

    class Meta:
        model = EvaluationRecord
        fields = ['run', 'top_n', 'iou_threshold', 'recall__gte', 'stage']
