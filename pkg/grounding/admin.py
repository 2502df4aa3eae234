from django.contrib import admin

from .models import EvaluationRecord, PipelineRun


class EvaluationRecordInline(admin.TabularInline):
    model = EvaluationRecord
    extra = 0
    readonly_fields = ('top_n', 'iou_threshold', 'recall', 'created_at')


@admin.register(PipelineRun)
class PipelineRunAdmin(admin.ModelAdmin):
    list_display = ('stage', 'config_digest', 'seed', 'status', 'started_at', 'finished_at')
    list_filter = ('stage', 'status')
    search_fields = ('config_digest',)
    date_hierarchy = 'started_at'
    inlines = [EvaluationRecordInline]


@admin.register(EvaluationRecord)
class EvaluationRecordAdmin(admin.ModelAdmin):
    list_display = ('run', 'top_n', 'iou_threshold', 'recall')
    list_filter = ('top_n', 'iou_threshold')
    raw_id_fields = ('run',)
