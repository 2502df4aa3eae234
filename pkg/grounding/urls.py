from django.urls import path
from . import views

urlpatterns = [
    path('runs/', views.PipelineRunListView.as_view(), name='run-list'),
    path('runs/<int:pk>/', views.PipelineRunDetailView.as_view(), name='run-detail'),
    path('evaluations/', views.EvaluationRecordListView.as_view(), name='evaluation-list'),
]
