from rest_framework import serializers

from .models import EvaluationRecord, PipelineRun

CENTER_SELECTIONS = ('center', 'sample', 'random')


class ConfigSerializer(serializers.Serializer):
    """
    Validates and coerces a run configuration.

    Values arrive as strings from key=value files and the environment, or as
    Python values from overrides; the serializer turns both into typed data.
    Field names follow ``grounding.config.Config``.
    """
    num_necks = serializers.IntegerField(min_value=1)
    num_clusters = serializers.IntegerField(min_value=2)
    neck_dim = serializers.IntegerField(min_value=1)
    joint_dim = serializers.IntegerField(min_value=1)
    sentence_dim = serializers.IntegerField(min_value=1)
    word_dim = serializers.IntegerField(min_value=1)
    max_query_length = serializers.IntegerField(min_value=1)
    decoder_hidden = serializers.IntegerField(min_value=0)
    dqa_lambda = serializers.FloatField()
    alpha_w = serializers.FloatField(min_value=0.0)
    beta_w = serializers.FloatField(min_value=0.0)
    alpha_v = serializers.FloatField(min_value=0.0)
    beta_v = serializers.FloatField(min_value=0.0)
    theta = serializers.FloatField(min_value=0.0)
    tau1 = serializers.FloatField(min_value=0.0)
    tau2 = serializers.FloatField(min_value=0.0)
    tau3 = serializers.FloatField(min_value=0.0)
    threshold = serializers.FloatField()
    centers_per_batch = serializers.IntegerField(min_value=1)
    videos_per_batch = serializers.IntegerField(min_value=2)
    iterations = serializers.IntegerField(min_value=1)
    language_lr = serializers.FloatField(min_value=0.0)
    video_lr = serializers.FloatField(min_value=0.0)
    language_epochs = serializers.IntegerField(min_value=0)
    language_batch_size = serializers.IntegerField(min_value=1)
    attention_heads = serializers.IntegerField(min_value=1)
    positional_encoding = serializers.BooleanField()
    ncut_sigma = serializers.FloatField(min_value=0.0)
    kmeans_restarts = serializers.IntegerField(min_value=1)
    kmeans_max_iter = serializers.IntegerField(min_value=1)
    center_selection = serializers.ChoiceField(choices=CENTER_SELECTIONS)
    top_n = serializers.IntegerField(min_value=1)
    workers = serializers.IntegerField(min_value=1)
    checkpoint_every = serializers.IntegerField(min_value=0)
    seed = serializers.IntegerField(min_value=0)

    def validate_dqa_lambda(self, value):
        if not 0.0 < value <= 1.0:
            raise serializers.ValidationError('lambda must lie in (0, 1].')
        return value

    def validate_threshold(self, value):
        if not 0.0 < value <= 1.0:
            raise serializers.ValidationError('threshold must lie in (0, 1].')
        return value

    def validate(self, data):
        if data['centers_per_batch'] > data['num_clusters']:
            raise serializers.ValidationError({
                'centers_per_batch': 'Cannot sample more centers than there are clusters.'
            })
        if data['joint_dim'] % data['attention_heads']:
            raise serializers.ValidationError({
                'attention_heads': 'joint_dim must be divisible by the number of heads.'
            })
        return data


class SyntheticSpecSerializer(serializers.Serializer):
    """Validates a synthetic benchmark spec (key=value text or overrides)."""
    num_atoms = serializers.IntegerField(min_value=2)
    words_per_atom = serializers.IntegerField(min_value=1)
    num_videos = serializers.IntegerField(min_value=1)
    num_frames = serializers.IntegerField(min_value=2)
    min_segment_fraction = serializers.FloatField()
    max_segment_fraction = serializers.FloatField()
    feature_dim = serializers.IntegerField(min_value=1)
    noise_std = serializers.FloatField(min_value=0.0)
    query_length = serializers.IntegerField(min_value=1)
    segments_per_video = serializers.IntegerField(min_value=1)
    seed = serializers.IntegerField(min_value=0)

    def validate(self, data):
        low, high = data['min_segment_fraction'], data['max_segment_fraction']
        for name, value in (('min_segment_fraction', low), ('max_segment_fraction', high)):
            if not 0.0 < value < 1.0:
                raise serializers.ValidationError({name: 'Segment fractions must lie in (0, 1).'})
        if low > high:
            raise serializers.ValidationError({
                'min_segment_fraction': 'Must not exceed max_segment_fraction.'
            })
        return data


class EvaluationRecordSerializer(serializers.ModelSerializer):

    class Meta:
        model = EvaluationRecord
        fields = ['id', 'run', 'top_n', 'iou_threshold', 'recall', 'created_at']
        read_only_fields = fields


class PipelineRunSerializer(serializers.ModelSerializer):
    """
    A ledger entry for one management-command invocation, with its
    evaluation rows nested when the stage produced any.
    """
    evaluations = EvaluationRecordSerializer(many=True, read_only=True)

    class Meta:
        model = PipelineRun
        fields = ['id', 'stage', 'config_digest', 'seed', 'status', 'metrics',
                  'evaluations', 'started_at', 'finished_at']
        read_only_fields = fields
