"""Error hierarchy for the grounding pipeline.

Management commands turn any ``GroundingError`` into a ``CommandError``;
argument misuse (bad shapes, out-of-range indices) stays ``ValueError``.
"""


class GroundingError(Exception):
    """Base class for pipeline failures."""


class FeatureFileError(GroundingError):
    """A frame-feature or matrix container could not be read."""


class CorpusError(GroundingError):
    """A query corpus or embedding table could not be read."""


class CheckpointError(GroundingError):
    """A checkpoint is corrupted or was written by another format version."""


class ConfigurationError(GroundingError):
    """A run config or synthetic spec failed validation."""

    def __init__(self, errors):
        self.errors = errors
        details = '; '.join(f'{field}: {", ".join(map(str, msgs))}' for field, msgs in errors.items())
        super().__init__(f'Invalid configuration ({details})')


class ClusteringError(GroundingError):
    """K-means could not run on the given points."""


class NCutError(GroundingError):
    """The affinity graph cannot be bipartitioned."""


class TrainingDivergedError(GroundingError):
    """A loss became non-finite during training."""

    def __init__(self, message, batch_ids=()):
        self.batch_ids = tuple(batch_ids)
        if self.batch_ids:
            message = f'{message} (batch: {", ".join(self.batch_ids)})'
        super().__init__(message)


class EvaluationError(GroundingError):
    """Predictions and ground truth do not line up."""
