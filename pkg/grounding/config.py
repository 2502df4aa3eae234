"""Run configuration: settings defaults, key=value files and overrides."""

import dataclasses
import hashlib
import json
import logging
from pathlib import Path

from django.conf import settings

from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class Config:
    """
    Hyperparameters of the whole pipeline.

    Symbol map: num_necks=N_e, num_clusters=N_c, neck_dim=d_e,
    joint_dim=d_e', sentence_dim=d_r, word_dim=d_w, max_query_length=L_max,
    centers_per_batch=J, videos_per_batch=Z, iterations=L (outer loop).
    ``decoder_hidden`` of 0 means "use neck_dim"; ``ncut_sigma`` of 0 means
    the median pairwise distance of the points being cut.
    """
    num_necks: int = 4
    num_clusters: int = 16
    neck_dim: int = 32
    joint_dim: int = 64
    sentence_dim: int = 64
    word_dim: int = 32
    max_query_length: int = 10
    decoder_hidden: int = 0
    dqa_lambda: float = 0.5
    alpha_w: float = 0.5
    beta_w: float = 0.5
    alpha_v: float = 0.5
    beta_v: float = 0.5
    theta: float = 1.0
    tau1: float = 0.0001
    tau2: float = 0.0001
    tau3: float = 0.5
    threshold: float = 0.9
    centers_per_batch: int = 4
    videos_per_batch: int = 8
    iterations: int = 5
    language_lr: float = 0.0001
    video_lr: float = 0.0005
    language_epochs: int = 30
    language_batch_size: int = 16
    attention_heads: int = 4
    positional_encoding: bool = False
    ncut_sigma: float = 0.0
    kmeans_restarts: int = 8
    kmeans_max_iter: int = 100
    center_selection: str = 'center'
    top_n: int = 5
    workers: int = 1
    checkpoint_every: int = 0
    seed: int = 0

    @property
    def decoder_width(self):
        return self.decoder_hidden or self.neck_dim

    def as_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **changes):
        return build_config({**self.as_dict(), **changes})

    def digest(self):
        payload = json.dumps(self.as_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()


FIELD_NAMES = tuple(f.name for f in dataclasses.fields(Config))


def parse_key_value_text(text, source='<text>'):
    """Parse flat ``key=value`` lines; ``#`` starts a comment."""
    values = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigurationError({f'{source}:{line_no}': [f'expected key=value, got {raw!r}']})
        key, value = (part.strip() for part in line.split('=', 1))
        values[key] = value
    return values


def read_key_value_file(path):
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as exc:
        raise ConfigurationError({str(path): [str(exc)]}) from exc
    return parse_key_value_text(text, source=str(path))


def build_config(values):
    """Validate a full mapping of raw values into a ``Config``."""
    from .serializers import ConfigSerializer

    unknown = sorted(set(values) - set(FIELD_NAMES))
    if unknown:
        raise ConfigurationError({key: ['unknown configuration key'] for key in unknown})
    serializer = ConfigSerializer(data=values)
    if not serializer.is_valid():
        raise ConfigurationError(serializer.errors)
    return Config(**serializer.validated_data)


def load_config(path=None, **overrides):
    """
    Defaults from ``settings.DSCNET`` (environment applied there), then the
    key=value file at ``path``, then keyword overrides.
    """
    values = dict(getattr(settings, 'DSCNET', {}))
    for name in FIELD_NAMES:
        values.setdefault(name, getattr(Config, name))
    if path is not None:
        values.update(read_key_value_file(path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    config = build_config(values)
    logger.debug('Loaded config %s', config.digest()[:12])
    return config


def write_config(config, path):
    lines = [f'{key}={value}' for key, value in config.as_dict().items()]
    Path(path).write_text('\n'.join(lines) + '\n', encoding='utf-8')
