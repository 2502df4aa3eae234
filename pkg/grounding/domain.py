"""Value types shared by every pipeline stage."""

from dataclasses import dataclass, field

import numpy as np

UNK_TOKEN = '<unk>'
PAD_TOKEN = '<pad>'


@dataclass(frozen=True, eq=False)
class FrameFeatureSequence:
    """Per-video matrix of T frame feature vectors, shape (T, d_v)."""

    video_id: str
    features: np.ndarray

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError(f'{self.video_id}: expected a (T >= 1, d_v) matrix, got {self.features.shape}')

    @property
    def num_frames(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]


@dataclass(frozen=True)
class QueryTokens:
    """Vocabulary indices of one query, true length only (no padding)."""

    query_id: str
    tokens: tuple

    def __post_init__(self):
        if not self.tokens:
            raise ValueError(f'{self.query_id}: a query needs at least one token')

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    """Word list plus an (N_w, d_w) embedding matrix; row i embeds words[i]."""

    words: tuple
    rows: np.ndarray
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.words) < 2:
            raise ValueError('an embedding table needs at least two entries')
        if self.rows.shape[0] != len(self.words):
            raise ValueError(f'{len(self.words)} words but {self.rows.shape[0]} embedding rows')
        if not np.all(np.isfinite(self.rows)):
            raise ValueError('embedding rows must be finite')
        if UNK_TOKEN not in self.words:
            raise ValueError(f'embedding table must reserve {UNK_TOKEN!r}')
        object.__setattr__(self, '_index', {word: i for i, word in enumerate(self.words)})

    @classmethod
    def from_vocabulary(cls, words, dim, seed=0):
        """Random table over ``words`` with the reserved PAD and UNK entries appended."""
        words = [w for w in words if w not in (PAD_TOKEN, UNK_TOKEN)] + [PAD_TOKEN, UNK_TOKEN]
        rng = np.random.default_rng(seed)
        rows = rng.normal(0.0, 1.0, size=(len(words), dim)).astype(np.float32)
        rows[len(words) - 2] = 0.0
        return cls(tuple(words), rows)

    @property
    def vocab_size(self):
        return len(self.words)

    @property
    def dim(self):
        return self.rows.shape[1]

    @property
    def unk_index(self):
        return self._index[UNK_TOKEN]

    @property
    def pad_index(self):
        return self._index.get(PAD_TOKEN)

    def index_of(self, word):
        return self._index.get(word, self.unk_index)


@dataclass(frozen=True, order=True)
class Segment:
    """Inclusive frame interval [start, end] with a ranking score."""

    start: int
    end: int
    score: float = 0.0

    def __post_init__(self):
        if self.start < 0 or self.end < self.start:
            raise ValueError(f'invalid segment [{self.start}, {self.end}]')

    @property
    def length(self):
        return self.end - self.start + 1


@dataclass(frozen=True)
class GroundingResult:
    """Ranked candidate segments for one (video, query) pair."""

    video_id: str
    query_id: str
    segments: tuple = ()

    def __post_init__(self):
        scores = [s.score for s in self.segments]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError(f'{self.query_id}: segments must be sorted by descending score')
