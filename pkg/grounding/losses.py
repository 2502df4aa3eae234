"""
Training objectives of both modules.

Language side: reconstruction cross entropy, sentence-level MSE and the
neck decorrelation penalty, combined into L_w. Video side: the specific
attention branch loss, the foreground triplet loss and the frame grounding
loss, combined into L_v. Batch-level values are sums over queries/videos.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

COSINE_EPS = 1e-8
PROBABILITY_CLAMP = 1e-7


@dataclass
class LanguageLoss:
    cel: torch.Tensor
    mse: torch.Tensor
    dqa: torch.Tensor
    total: torch.Tensor

    def as_floats(self):
        return {name: float(getattr(self, name)) for name in ('cel', 'mse', 'dqa', 'total')}


@dataclass
class VideoLoss:
    cls: torch.Tensor
    sab: torch.Tensor
    trip: torch.Tensor
    total: torch.Tensor

    def as_floats(self):
        return {name: float(getattr(self, name)) for name in ('cls', 'sab', 'trip', 'total')}


def _as_token_batch(scores, tokens, lengths):
    if scores.dim() == 2:
        scores = scores.unsqueeze(0)
        tokens = torch.as_tensor(tokens, dtype=torch.long).reshape(1, -1)
        if lengths is None:
            lengths = torch.tensor([tokens.shape[1]])
    tokens = torch.as_tensor(tokens, dtype=torch.long)
    if lengths is None:
        lengths = torch.full((tokens.shape[0],), tokens.shape[1])
    lengths = torch.as_tensor(lengths, dtype=torch.long).reshape(-1)
    rows = scores.shape[1]
    if tokens.shape[1] > rows:
        raise ValueError(f'{tokens.shape[1]} target tokens but only {rows} score rows')
    if tokens.shape[1] < rows:
        tokens = F.pad(tokens, (0, rows - tokens.shape[1]))
    if tokens.shape[0] != scores.shape[0] or lengths.shape[0] != scores.shape[0]:
        raise ValueError('scores, tokens and lengths disagree on the batch size')
    if bool((lengths < 1).any()) or bool((lengths > rows).any()):
        raise ValueError('every query length must lie in [1, L_max]')
    return scores, tokens, lengths


def loss_cel(scores, tokens, lengths=None):
    """
    -sum_i log softmax(P[i])[truth_i] over true positions only.

    ``scores`` is (L_max, N_w) or (B, L_max, N_w); ``tokens`` holds the
    targets (padded or true length); ``lengths`` the true lengths.
    """
    scores, tokens, lengths = _as_token_batch(scores, tokens, lengths)
    log_probs = F.log_softmax(scores, dim=-1).gather(-1, tokens.unsqueeze(-1)).squeeze(-1)
    valid = torch.arange(scores.shape[1]).unsqueeze(0) < lengths.unsqueeze(1)
    return -torch.where(valid, log_probs, torch.zeros_like(log_probs)).sum()


def loss_dqa(necks, lam):
    """Frobenius norm of E^T E - lambda I, summed over the batch."""
    if necks.dim() == 2:
        necks = necks.unsqueeze(0)
    gram = necks.transpose(-1, -2) @ necks
    eye = torch.eye(gram.shape[-1], dtype=gram.dtype)
    return torch.linalg.matrix_norm(gram - lam * eye, ord='fro').sum()


def loss_mse(sentence_enc, sentence_dec):
    """Mean over d_r of squared differences, summed over the batch."""
    if sentence_enc.shape != sentence_dec.shape:
        raise ValueError(f'sentence representations differ in shape: {tuple(sentence_enc.shape)} '
                         f'vs {tuple(sentence_dec.shape)}')
    return ((sentence_enc - sentence_dec) ** 2).mean(dim=-1).sum()


def combine_language(cel, mse, dqa, alpha_w, beta_w):
    return cel + alpha_w * mse + beta_w * dqa


def loss_language(scores, tokens, lengths, necks, sentence_enc, sentence_dec, config):
    cel = loss_cel(scores, tokens, lengths)
    mse = loss_mse(sentence_enc, sentence_dec)
    dqa = loss_dqa(necks, config.dqa_lambda)
    return LanguageLoss(cel, mse, dqa, combine_language(cel, mse, dqa, config.alpha_w, config.beta_w))


def cosine_distance(a, b, eps=COSINE_EPS):
    """1 - cosine similarity along the last axis, with norms floored at ``eps``."""
    dot = (a * b).sum(dim=-1)
    norms = a.norm(dim=-1).clamp_min(eps) * b.norm(dim=-1).clamp_min(eps)
    return 1.0 - dot / norms


def pairwise_cosine_distance(x, eps=COSINE_EPS):
    """(..., n, D) -> (..., n, n) cosine distances."""
    unit = x / x.norm(dim=-1, keepdim=True).clamp_min(eps)
    return 1.0 - unit @ unit.transpose(-1, -2)


def loss_sab(positives, negatives, tau1, tau2, theta):
    """
    Specific attention branch loss.

    ``positives``/``negatives`` are (J, Z, D): composed features of Z videos
    for J sampled centers. Positive features of different videos about the
    same center are pulled together (hinge at tau1) and must stay closer
    than each video's own negative feature (hinge at tau2).
    """
    if positives.shape != negatives.shape or positives.dim() != 3:
        raise ValueError('positives and negatives must both be (J, Z, D)')
    num_videos = positives.shape[1]
    between = pairwise_cosine_distance(positives)
    own_negative = cosine_distance(positives, negatives).unsqueeze(-1)
    others = ~torch.eye(num_videos, dtype=torch.bool)
    zero = torch.zeros((), dtype=positives.dtype)
    sim = torch.where(others, F.relu(between - tau1), zero)
    dis = torch.where(others, F.relu(between - own_negative + tau2), zero)
    return (sim + theta * dis).sum()


def loss_trip(features, labels, tau3):
    """
    Foreground triplet loss for one video.

    Every foreground frame u is an anchor; v is its closest other foreground
    frame and o its farthest background frame. Returns ``(loss, used)``;
    ``used`` is False when there are fewer than two foreground frames or no
    background frame, in which case the loss is zero.
    """
    labels = torch.as_tensor(labels).bool()
    foreground = torch.nonzero(labels).flatten()
    background = torch.nonzero(~labels).flatten()
    if len(foreground) < 2 or len(background) < 1:
        return features.sum() * 0.0, False
    distances = pairwise_cosine_distance(features)
    fg_fg = distances[foreground][:, foreground]
    fg_fg = fg_fg.masked_fill(torch.eye(len(foreground), dtype=torch.bool), float('inf'))
    closest_positive = fg_fg.min(dim=1).values
    farthest_negative = distances[foreground][:, background].max(dim=1).values
    return F.relu(closest_positive - farthest_negative + tau3).sum(), True


def loss_cls(specific, foreground, labels):
    """
    Binary cross entropy of h[j, t] = A_spe[j, t] * A_fore[t] against Y[j, t].

    ``specific`` and ``labels`` are (N_c, T); ``foreground`` is (T,).
    """
    if specific.shape != tuple(labels.shape) or specific.shape[-1] != foreground.shape[-1]:
        raise ValueError('A_spe, A_fore and Y shapes do not line up')
    labels = torch.as_tensor(labels, dtype=specific.dtype)
    h = (specific * foreground.unsqueeze(0)).clamp(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP)
    return -(labels * torch.log(h) + (1.0 - labels) * torch.log(1.0 - h)).sum()


def combine_video(cls, sab, trip, alpha_v, beta_v):
    return cls + alpha_v * sab + beta_v * trip


def loss_video(cls, sab, trip, config):
    return VideoLoss(cls, sab, trip, combine_video(cls, sab, trip, config.alpha_v, config.beta_v))
