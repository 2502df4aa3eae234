"""
Video-side model: frame encoder, specific attention branch and foreground
attention branch.
"""

import math
from dataclasses import dataclass

import torch
from torch import nn


@dataclass
class SpecificAttention:
    """``positive`` is A_spe (rows sum to 1); ``negative`` is B_spe = (1 - A_spe) / T."""
    positive: torch.Tensor
    negative: torch.Tensor


@dataclass
class ForegroundOutputs:
    features: torch.Tensor
    probabilities: torch.Tensor


@dataclass
class VideoOutputs:
    encoded: torch.Tensor
    projected_centers: torch.Tensor
    attention: SpecificAttention
    foreground: ForegroundOutputs


def sinusoidal_positions(length, dim, dtype=torch.float32):
    position = torch.arange(length, dtype=dtype).unsqueeze(1)
    rates = torch.exp(torch.arange(0, dim, 2, dtype=dtype) * (-math.log(10000.0) / dim))
    table = torch.zeros(length, dim, dtype=dtype)
    table[:, 0::2] = torch.sin(position * rates)
    table[:, 1::2] = torch.cos(position * rates[:dim // 2])
    return table


class FrameEncoder(nn.Module):
    """Affine projection d_v -> d_e', then one residual multi-head self-attention layer."""

    def __init__(self, in_dim, joint_dim, heads=4, positional=False):
        super().__init__()
        self.projection = nn.Linear(in_dim, joint_dim)
        self.attention = nn.MultiheadAttention(joint_dim, heads, batch_first=True)
        self.positional = positional

    def forward(self, frames):
        projected = self.projection(frames).unsqueeze(0)
        if self.positional:
            projected = projected + sinusoidal_positions(projected.shape[1], projected.shape[2], projected.dtype)
        attended, _ = self.attention(projected, projected, projected, need_weights=False)
        return (projected + attended)[0]


class ForegroundBranch(nn.Module):
    """Two temporal convolutions (kernel 3) give F-tilde; a per-frame sigmoid head gives A_fore."""

    def __init__(self, in_dim, joint_dim):
        super().__init__()
        self.conv1 = nn.Conv1d(in_dim, joint_dim, kernel_size=3, padding=1)
        self.conv2 = nn.Conv1d(joint_dim, joint_dim, kernel_size=3, padding=1)
        self.head = nn.Linear(joint_dim, 1)

    def forward(self, frames):
        hidden = torch.relu(self.conv1(frames.t().unsqueeze(0)))
        features = self.conv2(hidden)[0].t()
        return ForegroundOutputs(features, torch.sigmoid(self.head(features)).squeeze(-1))


def specific_attention(projected_centers, encoded):
    """A_spe = row-softmax(C-hat F-hat^T), B_spe = (1 - A_spe) / T."""
    if projected_centers.shape[-1] != encoded.shape[-1]:
        raise ValueError(f'center width {projected_centers.shape[-1]} != frame width {encoded.shape[-1]}')
    positive = torch.softmax(projected_centers @ encoded.t(), dim=-1)
    return SpecificAttention(positive, (1.0 - positive) / encoded.shape[0])


def compose_activity(attention, encoded, j, sign='positive'):
    """S-tilde for center ``j``: its A_spe row (or B_spe row for ``negative``) times F-hat."""
    if sign not in ('positive', 'negative'):
        raise ValueError(f'sign must be positive or negative, got {sign!r}')
    rows = attention.positive if sign == 'positive' else attention.negative
    if not 0 <= j < rows.shape[0]:
        raise IndexError(f'center index {j} out of range for {rows.shape[0]} centers')
    return rows[j] @ encoded


class VideoGroundingModel(nn.Module):

    def __init__(self, feature_dim, config):
        super().__init__()
        self.feature_dim = feature_dim
        self.frame_encoder = FrameEncoder(feature_dim, config.joint_dim, config.attention_heads,
                                          config.positional_encoding)
        self.center_projection = nn.Linear(config.neck_dim, config.joint_dim)
        self.foreground = ForegroundBranch(feature_dim, config.joint_dim)

    def _as_tensor(self, frames):
        dtype = self.center_projection.weight.dtype
        return torch.as_tensor(frames, dtype=dtype)

    def encode(self, frames):
        return self.frame_encoder(self._as_tensor(frames))

    def project_centers(self, centers):
        return self.center_projection(self._as_tensor(centers))

    def forward(self, frames, centers):
        frames = self._as_tensor(frames)
        encoded = self.frame_encoder(frames)
        projected = self.project_centers(centers)
        return VideoOutputs(encoded, projected, specific_attention(projected, encoded), self.foreground(frames))
