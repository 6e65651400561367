"""Seed-set fusion networks producing the aggregate representation h_I."""

from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn

from src.errors import ConfigError
from src.numeric import softmax

FUSION_MODES = ('coattention', 'meanpool_concat', 'separate_attentions')


@dataclass
class FusionOutput:
    alpha: torch.Tensor  # (B, L), zero on padding
    h: torch.Tensor  # (B, D)
    scores: torch.Tensor  # (B, L) pre-softmax G_k
    alpha_sender: Optional[torch.Tensor] = None


def _batched(v_s, v_t, mask):
    if v_s.dim() == 2:
        v_s, v_t = v_s.unsqueeze(0), v_t.unsqueeze(0)
        mask = None if mask is None else mask.unsqueeze(0)
    if mask is None:
        mask = torch.ones(v_s.shape[:2], dtype=torch.bool)
    return v_s, v_t, mask


def coattend(
    v_s: torch.Tensor,
    v_t: torch.Tensor,
    weight: torch.Tensor,
    mask: Optional[torch.Tensor] = None,
) -> FusionOutput:
    """``G_k = tanh(v_s_k^T W v_t_k)``, ``alpha = softmax(G)``, ``h = sum_k alpha_k v_t_k``.

    Accepts one sequence ``(L, D)`` or a padded batch ``(B, L, D)`` with ``mask``.
    """
    v_s, v_t, mask = _batched(v_s, v_t, mask)
    scores = torch.tanh(torch.einsum('bld,de,ble->bl', v_s, weight, v_t))
    alpha = softmax(scores, dim=-1, mask=mask)
    h = torch.einsum('bl,bld->bd', alpha, v_t)
    return FusionOutput(alpha=alpha, h=h, scores=scores)


class BaseFusion(nn.Module):
    def forward(self, v_s: torch.Tensor, v_t: torch.Tensor, mask: torch.Tensor) -> FusionOutput:
        raise NotImplementedError


class CoAttentionFusion(BaseFusion):
    def __init__(self, dim: int):
        super().__init__()
        self.bilinear = nn.Parameter(nn.init.xavier_uniform_(torch.empty(dim, dim)))

    def forward(self, v_s, v_t, mask):
        return coattend(v_s, v_t, self.bilinear, mask)


class MeanPoolFusion(BaseFusion):
    """Mean of ``[v_s || v_t]`` over the seeds, then a dense layer."""

    def __init__(self, dim: int):
        super().__init__()
        self.dense = nn.Linear(2 * dim, dim)
        nn.init.xavier_uniform_(self.dense.weight)
        nn.init.zeros_(self.dense.bias)

    def forward(self, v_s, v_t, mask):
        v_s, v_t, mask = _batched(v_s, v_t, mask)
        weights = mask.to(v_s.dtype)
        alpha = weights / weights.sum(dim=1, keepdim=True)
        pooled = torch.einsum('bl,bld->bd', alpha, torch.cat([v_s, v_t], dim=-1))
        return FusionOutput(alpha=alpha, h=self.dense(pooled), scores=torch.zeros_like(alpha))


class SeparateAttentionFusion(BaseFusion):
    """Independent attentions over the sender and temporal sequences; contexts concatenated and projected."""

    def __init__(self, dim: int):
        super().__init__()
        self.query_sender = nn.Parameter(nn.init.xavier_uniform_(torch.empty(1, dim)).squeeze(0))
        self.query_temporal = nn.Parameter(nn.init.xavier_uniform_(torch.empty(1, dim)).squeeze(0))
        self.dense = nn.Linear(2 * dim, dim)
        nn.init.xavier_uniform_(self.dense.weight)
        nn.init.zeros_(self.dense.bias)

    def forward(self, v_s, v_t, mask):
        v_s, v_t, mask = _batched(v_s, v_t, mask)
        scores_s = torch.tanh(v_s @ self.query_sender)
        scores_t = torch.tanh(v_t @ self.query_temporal)
        alpha_s = softmax(scores_s, dim=-1, mask=mask)
        alpha_t = softmax(scores_t, dim=-1, mask=mask)
        context = torch.cat(
            [torch.einsum('bl,bld->bd', alpha_s, v_s), torch.einsum('bl,bld->bd', alpha_t, v_t)], dim=-1
        )
        return FusionOutput(alpha=alpha_t, h=self.dense(context), scores=scores_t, alpha_sender=alpha_s)


def build_fusion(mode: str, dim: int) -> BaseFusion:
    if mode == 'coattention':
        return CoAttentionFusion(dim)
    elif mode == 'meanpool_concat':
        return MeanPoolFusion(dim)
    elif mode == 'separate_attentions':
        return SeparateAttentionFusion(dim)
    raise ConfigError(f'the fusion mode should in {list(FUSION_MODES)}, but got {mode}')
