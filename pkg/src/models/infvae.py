"""The full diffusion model: social VAE, sender/receiver roles, temporal influence and seed fusion."""

from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from src.dataset_module.cascade_ds import Episode, collate_episodes
from src.errors import ConfigError
from src.metrics.ranking_metrics import RankResult, rank_candidates
from src.numeric import RngStream

from .base_model import BaseModel
from .fusion import FUSION_MODES, FusionOutput, build_fusion
from .graph_vae import GraphVAE
from .temporal import TemporalInfluence

NETWORK_BLOCK = ('vae.',)


def influence_prob(h: torch.Tensor, v_r: torch.Tensor) -> torch.Tensor:
    """``sigma(h_I^T v^r_j)``; ``v_r`` may be one receiver vector or a stack of them."""
    return torch.sigmoid(v_r @ h if v_r.dim() > 1 else torch.dot(h, v_r))


def diffusion_loglik(
    logits: torch.Tensor,
    target_mask: torch.Tensor,
    negative_mask: torch.Tensor,
    eta: Union[str, float] = 'balanced',
    negative_scale: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Re-weighted Bernoulli log-likelihood summed over the episodes of a batch.

    ``eta='balanced'`` weighs positives by ``|negatives| / |C|`` per episode.
    ``negative_scale`` rescales a sub-sampled negative term back to the full complement.
    """
    pos = target_mask.to(logits.dtype)
    neg = negative_mask.to(logits.dtype)
    if eta == 'balanced':
        eta_b = neg.sum(dim=1) / pos.sum(dim=1).clamp(min=1.0)
    else:
        eta_b = torch.full((logits.shape[0],), float(eta), dtype=logits.dtype)
    if negative_scale is None:
        negative_scale = torch.ones_like(eta_b)
    pos_term = (pos * F.logsigmoid(logits)).sum(dim=1)
    neg_term = (neg * F.logsigmoid(-logits)).sum(dim=1)
    return torch.sum(eta_b * pos_term + negative_scale * neg_term)


def social_reg(
    sender: torch.Tensor,
    receiver: torch.Tensor,
    mu: torch.Tensor,
    popularity: torch.Tensor,
    lambda_s: float,
    lambda_r: float,
    lambda_p: float,
) -> torch.Tensor:
    """``sum_i lambda_s/2 |v^s_i - mu_i|^2 + lambda_r/2 |v^r_i - mu_i|^2 + lambda_p/2 |v^p_i|^2``."""
    for name, value in (('lambda_s', lambda_s), ('lambda_r', lambda_r), ('lambda_p', lambda_p)):
        if value < 0:
            raise ConfigError(f'{name} should be >= 0, but got {value}')
    return (
        0.5 * lambda_s * torch.sum((sender - mu) ** 2)
        + 0.5 * lambda_r * torch.sum((receiver - mu) ** 2)
        + 0.5 * lambda_p * torch.sum(popularity ** 2)
    )


class InfVAE(BaseModel):
    def __init__(
        self,
        num_users: int,
        embed_dim: int = 64,
        encoder: str = 'gcn',
        decoder: str = 'inner_product',
        hidden_dims: Sequence[int] = (64,),
        decoder_hidden_dims: Optional[Sequence[int]] = None,
        activation: str = 'relu',
        beta: float = 10.0,
        lambda_s: float = 0.01,
        lambda_r: float = 0.1,
        lambda_p: float = 0.1,
        eta: Union[str, float] = 'balanced',
        fusion: str = 'coattention',
        tie_sender_receiver: bool = False,
        k_max: int = 64,
        init_std: float = 0.1,
        negative_cap: Optional[int] = None,
        nonedge_cap_threshold: int = 20000,
        nonedge_samples: int = 1024,
    ):
        super().__init__()
        if embed_dim <= 0 or embed_dim % 2 != 0:
            raise ConfigError(f'the embedding dim should be even and positive, but got {embed_dim}')
        if fusion not in FUSION_MODES:
            raise ConfigError(f'the fusion mode should in {list(FUSION_MODES)}, but got {fusion}')
        if eta != 'balanced' and float(eta) < 0:
            raise ConfigError(f'eta should be "balanced" or >= 0, but got {eta}')
        for name, value in (('lambda_s', lambda_s), ('lambda_r', lambda_r), ('lambda_p', lambda_p)):
            if value < 0:
                raise ConfigError(f'{name} should be >= 0, but got {value}')
        self.num_users = num_users
        self.embed_dim = embed_dim
        self.lambda_s = float(lambda_s)
        self.lambda_r = float(lambda_r)
        self.lambda_p = float(lambda_p)
        self.eta = eta if eta == 'balanced' else float(eta)
        self.fusion_mode = fusion
        self.tie_sender_receiver = tie_sender_receiver
        self.negative_cap = negative_cap

        self.vae = GraphVAE(
            num_users,
            embed_dim=embed_dim,
            encoder=encoder,
            decoder=decoder,
            hidden_dims=hidden_dims,
            decoder_hidden_dims=decoder_hidden_dims,
            beta=beta,
            activation=activation,
            nonedge_cap_threshold=nonedge_cap_threshold,
            nonedge_samples=nonedge_samples,
        )
        self.sender = nn.Parameter(torch.randn(num_users, embed_dim) * init_std)
        if tie_sender_receiver:
            # one tensor under both names; named_parameters reports it once as ``sender``
            self.receiver = self.sender
        else:
            self.receiver = nn.Parameter(torch.randn(num_users, embed_dim) * init_std)
        self.temporal = TemporalInfluence(num_users, embed_dim, k_max=k_max, init_std=init_std)
        self.fusion = build_fusion(fusion, embed_dim)
        self.register_buffer('mu_anchor', torch.zeros(num_users, embed_dim), persistent=False)

    def network_names(self) -> List[str]:
        return self.param_store().names(NETWORK_BLOCK)

    def diffusion_names(self) -> List[str]:
        return [n for n in self.param_store().names() if not n.startswith(NETWORK_BLOCK)]

    def network_parameters(self) -> List[nn.Parameter]:
        return [p for _, p in self.param_store().named(NETWORK_BLOCK)]

    def diffusion_parameters(self) -> List[nn.Parameter]:
        store = self.param_store()
        return [store.tensor(n) for n in self.diffusion_names()]

    @torch.no_grad()
    def refresh_anchor(self) -> torch.Tensor:
        """Cache ``E_q[Z] = mu_phi`` for the diffusion phase."""
        self.mu_anchor = self.vae.posterior_mean().to(self.sender.dtype)
        return self.mu_anchor

    def fuse(self, batch: Dict[str, torch.Tensor]) -> FusionOutput:
        seed_idx, seed_mask = batch['seed_idx'], batch['seed_mask']
        v_s = self.sender[seed_idx] * seed_mask.unsqueeze(-1).to(self.sender.dtype)
        v_t = self.temporal(seed_idx, seed_mask)
        return self.fusion(v_s, v_t, seed_mask)

    def logits(self, batch: Dict[str, torch.Tensor], fused: Optional[FusionOutput] = None) -> torch.Tensor:
        fused = fused if fused is not None else self.fuse(batch)
        return fused.h @ self.receiver.T

    def _negatives(self, batch, generator: Optional[torch.Generator] = None):
        negative_mask = ~batch['target_mask'] & ~batch['seed_set_mask']
        if self.negative_cap is None:
            return negative_mask, None
        counts = negative_mask.sum(dim=1)
        if int(counts.max()) <= self.negative_cap:
            return negative_mask, None
        # uniform sub-sample of at most negative_cap negatives per episode
        noise = torch.rand(negative_mask.shape, generator=generator, dtype=torch.float64)
        noise = noise.masked_fill(~negative_mask, -1.0)
        keep_idx = noise.topk(self.negative_cap, dim=1).indices
        sampled = torch.zeros_like(negative_mask).scatter_(1, keep_idx, True) & negative_mask
        scale = counts.to(self.sender.dtype) / sampled.sum(dim=1).clamp(min=1).to(self.sender.dtype)
        return sampled, scale

    def episode_loglik(self, batch: Dict[str, torch.Tensor], generator: Optional[torch.Generator] = None):
        logits = self.logits(batch)
        negative_mask, scale = self._negatives(batch, generator)
        return diffusion_loglik(logits, batch['target_mask'], negative_mask, self.eta, negative_scale=scale)

    def social_reg(self, mu: Optional[torch.Tensor] = None) -> torch.Tensor:
        mu = self.mu_anchor if mu is None else mu
        return social_reg(
            self.sender,
            self.receiver,
            mu,
            self.temporal.popularity,
            self.lambda_s,
            self.lambda_r,
            self.lambda_p,
        )

    def network_loss(
        self,
        users: Optional[Sequence[int]] = None,
        eps: Optional[torch.Tensor] = None,
        rng: Optional[RngStream] = None,
    ) -> torch.Tensor:
        """Negated network-phase objective on a user batch: ELBO plus the role-coupling penalties at ``mu``."""
        recon, kl, post = self.vae.elbo_terms(users=users, eps=eps, rng=rng)
        if users is None:
            sender, receiver = self.sender, self.receiver
        else:
            idx = torch.as_tensor(np.asarray(users), dtype=torch.long)
            sender, receiver = self.sender[idx], self.receiver[idx]
        coupling = 0.5 * self.lambda_s * torch.sum((sender - post.mu) ** 2) + 0.5 * self.lambda_r * torch.sum(
            (receiver - post.mu) ** 2
        )
        return -(recon - kl) + coupling

    def diffusion_loss(
        self,
        batch: Dict[str, torch.Tensor],
        num_train_episodes: Optional[int] = None,
        generator: Optional[torch.Generator] = None,
    ) -> torch.Tensor:
        """Negated diffusion-phase objective; the penalty is spread over the epoch's batches."""
        batch_size = batch['seed_idx'].shape[0]
        share = 1.0 if not num_train_episodes else batch_size / num_train_episodes
        return -self.episode_loglik(batch, generator) + share * self.social_reg()

    def map_objective(
        self,
        batch: Dict[str, torch.Tensor],
        eps: Optional[torch.Tensor] = None,
        rng: Optional[RngStream] = None,
    ) -> torch.Tensor:
        """Full objective to maximise: ``L_VAE + sum L_diff - social_reg`` with the live posterior mean."""
        recon, kl, post = self.vae.elbo_terms(eps=eps, rng=rng)
        return recon - kl + self.episode_loglik(batch) - self.social_reg(mu=post.mu)

    @torch.no_grad()
    def score_episodes(self, episodes: Sequence[Episode]) -> np.ndarray:
        batch = collate_episodes(episodes, self.num_users)
        return self.logits(batch).cpu().numpy()

    @torch.no_grad()
    def rank_inactive(self, episode: Episode) -> RankResult:
        return rank_candidates(self.score_episodes([episode])[0], episode)

