"""Variational graph autoencoder over the social network: q(Z|G), p(G|Z) and both encoder/decoder pairings."""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.metrics import roc_auc_score
from torch import nn

from src.dataset_module.social_network import (
    NormalizedView,
    SocialNetwork,
    from_index_edges,
    neighborhood_rows,
    to_torch_sparse,
)
from src.errors import ConfigError
from src.numeric import RngStream, sparse_dense_matmul

from .base_model import BaseModel

LOGVAR_MIN, LOGVAR_MAX = -10.0, 10.0
ALLOWED_PAIRINGS = {('gcn', 'inner_product'), ('mlp', 'mlp')}
ACTIVATIONS = {'relu': nn.ReLU, 'tanh': nn.Tanh}


@dataclass
class SocialPosterior:
    mu: torch.Tensor
    logvar: torch.Tensor

    @classmethod
    def from_encoding(cls, out: torch.Tensor, embed_dim: int) -> 'SocialPosterior':
        mu, logvar = out[:, :embed_dim], out[:, embed_dim:]
        return cls(mu=mu, logvar=torch.clamp(logvar, LOGVAR_MIN, LOGVAR_MAX))

    def rows(self, users: torch.Tensor) -> 'SocialPosterior':
        return SocialPosterior(mu=self.mu[users], logvar=self.logvar[users])


def sample_z(
    post: SocialPosterior,
    rng: Optional[RngStream] = None,
    eps: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Reparameterized draw ``mu + eps * exp(0.5 * logvar)``."""
    if eps is None:
        eps = rng.normal(*post.mu.shape, dtype=post.mu.dtype)
    return post.mu + eps * torch.exp(0.5 * post.logvar)


def kl_term(post: SocialPosterior) -> torch.Tensor:
    return 0.5 * torch.sum(post.mu ** 2 + torch.exp(post.logvar) - 1.0 - post.logvar)


def recon_loglik_mlp(
    dec: Callable[[torch.Tensor], torch.Tensor],
    z: torch.Tensor,
    view: NormalizedView,
    beta: float,
    users: Optional[Sequence[int]] = None,
) -> torch.Tensor:
    """``-sum_i || b_i * (a_i - f_dec(z_i)) ||^2`` with ``b_ij = beta`` on observed links."""
    if beta < 1:
        raise ConfigError(f'beta should be >= 1, but got {beta}')
    users = np.arange(view.num_users) if users is None else np.asarray(users)
    a = torch.from_numpy(neighborhood_rows(view, users)).to(z.dtype)
    b = torch.where(a > 0, torch.full_like(a, float(beta)), torch.ones_like(a))
    return -torch.sum((b * (a - dec(z))) ** 2)


def recon_loglik_ip(
    z: torch.Tensor,
    net: SocialNetwork,
    beta: float,
    users: Optional[Sequence[int]] = None,
    z_all: Optional[torch.Tensor] = None,
    nonedge_cap_threshold: int = 20000,
    nonedge_samples: int = 1024,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """Re-weighted logistic log-likelihood over unordered user pairs.

    With ``users`` given, ``z`` holds those users' rows and ``z_all`` every row; the
    result is half the row sums, so summing over a partition of the users gives the
    full pair sum. Above ``nonedge_cap_threshold`` users the non-edge part is
    estimated from ``nonedge_samples`` uniform columns per row, rescaled.
    """
    n = net.num_users
    if users is None:
        users = np.arange(n)
        z_all = z
    users = np.asarray(users, dtype=np.int64)
    if n > nonedge_cap_threshold:
        return _recon_ip_sampled(z, z_all, net, beta, users, nonedge_samples, generator)
    logits = z @ z_all.T
    adj = torch.from_numpy(net.adjacency[users].toarray()).to(z.dtype)
    off_diag = torch.ones_like(adj)
    off_diag[torch.arange(len(users)), torch.from_numpy(users)] = 0.0
    pos = beta * adj * F.logsigmoid(logits)
    neg = (1.0 - adj) * off_diag * F.logsigmoid(-logits)
    return 0.5 * torch.sum(pos + neg)


def _recon_ip_sampled(z, z_all, net, beta, users, nonedge_samples, generator):
    n = net.num_users
    total = z.new_zeros(())
    cols = torch.randint(0, n, (len(users), nonedge_samples), generator=generator)
    for row, i in enumerate(users):
        nbrs = torch.from_numpy(net.neighbors(int(i)).astype(np.int64))
        if len(nbrs):
            total = total + beta * F.logsigmoid(z_all[nbrs] @ z[row]).sum()
        cand = cols[row]
        keep = torch.ones_like(cand, dtype=torch.bool)
        keep &= cand != int(i)
        if len(nbrs):
            keep &= ~torch.isin(cand, nbrs)
        cand = cand[keep]
        if len(cand):
            scale = (n - 1 - len(nbrs)) / len(cand)
            total = total + scale * F.logsigmoid(-(z_all[cand] @ z[row])).sum()
    return 0.5 * total


def glorot_(weight: torch.Tensor) -> torch.Tensor:
    return nn.init.xavier_uniform_(weight)


class GCNEncoder(nn.Module):
    """Stacked graph convolutions ``act(A_hat H W)`` with identity input features; last layer linear."""

    def __init__(self, num_users: int, hidden_dims: Sequence[int], out_dim: int, activation: str = 'relu'):
        super().__init__()
        dims = [num_users, *hidden_dims, out_dim]
        self.weights = nn.ParameterList(
            [nn.Parameter(glorot_(torch.empty(d_in, d_out))) for d_in, d_out in zip(dims[:-1], dims[1:])]
        )
        self.act = ACTIVATIONS[activation]()

    def forward(self, a_hat: torch.Tensor) -> torch.Tensor:
        # X = I_N, so the first layer is A_hat @ W0
        h = sparse_dense_matmul(a_hat, self.weights[0])
        for w in self.weights[1:]:
            h = sparse_dense_matmul(a_hat, self.act(h) @ w)
        return h


def mlp(dims: Sequence[int], activation: str) -> nn.Sequential:
    layers = []
    for k, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        linear = nn.Linear(d_in, d_out)
        glorot_(linear.weight)
        nn.init.zeros_(linear.bias)
        layers.append(linear)
        if k < len(dims) - 2:
            layers.append(ACTIVATIONS[activation]())
    return nn.Sequential(*layers)


class MLPEncoder(nn.Module):
    def __init__(self, num_users: int, hidden_dims: Sequence[int], out_dim: int, activation: str = 'relu'):
        super().__init__()
        self.net = mlp([num_users, *hidden_dims, out_dim], activation)

    def forward(self, rows: torch.Tensor) -> torch.Tensor:
        return self.net(rows)


class MLPDecoder(nn.Module):
    def __init__(self, embed_dim: int, hidden_dims: Sequence[int], num_users: int, activation: str = 'relu'):
        super().__init__()
        self.net = mlp([embed_dim, *hidden_dims, num_users], activation)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return self.net(z)


class InnerProductDecoder(nn.Module):
    def forward(self, z_rows: torch.Tensor, z_all: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(z_rows @ z_all.T)


class GraphVAE(BaseModel):
    def __init__(
        self,
        num_users: int,
        embed_dim: int = 64,
        encoder: str = 'gcn',
        decoder: str = 'inner_product',
        hidden_dims: Sequence[int] = (64,),
        decoder_hidden_dims: Optional[Sequence[int]] = None,
        beta: float = 10.0,
        activation: str = 'relu',
        nonedge_cap_threshold: int = 20000,
        nonedge_samples: int = 1024,
    ):
        super().__init__()
        if (encoder, decoder) not in ALLOWED_PAIRINGS:
            raise ConfigError(
                f'the encoder/decoder pairing should in {sorted(ALLOWED_PAIRINGS)}, but got {(encoder, decoder)}'
            )
        if beta < 1:
            raise ConfigError(f'beta should be >= 1, but got {beta}')
        if activation not in ACTIVATIONS:
            raise ConfigError(f'the activation should in {list(ACTIVATIONS)}, but got {activation}')
        self.num_users = num_users
        self.embed_dim = embed_dim
        self.encoder_type = encoder
        self.decoder_type = decoder
        self.beta = float(beta)
        self.hidden_dims = list(hidden_dims)
        self.nonedge_cap_threshold = nonedge_cap_threshold
        self.nonedge_samples = nonedge_samples

        if encoder == 'gcn':
            self.encoder = GCNEncoder(num_users, hidden_dims, 2 * embed_dim, activation)
            self.decoder = InnerProductDecoder()
        else:
            self.encoder = MLPEncoder(num_users, hidden_dims, 2 * embed_dim, activation)
            if decoder_hidden_dims is None:
                decoder_hidden_dims = list(reversed(list(hidden_dims)))
            self.decoder = MLPDecoder(embed_dim, decoder_hidden_dims, num_users, activation)

        self.net: Optional[SocialNetwork] = None
        self.view: Optional[NormalizedView] = None
        self.a_hat: Optional[torch.Tensor] = None

    def attach(self, net: SocialNetwork, view: NormalizedView):
        if net.num_users != self.num_users:
            raise ConfigError(f'the network has {net.num_users} users but the model expects {self.num_users}')
        self.net = net
        self.view = view
        self.a_hat = to_torch_sparse(view.a_hat, dtype=next(self.parameters()).dtype)

    def _all_users(self) -> np.ndarray:
        return np.arange(self.num_users)

    def encode(self, users: Optional[Sequence[int]] = None) -> SocialPosterior:
        if self.encoder_type == 'gcn':
            out = self.encoder(self.a_hat)
            post = SocialPosterior.from_encoding(out, self.embed_dim)
            if users is not None:
                post = post.rows(torch.as_tensor(np.asarray(users), dtype=torch.long))
            return post
        users = self._all_users() if users is None else np.asarray(users)
        dtype = next(self.parameters()).dtype
        rows = torch.from_numpy(neighborhood_rows(self.view, users)).to(dtype)
        return SocialPosterior.from_encoding(self.encoder(rows), self.embed_dim)

    def recon_loglik(
        self,
        z_rows: torch.Tensor,
        users: Optional[Sequence[int]] = None,
        z_all: Optional[torch.Tensor] = None,
        generator: Optional[torch.Generator] = None,
    ) -> torch.Tensor:
        if self.decoder_type == 'inner_product':
            return recon_loglik_ip(
                z_rows,
                self.net,
                self.beta,
                users=users,
                z_all=z_all,
                nonedge_cap_threshold=self.nonedge_cap_threshold,
                nonedge_samples=self.nonedge_samples,
                generator=generator,
            )
        return recon_loglik_mlp(self.decoder, z_rows, self.view, self.beta, users=users)

    def elbo_terms(
        self,
        users: Optional[Sequence[int]] = None,
        eps: Optional[torch.Tensor] = None,
        rng: Optional[RngStream] = None,
    ) -> Tuple[torch.Tensor, torch.Tensor, SocialPosterior]:
        """Return ``(recon, kl, batch posterior)`` for a user batch (all users when None).

        ``eps`` covers every user for the inner-product decoder (it pairs each batch
        row with all rows) and only the batch rows for the MLP decoder.
        """
        if self.decoder_type == 'inner_product':
            post_all = self.encode()
            z_all = sample_z(post_all, rng=rng, eps=eps)
            if users is None:
                return self.recon_loglik(z_all), kl_term(post_all), post_all
            idx = torch.as_tensor(np.asarray(users), dtype=torch.long)
            batch_post = post_all.rows(idx)
            generator = rng.generator if rng is not None else None
            recon = self.recon_loglik(z_all[idx], users=users, z_all=z_all, generator=generator)
            return recon, kl_term(batch_post), batch_post
        batch_post = self.encode(users)
        z = sample_z(batch_post, rng=rng, eps=eps)
        return self.recon_loglik(z, users=users), kl_term(batch_post), batch_post

    def vae_loglik(self, users=None, eps=None, rng=None) -> torch.Tensor:
        recon, kl, _ = self.elbo_terms(users=users, eps=eps, rng=rng)
        return recon - kl

    @torch.no_grad()
    def posterior_mean(self) -> torch.Tensor:
        return self.encode().mu.detach()


def holdout_edges(
    net: SocialNetwork, frac: float, rng: np.random.Generator
) -> Tuple[SocialNetwork, np.ndarray, np.ndarray]:
    """Hide ``frac`` of the edges; return the reduced network, the hidden edges and as many non-edges."""
    n_hold = max(1, int(round(frac * net.num_edges)))
    order = rng.permutation(net.num_edges)
    hidden = net.edges[order[:n_hold]]
    kept = net.edges[order[n_hold:]]
    train_net = from_index_edges(net.num_users, kept)

    existing = {tuple(e) for e in net.edges.tolist()}
    negatives = set()
    while len(negatives) < n_hold:
        i, j = rng.integers(0, net.num_users, size=2)
        if i == j:
            continue
        pair = (int(min(i, j)), int(max(i, j)))
        if pair in existing or pair in negatives:
            continue
        negatives.add(pair)
    return train_net, hidden, np.array(sorted(negatives), dtype=np.int64)


def link_auc(z: torch.Tensor, pos_pairs: np.ndarray, neg_pairs: np.ndarray) -> float:
    z = z.detach().cpu().numpy()
    pairs = np.vstack([pos_pairs, neg_pairs])
    scores = np.sum(z[pairs[:, 0]] * z[pairs[:, 1]], axis=1)
    labels = np.concatenate([np.ones(len(pos_pairs)), np.zeros(len(neg_pairs))])
    return float(roc_auc_score(labels, scores))
