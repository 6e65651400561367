"""Finite-difference verification of every objective term on a small random instance."""

from itertools import product
from typing import Callable, Dict, Sequence

import numpy as np
import torch
from loguru import logger

from src.dataset_module.cascade_ds import Cascade, collate_episodes, make_episodes
from src.dataset_module.social_network import SocialNetwork, normalized_laplacian
from src.errors import ConfigError
from src.models.fusion import FUSION_MODES
from src.models.infvae import InfVAE
from src.numeric import GradCheck, RngStream, gradcheck_tensor
from src.synth.barabasi_albert import BaParams, generate_ba

TERMS = ('vae', 'diff', 'reg', 'map')
VARIANTS = {
    'gcn_ip': {'encoder': 'gcn', 'decoder': 'inner_product'},
    'mlp_mlp': {'encoder': 'mlp', 'decoder': 'mlp'},
}


def random_instance(num_users: int = 20, num_episodes: int = 5, seed: int = 0):
    """A BA graph and ``num_episodes`` episodes cut from random activation orders."""
    net = generate_ba(BaParams(n=num_users, m=2, seed=seed))
    rng = np.random.default_rng(seed)
    episodes = []
    c_idx = 0
    while len(episodes) < num_episodes:
        users = rng.permutation(num_users)[: int(rng.integers(3, 8))]
        episodes.extend(make_episodes(Cascade(id=f'g{c_idx}', users=tuple(users.tolist()))))
        c_idx += 1
    return net, episodes[:num_episodes]


def term_loss(model: InfVAE, term: str, batch: Dict[str, torch.Tensor], eps: torch.Tensor) -> Callable[[], torch.Tensor]:
    if term == 'vae':
        return lambda: -model.vae.vae_loglik(eps=eps)
    if term == 'diff':
        return lambda: -model.episode_loglik(batch)
    if term == 'reg':
        return lambda: model.social_reg(mu=model.vae.encode().mu)
    if term == 'map':
        return lambda: -model.map_objective(batch, eps=eps)
    raise ConfigError(f'the gradcheck term should in {list(TERMS)}, but got {term}')


def check_model(
    model: InfVAE,
    net: SocialNetwork,
    episodes,
    terms: Sequence[str] = TERMS,
    tensor: str = 'all',
    points: int = 100,
    h: float = 1e-5,
    seed: int = 0,
    floor: bool = True,
) -> Dict[str, GradCheck]:
    """One ``GradCheck`` per ``term/tensor`` name."""
    model.vae.attach(net, normalized_laplacian(net))
    batch = collate_episodes(episodes, net.num_users)
    eps = RngStream(seed).normal(net.num_users, model.embed_dim, dtype=model.sender.dtype)
    store = model.param_store()
    names = [n for n in store.names() if tensor in ('all', n)]
    rng = np.random.default_rng(seed)
    errors = {}
    for term in terms:
        loss_fn = term_loss(model, term, batch, eps)
        for name in names:
            errors[f'{term}/{name}'] = gradcheck_tensor(loss_fn, store, name, points=points, h=h, rng=rng, floor=floor)
    return errors


def run_gradcheck(
    num_users: int = 20,
    embed_dim: int = 8,
    num_episodes: int = 5,
    terms: Sequence[str] = TERMS,
    variants: Sequence[str] = tuple(VARIANTS),
    fusions: Sequence[str] = FUSION_MODES,
    tied: Sequence[bool] = (False, True),
    tensor: str = 'all',
    points: int = 100,
    h: float = 1e-5,
    seed: int = 0,
    floor: bool = True,
) -> Dict[str, GradCheck]:
    """Check every variant x fusion x tying combination; keys are ``variant/fusion/tied/term/tensor``."""
    for v in variants:
        if v not in VARIANTS:
            raise ConfigError(f'the gradcheck variant should in {list(VARIANTS)}, but got {v}')
    net, episodes = random_instance(num_users, num_episodes, seed)
    results = {}
    for variant, fusion, tie in product(variants, fusions, tied):
        torch.manual_seed(seed)
        model = InfVAE(
            num_users,
            embed_dim=embed_dim,
            hidden_dims=(16,),
            fusion=fusion,
            tie_sender_receiver=tie,
            **VARIANTS[variant],
        )
        tag = f'{variant}/{fusion}/{"tied" if tie else "untied"}'
        errors = check_model(model, net, episodes, terms, tensor, points, h, seed, floor)
        if not errors:
            continue
        worst = max(r.max_rel_err for r in errors.values())
        logger.info(f'{tag}: max relative error {worst:.3e}')
        results.update({f'{tag}/{k}': v for k, v in errors.items()})
    if not results:
        raise ConfigError(f'unknown tensor {tensor}')
    return results
