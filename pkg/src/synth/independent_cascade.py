from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger
from tqdm import tqdm

from src.dataset_module.cascade_ds import Cascade
from src.dataset_module.social_network import SocialNetwork
from src.errors import ConfigError


@dataclass(frozen=True)
class IcParams:
    p: float = 0.1
    length: int = 20
    num_cascades: int = 500
    seed: int = 42
    max_attempts: int = 100

    def validate(self):
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f'the activation probability should be in [0, 1], but got {self.p}')
        if self.length < 2:
            raise ConfigError(f'the target cascade length should be >= 2, but got {self.length}')
        if self.num_cascades < 1:
            raise ConfigError(f'the number of cascades should be >= 1, but got {self.num_cascades}')


def simulate_ic_once(
    net: SocialNetwork,
    seed: int,
    p: float,
    rng: np.random.Generator,
    max_length: Optional[int] = None,
) -> List[int]:
    """One synchronous IC run from ``seed``; returns users in activation order.

    Each newly active user tries its inactive neighbours once, in index order,
    and the next frontier keeps the order in which users were activated.
    """
    active = {seed}
    order = [seed]
    frontier = [seed]
    while frontier:
        next_frontier = []
        for u in frontier:
            for v in net.neighbors(u):
                v = int(v)
                if v in active:
                    continue
                if rng.random() < p:
                    active.add(v)
                    order.append(v)
                    next_frontier.append(v)
                    if max_length is not None and len(order) >= max_length:
                        return order
        frontier = next_frontier
    return order


def _accepted_length(order: List[int], length: int) -> Optional[List[int]]:
    if 0.8 * length <= len(order) <= 1.2 * length:
        return order
    return None


def simulate_ic(net: SocialNetwork, params: IcParams) -> Tuple[List[Cascade], int]:
    """Simulate ``num_cascades`` cascades with length close to ``params.length``.

    A cascade is re-simulated from a fresh uniform seed up to ``max_attempts`` times
    until its length is within 20% of the target. Runs stop one user past that
    window; failing every attempt, the first run that overshot is cut at
    ``length``, else the cascade is rejected.
    Returns the cascades and the rejected count.
    """
    params.validate()
    if net.num_users == 0:
        raise ConfigError('cannot simulate cascades on an empty network')
    streams = np.random.SeedSequence(params.seed).spawn(params.num_cascades)
    cap = int(1.2 * params.length) + 1
    cascades, rejected = [], 0
    for c_idx, stream in enumerate(tqdm(streams, ncols=100, desc='simulate IC')):
        rng = np.random.default_rng(stream)
        accepted, longest = None, []
        for _ in range(params.max_attempts):
            seed = int(rng.integers(net.num_users))
            order = simulate_ic_once(net, seed, params.p, rng, max_length=cap)
            accepted = _accepted_length(order, params.length)
            if accepted is not None:
                break
            if len(order) > len(longest):
                longest = order
        if accepted is None and len(longest) > params.length:
            accepted = longest[: params.length]
        if accepted is None or len(accepted) < 2:
            rejected += 1
            continue
        cascades.append(Cascade(id=f'c{c_idx}', users=tuple(accepted)))
    if rejected:
        logger.warning(f'rejected {rejected} of {params.num_cascades} simulated cascades (too short)')
    logger.info(f'simulated {len(cascades)} IC cascades, mean length {np.mean([c.length for c in cascades]) if cascades else 0:.2f}')
    return cascades, rejected
