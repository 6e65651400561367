from dataclasses import dataclass

import numpy as np
from loguru import logger

from src.dataset_module.social_network import SocialNetwork, from_index_edges
from src.errors import ConfigError


@dataclass(frozen=True)
class BaParams:
    n: int
    m: int
    seed: int = 42

    def validate(self):
        if not 1 <= self.m < self.n:
            raise ConfigError(f'the BA parameters should satisfy 1 <= m < n, but got n={self.n}, m={self.m}')


def generate_ba(params: BaParams) -> SocialNetwork:
    """Preferential attachment grown from a clique on ``m`` nodes.

    Every later node links to ``m`` distinct existing nodes drawn proportionally to
    degree, so the graph has ``C(m, 2) + (n - m) * m`` edges.
    """
    params.validate()
    n, m = params.n, params.m
    rng = np.random.default_rng(params.seed)
    degree = np.zeros(n, dtype=np.int64)
    edges = []
    for i in range(m):
        for j in range(i + 1, m):
            edges.append((i, j))
            degree[i] += 1
            degree[j] += 1

    for new_node in range(m, n):
        weights = degree[:new_node].astype(np.float64)
        total = weights.sum()
        # a single isolated seed node (m = 1) has no degree mass yet
        p = weights / total if total > 0 else None
        if p is not None and np.count_nonzero(p) < m:
            p = None
        targets = rng.choice(new_node, size=m, replace=False, p=p)
        for t in targets:
            edges.append((int(t), new_node))
            degree[new_node] += 1
            degree[t] += 1

    net = from_index_edges(n, edges)
    logger.info(f'generated a BA network with {net.num_users} users and {net.num_edges} edges')
    return net
