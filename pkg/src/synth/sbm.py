from typing import Sequence

import numpy as np

from src.dataset_module.social_network import SocialNetwork, from_index_edges
from src.errors import ConfigError


def generate_sbm(sizes: Sequence[int], p_in: float, p_out: float, seed: int = 42) -> SocialNetwork:
    """Stochastic block model: each pair links with ``p_in`` inside a block and ``p_out`` across."""
    if not (0.0 <= p_out <= 1.0 and 0.0 <= p_in <= 1.0):
        raise ConfigError(f'the SBM probabilities should be in [0, 1], but got p_in={p_in}, p_out={p_out}')
    rng = np.random.default_rng(seed)
    blocks = np.repeat(np.arange(len(sizes)), sizes)
    n = len(blocks)
    rows, cols = np.triu_indices(n, k=1)
    probs = np.where(blocks[rows] == blocks[cols], p_in, p_out)
    keep = rng.random(len(rows)) < probs
    return from_index_edges(n, zip(rows[keep].tolist(), cols[keep].tolist()))


def sbm_blocks(sizes: Sequence[int]) -> np.ndarray:
    return np.repeat(np.arange(len(sizes)), sizes)
