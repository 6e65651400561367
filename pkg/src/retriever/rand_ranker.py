from typing import List, Sequence

import numpy as np
from loguru import logger
from tqdm import tqdm

from src.dataset_module.cascade_ds import Episode
from src.metrics.ranking_metrics import RankResult, rank_candidates
from src.retriever.base_ranker import BaseRanker


class RandRanker(BaseRanker):
    def __init__(self, num_users: int, seed: int = 42):
        """Uniform random ordering of the inactive users.

        Args:
            num_users (int): The number of users in the social network.
            seed (int, optional): The random seed for reproducibility. Defaults to 42.
        """
        super().__init__(num_users)
        self.seed = seed

    def rank(self, episodes: Sequence[Episode]) -> List[RankResult]:
        rng = np.random.default_rng(self.seed)
        logger.info('Ranking test episodes at random...')
        return [rank_candidates(rng.random(self.num_users), ep) for ep in tqdm(episodes, ncols=100)]
