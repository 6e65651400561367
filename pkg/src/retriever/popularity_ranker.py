from typing import List, Sequence

import numpy as np
from loguru import logger
from tqdm import tqdm

from src.dataset_module.cascade_ds import Cascade, Episode
from src.dataset_module.social_network import SocialNetwork
from src.metrics.ranking_metrics import RankResult, activity_levels, rank_candidates
from src.retriever.base_ranker import BaseRanker


class PopularityRanker(BaseRanker):
    def __init__(self, net: SocialNetwork, train_cascades: Sequence[Cascade]):
        """Rank inactive users by training-cascade participation, social degree breaking ties.

        Args:
            net (SocialNetwork): The social network; its degrees order users never seen in training.
            train_cascades (Sequence[Cascade]): The cascades the participation counts are taken from.
        """
        super().__init__(net.num_users)
        counts = np.zeros(net.num_users, dtype=np.float64)
        for user, count in activity_levels(train_cascades).items():
            counts[user] = count
        # degree / (max degree + 1) < 1, so it only separates equal counts
        self.scores = counts + net.degree / (net.degree.max() + 1.0)

    def rank(self, episodes: Sequence[Episode]) -> List[RankResult]:
        logger.info('Ranking test episodes by popularity...')
        return [rank_candidates(self.scores, ep) for ep in tqdm(episodes, ncols=100)]
