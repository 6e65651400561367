from typing import List, Sequence

import torch
from loguru import logger
from more_itertools import chunked
from tqdm import tqdm

from src.dataset_module.cascade_ds import Episode
from src.metrics.ranking_metrics import RankResult, rank_candidates
from src.models.infvae import InfVAE
from src.retriever.base_ranker import BaseRanker


class InfVAERanker(BaseRanker):
    def __init__(self, model: InfVAE, infer_batch_size: int = 256):
        """Rank inactive users by ``h_I^T v^r_j`` of a trained model.

        Args:
            model (InfVAE): The trained model snapshot.
            infer_batch_size (int): The number of episodes scored together.
        """
        super().__init__(model.num_users)
        self.model = model
        self.infer_batch_size = infer_batch_size

    @torch.inference_mode()
    def rank(self, episodes: Sequence[Episode]) -> List[RankResult]:
        self.model.eval()
        logger.info('Ranking test episodes with the trained model...')
        ranks = []
        for chunk in tqdm(
            chunked(episodes, self.infer_batch_size),
            total=(len(episodes) + self.infer_batch_size - 1) // self.infer_batch_size,
            ncols=100,
        ):
            for ep, scores in zip(chunk, self.model.score_episodes(chunk)):
                ranks.append(rank_candidates(scores, ep))
        return ranks
