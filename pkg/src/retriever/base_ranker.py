from typing import List, Sequence

from src.dataset_module.cascade_ds import Episode
from src.metrics.ranking_metrics import RankResult


class BaseRanker:
    def __init__(self, num_users: int) -> None:
        self.num_users = num_users

    def rank(self, episodes: Sequence[Episode]) -> List[RankResult]:
        raise NotImplementedError
