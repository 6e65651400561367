from .base_ranker import BaseRanker
from .infvae_ranker import InfVAERanker
from .popularity_ranker import PopularityRanker
from .rand_ranker import RandRanker
