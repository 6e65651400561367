import numpy as np
import pytest
import torch

from src.dataset_module.cascade_ds import Cascade, Episode
from src.models.infvae import InfVAE
from src.retriever import BaseRanker, InfVAERanker, PopularityRanker, RandRanker


@pytest.fixture
def episodes():
    return [
        Episode(seed=(1,), targets=frozenset({5}), cascade_id='a', cascade_length=2),
        Episode(seed=(2, 3), targets=frozenset({4, 6}), cascade_id='b', cascade_length=4),
        Episode(seed=(0, 9, 10), targets=frozenset({8}), cascade_id='c', cascade_length=4),
    ]


def test_base_ranker_is_abstract():
    with pytest.raises(NotImplementedError):
        BaseRanker(3).rank([])


class TestRandRanker:
    def test_excludes_seeds(self, episodes):
        for ep, rank in zip(episodes, RandRanker(11, seed=0).rank(episodes)):
            assert len(rank) == 11 - len(ep.seed)
            assert not set(rank.candidates.tolist()) & set(ep.seed)
            assert rank.targets == ep.targets

    def test_seeded(self, episodes):
        a = RandRanker(11, seed=3).rank(episodes)
        b = RandRanker(11, seed=3).rank(episodes)
        c = RandRanker(11, seed=4).rank(episodes)
        assert all(np.array_equal(x.candidates, y.candidates) for x, y in zip(a, b))
        assert not all(np.array_equal(x.candidates, y.candidates) for x, y in zip(a, c))


class TestPopularityRanker:
    def test_counts_then_degree(self, star, episodes):
        train = [Cascade('t1', (5, 6)), Cascade('t2', (5, 7))]
        rank = PopularityRanker(star, train).rank(episodes[:1])[0]
        # 5 twice, 6 and 7 once, then the hub by degree, then the leaves by index
        assert rank.candidates.tolist() == [5, 6, 7, 0, 2, 3, 4, 8, 9, 10]

    def test_without_training_cascades(self, star, episodes):
        rank = PopularityRanker(star, []).rank(episodes[1:2])[0]
        assert rank.candidates[0] == 0


class TestInfVAERanker:
    @pytest.fixture
    def model(self):
        torch.manual_seed(0)
        return InfVAE(num_users=11, embed_dim=4, hidden_dims=(8,))

    def test_matches_rank_inactive(self, model, episodes):
        for ep, rank in zip(episodes, InfVAERanker(model).rank(episodes)):
            expected = model.rank_inactive(ep)
            np.testing.assert_array_equal(rank.candidates, expected.candidates)
            np.testing.assert_allclose(rank.scores, expected.scores, rtol=0, atol=1e-12)

    def test_batch_size_invariant(self, model, episodes):
        one = InfVAERanker(model, infer_batch_size=1).rank(episodes)
        many = InfVAERanker(model, infer_batch_size=256).rank(episodes)
        for a, b in zip(one, many):
            np.testing.assert_array_equal(a.candidates, b.candidates)
            assert np.all(np.diff(a.scores) <= 0)
