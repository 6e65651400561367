import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from src.dataset_module.cascade_ds import Cascade, Episode, collate_episodes, make_episodes
from src.dataset_module.social_network import normalized_laplacian
from src.errors import ConfigError
from src.gradcheck import random_instance, run_gradcheck
from src.metrics.ranking_metrics import rank_candidates
from src.models.fusion import FUSION_MODES, MeanPoolFusion, SeparateAttentionFusion, build_fusion, coattend
from src.models.infvae import InfVAE, diffusion_loglik, influence_prob, social_reg


def _model(net, **kwargs):
    torch.manual_seed(0)
    model = InfVAE(net.num_users, embed_dim=4, hidden_dims=(8,), **kwargs)
    model.vae.attach(net, normalized_laplacian(net))
    return model


class TestCoattention:
    def test_single_seed(self):
        v = torch.randn(1, 3)
        out = coattend(torch.randn(1, 3), v, torch.randn(3, 3))
        assert out.alpha.tolist() == [[1.0]]
        torch.testing.assert_close(out.h[0], v[0])

    def test_worked_example(self):
        e1 = torch.tensor([1.0, 0.0])
        v = torch.stack([e1, torch.zeros(2)])
        out = coattend(v, v, torch.eye(2))
        np.testing.assert_allclose(out.scores[0].numpy(), [math.tanh(1.0), 0.0], atol=1e-12)
        a = math.exp(math.tanh(1.0)) / (1.0 + math.exp(math.tanh(1.0)))
        np.testing.assert_allclose(out.alpha[0].numpy(), [a, 1.0 - a], atol=1e-12)
        np.testing.assert_allclose(out.h[0].numpy(), [a, 0.0], atol=1e-12)

    def test_equal_scores_uniform(self):
        out = coattend(torch.randn(4, 3), torch.randn(4, 3), torch.zeros(3, 3))
        np.testing.assert_allclose(out.alpha[0].numpy(), 0.25, atol=1e-15)

    def test_padding_ignored(self):
        v_s, v_t = torch.randn(3, 2), torch.randn(3, 2)
        w = torch.randn(2, 2)
        alone = coattend(v_s[:2], v_t[:2], w)
        padded = coattend(v_s, v_t, w, mask=torch.tensor([True, True, False]))
        assert padded.alpha[0, 2] == 0.0
        torch.testing.assert_close(padded.h, alone.h)

    def test_alpha_normalized(self):
        g = torch.Generator().manual_seed(0)
        for _ in range(200):
            L = int(torch.randint(1, 8, (1,), generator=g))
            v_t = torch.randn(L, 3, generator=g)
            out = coattend(torch.randn(L, 3, generator=g), v_t, torch.randn(3, 3, generator=g))
            assert abs(float(out.alpha.sum()) - 1.0) <= 1e-12
            assert (out.alpha > 0).all()
            torch.testing.assert_close(out.h[0], (out.alpha[0, :, None] * v_t).sum(0))

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            build_fusion('gru', 4)


class TestAblationFusions:
    def test_meanpool_identical_seeds(self):
        fusion = MeanPoolFusion(3)
        v_s, v_t = torch.randn(1, 3).expand(4, 3), torch.randn(1, 3).expand(4, 3)
        out = fusion(v_s, v_t, None)
        torch.testing.assert_close(out.h[0], fusion.dense(torch.cat([v_s[0], v_t[0]])))

    def test_separate_single_seed(self):
        out = SeparateAttentionFusion(3)(torch.randn(1, 3), torch.randn(1, 3), None)
        assert out.alpha.tolist() == [[1.0]]
        assert out.alpha_sender.tolist() == [[1.0]]


class TestInfluence:
    def test_zero_aggregate(self):
        probs = influence_prob(torch.zeros(3), torch.randn(5, 3))
        assert torch.equal(probs, torch.full((5,), 0.5))

    def test_sigmoid_four(self):
        assert float(influence_prob(torch.tensor([2.0, 0.0]), torch.tensor([2.0, 5.0]))) == pytest.approx(0.98201, abs=1e-5)


class TestDiffusionLoglik:
    def test_worked_example(self):
        value = diffusion_loglik(torch.zeros(1, 2), torch.tensor([[True, False]]), torch.tensor([[False, True]]), eta=1.0)
        assert float(value) == pytest.approx(2 * math.log(0.5), abs=1e-12)
        assert float(value) == pytest.approx(-1.38629, abs=1e-5)

    def test_eta_zero_ignores_positives(self):
        logits = torch.tensor([[3.0, -2.0, 0.5]])
        pos, neg = torch.tensor([[True, False, False]]), torch.tensor([[False, True, True]])
        negatives_only = torch.nn.functional.logsigmoid(-logits[0, 1:]).sum()
        torch.testing.assert_close(diffusion_loglik(logits, pos, neg, eta=0.0), negatives_only)

    def test_separation_limit(self):
        value = diffusion_loglik(torch.tensor([[50.0, -50.0]]), torch.tensor([[True, False]]), torch.tensor([[False, True]]), eta=1.0)
        assert -1e-12 < float(value) <= 0.0

    def test_balanced_eta(self):
        logits = torch.zeros(1, 4)
        pos = torch.tensor([[True, False, False, False]])
        neg = ~pos
        # eta = 3 negatives / 1 target
        assert float(diffusion_loglik(logits, pos, neg)) == pytest.approx(6 * math.log(0.5))


class TestSocialReg:
    def test_anchored(self):
        mu = torch.randn(3, 2)
        assert float(social_reg(mu, mu, mu, torch.zeros(3, 2), 0.1, 0.2, 0.3)) == 0.0

    def test_free_variables(self):
        assert float(social_reg(torch.randn(3, 2), torch.randn(3, 2), torch.randn(3, 2), torch.randn(3, 2), 0, 0, 0)) == 0.0

    def test_worked_example(self):
        value = social_reg(torch.tensor([[2.0]]), torch.zeros(1, 1), torch.zeros(1, 1), torch.zeros(1, 1), 0.1, 0.0, 0.0)
        assert float(value) == pytest.approx(0.2, abs=1e-15)

    def test_negative_lambda(self):
        with pytest.raises(ConfigError):
            social_reg(torch.zeros(1, 1), torch.zeros(1, 1), torch.zeros(1, 1), torch.zeros(1, 1), -0.1, 0.0, 0.0)


class TestModel:
    def test_tied_roles_share_one_tensor(self, small_ba):
        model = _model(small_ba, tie_sender_receiver=True)
        assert model.sender is model.receiver
        names = model.param_store().names()
        assert 'sender' in names and 'receiver' not in names
        batch = collate_episodes(make_episodes(Cascade('c', (0, 1, 2, 3))), small_ba.num_users)
        (-model.episode_loglik(batch)).backward()
        assert model.sender.grad is not None and model.sender.grad.abs().sum() > 0

    def test_blocks_partition_parameters(self, small_ba):
        model = _model(small_ba)
        network, diffusion = set(model.network_names()), set(model.diffusion_names())
        assert not network & diffusion
        assert network | diffusion == set(model.param_store().names())
        assert {'sender', 'receiver', 'temporal.popularity', 'fusion.bilinear'} <= diffusion

    def test_bad_embed_dim(self, small_ba):
        with pytest.raises(ConfigError):
            InfVAE(small_ba.num_users, embed_dim=3)

    def test_ranking_excludes_seeds(self, small_ba):
        model = _model(small_ba)
        ep = Episode(seed=(4, 0, 9), targets=frozenset({1, 2}), cascade_id='c')
        rank = model.rank_inactive(ep)
        assert len(rank) == small_ba.num_users - 3
        assert not set(rank.candidates.tolist()) & {4, 0, 9}
        assert np.all(np.diff(rank.scores) <= 0)

    @settings(max_examples=200, deadline=None)
    @given(st.data())
    def test_ranking_size_identity(self, data):
        n = data.draw(st.integers(2, 40), label='num_users')
        seed = data.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=n - 1, unique=True), label='seed')
        torch.manual_seed(data.draw(st.integers(0, 2**31 - 1), label='embedding_seed'))
        model = InfVAE(n, embed_dim=4, hidden_dims=(4,))
        targets = frozenset(set(range(n)) - set(seed))
        rank = model.rank_inactive(Episode(seed=tuple(seed), targets=targets, cascade_id='c'))
        candidates = rank.candidates.tolist()
        assert len(candidates) == n - len(seed)
        assert len(set(candidates)) == len(candidates)
        assert set(candidates) == set(range(n)) - set(seed)

    def test_ranking_invariant_to_monotone_transform(self, small_ba):
        model = _model(small_ba)
        ep = Episode(seed=(1, 2), targets=frozenset({3}), cascade_id='c')
        scores = model.score_episodes([ep])[0]
        raw = rank_candidates(scores, ep)
        squashed = rank_candidates(1 / (1 + np.exp(-scores)), ep)
        np.testing.assert_array_equal(raw.candidates, squashed.candidates)

    def test_tie_rule(self):
        ep = Episode(seed=(0,), targets=frozenset({2}), cascade_id='c')
        rank = rank_candidates(np.array([9.0, 1.0, 1.0, 3.0, -1.0]), ep)
        assert rank.candidates.tolist() == [3, 1, 2, 4]

    def test_negative_cap_rescales(self, small_ba):
        model = _model(small_ba, negative_cap=5)
        batch = collate_episodes(make_episodes(Cascade('c', (0, 1, 2, 3))), small_ba.num_users)
        sampled, scale = model._negatives(batch, torch.Generator().manual_seed(0))
        assert sampled.sum(dim=1).tolist() == [5, 5]
        assert not (sampled & (batch['target_mask'] | batch['seed_set_mask'])).any()
        full = (~batch['target_mask'] & ~batch['seed_set_mask']).sum(dim=1)
        torch.testing.assert_close(scale, full.to(scale.dtype) / 5)


@pytest.mark.parametrize('fusion', FUSION_MODES)
def test_gradcheck_every_term(fusion):
    errors = run_gradcheck(num_users=12, embed_dim=4, num_episodes=3, fusions=[fusion], points=15)
    assert errors
    assert max(r.max_rel_err for r in errors.values()) < 1e-4


def test_gradcheck_unknown_tensor():
    with pytest.raises(ConfigError):
        run_gradcheck(num_users=10, embed_dim=4, num_episodes=2, variants=['gcn_ip'], fusions=['coattention'], tensor='nope')


def test_random_instance_shapes():
    net, episodes = random_instance(num_users=15, num_episodes=4, seed=3)
    assert net.num_users == 15
    assert len(episodes) == 4
