import numpy as np
import pytest

from src.dataset_module.social_network import from_index_edges
from src.errors import ConfigError
from src.synth import BaParams, IcParams, generate_ba, generate_sbm, sbm_blocks, simulate_ic, simulate_ic_once


class TestBarabasiAlbert:
    def test_tree(self):
        net = generate_ba(BaParams(n=5, m=1, seed=0))
        assert net.num_edges == 4
        assert (net.degree > 0).all()

    def test_edge_count(self):
        assert generate_ba(BaParams(n=2000, m=2, seed=0)).num_edges == 3997

    @pytest.mark.parametrize('seed', range(5))
    def test_heavy_tail(self, seed):
        net = generate_ba(BaParams(n=2000, m=2, seed=seed))
        assert net.degree.max() > 5 * np.median(net.degree)

    def test_determinism(self):
        a = generate_ba(BaParams(n=100, m=3, seed=4))
        b = generate_ba(BaParams(n=100, m=3, seed=4))
        np.testing.assert_array_equal(a.edges, b.edges)

    @pytest.mark.parametrize('n, m', [(5, 0), (3, 3)])
    def test_invalid(self, n, m):
        with pytest.raises(ConfigError):
            generate_ba(BaParams(n=n, m=m))


class TestIndependentCascade:
    def test_p_zero_rejects(self, small_ba):
        cascades, rejected = simulate_ic(small_ba, IcParams(p=0.0, length=5, num_cascades=4, seed=0))
        assert cascades == []
        assert rejected == 4

    def test_p_one_covers_component(self, small_ba):
        order = simulate_ic_once(small_ba, 0, 1.0, np.random.default_rng(0))
        assert sorted(order) == list(range(small_ba.num_users))

    def test_max_length_stops_run(self, small_ba):
        full = simulate_ic_once(small_ba, 0, 1.0, np.random.default_rng(0))
        capped = simulate_ic_once(small_ba, 0, 1.0, np.random.default_rng(0), max_length=5)
        assert capped == full[:5]

    def test_runs_stop_past_window(self, small_ba):
        cascades, _ = simulate_ic(small_ba, IcParams(p=0.9, length=5, num_cascades=10, seed=3))
        assert cascades
        assert all(4 <= c.length <= 6 for c in cascades)

    def test_star_mean(self, star):
        rng = np.random.default_rng(0)
        n_leaves = star.num_users - 1
        runs = 10_000
        activated = np.array([len(simulate_ic_once(star, 0, 0.5, rng)) - 1 for _ in range(runs)])
        sigma = np.sqrt(n_leaves * 0.25 / runs)
        assert abs(activated.mean() - 0.5 * n_leaves) < 3 * sigma

    def test_structural(self, ba_ic_fixture):
        net, cascades = ba_ic_fixture
        assert cascades
        for c in cascades:
            assert len(set(c.users)) == len(c.users)
            for k, u in enumerate(c.users[1:], start=1):
                assert set(net.neighbors(u).tolist()) & set(c.users[:k])

    def test_length_window(self, ba_ic_fixture):
        _, cascades = ba_ic_fixture
        assert all(c.length <= 12 for c in cascades)

    def test_determinism(self, small_ba):
        params = IcParams(p=0.3, length=6, num_cascades=5, seed=9)
        assert simulate_ic(small_ba, params) == simulate_ic(small_ba, params)

    def test_invalid(self, small_ba):
        with pytest.raises(ConfigError):
            simulate_ic(small_ba, IcParams(p=1.5))


def test_sbm_blocks(sbm_net):
    blocks = sbm_blocks([50, 50])
    inside = sum(blocks[i] == blocks[j] for i, j in sbm_net.edges)
    assert sbm_net.num_users == 100
    assert inside > 0.8 * sbm_net.num_edges


def test_disconnected_star_leaf():
    net = from_index_edges(3, [(0, 1)])
    assert simulate_ic_once(net, 2, 1.0, np.random.default_rng(0)) == [2]
