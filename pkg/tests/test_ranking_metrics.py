import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.dataset_module.cascade_ds import Cascade, Episode
from src.dataset_module.social_network import from_index_edges
from src.metrics.ranking_metrics import (
    RankResult,
    activity_levels,
    average_precision_at_k,
    brute_force_ap_at_k,
    brute_force_recall_at_k,
    map_at_k,
    metric_table,
    quartile_report,
    recall_at_k,
    seed_neighbor_fraction,
    seed_pct_quartile_report,
    target_recall_per_user,
)


def _rank(order, targets, **kwargs):
    order = np.asarray(order, dtype=np.int64)
    return RankResult(
        candidates=order,
        scores=-np.arange(len(order), dtype=np.float64),
        targets=frozenset(targets),
        **kwargs,
    )


class TestAveragePrecision:
    def test_worked_example(self):
        # a=0 at rank 1, b=1 at rank 3
        rank = _rank([0, 5, 1, 6, 7], {0, 1})
        assert average_precision_at_k(rank, 10) == pytest.approx(0.83333, abs=1e-5)
        assert average_precision_at_k(rank, 10) == (1 / 1 + 2 / 3) / 2

    def test_no_hit(self):
        assert average_precision_at_k(_rank([3, 4, 5], {9}), 3) == 0.0

    def test_perfect(self):
        assert average_precision_at_k(_rank([2, 1, 0, 3], {0, 1, 2}), 10) == 1.0

    def test_empty_targets(self):
        assert average_precision_at_k(_rank([1, 2], set()), 5) is None

    def test_bad_k(self):
        with pytest.raises(ValueError):
            average_precision_at_k(_rank([1], {1}), 0)


class TestRecall:
    def test_worked_example(self):
        assert recall_at_k(_rank([0, 7, 2, 8, 9, 1], {0, 1, 2}), 5) == 2 / 3

    def test_whole_list(self):
        assert recall_at_k(_rank([4, 3, 2, 1], {1, 3}), 4) == 1.0

    def test_disjoint(self):
        assert recall_at_k(_rank([4, 3, 2, 1], {1}), 3) == 0.0


@settings(max_examples=1000, deadline=None)
@given(
    st.permutations(list(range(30))),
    st.sets(st.integers(0, 29), min_size=1, max_size=10),
    st.integers(1, 40),
)
def test_matches_brute_force(order, targets, k):
    rank = _rank(order, targets)
    assert average_precision_at_k(rank, k) == pytest.approx(brute_force_ap_at_k(order, targets, k), abs=1e-12)
    assert recall_at_k(rank, k) == brute_force_recall_at_k(order, targets, k)


@settings(max_examples=200, deadline=None)
@given(st.permutations(list(range(20))), st.sets(st.integers(0, 19), min_size=1), st.integers(1, 20), st.integers(0, 20))
def test_recall_monotone_in_k(order, targets, k, extra):
    rank = _rank(order, targets)
    assert 0.0 <= recall_at_k(rank, k) <= recall_at_k(rank, k + extra) <= 1.0


def test_map_skips_empty_episodes():
    ranks = [_rank([0, 1], {0}), _rank([0, 1], set()), _rank([0, 1], {1})]
    table = metric_table(ranks, [1])
    assert table['map@1'] == 0.5
    assert table['num_episodes'] == 2
    assert table['skipped_episodes'] == 1
    assert map_at_k(ranks, 2) == pytest.approx((1.0 + 0.5) / 2)


class TestTargetRecall:
    def test_per_user(self):
        ranks = [_rank([1, 2, 3], {1}), _rank([2, 3, 1], {1})]
        assert target_recall_per_user(ranks, k=1) == {1: 0.5}

    def test_always_hit(self):
        assert target_recall_per_user([_rank([4, 5], {4})], k=1) == {4: 1.0}

    def test_user_mean_differs_from_pooled(self):
        ranks = [_rank([1, 2], {1}), _rank([3, 2], {2}), _rank([3, 2], {2}), _rank([2, 3], {2})]
        per_user = target_recall_per_user(ranks, k=1)
        assert per_user == {1: 1.0, 2: pytest.approx(1 / 3)}
        assert np.mean(list(per_user.values())) == pytest.approx(2 / 3)
        pooled = 2 / 4
        assert np.mean(list(per_user.values())) != pooled


class TestQuartiles:
    def test_uniform_metric(self):
        metric = {u: 0.4 for u in range(12)}
        report = quartile_report(metric, {u: float(u) for u in range(12)})
        assert all(q['mean'] == pytest.approx(0.4) for q in report['quartiles'])

    def test_activity_one_to_eight(self):
        metric = {u: float(u) for u in range(1, 9)}
        report = quartile_report(metric, {u: float(u) for u in range(1, 9)})
        ranges = [q['statistic_range'] for q in report['quartiles']]
        assert ranges[0] == [1.0, 2.0]
        assert ranges[3] == [7.0, 8.0]
        assert [q['num_users'] for q in report['quartiles']] == [2, 2, 2, 2]

    def test_users_without_statistic_excluded(self):
        metric = {u: 1.0 for u in range(6)}
        report = quartile_report(metric, {u: float(u) for u in range(5)})
        assert report['excluded_users'] == 1

    def test_too_few_users(self):
        with pytest.raises(ValueError):
            quartile_report({0: 1.0, 1: 1.0}, {0: 1.0, 1: 2.0})

    def test_seed_fraction_groups(self):
        ranks = [
            _rank([9, 8], {9}, seed=tuple(range(s)), cascade_length=10)
            for s in (1, 2, 3, 4, 5, 6, 7, 8)
        ]
        report = seed_pct_quartile_report(ranks, k=1)
        assert [q['num_episodes'] for q in report['quartiles']] == [2, 2, 2, 2]
        assert report['quartiles'][0]['seed_fraction_range'] == [0.1, 0.2]


def test_activity_levels():
    cascades = [Cascade('a', (0, 1, 2)), Cascade('b', (1, 2)), Cascade('c', (2, 5))]
    assert activity_levels(cascades) == {0: 1, 1: 2, 2: 3, 5: 1}


def test_seed_neighbor_fraction():
    net = from_index_edges(4, [(0, 3), (1, 3)])
    episodes = [
        Episode(seed=(0, 1), targets=frozenset({3}), cascade_id='a'),
        Episode(seed=(0, 2), targets=frozenset({3, 2}), cascade_id='b'),
    ]
    fractions = seed_neighbor_fraction(net, episodes)
    assert fractions[3] == pytest.approx((1.0 + 0.5) / 2)
    assert fractions[2] == 0.0
    assert 0 not in fractions
