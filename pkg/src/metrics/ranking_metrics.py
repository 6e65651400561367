"""Top-K ranking metrics over influenced-user predictions and the per-user / per-episode quartile analyses."""

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src.dataset_module.cascade_ds import Cascade, Episode
from src.dataset_module.social_network import SocialNetwork


@dataclass
class RankResult:
    candidates: np.ndarray  # user indices, best first
    scores: np.ndarray
    targets: FrozenSet[int]
    cascade_id: str = ''
    seed_pct: Optional[float] = None
    seed: Tuple[int, ...] = field(default_factory=tuple)
    cascade_length: Optional[int] = None

    def __len__(self):
        return len(self.candidates)

    @property
    def seed_fraction(self) -> float:
        total = self.cascade_length or (len(self.seed) + len(self.targets))
        return len(self.seed) / total

    def top(self, k: int) -> np.ndarray:
        return self.candidates[:k]


def rank_candidates(scores: np.ndarray, episode: Episode) -> RankResult:
    """Sort ``V - I`` by descending score; equal scores keep ascending user index."""
    scores = np.asarray(scores, dtype=np.float64)
    keep = np.ones(len(scores), dtype=bool)
    keep[list(episode.seed)] = False
    cand = np.flatnonzero(keep)
    cand_scores = scores[cand]
    order = np.lexsort((cand, -cand_scores))
    return RankResult(
        candidates=cand[order],
        scores=cand_scores[order],
        targets=episode.targets,
        cascade_id=episode.cascade_id,
        seed_pct=episode.seed_pct,
        seed=episode.seed,
        cascade_length=episode.cascade_length,
    )


def _check_k(k: int):
    if k < 1:
        raise ValueError(f'K should be >= 1, but got {k}')


def average_precision_at_k(rank: RankResult, k: int) -> Optional[float]:
    """AP@K normalised by ``min(|C|, K)``; None for an episode without targets."""
    _check_k(k)
    if not rank.targets:
        return None
    hits = np.isin(rank.top(k), np.fromiter(rank.targets, dtype=np.int64))
    if not hits.any():
        return 0.0
    precision = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float(precision[hits].sum() / min(len(rank.targets), k))


def recall_at_k(rank: RankResult, k: int) -> Optional[float]:
    _check_k(k)
    if not rank.targets:
        return None
    hits = np.isin(rank.top(k), np.fromiter(rank.targets, dtype=np.int64))
    return float(hits.sum() / len(rank.targets))


def brute_force_ap_at_k(ranked: Sequence[int], targets: FrozenSet[int], k: int) -> Optional[float]:
    if not targets:
        return None
    total, found = 0.0, 0
    for r, user in enumerate(list(ranked)[:k], start=1):
        if user in targets:
            found += 1
            total += found / r
    return total / min(len(targets), k)


def brute_force_recall_at_k(ranked: Sequence[int], targets: FrozenSet[int], k: int) -> Optional[float]:
    if not targets:
        return None
    top = list(ranked)[:k]
    return sum(1 for t in targets if t in top) / len(targets)


def mean_metric(
    ranks: Sequence[RankResult], metric: Callable[[RankResult, int], Optional[float]], k: int
) -> Tuple[float, int]:
    """Mean over episodes with targets; returns ``(mean, skipped)``."""
    values, skipped = [], 0
    for rank in ranks:
        v = metric(rank, k)
        if v is None:
            skipped += 1
            continue
        values.append(v)
    if skipped:
        logger.warning(f'{skipped} episodes without targets skipped in {metric.__name__}@{k}')
    return (float(np.mean(values)) if values else float('nan')), skipped


def map_at_k(ranks: Sequence[RankResult], k: int) -> float:
    return mean_metric(ranks, average_precision_at_k, k)[0]


def metric_table(ranks: Sequence[RankResult], k_list: Sequence[int]) -> Dict[str, float]:
    table = {}
    for k in k_list:
        table[f'map@{k}'], _ = mean_metric(ranks, average_precision_at_k, k)
        table[f'recall@{k}'], _ = mean_metric(ranks, recall_at_k, k)
    skipped = sum(1 for r in ranks if not r.targets)
    table['num_episodes'] = len(ranks) - skipped
    table['skipped_episodes'] = skipped
    return table


def target_recall_per_user(ranks: Sequence[RankResult], k: int = 100) -> Dict[int, float]:
    """Fraction of a user's target appearances that land in the top-K; users never targeted are absent."""
    _check_k(k)
    hits = defaultdict(int)
    appearances = defaultdict(int)
    for rank in ranks:
        top = set(rank.top(k).tolist())
        for user in rank.targets:
            appearances[user] += 1
            hits[user] += int(user in top)
    return {u: hits[u] / appearances[u] for u in sorted(appearances)}


def activity_levels(cascades: Sequence[Cascade]) -> Dict[int, int]:
    """Number of cascades each user takes part in."""
    counts = defaultdict(int)
    for c in cascades:
        for u in c.users:
            counts[u] += 1
    return dict(counts)


def seed_neighbor_fraction(net: SocialNetwork, episodes: Sequence[Episode]) -> Dict[int, float]:
    """Per target user, the mean over episodes of the fraction of seeds that are its direct neighbours."""
    totals = defaultdict(float)
    counts = defaultdict(int)
    adj = net.adjacency
    for ep in episodes:
        seed = np.asarray(ep.seed, dtype=np.int64)
        for user in ep.targets:
            row = adj[user]
            n_neighbors = int(np.isin(seed, row.indices).sum())
            totals[user] += n_neighbors / len(seed)
            counts[user] += 1
    return {u: totals[u] / counts[u] for u in sorted(counts)}


def _quartile_groups(values: np.ndarray) -> np.ndarray:
    cuts = np.percentile(values, [25, 50, 75])
    # side='left': a value equal to a cut goes to the lower quartile
    return np.searchsorted(cuts, values, side='left')


def quartile_report(metric: Dict[int, float], statistic: Dict[int, float]) -> Dict:
    """Split users into quartiles of ``statistic`` and average ``metric`` inside each."""
    users = [u for u in metric if u in statistic]
    excluded = len(metric) - len(users)
    if excluded:
        logger.warning(f'{excluded} users have no grouping statistic and are excluded from the quartiles')
    if len(users) < 4:
        raise ValueError(f'the quartile report needs at least 4 users, but got {len(users)}')
    stats = np.array([statistic[u] for u in users], dtype=np.float64)
    values = np.array([metric[u] for u in users], dtype=np.float64)
    groups = _quartile_groups(stats)
    quartiles = []
    for q in range(4):
        sel = groups == q
        quartiles.append(
            {
                'quartile': f'Q{q + 1}',
                'num_users': int(sel.sum()),
                'mean': float(values[sel].mean()) if sel.any() else None,
                'statistic_range': [float(stats[sel].min()), float(stats[sel].max())] if sel.any() else None,
            }
        )
    return {'quartiles': quartiles, 'excluded_users': excluded}


def seed_pct_quartile_report(ranks: Sequence[RankResult], k: int = 10) -> Dict:
    """Episodes grouped by revealed seed fraction ``|I| / K``; MAP@k and Recall@k per group."""
    ranks = [r for r in ranks if r.targets]
    if len(ranks) < 4:
        raise ValueError(f'the seed fraction quartile report needs at least 4 episodes, but got {len(ranks)}')
    fractions = np.array([r.seed_fraction for r in ranks], dtype=np.float64)
    groups = _quartile_groups(fractions)
    quartiles = []
    for q in range(4):
        members = [r for r, g in zip(ranks, groups) if g == q]
        row = {'quartile': f'Q{q + 1}', 'num_episodes': len(members)}
        if members:
            row[f'map@{k}'] = mean_metric(members, average_precision_at_k, k)[0]
            row[f'recall@{k}'] = mean_metric(members, recall_at_k, k)[0]
            row['seed_fraction_range'] = [
                float(min(r.seed_fraction for r in members)),
                float(max(r.seed_fraction for r in members)),
            ]
        else:
            row[f'map@{k}'] = row[f'recall@{k}'] = None
        quartiles.append(row)
    return {'quartiles': quartiles}
