import os
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
import torch
from loguru import logger
from torch.utils.data import Dataset

from src.errors import ConfigError, IngestionError


@dataclass(frozen=True)
class Cascade:
    id: str
    users: Tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.users)

    @property
    def activations(self) -> List[Tuple[int, int]]:
        return [(u, k) for k, u in enumerate(self.users, start=1)]


@dataclass(frozen=True)
class Episode:
    seed: Tuple[int, ...]
    targets: FrozenSet[int]
    cascade_id: str
    seed_pct: Optional[float] = None
    cascade_length: Optional[int] = None

    @property
    def seed_steps(self) -> List[Tuple[int, int]]:
        return [(u, k) for k, u in enumerate(self.seed, start=1)]

    @property
    def seed_fraction(self) -> float:
        total = self.cascade_length or (len(self.seed) + len(self.targets))
        return len(self.seed) / total


@dataclass
class LoadStats:
    unknown_users: int = 0
    duplicate_users: int = 0
    skipped_cascades: int = 0
    skipped_ids: List[str] = field(default_factory=list)


def parse_cascade_line(line: str, line_no: int) -> Tuple[str, List[str]]:
    parts = line.split('\t', 1)
    if len(parts) != 2:
        raise IngestionError(f'line {line_no} should be "cascade_id<TAB>u1 u2 ...", but got {line!r}')
    cascade_id, body = parts
    tokens = body.split()
    timed = []
    for pos, token in enumerate(tokens):
        if ':' in token:
            uid, stamp = token.rsplit(':', 1)
            try:
                timed.append((float(stamp), pos, uid))
            except ValueError:
                raise IngestionError(f'line {line_no}: bad timestamp in {token!r}')
        else:
            timed.append((float(pos), pos, token))
    # timestamps only order the activations; they are dropped afterwards
    if any(':' in t for t in tokens):
        timed.sort()
    return cascade_id, [uid for _, _, uid in timed]


def load_cascades(
    path: str,
    vocab: Dict[str, int],
    min_length: int = 2,
    stats: Optional[LoadStats] = None,
) -> List[Cascade]:
    if not os.path.exists(path):
        raise IngestionError(f'cascade file {path} not exists')
    stats = stats if stats is not None else LoadStats()
    cascades = []
    seen_lines = 0
    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip('\n')
            if not line.strip() or line.startswith('#'):
                continue
            seen_lines += 1
            cascade_id, user_ids = parse_cascade_line(line, line_no)
            users, seen = [], set()
            for uid in user_ids:
                if uid not in vocab:
                    stats.unknown_users += 1
                    continue
                idx = vocab[uid]
                if idx in seen:
                    stats.duplicate_users += 1
                    continue
                seen.add(idx)
                users.append(idx)
            if len(users) < min_length:
                stats.skipped_cascades += 1
                stats.skipped_ids.append(cascade_id)
                continue
            cascades.append(Cascade(id=cascade_id, users=tuple(users)))
    if seen_lines == 0:
        raise IngestionError(f'cascade file {path} is empty')
    if stats.unknown_users:
        logger.warning(f'dropped {stats.unknown_users} activations of unknown users in {path}')
    if stats.skipped_cascades:
        logger.warning(f'skipped {stats.skipped_cascades} cascades shorter than {min_length} in {path}')
    logger.info(f'loaded {len(cascades)} cascades from {path}')
    return cascades


def write_cascades(cascades: Sequence[Cascade], path: str, ids: Optional[List[str]] = None):
    with open(path, 'w', encoding='utf-8') as f:
        for c in cascades:
            names = [ids[u] if ids else str(u) for u in c.users]
            f.write(f'{c.id}\t{" ".join(names)}\n')


def make_episodes(
    c: Cascade,
    max_episodes_per_cascade: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> List[Episode]:
    K = c.length
    if K < 3:
        return []
    split_points = list(range(2, K))
    if max_episodes_per_cascade is not None and len(split_points) > max_episodes_per_cascade:
        rng = rng if rng is not None else np.random.default_rng(0)
        chosen = rng.choice(len(split_points), max_episodes_per_cascade, replace=False)
        split_points = [split_points[i] for i in sorted(chosen)]
    return [
        Episode(
            seed=c.users[:k],
            targets=frozenset(c.users[k:]),
            cascade_id=c.id,
            cascade_length=K,
        )
        for k in split_points
    ]


def split_dataset(
    cascades: Sequence[Cascade],
    fractions: Sequence[float] = (0.7, 0.1, 0.2),
    rng_seed: int = 42,
) -> Tuple[List[Cascade], List[Cascade], List[Cascade]]:
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f'the split fractions should be 3 values summing to 1, but got {list(fractions)}')
    if len(cascades) < 3:
        raise IngestionError(f'need at least 3 cascades to split, but got {len(cascades)}')
    rng = np.random.default_rng(rng_seed)
    order = rng.permutation(len(cascades))
    n = len(cascades)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_train = min(n_train, n - 2)
    n_val = min(max(n_val, 1), n - n_train - 1)
    train = [cascades[i] for i in order[:n_train]]
    val = [cascades[i] for i in order[n_train : n_train + n_val]]
    test = [cascades[i] for i in order[n_train + n_val :]]
    logger.info(f'the train size {len(train)}, the val size {len(val)}, the test size {len(test)}')
    return train, val, test


def seed_slice(c: Cascade, seed_pct: float) -> Optional[Episode]:
    """Reveal the first ``max(1, floor(seed_pct * K))`` activations; None when no target remains."""
    if not 0.0 < seed_pct < 1.0:
        raise ConfigError(f'seed_pct should be in (0, 1), but got {seed_pct}')
    K = c.length
    n_seed = max(1, int(np.floor(seed_pct * K + 1e-9)))
    if n_seed >= K:
        return None
    return Episode(
        seed=c.users[:n_seed],
        targets=frozenset(c.users[n_seed:]),
        cascade_id=c.id,
        seed_pct=seed_pct,
        cascade_length=K,
    )


def slice_all(cascades: Sequence[Cascade], seed_pct: float) -> Tuple[List[Episode], int]:
    episodes, skipped = [], 0
    for c in cascades:
        ep = seed_slice(c, seed_pct)
        if ep is None:
            skipped += 1
            continue
        episodes.append(ep)
    if skipped:
        logger.warning(f'{skipped} cascades left no target at seed_pct={seed_pct}')
    return episodes, skipped


class EpisodeDataset(Dataset):
    def __init__(self, episodes: Sequence[Episode]):
        super().__init__()
        self.episodes = list(episodes)

    def __getitem__(self, index) -> Episode:
        return self.episodes[index]

    def __len__(self):
        return len(self.episodes)


def collate_episodes(batch: Sequence[Episode], num_users: int) -> Dict[str, torch.Tensor]:
    bs = len(batch)
    max_len = max(len(ep.seed) for ep in batch)
    seed_idx = torch.zeros(bs, max_len, dtype=torch.long)
    seed_mask = torch.zeros(bs, max_len, dtype=torch.bool)
    target_mask = torch.zeros(bs, num_users, dtype=torch.bool)
    seed_set_mask = torch.zeros(bs, num_users, dtype=torch.bool)
    for b, ep in enumerate(batch):
        seed = torch.tensor(ep.seed, dtype=torch.long)
        seed_idx[b, : len(ep.seed)] = seed
        seed_mask[b, : len(ep.seed)] = True
        seed_set_mask[b, seed] = True
        target_mask[b, torch.tensor(sorted(ep.targets), dtype=torch.long)] = True
    return {
        'seed_idx': seed_idx,
        'seed_mask': seed_mask,
        'target_mask': target_mask,
        'seed_set_mask': seed_set_mask,
    }
