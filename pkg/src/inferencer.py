"""Restore trained snapshots, write ranked predictions and assemble evaluation reports."""

import os
from typing import Dict, List, Optional, Sequence, Tuple

import hydra
from loguru import logger

from src.dataset_module.cascade_ds import Cascade, Episode, load_cascades, make_episodes, slice_all
from src.dataset_module.social_network import (
    SocialNetwork,
    load_network,
    normalized_laplacian,
    write_edge_list,
    write_vocab,
)
from src.errors import IngestionError
from src.metrics.ranking_metrics import (
    RankResult,
    activity_levels,
    metric_table,
    quartile_report,
    seed_neighbor_fraction,
    seed_pct_quartile_report,
    target_recall_per_user,
)
from src.models.infvae import InfVAE
from src.numeric import load_checkpoint
from src.retriever import BaseRanker, InfVAERanker, PopularityRanker, RandRanker
from src.trainer import TrainConfig

VOCAB_FILE = 'vocab.tsv'
GRAPH_FILE = 'edges.tsv'
TRAIN_CASCADES_FILE = 'train_cascades.tsv'
VAL_CASCADES_FILE = 'val_cascades.tsv'
TEST_CASCADES_FILE = 'test_cascades.tsv'


def build_model(model_cfg, train_cfg: TrainConfig, net: SocialNetwork) -> InfVAE:
    model = hydra.utils.instantiate(model_cfg, num_users=net.num_users, **train_cfg.model_kwargs())
    model.vae.attach(net, normalized_laplacian(net))
    return model


def write_network_files(net: SocialNetwork, out_dir: str):
    """Keep the vocab and a copy of the graph next to the checkpoint, so the directory loads on its own."""
    os.makedirs(out_dir, exist_ok=True)
    write_vocab(net, os.path.join(out_dir, VOCAB_FILE))
    write_edge_list(net, os.path.join(out_dir, GRAPH_FILE))


def load_model(ckpt_dir: str) -> Tuple[InfVAE, Dict, SocialNetwork]:
    """Rebuild the model a checkpoint directory describes and load its tensors.

    The graph copy inside ``ckpt_dir`` is preferred over the ``graph_path`` the manifest recorded.
    """
    tensors, manifest = load_checkpoint(ckpt_dir)
    config = manifest.get('config', {})
    graph_path = os.path.join(ckpt_dir, GRAPH_FILE)
    if not os.path.exists(graph_path):
        graph_path = manifest.get('graph_path')
    if graph_path is None or not os.path.exists(graph_path):
        raise IngestionError(f'the graph {graph_path} recorded in {ckpt_dir} not exists')
    net = load_network(graph_path, os.path.join(ckpt_dir, VOCAB_FILE))
    train_cfg = TrainConfig.from_cfg(config['train'])
    model = build_model(config['model'], train_cfg, net)
    model.param_store().restore(tensors)
    model.refresh_anchor()
    model.eval()
    logger.info(f'load the model from {ckpt_dir}: {net.num_users} users, embed dim {train_cfg.embed_dim}')
    return model, manifest, net


def write_predictions(ranks: Sequence[RankResult], path: str, ids: List[str], k: int = 100):
    """One line per episode: ``cascade_id<TAB>rank,user_id,score;...`` for the top ``k`` users."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for rank in ranks:
            items = [
                f'{r},{ids[u]},{s:.6g}'
                for r, (u, s) in enumerate(zip(rank.candidates[:k].tolist(), rank.scores[:k].tolist()), start=1)
            ]
            f.write(f'{rank.cascade_id}\t{";".join(items)}\n')
    logger.info(f'write {len(ranks)} predictions to {path}')


def init_rankers(
    model: InfVAE,
    net: SocialNetwork,
    train_cascades: Sequence[Cascade],
    baselines: bool,
    seed: int,
    infer_batch_size: int = 256,
) -> Dict[str, BaseRanker]:
    rankers = {'InfVAE': InfVAERanker(model, infer_batch_size)}
    if baselines:
        rankers['Random'] = RandRanker(net.num_users, seed=seed)
        rankers['Popularity'] = PopularityRanker(net, train_cascades)
    return rankers


def evaluate_rankers(
    rankers: Dict[str, BaseRanker],
    test_cascades: Sequence[Cascade],
    seed_pcts: Sequence[float],
    k_list: Sequence[int],
) -> Tuple[Dict, Dict[str, List[RankResult]]]:
    """MAP@K / Recall@K per seed percentage and ranker; also returns every ranker's pooled rankings."""
    table = {}
    pooled = {name: [] for name in rankers}
    for seed_pct in seed_pcts:
        episodes, skipped = slice_all(test_cascades, seed_pct)
        row = {'skipped_cascades': skipped}
        for name, ranker in rankers.items():
            ranks = ranker.rank(episodes)
            pooled[name].extend(ranks)
            row[name] = metric_table(ranks, k_list)
            logger.info(f'{name} seed_pct={seed_pct}: {row[name]}')
        table[f'{seed_pct:g}'] = row
    return table, pooled


def quartile_tables(
    ranks: Sequence[RankResult],
    net: SocialNetwork,
    train_cascades: Sequence[Cascade],
    k: int = 100,
) -> Dict:
    """Target recall per user grouped by activity level and by seed neighbour fraction, plus seed-fraction groups."""
    per_user = target_recall_per_user(ranks, k)
    train_episodes: List[Episode] = []
    for c in train_cascades:
        train_episodes.extend(make_episodes(c))
    tables = {'target_recall_k': k, 'num_target_users': len(per_user)}
    activity = {u: float(v) for u, v in activity_levels(train_cascades).items()}
    neighbor_fraction = seed_neighbor_fraction(net, train_episodes)
    for name, statistic in (('activity_level', activity), ('seed_neighbor_fraction', neighbor_fraction)):
        try:
            tables[name] = quartile_report(per_user, statistic)
        except ValueError as e:
            logger.warning(f'skip the {name} quartiles: {e}')
            tables[name] = None
    try:
        tables['seed_fraction'] = seed_pct_quartile_report(ranks, 10)
    except ValueError as e:
        logger.warning(f'skip the seed fraction quartiles: {e}')
        tables['seed_fraction'] = None
    return tables


def read_split(ckpt_dir: str, file_name: str, vocab: Dict[str, int], path: Optional[str] = None) -> List[Cascade]:
    return load_cascades(path or os.path.join(ckpt_dir, file_name), vocab, min_length=2)
