"""Command-line entry: ``pretrain``, ``train``, ``predict``, ``evaluate``, ``synth`` and ``gradcheck``."""

import argparse
import json
import os
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from dotenv import load_dotenv
from loguru import logger
from omegaconf import DictConfig, OmegaConf

from src import __version__
from src.dataset_module.cascade_ds import LoadStats, load_cascades, slice_all, split_dataset, write_cascades
from src.dataset_module.social_network import load_network, read_vocab
from src.errors import ConfigError, InfVAEError, NumericalDivergenceError
from src.gradcheck import run_gradcheck
from src.inferencer import (
    TEST_CASCADES_FILE,
    TRAIN_CASCADES_FILE,
    VAL_CASCADES_FILE,
    VOCAB_FILE,
    build_model,
    evaluate_rankers,
    init_rankers,
    load_model,
    quartile_tables,
    read_split,
    write_network_files,
    write_predictions,
)
from src.models.graph_vae import holdout_edges, link_auc
from src.numeric import save_checkpoint
from src.retriever import InfVAERanker
from src.synth import BaParams, IcParams, generate_ba, generate_sbm, simulate_ic
from src.trainer import (
    TrainConfig,
    build_training_episodes,
    build_validation_episodes,
    per_epoch_cost_model,
    pretrain_vae,
    train,
)
from src.utils import load_config, record, require, run_metadata, setup_logging, setup_runtime, validate_config

# flag -> config key, per subcommand
FLAGS = {
    'pretrain': {'graph': 'graph_path', 'out': 'out_dir'},
    'train': {'graph': 'graph_path', 'cascades': 'cascades_path', 'out': 'out_dir'},
    'predict': {'checkpoint': 'checkpoint', 'cascades': 'cascades_path', 'seed_pct': 'seed_pct', 'k': 'k', 'out': 'out_path'},
    'evaluate': {
        'checkpoint': 'checkpoint',
        'cascades': 'cascades_path',
        'seed_pct': 'seed_pcts',
        'k': 'k_list',
        'report': 'report',
    },
    'synth': {
        'nodes': 'nodes',
        'm': 'm',
        'p': 'p',
        'len': 'len',
        'cascades': 'cascades',
        'out_dir': 'out_dir',
    },
    'gradcheck': {'tensor': 'tensor'},
}
LIST_FLAGS = {('evaluate', 'seed_pct'), ('evaluate', 'k')}


def parse_list(value: str) -> List[float]:
    """``0.1,0.3`` or the inclusive range ``0.1..0.5`` (step 0.1)."""
    if '..' in value:
        lo, hi = (float(v) for v in value.split('..'))
        steps = int(round((hi - lo) / 0.1))
        return [round(lo + 0.1 * i, 10) for i in range(steps + 1)]
    return [float(v) if '.' in v else int(v) for v in value.split(',') if v]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='main.py', description='Diffusion prediction with social and temporal latent variables')
    parser.add_argument('--version', action='store_true', help='print the version and the default config')
    sub = parser.add_subparsers(dest='command')
    for name, flags in FLAGS.items():
        p = sub.add_parser(name)
        p.add_argument('--config', type=str, default=None, help='a JSON/YAML file merged over the defaults')
        p.add_argument('--seed', type=int, default=None)
        p.add_argument('--threads', type=int, default=None)
        for flag in flags:
            p.add_argument(f'--{flag.replace("_", "-")}', dest=flag, type=str, default=None)
    return parser


def _flag_overrides(command: str, args: argparse.Namespace) -> List[str]:
    overrides = []
    for flag, key in FLAGS[command].items():
        value = getattr(args, flag)
        if value is None:
            continue
        if (command, flag) in LIST_FLAGS:
            value = json.dumps(parse_list(value))
        overrides.append(f'{key}={value}')
    if args.seed is not None:
        overrides.append(f'seed={args.seed}')
    if args.threads is not None:
        overrides.append(f'threads={args.threads}')
    return overrides


def _out_dir_of(command: str, cfg: DictConfig) -> Optional[str]:
    if command in ('pretrain', 'train', 'synth'):
        return cfg.out_dir
    if command == 'predict':
        return os.path.dirname(os.path.abspath(cfg.out_path))
    if command == 'evaluate':
        return os.path.dirname(os.path.abspath(cfg.report))
    return None


def cmd_pretrain(cfg: DictConfig) -> int:
    require(cfg, 'graph_path')
    train_cfg = TrainConfig.from_cfg(cfg.train)
    net = load_network(cfg.graph_path, cfg.vocab_path)
    rng = np.random.default_rng(cfg.seed)
    train_net, hidden, negatives = holdout_edges(net, cfg.holdout_frac, rng)
    model = build_model(cfg.model, train_cfg, train_net)
    history = pretrain_vae(model, train_cfg, cfg.out_dir)
    auc = link_auc(model.vae.posterior_mean(), hidden, negatives)
    logger.info(f'held-out link prediction AUC: {auc:.4f}')

    meta = run_metadata(cfg)
    manifest = {**meta, 'stage': 'pretrain', 'graph_path': os.path.abspath(cfg.graph_path), 'num_users': net.num_users}
    write_network_files(net, cfg.out_dir)
    save_checkpoint(cfg.out_dir, model.param_store().snapshot(), manifest)
    record(
        os.path.join(cfg.out_dir, 'report.json'),
        {'link_auc': auc, 'held_out_edges': int(len(hidden)), 'history': history, **meta},
    )
    return 0


def cmd_train(cfg: DictConfig) -> int:
    require(cfg, 'graph_path', 'cascades_path')
    train_cfg = TrainConfig.from_cfg(cfg.train)
    net = load_network(cfg.graph_path, cfg.vocab_path)
    stats = LoadStats()
    cascades = load_cascades(cfg.cascades_path, net.id_map, cfg.min_cascade_length, stats)
    train_c, val_c, test_c = split_dataset(cascades, train_cfg.split, rng_seed=train_cfg.seed)

    write_network_files(net, cfg.out_dir)
    for split_cascades, file_name in ((train_c, TRAIN_CASCADES_FILE), (val_c, VAL_CASCADES_FILE), (test_c, TEST_CASCADES_FILE)):
        write_cascades(split_cascades, os.path.join(cfg.out_dir, file_name), ids=net.ids)

    train_episodes = build_training_episodes(train_c, train_cfg)
    val_episodes = build_validation_episodes(val_c, train_cfg)
    cost = per_epoch_cost_model(net, train_episodes, train_cfg, hidden_dim=cfg.model.hidden_dims[0])
    logger.info(f'predicted per-epoch cost: {cost}')

    model = build_model(cfg.model, train_cfg, net)
    manifest = {
        **run_metadata(cfg),
        'stage': 'train',
        'graph_path': os.path.abspath(cfg.graph_path),
        'num_users': net.num_users,
        'skipped_cascades': stats.skipped_cascades,
        'unknown_users': stats.unknown_users,
    }
    train(model, net, train_episodes, val_episodes, train_cfg, out_dir=cfg.out_dir, manifest=manifest)
    return 0


def cmd_predict(cfg: DictConfig) -> int:
    require(cfg, 'checkpoint', 'cascades_path')
    model, _, net = load_model(cfg.checkpoint)
    cascades = load_cascades(cfg.cascades_path, net.id_map)
    episodes, _ = slice_all(cascades, cfg.seed_pct)
    ranks = InfVAERanker(model, cfg.infer_batch_size).rank(episodes)
    write_predictions(ranks, cfg.out_path, net.ids, cfg.k)
    return 0


def cmd_evaluate(cfg: DictConfig) -> int:
    require(cfg, 'checkpoint')
    model, manifest, net = load_model(cfg.checkpoint)
    vocab = read_vocab(os.path.join(cfg.checkpoint, VOCAB_FILE))
    test_c = read_split(cfg.checkpoint, TEST_CASCADES_FILE, vocab, cfg.cascades_path)
    train_c = read_split(cfg.checkpoint, TRAIN_CASCADES_FILE, vocab, cfg.train_cascades_path)

    rankers = init_rankers(model, net, train_c, cfg.baselines, cfg.seed, cfg.infer_batch_size)
    table, pooled = evaluate_rankers(rankers, test_c, list(cfg.seed_pcts), list(cfg.k_list))
    report = {
        'checkpoint': os.path.abspath(cfg.checkpoint),
        'checkpoint_config_hash': manifest.get('config_hash'),
        'seed_pct': table,
        'quartiles': quartile_tables(pooled['InfVAE'], net, train_c, cfg.quartile_k),
        **run_metadata(cfg),
    }
    record(cfg.report, {cfg.ex_name: report})
    logger.info(f'write the report of {cfg.ex_name} to {cfg.report}')
    return 0


def cmd_synth(cfg: DictConfig) -> int:
    if cfg.generator == 'ba':
        net = generate_ba(BaParams(n=cfg.nodes, m=cfg.m, seed=cfg.seed))
    elif cfg.generator == 'sbm':
        net = generate_sbm(list(cfg.sbm.sizes), cfg.sbm.p_in, cfg.sbm.p_out, seed=cfg.seed)
    else:
        raise ConfigError(f'the generator should in ["ba", "sbm"], but got {cfg.generator}')
    params = IcParams(p=cfg.p, length=cfg.len, num_cascades=cfg.cascades, seed=cfg.seed, max_attempts=cfg.max_attempts)
    cascades, rejected = simulate_ic(net, params)
    write_network_files(net, cfg.out_dir)
    write_cascades(cascades, os.path.join(cfg.out_dir, 'cascades.tsv'), ids=net.ids)
    record(
        os.path.join(cfg.out_dir, 'synth_info.json'),
        {'num_users': net.num_users, 'num_edges': net.num_edges, 'num_cascades': len(cascades), 'rejected': rejected, **run_metadata(cfg)},
    )
    return 0


def cmd_gradcheck(cfg: DictConfig) -> int:
    results = run_gradcheck(
        num_users=cfg.nodes,
        embed_dim=cfg.dim,
        num_episodes=cfg.episodes,
        terms=list(cfg.terms),
        variants=list(cfg.variants),
        fusions=list(cfg.fusions),
        tied=list(cfg.tied),
        tensor=cfg.tensor,
        points=cfg.points,
        h=cfg.h,
        seed=cfg.seed,
        floor=cfg.floor,
    )
    if cfg.floor:
        logger.info(
            f'differences below 10*eps*max(1,|f|)/h (h={cfg.h}) count as agreement; '
            f'columns: tensor, max_rel_err, raw_max_rel_err, floored/checked coordinates'
        )
    for name, r in results.items():
        print(f'{name}\t{r.max_rel_err:.3e}\t{r.raw_max_rel_err:.3e}\t{r.floored}/{r.checked}')
    floored = sum(r.floored for r in results.values())
    if floored:
        logger.warning(f'{floored} coordinates passed only through the round-off floor')
    failed = {n: r.max_rel_err for n, r in results.items() if r.max_rel_err >= cfg.tol}
    if failed:
        worst = max(failed, key=failed.get)
        raise NumericalDivergenceError(f'{len(failed)} gradient checks above {cfg.tol}, worst {worst}', tensor_name=worst)
    logger.info(f'all {len(results)} gradient checks below {cfg.tol}')
    return 0


COMMANDS: Dict[str, Callable[[DictConfig], int]] = {
    'pretrain': cmd_pretrain,
    'train': cmd_train,
    'predict': cmd_predict,
    'evaluate': cmd_evaluate,
    'synth': cmd_synth,
    'gradcheck': cmd_gradcheck,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    if args.version:
        print(f'infvae {__version__}')
        print(OmegaConf.to_yaml(load_config('train', overrides=['graph_path=<edges.tsv>', 'cascades_path=<cascades.tsv>'])))
        return 0
    if args.command is None:
        parser.print_help()
        return 1
    try:
        cfg = load_config(args.command, args.config, [*extra, *_flag_overrides(args.command, args)])
        setup_logging(cfg.log_level, _out_dir_of(args.command, cfg))
        validate_config(cfg)
        precision = cfg.train.precision if 'train' in cfg else 64
        setup_runtime(cfg.seed, precision, cfg.threads)
        logger.info(f'{args.command}: config hash {run_metadata(cfg)["config_hash"][:12]}')
        return COMMANDS[args.command](cfg)
    except InfVAEError as e:
        logger.error(f'error={type(e).__name__} code={e.exit_code} message={e}')
        return e.exit_code
