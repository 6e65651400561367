"""Pretraining and alternating block-coordinate training of the diffusion model."""

import os
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pytorch_lightning as pl
import torch
from loguru import logger
from omegaconf import DictConfig, OmegaConf
from pytorch_lightning.callbacks import EarlyStopping, ModelCheckpoint

from src.dataset_module.cascade_ds import Cascade, Episode, make_episodes, slice_all
from src.dataset_module.social_network import SocialNetwork, normalized_laplacian
from src.errors import ConfigError, IngestionError, NumericalDivergenceError
from src.lightning_module import VAL_METRIC, CascadeDataModule, InfVAEModule, TrainLogCallback
from src.models.infvae import InfVAE
from src.numeric import save_checkpoint


@dataclass
class TrainConfig:
    embed_dim: int = 64
    lambda_s: float = 0.01
    lambda_r: float = 0.1
    lambda_p: float = 0.1
    eta: Union[str, float] = 'balanced'
    fusion: str = 'coattention'
    tie_sender_receiver: bool = False
    static_pretrain: bool = False
    negative_cap: Optional[int] = None
    init_std: float = 0.1
    k_max: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    user_batch_size: int = 256
    episode_batch_size: int = 64
    infer_batch_size: int = 256
    epochs: int = 50
    pretrain_epochs: int = 10
    patience: int = 5
    val_seed_pct: float = 0.3
    split: List[float] = field(default_factory=lambda: [0.7, 0.1, 0.2])
    max_episodes_per_cascade: Optional[int] = None
    precision: int = 64
    seed: int = 42

    def __post_init__(self):
        if self.embed_dim <= 0 or self.embed_dim % 2 != 0:
            raise ConfigError(f'embed_dim should be even and positive, but got {self.embed_dim}')
        for name in ('lambda_s', 'lambda_r', 'lambda_p'):
            if getattr(self, name) < 0:
                raise ConfigError(f'{name} should be >= 0, but got {getattr(self, name)}')
        if self.lr <= 0:
            raise ConfigError(f'lr should be > 0, but got {self.lr}')
        for name in ('user_batch_size', 'episode_batch_size', 'infer_batch_size', 'patience'):
            if getattr(self, name) < 1:
                raise ConfigError(f'{name} should be >= 1, but got {getattr(self, name)}')
        for name in ('epochs', 'pretrain_epochs'):
            if getattr(self, name) < 0:
                raise ConfigError(f'{name} should be >= 0, but got {getattr(self, name)}')
        if self.precision not in (32, 64):
            raise ConfigError(f'precision should in [32, 64], but got {self.precision}')

    @classmethod
    def from_cfg(cls, cfg: Union[DictConfig, Dict], seed: Optional[int] = None) -> 'TrainConfig':
        data = OmegaConf.to_container(cfg, resolve=True) if isinstance(cfg, DictConfig) else dict(cfg)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f'unknown train config keys: {unknown}')
        if seed is not None:
            data['seed'] = seed
        return cls(**data)

    def to_dict(self) -> Dict:
        return asdict(self)

    def model_kwargs(self) -> Dict:
        return {
            'embed_dim': self.embed_dim,
            'lambda_s': self.lambda_s,
            'lambda_r': self.lambda_r,
            'lambda_p': self.lambda_p,
            'eta': self.eta,
            'fusion': self.fusion,
            'tie_sender_receiver': self.tie_sender_receiver,
            'k_max': self.k_max,
            'init_std': self.init_std,
            'negative_cap': self.negative_cap,
        }


def build_training_episodes(cascades: Sequence[Cascade], cfg: TrainConfig) -> List[Episode]:
    rng = np.random.default_rng(cfg.seed)
    episodes = []
    for c in cascades:
        episodes.extend(make_episodes(c, cfg.max_episodes_per_cascade, rng=rng))
    logger.info(f'built {len(episodes)} training episodes from {len(cascades)} cascades')
    return episodes


def build_validation_episodes(cascades: Sequence[Cascade], cfg: TrainConfig) -> List[Episode]:
    return slice_all(cascades, cfg.val_seed_pct)[0]


def block_checksums(model: InfVAE) -> Dict[str, str]:
    store = model.param_store()
    return {
        'network': store.checksum(model.network_names()),
        'diffusion': store.checksum(model.diffusion_names()),
    }


def per_epoch_cost_model(net: SocialNetwork, episodes: Sequence[Episode], cfg: TrainConfig, hidden_dim: int = 64) -> Dict:
    """Multiply-accumulate counts of the dominant terms: ``|E| F^2 + |E| D`` and ``|T| D N``."""
    num_edges = net.num_edges
    network = num_edges * hidden_dim ** 2 + num_edges * cfg.embed_dim
    diffusion = len(episodes) * cfg.embed_dim * net.num_users
    return {'network': network, 'diffusion': diffusion, 'total': network + diffusion}


def deterministic_mode():
    """Strict when ``setup_runtime`` already switched torch to deterministic kernels (``--threads 1``), else warn only."""
    if torch.are_deterministic_algorithms_enabled() and not torch.is_deterministic_algorithms_warn_only_enabled():
        return True
    return 'warn'


def _trainer(cfg: TrainConfig, max_epochs: int, callbacks, out_dir: Optional[str], validate: bool) -> pl.Trainer:
    return pl.Trainer(
        max_epochs=max_epochs,
        accelerator='cpu',
        devices=1,
        precision='64-true' if cfg.precision == 64 else '32-true',
        deterministic=deterministic_mode(),
        logger=False,
        callbacks=callbacks,
        enable_checkpointing=any(isinstance(c, ModelCheckpoint) for c in callbacks),
        enable_progress_bar=False,
        enable_model_summary=False,
        num_sanity_val_steps=0,
        reload_dataloaders_every_n_epochs=1,
        limit_val_batches=1.0 if validate else 0,
        default_root_dir=out_dir,
    )


def pretrain_vae(model: InfVAE, cfg: TrainConfig, out_dir: Optional[str] = None) -> List[Dict]:
    """Fit the social VAE alone for ``cfg.pretrain_epochs`` epochs; returns the logged rows."""
    if cfg.pretrain_epochs == 0:
        return []
    logger.info(f'pretrain the social VAE for {cfg.pretrain_epochs} epochs')
    module = InfVAEModule(model, cfg, stage='pretrain')
    data_module = CascadeDataModule(model.num_users, cfg, stage='pretrain')
    log_cb = TrainLogCallback(out_dir)
    trainer = _trainer(cfg, cfg.pretrain_epochs, [log_cb], out_dir, validate=False)
    _fit_or_restore(trainer, module, data_module, model, out_dir)
    return log_cb.rows


def _fit_or_restore(trainer, module: InfVAEModule, data_module, model: InfVAE, out_dir, manifest=None):
    try:
        trainer.fit(module, datamodule=data_module)
    except NumericalDivergenceError as e:
        logger.error(f'training diverged: {e}')
        if module.last_good is not None:
            model.param_store().restore(module.last_good)
        if out_dir is not None:
            save_checkpoint(out_dir, model.param_store().snapshot(), manifest or {'aborted': True})
        raise


def train(
    model: InfVAE,
    net: SocialNetwork,
    train_episodes: Sequence[Episode],
    val_episodes: Sequence[Episode],
    cfg: TrainConfig,
    out_dir: Optional[str] = None,
    manifest: Optional[Dict] = None,
) -> Tuple[InfVAE, List[Dict]]:
    """Pretrain, then alternate the network and diffusion phases until ``cfg.epochs`` or early stop.

    With an ``out_dir`` the best-validation parameters are written there as
    ``checkpoint.bin`` + ``manifest.json`` next to ``train_log.tsv``.
    """
    if not train_episodes:
        raise IngestionError('the training set has no episodes')
    if model.vae.net is None:
        model.vae.attach(net, normalized_laplacian(net))
    history = pretrain_vae(model, cfg, out_dir)
    if cfg.static_pretrain:
        model.freeze_prefix(['vae.'])

    if cfg.epochs > 0:
        validate = len(val_episodes) > 0
        module = InfVAEModule(model, cfg, num_train_episodes=len(train_episodes), stage='fit')
        data_module = CascadeDataModule(model.num_users, cfg, train_episodes, val_episodes, stage='fit')
        log_cb = TrainLogCallback(out_dir, epoch_offset=cfg.pretrain_epochs)
        callbacks = [log_cb]
        if validate:
            callbacks.append(EarlyStopping(monitor=VAL_METRIC, mode='max', patience=cfg.patience))
            if out_dir is not None:
                callbacks.append(
                    ModelCheckpoint(
                        dirpath=os.path.join(out_dir, 'lightning'),
                        filename='best-{epoch}-{val_map_10:.5f}',
                        monitor=VAL_METRIC,
                        mode='max',
                        save_top_k=1,
                        save_last=True,
                    )
                )
        else:
            logger.warning('no validation episodes, early stopping is disabled')
        trainer = _trainer(cfg, cfg.epochs, callbacks, out_dir, validate)
        _fit_or_restore(trainer, module, data_module, model, out_dir, manifest)
        history += log_cb.rows
        if module.best_state is not None:
            logger.info(f'restore the best validation parameters ({VAL_METRIC}={module.best_val:.5f})')
            model.param_store().restore(module.best_state)
    model.refresh_anchor()

    if out_dir is not None:
        save_checkpoint(out_dir, model.param_store().snapshot(), manifest or {})
    return model, history

