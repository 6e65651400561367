import os
import time
from typing import Dict, List, Optional, Sequence

import numpy as np
import pytorch_lightning as pl
import torch
from loguru import logger
from more_itertools import chunked
from torch.utils.data import DataLoader

from src.dataset_module.cascade_ds import Episode, EpisodeDataset, collate_episodes
from src.errors import NumericalDivergenceError
from src.metrics.ranking_metrics import map_at_k, rank_candidates
from src.models.infvae import InfVAE
from src.numeric import RngStream, adam_step, make_adam

VAL_METRIC = 'val_map_10'
TRAIN_LOG_FILE = 'train_log.tsv'


class InfVAEModule(pl.LightningModule):
    """Block coordinate ascent: a network phase on user batches, then a diffusion phase on episode batches.

    ``stage='pretrain'`` only runs the network phase on the plain ELBO.
    """

    def __init__(self, model: InfVAE, cfg, num_train_episodes: int = 0, stage: str = 'fit'):
        super().__init__()
        if stage not in ('pretrain', 'fit'):
            raise ValueError(f'the stage should in ["pretrain", "fit"], but got {stage}')
        self.automatic_optimization = False
        self.model = model
        self.cfg = cfg
        self.stage = stage
        self.num_train_episodes = num_train_episodes
        self.store = model.param_store()
        master = RngStream(cfg.seed)
        self.eps_rng = master.spawn(1 if stage == 'pretrain' else 2)
        self.negative_rng = master.spawn(3)
        if stage == 'pretrain':
            self.phases = ['network']
        elif cfg.static_pretrain:
            # Z is left where pretraining put it
            self.phases = ['diffusion']
        else:
            self.phases = ['network', 'diffusion']
        self.epoch_losses: Dict[str, float] = {}
        self.last_good: Optional[Dict[str, torch.Tensor]] = None
        self.best_state: Optional[Dict[str, torch.Tensor]] = None
        self.best_val = float('-inf')
        self._anchor_fresh = False
        self._val_ranks = []

    def configure_optimizers(self):
        optimizers = []
        for phase in self.phases:
            params = self.model.network_parameters() if phase == 'network' else self.model.diffusion_parameters()
            optimizers.append(make_adam(params, self.cfg.lr, self.cfg.beta1, self.cfg.beta2, self.cfg.adam_eps))
        return optimizers

    def _optimizer(self, phase: str):
        optimizers = self.optimizers()
        if not isinstance(optimizers, (list, tuple)):
            optimizers = [optimizers]
        return optimizers[self.phases.index(phase)]

    def on_train_epoch_start(self) -> None:
        self.epoch_losses = {phase: 0.0 for phase in self.phases}
        self._anchor_fresh = False
        if self.last_good is None:
            self.last_good = self.store.snapshot()

    def _check_loss(self, loss: torch.Tensor, phase: str):
        if not torch.isfinite(loss):
            raise NumericalDivergenceError(f'non-finite loss in the {phase} phase at epoch {self.current_epoch}')

    def training_step(self, batch, batch_idx):
        phase = batch['phase']
        self.model.zero_grad(set_to_none=True)
        if phase == 'network':
            users = batch['users'].tolist()
            if self.stage == 'pretrain':
                loss = -self.model.vae.vae_loglik(users=users, rng=self.eps_rng)
            else:
                loss = self.model.network_loss(users=users, rng=self.eps_rng)
            names = self.model.network_names()
        else:
            if not self._anchor_fresh:
                self.model.refresh_anchor()
                self._anchor_fresh = True
            loss = self.model.diffusion_loss(batch, self.num_train_episodes, generator=self.negative_rng.generator)
            names = self.model.diffusion_names()
        self._check_loss(loss, phase)
        self.manual_backward(loss)
        adam_step(self.store, self._optimizer(phase), names)
        self.epoch_losses[phase] += float(loss.detach())
        logger.debug(f'epoch {self.current_epoch} {phase} batch {batch_idx}: loss={float(loss):.6f}')

    def on_train_epoch_end(self) -> None:
        self.last_good = self.store.snapshot()

    def on_validation_epoch_start(self) -> None:
        self._val_ranks = []

    @torch.no_grad()
    def validation_step(self, batch: List[Episode], batch_idx):
        scores = self.model.score_episodes(batch)
        self._val_ranks.extend(rank_candidates(s, ep) for ep, s in zip(batch, scores))

    def on_validation_epoch_end(self) -> None:
        value = map_at_k(self._val_ranks, 10) if self._val_ranks else 0.0
        self.log(VAL_METRIC, value, prog_bar=True)
        if value > self.best_val:
            self.best_val = value
            self.best_state = self.store.snapshot()


class CascadeDataModule(pl.LightningDataModule):
    def __init__(
        self,
        num_users: int,
        cfg,
        train_episodes: Sequence[Episode] = (),
        val_episodes: Sequence[Episode] = (),
        stage: str = 'fit',
    ):
        super().__init__()
        self.num_users = num_users
        self.cfg = cfg
        self.train_episodes = list(train_episodes)
        self.val_episodes = list(val_episodes)
        self.stage = stage

    def phase_schedule(self, epoch: int) -> List[Dict]:
        """The batches of one epoch: every network batch first, then every diffusion batch."""
        rng = np.random.default_rng([self.cfg.seed, epoch])
        schedule = []
        if self.stage == 'pretrain' or not self.cfg.static_pretrain:
            users = rng.permutation(self.num_users)
            for chunk in chunked(users.tolist(), self.cfg.user_batch_size):
                schedule.append({'phase': 'network', 'users': torch.tensor(chunk, dtype=torch.long)})
        if self.stage == 'fit':
            order = rng.permutation(len(self.train_episodes))
            for chunk in chunked(order.tolist(), self.cfg.episode_batch_size):
                batch = collate_episodes([self.train_episodes[i] for i in chunk], self.num_users)
                schedule.append({'phase': 'diffusion', **batch})
        return schedule

    def train_dataloader(self):
        epoch = self.trainer.current_epoch if self.trainer is not None else 0
        return DataLoader(self.phase_schedule(epoch), batch_size=None, shuffle=False)

    def val_dataloader(self):
        return DataLoader(
            EpisodeDataset(self.val_episodes),
            batch_size=self.cfg.infer_batch_size,
            shuffle=False,
            collate_fn=list,
        )


class TrainLogCallback(pl.Callback):
    """Appends one ``epoch, phase, loss, val MAP@10, wall-seconds`` row per phase and epoch."""

    def __init__(self, out_dir: Optional[str] = None, epoch_offset: int = 0):
        super().__init__()
        self.out_dir = out_dir
        self.epoch_offset = epoch_offset
        self.rows: List[Dict] = []
        self._start = 0.0

    def on_train_epoch_start(self, trainer, pl_module):
        self._start = time.perf_counter()

    def on_train_epoch_end(self, trainer, pl_module):
        wall = time.perf_counter() - self._start
        val = trainer.callback_metrics.get(VAL_METRIC)
        val = float(val) if val is not None else float('nan')
        label = 'pretrain' if pl_module.stage == 'pretrain' else None
        for phase, loss in pl_module.epoch_losses.items():
            row = {
                'epoch': trainer.current_epoch + self.epoch_offset,
                'phase': label or phase,
                'loss': loss,
                'val_map@10': val,
                'wall_seconds': wall,
            }
            self.rows.append(row)
            logger.info(
                f'epoch {row["epoch"]} {row["phase"]}: loss={loss:.6f} val_map@10={val:.5f} time={wall:.2f}s'
            )
            if self.out_dir is not None:
                self._append(row)

    def _append(self, row: Dict):
        os.makedirs(self.out_dir, exist_ok=True)
        path = os.path.join(self.out_dir, TRAIN_LOG_FILE)
        new_file = not os.path.exists(path)
        with open(path, 'a') as f:
            if new_file:
                f.write('epoch\tphase\tloss\tval_map@10\twall_seconds\n')
            f.write(
                f'{row["epoch"]}\t{row["phase"]}\t{row["loss"]:.17g}\t{row["val_map@10"]:.17g}\t{row["wall_seconds"]:.3f}\n'
            )
