import glob
import hashlib
import json
import os
import sys
from typing import Dict, List, Optional, Sequence

import pytorch_lightning as pl
import torch
from hydra import compose, initialize_config_dir
from hydra.errors import HydraException
from loguru import logger
from omegaconf import DictConfig, OmegaConf
from omegaconf.errors import OmegaConfBaseException

from src import __version__
from src.errors import ConfigError
from src.models.fusion import FUSION_MODES
from src.models.graph_vae import ALLOWED_PAIRINGS
from src.numeric import cast_type
from src.trainer import TrainConfig

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'configs')
GROUPS = ('model', 'ablation')


def _key_of(override: str) -> str:
    return override.split('=', 1)[0].lstrip('+~')


def load_config(
    config_name: str,
    config_file: Optional[str] = None,
    overrides: Sequence[str] = (),
) -> DictConfig:
    """Compose ``configs/<config_name>.yaml``, then merge the user file, then the ``key=value`` overrides.

    The result is in struct mode, so any key the composed config does not define is rejected.
    """
    group_overrides = [o for o in overrides if _key_of(o) in GROUPS]
    value_overrides = [o for o in overrides if _key_of(o) not in GROUPS]
    for o in value_overrides:
        if '=' not in o:
            raise ConfigError(f'the override should be key=value, but got {o!r}')
    try:
        with initialize_config_dir(config_dir=CONFIG_DIR, version_base=None):
            cfg = compose(config_name=config_name, overrides=group_overrides)
    except HydraException as e:
        raise ConfigError(f'cannot compose config {config_name}: {e}')
    OmegaConf.set_struct(cfg, True)
    try:
        if config_file is not None:
            if not os.path.exists(config_file):
                raise ConfigError(f'config file {config_file} not exists')
            cfg = OmegaConf.merge(cfg, OmegaConf.load(config_file))
        if value_overrides:
            cfg = OmegaConf.merge(cfg, OmegaConf.from_dotlist(list(value_overrides)))
        OmegaConf.resolve(cfg)
    except OmegaConfBaseException as e:
        key = getattr(e, 'full_key', None) or getattr(e, 'key', None)
        raise ConfigError(f'invalid config key {key}: {e.msg if hasattr(e, "msg") else e}')
    return cfg


def require(cfg: DictConfig, *keys: str):
    for key in keys:
        if OmegaConf.is_missing(cfg, key) or cfg[key] is None:
            raise ConfigError(f'the config key {key} is required')


def validate_config(cfg: DictConfig):
    if 'model' in cfg:
        pairing = (cfg.model.encoder, cfg.model.decoder)
        if pairing not in ALLOWED_PAIRINGS:
            raise ConfigError(f'the encoder/decoder pairing should in {sorted(ALLOWED_PAIRINGS)}, but got {pairing}')
        if cfg.model.beta < 1:
            raise ConfigError(f'model.beta should be >= 1, but got {cfg.model.beta}')
    if 'train' in cfg:
        if cfg.train.fusion not in FUSION_MODES:
            raise ConfigError(f'train.fusion should in {list(FUSION_MODES)}, but got {cfg.train.fusion}')
        # the dataclass checks the remaining ranges
        TrainConfig.from_cfg(cfg.train)


def to_container(cfg: DictConfig) -> Dict:
    return OmegaConf.to_container(cfg, resolve=True)


def config_hash(cfg) -> str:
    data = to_container(cfg) if isinstance(cfg, DictConfig) else cfg
    return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()


def build_id() -> str:
    src_dir = os.path.dirname(os.path.abspath(__file__))
    digest = hashlib.sha256()
    for path in sorted(glob.glob(os.path.join(src_dir, '**', '*.py'), recursive=True)):
        digest.update(os.path.relpath(path, src_dir).encode())
        with open(path, 'rb') as f:
            digest.update(f.read())
    return f'{__version__}+{digest.hexdigest()[:12]}'


def run_metadata(cfg: DictConfig) -> Dict:
    return {
        'version': __version__,
        'build_id': build_id(),
        'config_hash': config_hash(cfg),
        'config': to_container(cfg),
    }


def setup_logging(level: str = 'INFO', out_dir: Optional[str] = None) -> List[int]:
    logger.remove()
    sinks = [logger.add(sys.stderr, level=level)]
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        sinks.append(logger.add(os.path.join(out_dir, 'run.log'), level=level))
    return sinks


def setup_runtime(seed: int, precision: int = 64, threads: Optional[int] = None):
    pl.seed_everything(seed)
    torch.set_default_dtype(cast_type(precision))
    if threads is not None:
        torch.set_num_threads(threads)
        if threads == 1:
            torch.use_deterministic_algorithms(True)


def record(result_json_path: str, new_data: dict):
    recorded_data = {}
    if os.path.exists(result_json_path):
        with open(result_json_path, 'r') as f:
            recorded_data = json.load(f)

    os.makedirs(os.path.dirname(os.path.abspath(result_json_path)), exist_ok=True)
    with open(result_json_path, 'w') as f:
        recorded_data.update(new_data)
        json.dump(recorded_data, f, indent=4)
