"""Tensor helpers, the named parameter store, optimizer step, RNG streams and the finite-difference oracle."""

import hashlib
import json
import os
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import torch
from loguru import logger
from torch import nn

from src.errors import IngestionError, NumericalDivergenceError, ShapeError

CHECKPOINT_FORMAT_VERSION = 1
CHECKPOINT_FILE = 'checkpoint.bin'
MANIFEST_FILE = 'manifest.json'


def cast_type(precision) -> torch.dtype:
    precision_map = {64: torch.float64, '64': torch.float64, 32: torch.float32, '32': torch.float32}
    if precision not in precision_map:
        raise ValueError(f'the precision should in [32, 64], but got {precision}')
    return precision_map[precision]


def sigmoid(x: torch.Tensor) -> torch.Tensor:
    return torch.sigmoid(x)


def tanh(x: torch.Tensor) -> torch.Tensor:
    return torch.tanh(x)


def softmax(x: torch.Tensor, dim: int = -1, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Max-shifted softmax; masked-out entries get exactly zero weight."""
    if mask is not None:
        x = x.masked_fill(~mask, float('-inf'))
    shifted = x - x.max(dim=dim, keepdim=True).values.detach()
    e = torch.exp(shifted)
    return e / e.sum(dim=dim, keepdim=True)


def gemm(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.shape[-1] != b.shape[-2 if b.dim() > 1 else 0]:
        raise ShapeError(f'gemm shape mismatch: {tuple(a.shape)} @ {tuple(b.shape)}')
    return a @ b


def sparse_dense_matmul(a: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    if a.shape[1] != x.shape[0]:
        raise ShapeError(f'sparse matmul shape mismatch: {tuple(a.shape)} @ {tuple(x.shape)}')
    return torch.sparse.mm(a, x)


def relative_error(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))


class ParamStore:
    """Named view over every trainable tensor of a module.

    Tied tensors appear once (``nn.Module.named_parameters`` deduplicates), so
    each tensor has exactly one owner name.
    """

    def __init__(self, module: nn.Module):
        self.module = module

    def named(self, prefixes: Optional[Sequence[str]] = None) -> List[Tuple[str, nn.Parameter]]:
        items = list(self.module.named_parameters())
        if prefixes is None:
            return items
        return [(n, p) for n, p in items if any(n.startswith(pre) for pre in prefixes)]

    def names(self, prefixes: Optional[Sequence[str]] = None) -> List[str]:
        return [n for n, _ in self.named(prefixes)]

    def tensor(self, name: str) -> nn.Parameter:
        params = dict(self.module.named_parameters())
        if name not in params:
            raise KeyError(f'unknown tensor {name}, should in {list(params)}')
        return params[name]

    def zero_grad(self):
        for _, p in self.named():
            if p.grad is not None:
                p.grad.zero_()

    def check_finite_grads(self, names: Optional[Iterable[str]] = None):
        wanted = set(names) if names is not None else None
        for n, p in self.named():
            if wanted is not None and n not in wanted:
                continue
            if p.grad is not None and not torch.isfinite(p.grad).all():
                raise NumericalDivergenceError(f'non-finite gradient in tensor {n}', tensor_name=n)

    def checksum(self, names: Optional[Iterable[str]] = None) -> str:
        digest = hashlib.sha256()
        wanted = sorted(names) if names is not None else sorted(self.names())
        params = dict(self.module.named_parameters())
        for n in wanted:
            digest.update(n.encode())
            digest.update(params[n].detach().cpu().contiguous().numpy().tobytes())
        return digest.hexdigest()

    def snapshot(self) -> Dict[str, torch.Tensor]:
        return {n: p.detach().clone() for n, p in self.named()}

    def restore(self, state: Dict[str, torch.Tensor]):
        with torch.no_grad():
            for n, p in self.named():
                p.copy_(state[n])


class RngStream:
    """Seeded draw stream; the same seed yields the same sequence on every platform."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.counter = 0
        self._generator = torch.Generator().manual_seed(self.seed)

    def normal(self, *shape, dtype: Optional[torch.dtype] = None) -> torch.Tensor:
        out = torch.randn(*shape, generator=self._generator, dtype=dtype or torch.get_default_dtype())
        self.counter += out.numel()
        return out

    def numpy(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed))

    def spawn(self, key: int) -> 'RngStream':
        child = np.random.SeedSequence([self.seed, int(key)]).generate_state(1, np.uint64)[0]
        return RngStream(int(child) >> 1)

    @property
    def generator(self) -> torch.Generator:
        return self._generator


def make_adam(params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    return torch.optim.Adam(params, lr=lr, betas=(beta1, beta2), eps=eps)


def adam_step(store: ParamStore, optimizer: torch.optim.Optimizer, names: Optional[Iterable[str]] = None):
    """One Adam step on the negated objective; aborts before touching any tensor if a gradient is not finite."""
    store.check_finite_grads(names)
    optimizer.step()


def finite_diff_grad(
    loss_fn: Callable[[], torch.Tensor],
    store: ParamStore,
    name: str,
    h: float = 1e-6,
    coords: Optional[Sequence[int]] = None,
) -> torch.Tensor:
    """Central differences ``(f(x+h) - f(x-h)) / 2h`` for the coordinates of one tensor.

    Coordinates not listed in ``coords`` are left at zero.
    """
    param = store.tensor(name)
    grad = torch.zeros(param.numel(), dtype=torch.float64)
    coords = range(param.numel()) if coords is None else coords
    with torch.no_grad():
        flat = param.data.view(-1)
        for c in coords:
            orig = flat[c].item()
            flat[c] = orig + h
            f_plus = float(loss_fn())
            flat[c] = orig - h
            f_minus = float(loss_fn())
            flat[c] = orig
            grad[c] = (f_plus - f_minus) / (2 * h)
    return grad.view(param.shape)


@dataclass(frozen=True)
class GradCheck:
    max_rel_err: float
    # the same maximum without the round-off floor
    raw_max_rel_err: float
    floored: int = 0
    checked: int = 0


def roundoff_floor(loss_value: float, h: float) -> float:
    """Absolute error a central difference cannot resolve: ``10 * machine_eps * max(1, |f|) / h``."""
    return 10 * np.finfo(np.float64).eps * max(1.0, abs(loss_value)) / h


def gradcheck_tensor(
    loss_fn: Callable[[], torch.Tensor],
    store: ParamStore,
    name: str,
    points: int = 100,
    h: float = 1e-5,
    rng: Optional[np.random.Generator] = None,
    floor: bool = True,
) -> GradCheck:
    """Max relative error between autograd and central differences at up to ``points`` coordinates.

    With ``floor`` the coordinates whose absolute difference is below ``roundoff_floor``
    count as agreement; they are reported in ``floored`` and ``raw_max_rel_err`` keeps
    the unfloored maximum.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    store.zero_grad()
    loss = loss_fn()
    param = store.tensor(name)
    param_grad, = torch.autograd.grad(loss, param, allow_unused=True)
    numel = param.numel()
    if param_grad is None or numel == 0:
        # the loss does not touch this tensor
        return GradCheck(0.0, 0.0)
    analytic = param_grad.detach()
    coords = np.sort(rng.choice(numel, size=min(points, numel), replace=False))
    numeric = finite_diff_grad(loss_fn, store, name, h=h, coords=coords.tolist())
    a = analytic.reshape(-1)[coords].cpu().numpy()
    b = numeric.reshape(-1)[coords].cpu().numpy()
    raw = relative_error(a, b)
    err = raw.copy()
    below = np.zeros(len(coords), dtype=bool)
    if floor:
        below = np.abs(a - b) <= roundoff_floor(float(loss), h)
        err[below] = 0.0
    # only coordinates the floor actually changed
    floored = int(np.count_nonzero(below & (raw > 0)))
    return GradCheck(float(err.max()), float(raw.max()), floored, len(coords))


def save_checkpoint(out_dir: str, tensors: Dict[str, torch.Tensor], manifest: Dict):
    os.makedirs(out_dir, exist_ok=True)
    payload = {
        'format_version': CHECKPOINT_FORMAT_VERSION,
        'tensors': {n: t.detach().cpu().contiguous() for n, t in tensors.items()},
    }
    torch.save(payload, os.path.join(out_dir, CHECKPOINT_FILE))
    with open(os.path.join(out_dir, MANIFEST_FILE), 'w') as f:
        json.dump(manifest, f, indent=4)
    logger.info(f'save the checkpoint to {out_dir}')


def load_checkpoint(ckpt_dir: str) -> Tuple[Dict[str, torch.Tensor], Dict]:
    bin_path = os.path.join(ckpt_dir, CHECKPOINT_FILE)
    manifest_path = os.path.join(ckpt_dir, MANIFEST_FILE)
    if not os.path.exists(bin_path) or not os.path.exists(manifest_path):
        raise IngestionError(f'no {CHECKPOINT_FILE} / {MANIFEST_FILE} in {ckpt_dir}')
    payload = torch.load(bin_path)
    if payload.get('format_version') != CHECKPOINT_FORMAT_VERSION:
        raise IngestionError(
            f'checkpoint format version should be {CHECKPOINT_FORMAT_VERSION}, but got {payload.get("format_version")}'
        )
    with open(manifest_path, 'r') as f:
        manifest = json.load(f)
    return payload['tensors'], manifest
