"""Position-encoded temporal influence variables ``v^t = v^p + PE(k)``."""

import torch
from torch import nn

from src.errors import ConfigError


def positional_encoding(k: int, dim: int, dtype=torch.float64) -> torch.Tensor:
    """Sinusoidal encoding of step ``k >= 1``: slots (2d, 2d+1) hold sin/cos of ``k / 10000^(2d/D)``."""
    if dim % 2 != 0:
        raise ConfigError(f'the embedding dim should be even, but got {dim}')
    if k < 1:
        raise ValueError(f'the activation step should be >= 1, but got {k}')
    return positional_table(k, dim, dtype)[k - 1]


def positional_table(k_max: int, dim: int, dtype=torch.float64) -> torch.Tensor:
    """Rows ``PE(1) .. PE(k_max)``."""
    if dim % 2 != 0:
        raise ConfigError(f'the embedding dim should be even, but got {dim}')
    steps = torch.arange(1, k_max + 1, dtype=torch.float64).unsqueeze(1)
    exponents = torch.arange(0, dim, 2, dtype=torch.float64) / dim
    angles = steps / torch.pow(torch.tensor(10000.0, dtype=torch.float64), exponents)
    table = torch.empty(k_max, dim, dtype=torch.float64)
    table[:, 0::2] = torch.sin(angles)
    table[:, 1::2] = torch.cos(angles)
    return table.to(dtype)


class TemporalInfluence(nn.Module):
    def __init__(self, num_users: int, embed_dim: int, k_max: int = 64, init_std: float = 0.1):
        super().__init__()
        if embed_dim % 2 != 0:
            raise ConfigError(f'the embedding dim should be even, but got {embed_dim}')
        self.embed_dim = embed_dim
        self.popularity = nn.Parameter(torch.randn(num_users, embed_dim) * init_std)
        self.register_buffer('table', positional_table(k_max, embed_dim, self.popularity.dtype), persistent=False)

    @property
    def k_max(self) -> int:
        return self.table.shape[0]

    def _ensure(self, k: int):
        if k > self.k_max:
            new_size = max(k, 2 * self.k_max)
            self.table = positional_table(new_size, self.embed_dim, self.popularity.dtype).to(
                self.popularity.device
            )

    def positions(self, steps: torch.Tensor) -> torch.Tensor:
        """Look up ``PE(k)`` for a tensor of 1-based steps."""
        self._ensure(int(steps.max()) if steps.numel() else 1)
        return self.table.to(self.popularity.dtype)[steps - 1]

    def temporal_variable(self, user: int, k: int) -> torch.Tensor:
        return self.popularity[user] + self.positions(torch.tensor([k]))[0]

    def forward(self, seed_idx: torch.Tensor, seed_mask: torch.Tensor) -> torch.Tensor:
        """Temporal variables for padded seed sequences; positions restart at 1 in every episode."""
        steps = torch.arange(1, seed_idx.shape[1] + 1).expand_as(seed_idx)
        v_t = self.popularity[seed_idx] + self.positions(steps)
        return v_t * seed_mask.unsqueeze(-1).to(v_t.dtype)
