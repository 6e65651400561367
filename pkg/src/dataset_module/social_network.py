"""Social network ingestion and the normalized matrix views used by both graph autoencoders."""

import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import torch
from loguru import logger

from src.errors import IngestionError


@dataclass(frozen=True)
class SocialNetwork:
    num_users: int
    edges: np.ndarray  # (E, 2), i < j, lexicographically sorted
    adjacency: sp.csr_matrix
    degree: np.ndarray
    ids: List[str] = field(default_factory=list)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def id_map(self) -> Dict[str, int]:
        return {uid: idx for idx, uid in enumerate(self.ids)}

    def neighbors(self, i: int) -> np.ndarray:
        start, end = self.adjacency.indptr[i], self.adjacency.indptr[i + 1]
        return self.adjacency.indices[start:end]


@dataclass(frozen=True)
class NormalizedView:
    laplacian: sp.csr_matrix  # L = D^{-1/2} A D^{-1/2}
    a_hat: sp.csr_matrix  # L + I_N

    @property
    def num_users(self) -> int:
        return self.laplacian.shape[0]


def build_network(
    edge_list: Sequence[Tuple],
    id_map: Optional[Dict[str, int]] = None,
    num_users: Optional[int] = None,
) -> SocialNetwork:
    """Build a deduplicated, symmetric, self-loop-free network.

    Args:
        edge_list: ``(src, dst)`` pairs of external ids, optionally with a third
            element holding the source line number used in error messages.
        id_map: fixed external-id -> index mapping. When given, unknown ids raise
            ``IngestionError``; otherwise indices are assigned in first-appearance order.
        num_users: total user count, for networks whose users are not all edge endpoints.
    """
    if not edge_list:
        raise IngestionError('the edge list is empty')

    assign = id_map is None
    mapping = {} if assign else dict(id_map)
    pairs = set()
    for pos, record in enumerate(edge_list):
        src, dst = record[0], record[1]
        line_no = record[2] if len(record) > 2 else pos + 1
        idx_pair = []
        for uid in (src, dst):
            uid = str(uid)
            if uid not in mapping:
                if not assign:
                    raise IngestionError(f'unknown user id {uid!r} at line {line_no}')
                mapping[uid] = len(mapping)
            idx_pair.append(mapping[uid])
        i, j = idx_pair
        if i == j:
            continue
        pairs.add((min(i, j), max(i, j)))

    n = max(len(mapping), num_users or 0, max(mapping.values(), default=-1) + 1)
    ids = [str(k) for k in range(n)]
    for uid, idx in mapping.items():
        ids[idx] = uid

    edges = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    return _from_edges(n, edges, ids)


def from_index_edges(num_users: int, edges: Iterable[Tuple[int, int]]) -> SocialNetwork:
    """Build a network straight from integer edges (synthetic graphs)."""
    edge_list = [(int(i), int(j)) for i, j in edges]
    pairs = sorted({(min(i, j), max(i, j)) for i, j in edge_list if i != j})
    arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    if arr.size and arr.max() >= num_users:
        raise IngestionError(f'edge endpoint {arr.max()} outside [0, {num_users})')
    return _from_edges(num_users, arr, [str(k) for k in range(num_users)])


def _from_edges(n: int, edges: np.ndarray, ids: List[str]) -> SocialNetwork:
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    data = np.ones(rows.shape[0], dtype=np.float64)
    adjacency = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    adjacency.sort_indices()
    degree = np.asarray(adjacency.sum(axis=1)).ravel().astype(np.int64)
    return SocialNetwork(
        num_users=n, edges=edges, adjacency=adjacency, degree=degree, ids=ids
    )


def normalized_laplacian(net: SocialNetwork) -> NormalizedView:
    degree = net.degree.astype(np.float64)
    inv_sqrt = np.zeros_like(degree)
    nz = degree > 0
    # isolated users keep an all-zero row and column
    inv_sqrt[nz] = 1.0 / np.sqrt(degree[nz])
    d_half = sp.diags(inv_sqrt)
    laplacian = sp.csr_matrix(d_half @ net.adjacency @ d_half)
    laplacian.sort_indices()
    a_hat = sp.csr_matrix(laplacian + sp.identity(net.num_users, format='csr'))
    a_hat.sort_indices()
    return NormalizedView(laplacian=laplacian, a_hat=a_hat)


def neighborhood_row(view: NormalizedView, i: int) -> np.ndarray:
    n = view.num_users
    if not 0 <= i < n:
        raise IndexError(f'user index {i} out of range [0, {n})')
    return view.laplacian.getrow(i).toarray().ravel()


def neighborhood_rows(view: NormalizedView, users) -> np.ndarray:
    users = np.asarray(users, dtype=np.int64)
    return view.laplacian[users].toarray()


def to_torch_sparse(matrix: sp.spmatrix, dtype=None) -> torch.Tensor:
    coo = matrix.tocoo()
    indices = torch.from_numpy(np.vstack([coo.row, coo.col]).astype(np.int64))
    values = torch.from_numpy(coo.data).to(dtype or torch.get_default_dtype())
    return torch.sparse_coo_tensor(indices, values, coo.shape).coalesce()


def read_edge_list(path: str) -> List[Tuple[str, str, int]]:
    if not os.path.exists(path):
        raise IngestionError(f'edge list file {path} not exists')
    records = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            parts = line.split('\t')
            if len(parts) < 2:
                raise IngestionError(f'{path}:{line_no} should be "src<TAB>dst", but got {line!r}')
            records.append((parts[0], parts[1], line_no))
    logger.info(f'read {len(records)} edges from {path}')
    return records


def load_network(path: str, vocab_path: Optional[str] = None) -> SocialNetwork:
    id_map = read_vocab(vocab_path) if vocab_path else None
    return build_network(read_edge_list(path), id_map=id_map, num_users=len(id_map) if id_map else None)


def write_edge_list(net: SocialNetwork, path: str):
    with open(path, 'w', encoding='utf-8') as f:
        for i, j in net.edges:
            f.write(f'{net.ids[i]}\t{net.ids[j]}\n')


def write_vocab(net: SocialNetwork, path: str):
    with open(path, 'w', encoding='utf-8') as f:
        for idx, uid in enumerate(net.ids):
            f.write(f'{uid}\t{idx}\n')


def read_vocab(path: str) -> Dict[str, int]:
    if not os.path.exists(path):
        raise IngestionError(f'vocab file {path} not exists')
    vocab = {}
    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip('\n')
            if not line:
                continue
            parts = line.split('\t')
            if len(parts) != 2:
                raise IngestionError(f'{path}:{line_no} should be "id<TAB>index"')
            vocab[parts[0]] = int(parts[1])
    return vocab
