import numpy as np
import pytest
import torch

from src.dataset_module.cascade_ds import Cascade
from src.dataset_module.social_network import build_network, from_index_edges, normalized_laplacian
from src.synth import BaParams, IcParams, generate_ba, generate_sbm, simulate_ic
from src.utils import setup_logging


@pytest.fixture(autouse=True)
def float64_default():
    previous = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(previous)


@pytest.fixture(scope='session', autouse=True)
def quiet_logging():
    setup_logging('WARNING')


@pytest.fixture
def edge_net():
    return build_network([('a', 'b')])


@pytest.fixture
def triangle():
    return build_network([('a', 'b'), ('b', 'c'), ('a', 'c')])


@pytest.fixture
def path3():
    return build_network([('a', 'b'), ('b', 'c')])


@pytest.fixture
def small_ba():
    return generate_ba(BaParams(n=30, m=2, seed=0))


@pytest.fixture
def small_view(small_ba):
    return normalized_laplacian(small_ba)


@pytest.fixture
def small_cascades(small_ba):
    rng = np.random.default_rng(0)
    cascades = []
    for idx in range(12):
        users = rng.permutation(small_ba.num_users)[: int(rng.integers(3, 9))]
        cascades.append(Cascade(id=f't{idx}', users=tuple(users.tolist())))
    return cascades


@pytest.fixture(scope='session')
def sbm_net():
    return generate_sbm([50, 50], p_in=0.3, p_out=0.02, seed=0)


@pytest.fixture(scope='session')
def sbm_ic_fixture(sbm_net):
    cascades, _ = simulate_ic(sbm_net, IcParams(p=0.1, length=10, num_cascades=60, seed=2))
    return sbm_net, cascades


@pytest.fixture(scope='session')
def ba_ic_fixture():
    net = generate_ba(BaParams(n=200, m=2, seed=1))
    cascades, _ = simulate_ic(net, IcParams(p=0.1, length=10, num_cascades=60, seed=1))
    return net, cascades


@pytest.fixture
def star():
    return from_index_edges(11, [(0, leaf) for leaf in range(1, 11)])
