from .barabasi_albert import BaParams, generate_ba
from .independent_cascade import IcParams, simulate_ic, simulate_ic_once
from .sbm import generate_sbm, sbm_blocks
