from .base_model import BaseModel
from .fusion import CoAttentionFusion, FusionOutput, MeanPoolFusion, SeparateAttentionFusion, build_fusion, coattend
from .graph_vae import GraphVAE, SocialPosterior, holdout_edges, kl_term, link_auc, sample_z
from .infvae import InfVAE, diffusion_loglik, influence_prob, social_reg
from .temporal import TemporalInfluence, positional_encoding, positional_table
