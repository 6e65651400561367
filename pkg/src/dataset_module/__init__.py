from .cascade_ds import (
    Cascade,
    Episode,
    EpisodeDataset,
    LoadStats,
    collate_episodes,
    load_cascades,
    make_episodes,
    seed_slice,
    slice_all,
    split_dataset,
    write_cascades,
)
from .social_network import (
    NormalizedView,
    SocialNetwork,
    build_network,
    from_index_edges,
    load_network,
    neighborhood_row,
    neighborhood_rows,
    normalized_laplacian,
    read_edge_list,
    read_vocab,
    to_torch_sparse,
    write_edge_list,
    write_vocab,
)
