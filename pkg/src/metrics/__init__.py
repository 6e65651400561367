from .ranking_metrics import (
    RankResult,
    activity_levels,
    average_precision_at_k,
    brute_force_ap_at_k,
    brute_force_recall_at_k,
    map_at_k,
    mean_metric,
    metric_table,
    quartile_report,
    rank_candidates,
    recall_at_k,
    seed_neighbor_fraction,
    seed_pct_quartile_report,
    target_recall_per_user,
)
