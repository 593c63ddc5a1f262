from rdsync.diagnostics.clustering import cluster_count, default_linkage_epsilon, wrapped_difference
from rdsync.diagnostics.conditions import (
    check_eventual_monotone,
    check_hessian_at_minima,
    check_monotone_on_large_sets,
    check_one_sided_lipschitz,
    contraction_rate,
    gradient_direction_search,
    quotient,
    replay_witness,
)
from rdsync.diagnostics.control import contraction_witness, swift_control
from rdsync.diagnostics.mesh import ball_mesh
from rdsync.diagnostics.sync import (
    PullbackEnsemble,
    ball_diameter,
    pullback_ensemble,
    pullback_seeds,
    two_point_sync,
    write_sync_csv,
)

__all__ = [
    "PullbackEnsemble",
    "ball_diameter",
    "ball_mesh",
    "check_eventual_monotone",
    "check_hessian_at_minima",
    "check_monotone_on_large_sets",
    "check_one_sided_lipschitz",
    "cluster_count",
    "contraction_rate",
    "contraction_witness",
    "default_linkage_epsilon",
    "gradient_direction_search",
    "pullback_ensemble",
    "pullback_seeds",
    "quotient",
    "replay_witness",
    "swift_control",
    "two_point_sync",
    "wrapped_difference",
    "write_sync_csv",
]
