from rdsync.flow.cocycle import (
    BatchResult,
    EnsembleResult,
    TangentFrame,
    Trajectory,
    evolve,
    evolve_ensemble,
    evolve_seeds,
    integrate,
    pullback_evolve,
    tangent_evolve,
)
from rdsync.flow.integrators import EXPLOSION_NORM, step, step_jacobian
from rdsync.flow.io import write_trajectory_csv

__all__ = [
    "EXPLOSION_NORM",
    "BatchResult",
    "EnsembleResult",
    "TangentFrame",
    "Trajectory",
    "evolve",
    "evolve_ensemble",
    "evolve_seeds",
    "integrate",
    "pullback_evolve",
    "step",
    "step_jacobian",
    "tangent_evolve",
    "write_trajectory_csv",
]
