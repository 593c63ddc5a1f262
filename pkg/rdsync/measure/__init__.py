from rdsync.measure.gibbs import GibbsMeasure, ball_mass, density, expect, moments, normalize
from rdsync.measure.sampling import GibbsSpec, default_thin, mc_expect, sample

__all__ = [
    "GibbsMeasure",
    "GibbsSpec",
    "ball_mass",
    "default_thin",
    "density",
    "expect",
    "mc_expect",
    "moments",
    "normalize",
    "sample",
]
