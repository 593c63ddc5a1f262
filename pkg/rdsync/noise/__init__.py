from rdsync.noise.seeds import derive_seed, derive_seeds, mix64
from rdsync.noise.wiener import WienerPath, grid_index, increment, sample_path, shift, value

__all__ = [
    "WienerPath",
    "derive_seed",
    "derive_seeds",
    "grid_index",
    "increment",
    "mix64",
    "sample_path",
    "shift",
    "value",
]
