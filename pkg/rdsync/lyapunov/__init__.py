from rdsync.lyapunov.bounds import gradient_1d_exponent, lambda_plus_bound
from rdsync.lyapunov.spectrum import (
    aggregate_spectra,
    log_moment_estimate,
    spectrum_benettin,
    top_exponent_twopoint,
)

__all__ = [
    "aggregate_spectra",
    "gradient_1d_exponent",
    "lambda_plus_bound",
    "log_moment_estimate",
    "spectrum_benettin",
    "top_exponent_twopoint",
]
