"""Quadrature bounds and exact values for the top exponent of gradient systems."""
from __future__ import annotations

import logging
from typing import Union

import numpy as np

from rdsync.core.errors import DimensionMismatchError, FieldDefinitionError
from rdsync.core.models import QuadratureEstimate
from rdsync.measure.gibbs import GibbsMeasure, expect
from rdsync.measure.sampling import GibbsSpec, mc_expect
from rdsync.vectorfield.field import eval_jacobian, lambda_plus

logger = logging.getLogger(__name__)

MC_SAMPLES = 20_000


def lambda_plus_bound(
    field,
    gibbs: Union[GibbsMeasure, GibbsSpec],
    *,
    n_samples: int = MC_SAMPLES,
    seed: int = 0,
) -> QuadratureEstimate:
    """Integral of lambda^+ against rho, an upper bound for the top exponent."""

    def lam(x: np.ndarray) -> np.ndarray:
        return np.asarray(lambda_plus(field, x), dtype=float)

    if isinstance(gibbs, GibbsSpec) or field.dim > 3:
        spec = gibbs if isinstance(gibbs, GibbsSpec) else GibbsSpec.from_measure(gibbs)
        value, se = mc_expect(spec, lam, n_samples, seed)
        est = QuadratureEstimate(value=value, error=se, method="monte_carlo")
    else:
        est = expect(gibbs, lam)
    logger.info("lambda+ bound for %s: %.8g (error %.2g, %s)", field.name, est.value, est.error, est.method)
    return est


def gradient_1d_exponent(field, gibbs: GibbsMeasure) -> QuadratureEstimate:
    """In d=1 the top exponent of a gradient system is the rho-average of b'."""
    if field.dim != 1:
        raise DimensionMismatchError(f"gradient_1d_exponent needs d=1, {field.name} has d={field.dim}")
    if not field.is_gradient:
        raise FieldDefinitionError(f"{field.name} is not gradient-type")

    def b_prime(x: np.ndarray) -> np.ndarray:
        return eval_jacobian(field, x)[..., 0, 0]

    return expect(gibbs, b_prime)
