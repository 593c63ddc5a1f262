"""Long-run sampling of the invariant measure and Monte-Carlo expectations."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from rdsync.core.errors import ExplosionError
from rdsync.core.models import IntegratorSpec
from rdsync.flow.cocycle import evolve_seeds
from rdsync.measure.gibbs import GibbsMeasure
from rdsync.noise.seeds import derive_seed
from rdsync.noise.wiener import sample_path
from rdsync.vectorfield.field import DriftField

logger = logging.getLogger(__name__)

DEFAULT_BURN_IN = 10.0
N_BATCHES = 20


@dataclass(frozen=True)
class GibbsSpec:
    """Invariant-measure sampler settings for fields without tensor quadrature (d > 3 or non-gradient)."""

    field: DriftField
    sigma: float
    integrator: IntegratorSpec = dc_field(default_factory=IntegratorSpec)
    x0: Optional[Tuple[float, ...]] = None
    n_chains: int = 4

    @classmethod
    def from_measure(cls, gibbs: GibbsMeasure, integrator: Optional[IntegratorSpec] = None, **kw) -> "GibbsSpec":
        return cls(field=gibbs.field, sigma=gibbs.sigma, integrator=integrator or IntegratorSpec(), **kw)


def default_thin(field: DriftField) -> float:
    """Linearized autocorrelation time 1/|lambda|, clipped to [0.1, 10]."""
    lam = field.one_sided_constant
    if lam is None or lam == 0.0:
        return 1.0
    return float(np.clip(1.0 / abs(lam), 0.1, 10.0))


def _as_spec(target: Union[GibbsMeasure, GibbsSpec]) -> GibbsSpec:
    return target if isinstance(target, GibbsSpec) else GibbsSpec.from_measure(target)


def sample(
    target: Union[GibbsMeasure, GibbsSpec],
    n: int,
    seed: int,
    burn_in: Optional[float] = None,
    thin: Optional[float] = None,
) -> np.ndarray:
    """
    n states subsampled every `thin` time units after `burn_in` from
    n_chains long trajectories (chain c uses derive_seed(seed, c)). Rows are
    ordered time-major, chain-minor.
    """
    spec = _as_spec(target)
    field = spec.field
    d = field.dim
    if n < 0:
        raise ValueError(f"sample size must be non-negative, got {n}")
    if n == 0:
        return np.empty((0, d))
    dt = spec.integrator.dt
    burn_in = DEFAULT_BURN_IN if burn_in is None else float(burn_in)
    thin = default_thin(field) if thin is None else float(thin)
    if burn_in <= 0 or thin <= 0:
        raise ValueError("burn_in and thin must be positive")
    burn_steps = max(1, round(burn_in / dt))
    thin_steps = max(1, round(thin / dt))
    chains = max(1, min(spec.n_chains, n))
    per_chain = -(-n // chains)
    steps = [burn_steps + j * thin_steps for j in range(1, per_chain + 1)]
    t1 = steps[-1] * dt
    paths = [sample_path(derive_seed(seed, c), field.m, dt, (0.0, t1)) for c in range(chains)]
    x0 = np.zeros(d) if spec.x0 is None else np.asarray(spec.x0, dtype=float)
    res = evolve_seeds(
        field, spec.integrator, spec.sigma, paths, x0[None, :], 0.0, paths[0].t_max,
        checkpoints=[s * dt for s in steps],
    )
    if np.any(res.exploded):
        raise ExplosionError(f"{field.name}: {int(np.count_nonzero(res.exploded))} chain(s) exploded while sampling")
    samples = res.states[:, :, 0, :].reshape(-1, d)[:n]
    logger.info("sampled %d states of %s (chains=%d, thin=%g, burn_in=%g)", n, field.name, chains, thin, burn_in)
    return samples


def batch_means_se(values: np.ndarray, n_batches: int = N_BATCHES) -> float:
    """Standard error of the mean from contiguous batch means."""
    v = np.asarray(values, dtype=float)
    b = min(n_batches, v.size)
    if b < 2:
        return 0.0
    means = np.array([np.mean(chunk) for chunk in np.array_split(v, b)])
    return float(np.std(means, ddof=1) / np.sqrt(b))


def mc_expect(
    target: Union[GibbsMeasure, GibbsSpec],
    f: Callable[[np.ndarray], np.ndarray],
    n: int,
    seed: int,
    burn_in: Optional[float] = None,
    thin: Optional[float] = None,
) -> Tuple[float, float]:
    """(estimate, standard error) of E_rho f from long-run samples."""
    if n < 1:
        raise ValueError("mc_expect needs n >= 1")
    xs = sample(target, n, seed, burn_in=burn_in, thin=thin)
    vals = np.asarray(f(xs), dtype=float).reshape(n)
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand is not finite on the samples")
    if np.ptp(vals) == 0.0:
        return float(vals[0]), 0.0
    return float(np.mean(vals)), batch_means_se(vals)


def occupation_fractions(samples: np.ndarray, edges: Sequence[float]) -> np.ndarray:
    """Fraction of 1-d samples in each histogram cell."""
    counts, _ = np.histogram(np.asarray(samples, dtype=float).ravel(), bins=np.asarray(edges, dtype=float))
    return counts / max(1, counts.sum())
