"""
Gibbs invariant measure rho = exp(-2V/sigma^2) / Z for gradient drifts.

Normalization and expectations use tensor trapezoid quadrature on a nested
pair of grids: the fine grid has 2N-1 points per axis and the coarse grid is
its every-other-point subgrid, so both share the same density evaluations.
The box starts at [-5, 5]^d and grows by 1.5x until the outer shell holds
less than TAIL_TOL of the mass.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid

from rdsync.core.errors import FieldDefinitionError, NonIntegrableDensityError, QuadratureError
from rdsync.core.models import QuadratureEstimate
from rdsync.vectorfield.field import DriftField

logger = logging.getLogger(__name__)

DEFAULT_BOX = (-5.0, 5.0)
DEFAULT_N = {1: 1001, 2: 201, 3: 41}
TAIL_TOL = 1e-8
REFINE_TOL = 1e-6
SHELL_FRACTION = 0.1
BOX_GROWTH = 1.5
MAX_EXPANSIONS = 8

PointFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class GibbsMeasure:
    field: DriftField
    sigma: float
    Z: float
    log_Z: float
    box: Tuple[float, float]
    grid_points_per_axis: int
    tail_mass_estimate: float
    refinement_error: float
    # fine-grid axes and shifted density exp(-2(V - v_min)/sigma^2)
    axes: np.ndarray = dc_field(repr=False)
    weights: np.ndarray = dc_field(repr=False)
    v_min: float = 0.0
    z_shifted: float = 1.0
    z_shifted_coarse: float = 1.0

    @property
    def dim(self) -> int:
        return self.field.dim

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axes] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1)


# ---------- Tensor quadrature ----------


def _integrate_grid(values: np.ndarray, axis: np.ndarray, dim: int) -> np.ndarray:
    """Trapezoid over the first `dim` axes of values."""
    out = values
    for _ in range(dim):
        out = trapezoid(out, axis, axis=0)
    return out


def _coarse(values: np.ndarray, dim: int) -> np.ndarray:
    return values[(slice(None, None, 2),) * dim]


def _shell_mask(axis: np.ndarray, dim: int, lo: float, hi: float) -> np.ndarray:
    width = SHELL_FRACTION * (hi - lo)
    inner = (axis > lo + width) & (axis < hi - width)
    mask = np.ones((axis.size,) * dim, dtype=bool)
    core = np.ix_(*([inner] * dim))
    mask[core] = False
    return mask


def _evaluate(field: DriftField, sigma: float, lo: float, hi: float, N: int):
    axis = np.linspace(lo, hi, 2 * N - 1)
    mesh = np.stack(np.meshgrid(*([axis] * field.dim), indexing="ij"), axis=-1)
    with np.errstate(over="ignore", invalid="ignore"):
        V = np.asarray(field.potential(mesh), dtype=float)
    if not np.all(np.isfinite(V)):
        raise QuadratureError(f"{field.name}: potential is not finite on the box [{lo}, {hi}]^{field.dim}")
    v_min = float(np.min(V))
    w = np.exp(-2.0 * (V - v_min) / sigma**2)
    return axis, w, v_min


def normalize(
    field: DriftField,
    sigma: float,
    box: Optional[Tuple[float, float]] = None,
    N: Optional[int] = None,
    *,
    tail_tol: float = TAIL_TOL,
) -> GibbsMeasure:
    if field.potential is None:
        raise FieldDefinitionError(f"{field.name} is not gradient-type; the Gibbs density needs a potential")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    d = field.dim
    if d not in DEFAULT_N:
        raise ValueError(f"tensor quadrature supports d <= 3 (got d={d}); use mc_expect")
    N = int(N) if N is not None else DEFAULT_N[d]
    lo, hi = box if box is not None else DEFAULT_BOX
    if not hi > lo:
        raise ValueError(f"empty quadrature box ({lo}, {hi})")

    for attempt in range(MAX_EXPANSIONS + 1):
        axis, w, v_min = _evaluate(field, sigma, lo, hi, N)
        z_fine = float(_integrate_grid(w, axis, d))
        shell = float(_integrate_grid(np.where(_shell_mask(axis, d, lo, hi), w, 0.0), axis, d))
        tail = shell / z_fine
        if tail < tail_tol:
            break
        if attempt == MAX_EXPANSIONS:
            raise NonIntegrableDensityError(
                f"{field.name}: boundary mass {tail:.3e} still above {tail_tol:g} on [{lo:.4g}, {hi:.4g}]^{d}; "
                f"exp(-2V/sigma^2) does not decay (sigma={sigma})"
            )
        center = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo) * BOX_GROWTH
        logger.info("gibbs box expanded to [%.4g, %.4g] (shell mass %.2e)", center - half, center + half, tail)
        lo, hi = center - half, center + half

    z_coarse = float(_integrate_grid(_coarse(w, d), axis[::2], d))
    rel = abs(z_fine - z_coarse) / z_fine
    if rel > REFINE_TOL:
        raise QuadratureError(
            f"{field.name}: Z differs by {rel:.2e} (relative) between N={N} and 2N-1 grids; increase N"
        )
    log_Z = math.log(z_fine) - 2.0 * v_min / sigma**2
    logger.info("normalized %s at sigma=%g: log Z=%.10g on [%.4g, %.4g]^%d", field.name, sigma, log_Z, lo, hi, d)
    return GibbsMeasure(
        field=field,
        sigma=float(sigma),
        Z=math.exp(log_Z),
        log_Z=log_Z,
        box=(lo, hi),
        grid_points_per_axis=N,
        tail_mass_estimate=tail,
        refinement_error=rel,
        axes=axis,
        weights=w,
        v_min=v_min,
        z_shifted=z_fine,
        z_shifted_coarse=z_coarse,
    )


def density(gibbs: GibbsMeasure, x: np.ndarray) -> np.ndarray | float:
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1)
    V = np.asarray(gibbs.field.potential(pts), dtype=float)
    out = np.exp(-2.0 * (V - gibbs.v_min) / gibbs.sigma**2) / gibbs.z_shifted
    return float(out) if np.ndim(out) == 0 else out


def expect(gibbs: GibbsMeasure, f: PointFn) -> QuadratureEstimate:
    """Integral of f against rho; error is the fine/coarse grid difference."""
    d = gibbs.dim
    vals = np.asarray(f(gibbs.points()), dtype=float)
    if vals.ndim == 0:
        vals = np.broadcast_to(vals, gibbs.weights.shape)
    if vals.shape != gibbs.weights.shape:
        raise ValueError("expect needs a scalar integrand; use moments() for vectors")
    if not np.all(np.isfinite(vals)):
        raise QuadratureError("integrand is not finite on the quadrature grid")
    fw = vals * gibbs.weights
    fine = float(_integrate_grid(fw, gibbs.axes, d)) / gibbs.z_shifted
    coarse = float(_integrate_grid(_coarse(fw, d), gibbs.axes[::2], d)) / gibbs.z_shifted_coarse
    return QuadratureEstimate(value=fine, error=abs(fine - coarse))


def moments(gibbs: GibbsMeasure) -> Tuple[np.ndarray, np.ndarray]:
    """Mean vector and second-moment matrix E[x x^T]."""
    d = gibbs.dim
    pts = gibbs.points()
    w = gibbs.weights[..., None]
    mean = _integrate_grid(pts * w, gibbs.axes, d) / gibbs.z_shifted
    outer = pts[..., :, None] * pts[..., None, :]
    second = _integrate_grid(outer * w[..., None], gibbs.axes, d) / gibbs.z_shifted
    return np.asarray(mean), np.asarray(second)


# ---------- Ball masses (polar quadrature) ----------

GL_NODES = 32
PANEL_WIDTH = 0.25
N_THETA = 256


def _radial_rule(R: float, panels: int) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on [0, R]."""
    x, w = np.polynomial.legendre.leggauss(GL_NODES)
    edges = np.linspace(0.0, R, panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * x + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w
    return nodes.ravel(), np.broadcast_to(weights, nodes.shape).ravel()


def _ball_mass(gibbs: GibbsMeasure, R: float, center: np.ndarray, panels: int) -> float:
    d = gibbs.dim
    r, wr = _radial_rule(R, panels)
    if d == 1:
        pts = np.concatenate([center - r, center + r])[:, None]
        return float(np.sum(np.concatenate([wr, wr]) * density(gibbs, pts)))
    theta = 2.0 * np.pi * np.arange(N_THETA) / N_THETA
    w_theta = 2.0 * np.pi / N_THETA
    if d == 2:
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        pts = center + r[:, None, None] * dirs[None, :, :]
        rho = density(gibbs, pts)
        return float(np.sum(wr[:, None] * r[:, None] * w_theta * rho))
    # d == 3: Gauss-Legendre in cos(phi), periodic trapezoid in theta
    c, wc = np.polynomial.legendre.leggauss(GL_NODES)
    s = np.sqrt(1.0 - c * c)
    dirs = np.stack(
        [s[:, None] * np.cos(theta)[None, :], s[:, None] * np.sin(theta)[None, :], np.broadcast_to(c[:, None], (c.size, theta.size))],
        axis=-1,
    )
    pts = center + r[:, None, None, None] * dirs[None, ...]
    rho = density(gibbs, pts)
    return float(np.sum(wr[:, None, None] * (r * r)[:, None, None] * wc[None, :, None] * w_theta * rho))


def ball_mass(gibbs: GibbsMeasure, R: float, center: Optional[np.ndarray] = None) -> float:
    """rho(B(center, R)); the panel count is doubled once as a refinement check."""
    if R < 0:
        raise ValueError(f"radius must be non-negative, got {R}")
    if R == 0:
        return 0.0
    c = np.zeros(gibbs.dim) if center is None else np.asarray(center, dtype=float)
    panels = max(1, math.ceil(R / PANEL_WIDTH))
    m1 = _ball_mass(gibbs, R, c, panels)
    m2 = _ball_mass(gibbs, R, c, 2 * panels)
    if abs(m1 - m2) > REFINE_TOL * max(m2, 1e-300) and abs(m1 - m2) > 1e-12:
        raise QuadratureError(f"ball mass refinement disagreement {abs(m1 - m2):.2e} at R={R}")
    return m2
