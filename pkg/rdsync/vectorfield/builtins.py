"""Builtin drift fields: OU, linear, double-well, radial polynomial, Gaussian-bump potentials, circle chart."""
from __future__ import annotations

import logging
from dataclasses import replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from rdsync.core.enums import FieldKind
from rdsync.core.errors import DimensionMismatchError, FieldDefinitionError, UnknownFieldKindError
from rdsync.core.models import BuiltinSpec
from rdsync.vectorfield.expr import circle_field, expression_field
from rdsync.vectorfield.field import DriftField

logger = logging.getLogger(__name__)

# Fixed points of the two planar bump potentials
P1 = (0.0, 1.0)
P2 = (0.0, -1.0)
P3 = (0.0, 2.0)
P4 = (2.0, -2.0)
P5 = (-2.0, -2.0)


def _sq(x: np.ndarray) -> np.ndarray:
    return np.sum(x * x, axis=-1)


def _eye_like(x: np.ndarray) -> np.ndarray:
    d = x.shape[-1]
    return np.broadcast_to(np.eye(d), x.shape[:-1] + (d, d))


def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., :, None] * b[..., None, :]


# ---------- OU / linear ----------


def ou(dim: int) -> DriftField:
    return DriftField(
        name=f"ou[d={dim}]",
        dim=dim,
        drift=lambda x: -x,
        jacobian=lambda x: -_eye_like(x).copy(),
        potential=lambda x: 0.5 * _sq(x),
        hessian=lambda x: _eye_like(x).copy(),
        one_sided_constant=-1.0,
    )


def linear(matrix: Sequence[Sequence[float]], dim: Optional[int] = None) -> DriftField:
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatchError(f"linear field needs a square matrix, got shape {A.shape}")
    if dim is not None and dim != A.shape[0]:
        raise DimensionMismatchError(f"linear field: dim={dim} but A is {A.shape[0]}x{A.shape[0]}")
    if not np.all(np.isfinite(A)):
        raise FieldDefinitionError("linear field: matrix has non-finite entries")
    d = A.shape[0]
    sym = 0.5 * (A + A.T)
    lam = float(np.linalg.eigvalsh(sym)[-1])
    symmetric = bool(np.array_equal(A, A.T))

    def drift(x: np.ndarray) -> np.ndarray:
        return x @ A.T

    def jacobian(x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(A, x.shape[:-1] + (d, d)).copy()

    def potential(x: np.ndarray) -> np.ndarray:
        return -0.5 * np.sum((x @ A.T) * x, axis=-1)

    def hessian(x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(-A, x.shape[:-1] + (d, d)).copy()

    # only symmetric A is gradient-type, with V(x) = -x^T A x / 2
    return DriftField(
        name=f"linear[d={d}]",
        dim=d,
        drift=drift,
        jacobian=jacobian,
        potential=potential if symmetric else None,
        hessian=hessian if symmetric else None,
        one_sided_constant=lam,
    )


# ---------- Radial potentials V(x) = g(|x|^2) ----------


def double_well(dim: int) -> DriftField:
    """V(x) = |x|^4/4 - |x|^2/2, b(x) = x - |x|^2 x."""

    def drift(x: np.ndarray) -> np.ndarray:
        return x - _sq(x)[..., None] * x

    def jacobian(x: np.ndarray) -> np.ndarray:
        s = _sq(x)[..., None, None]
        return (1.0 - s) * _eye_like(x) - 2.0 * _outer(x, x)

    def potential(x: np.ndarray) -> np.ndarray:
        s = _sq(x)
        return 0.25 * s * s - 0.5 * s

    def hessian(x: np.ndarray) -> np.ndarray:
        s = _sq(x)[..., None, None]
        return (s - 1.0) * _eye_like(x) + 2.0 * _outer(x, x)

    return DriftField(
        name=f"double_well[d={dim}]",
        dim=dim,
        drift=drift,
        jacobian=jacobian,
        potential=potential,
        hessian=hessian,
        one_sided_constant=1.0,
    )


def _radial_coefficients(params: Dict[str, Any]) -> np.ndarray:
    raw = params.get("coefficients")
    if raw is None:
        raise FieldDefinitionError("radial_polynomial needs params.coefficients (g(s) = sum c_k s^k)")
    try:
        coeffs = np.asarray([float(c) for c in raw], dtype=float)
    except (TypeError, ValueError) as e:
        raise FieldDefinitionError(f"radial_polynomial: coefficients must be reals: {e}") from e
    if coeffs.size < 2 or not np.all(np.isfinite(coeffs)):
        raise FieldDefinitionError("radial_polynomial: need at least two finite coefficients")
    coeffs = np.trim_zeros(coeffs, trim="b")
    if coeffs.size < 2:
        raise FieldDefinitionError("radial_polynomial: g must be non-constant")
    return coeffs


def _is_convex_on_halfline(g2: np.polynomial.Polynomial, s_max: float = 1e3) -> bool:
    s = np.linspace(0.0, s_max, 20001)
    return bool(np.all(g2(s) >= -1e-12))


def radial_polynomial(dim: int, params: Dict[str, Any]) -> DriftField:
    """V(x) = g(|x|^2) with polynomial g; b = -2 g'(s) x, D^2V = 4 g''(s) x x^T + 2 g'(s) I."""
    coeffs = _radial_coefficients(params)
    g = np.polynomial.Polynomial(coeffs)
    g1 = g.deriv(1)
    g2 = g.deriv(2) if coeffs.size > 2 else np.polynomial.Polynomial([0.0])

    def drift(x: np.ndarray) -> np.ndarray:
        return -2.0 * g1(_sq(x))[..., None] * x

    def hessian(x: np.ndarray) -> np.ndarray:
        s = _sq(x)
        return 4.0 * g2(s)[..., None, None] * _outer(x, x) + 2.0 * g1(s)[..., None, None] * _eye_like(x)

    convex = _is_convex_on_halfline(g2)
    lam: Optional[float] = None
    if convex:
        # lambda^+(x) = -2 g'(|x|^2) is maximal at the origin
        lam = float(-2.0 * g1(0.0))
    else:
        logger.warning("radial_polynomial: g is not convex on [0, inf); no one-sided constant declared")

    return DriftField(
        name=f"radial_polynomial[d={dim}]",
        dim=dim,
        drift=drift,
        jacobian=lambda x: -hessian(x),
        potential=lambda x: g(_sq(x)),
        hessian=hessian,
        one_sided_constant=lam,
    )


# ---------- Planar bump potentials V(x) = (a - sum c_i exp(-|x - p_i|^2)) |x|^2 ----------


def bump_potential(name: str, base: float, amplitudes: Sequence[float], centers: Sequence[Sequence[float]]) -> DriftField:
    c = np.asarray(amplitudes, dtype=float)
    P = np.asarray(centers, dtype=float)

    def _parts(x: np.ndarray):
        diff = x[..., None, :] - P  # (..., n, d)
        e = np.exp(-np.sum(diff * diff, axis=-1))  # (..., n)
        ce = c * e
        E = base - np.sum(ce, axis=-1)
        gradE = 2.0 * np.sum(ce[..., None] * diff, axis=-2)
        return diff, ce, E, gradE

    def potential(x: np.ndarray) -> np.ndarray:
        _, _, E, _ = _parts(x)
        return E * _sq(x)

    def drift(x: np.ndarray) -> np.ndarray:
        _, _, E, gradE = _parts(x)
        return -(gradE * _sq(x)[..., None] + 2.0 * E[..., None] * x)

    def hessian(x: np.ndarray) -> np.ndarray:
        diff, ce, E, gradE = _parts(x)
        d = x.shape[-1]
        eye = np.eye(d)
        outer = diff[..., :, None] * diff[..., None, :]  # (..., n, d, d)
        hessE = 2.0 * np.sum(ce[..., None, None] * (eye - 2.0 * outer), axis=-3)
        cross = _outer(gradE, x) + _outer(x, gradE)
        return hessE * _sq(x)[..., None, None] + 2.0 * cross + 2.0 * E[..., None, None] * eye

    return DriftField(
        name=name,
        dim=2,
        drift=drift,
        jacobian=lambda x: -hessian(x),
        potential=potential,
        hessian=hessian,
    )


def v_e() -> DriftField:
    return bump_potential("v_e", 0.5, [10.0, 10.0], [P1, P2])


def v_s() -> DriftField:
    return bump_potential("v_s", 2.0, [5.0, 6.0, 7.0], [P3, P4, P5])


# ---------- Dispatcher ----------


def _require_dim(spec: BuiltinSpec, default: Optional[int] = None) -> int:
    dim = spec.dim if spec.dim is not None else spec.params.get("dim", default)
    if dim is None:
        raise FieldDefinitionError(f"{spec.kind.value}: dim is required")
    dim = int(dim)
    if dim < 1:
        raise DimensionMismatchError(f"{spec.kind.value}: dim must be positive, got {dim}")
    return dim


def _fixed_dim(spec: BuiltinSpec, dim: int) -> None:
    if spec.dim is not None and spec.dim != dim:
        raise DimensionMismatchError(f"{spec.kind.value} is defined on R^{dim}, got dim={spec.dim}")


def build(spec: BuiltinSpec) -> DriftField:
    kind = spec.kind
    if kind == FieldKind.OU:
        field = ou(_require_dim(spec))
    elif kind == FieldKind.DOUBLE_WELL:
        field = double_well(_require_dim(spec))
    elif kind == FieldKind.LINEAR:
        if "A" not in spec.params:
            raise FieldDefinitionError("linear needs params.A")
        field = linear(spec.params["A"], dim=spec.dim)
    elif kind == FieldKind.RADIAL_POLYNOMIAL:
        field = radial_polynomial(_require_dim(spec), spec.params)
    elif kind == FieldKind.V_E:
        _fixed_dim(spec, 2)
        field = v_e()
    elif kind == FieldKind.V_S:
        _fixed_dim(spec, 2)
        field = v_s()
    elif kind == FieldKind.CIRCLE_STRATONOVICH:
        _fixed_dim(spec, 1)
        diffusion: List[str] = spec.params.get("diffusion", ["cos(2*a)", "sin(2*a)"])
        field = circle_field(diffusion)
    elif kind == FieldKind.EXPR:
        if not spec.expr:
            raise FieldDefinitionError("expr field needs field.expr (one expression per coordinate)")
        dim = spec.dim if spec.dim is not None else len(spec.expr)
        field = expression_field(spec.expr, dim=dim, potential=spec.potential, constants=spec.params)
    else:
        raise UnknownFieldKindError(f"Unknown field kind: {kind}")

    overrides: Dict[str, Any] = {}
    if spec.one_sided_constant is not None:
        overrides["one_sided_constant"] = float(spec.one_sided_constant)
    if spec.name:
        overrides["name"] = spec.name
    if overrides:
        field = replace(field, **overrides)
    logger.debug("built field %s (dim=%d, gradient=%s)", field.name, field.dim, field.is_gradient)
    return field


def build_from_dict(raw: Dict[str, Any]) -> DriftField:
    try:
        spec = BuiltinSpec.model_validate(raw)
    except ValueError as e:
        kind = raw.get("kind") if isinstance(raw, dict) else None
        if kind is not None and kind not in {k.value for k in FieldKind}:
            raise UnknownFieldKindError(f"Unknown field kind: {kind}") from e
        raise FieldDefinitionError(str(e)) from e
    return build(spec)
