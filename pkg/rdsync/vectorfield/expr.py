"""
Expression mini-language for user drift fields and the S^1 angle chart.

Custom drifts are per-coordinate arithmetic expressions over x1..xd with
exp/sin/cos/sqrt, pi and named real constants. Derivatives of custom drifts
are taken by central differences (see field.FD_STEP).
"""
from __future__ import annotations

import logging
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
import sympy as sp
from sympy.core.function import AppliedUndef
from sympy.parsing.sympy_parser import parse_expr, standard_transformations

from rdsync.core.errors import DimensionMismatchError, FieldDefinitionError
from rdsync.vectorfield.field import DriftField

logger = logging.getLogger(__name__)

_FUNCTIONS: Dict[str, Any] = {
    "exp": sp.exp,
    "sin": sp.sin,
    "cos": sp.cos,
    "sqrt": sp.sqrt,
    "pi": sp.pi,
}

_PARSER_GLOBALS: Dict[str, Any] = {
    "__builtins__": {},
    "Integer": sp.Integer,
    "Float": sp.Float,
    "Rational": sp.Rational,
    "Symbol": sp.Symbol,
    "Function": sp.Function,
}


def parse_expression(text: str, variables: Mapping[str, sp.Symbol], constants: Optional[Mapping[str, float]] = None) -> sp.Expr:
    if not isinstance(text, str) or not text.strip():
        raise FieldDefinitionError("empty expression")
    if "__" in text or "lambda" in text:
        raise FieldDefinitionError(f"expression not allowed: {text!r}")
    local: Dict[str, Any] = dict(_FUNCTIONS)
    for name, value in (constants or {}).items():
        if name in variables:
            raise FieldDefinitionError(f"constant {name!r} shadows a coordinate")
        try:
            local[name] = sp.Float(float(value))
        except (TypeError, ValueError) as e:
            raise FieldDefinitionError(f"constant {name!r} must be a real number") from e
    local.update(variables)
    try:
        expr = parse_expr(
            text,
            local_dict=local,
            global_dict=dict(_PARSER_GLOBALS),
            transformations=standard_transformations,
            evaluate=True,
        )
    except Exception as e:
        raise FieldDefinitionError(f"cannot parse expression {text!r}: {e}") from e
    if not isinstance(expr, sp.Expr):
        raise FieldDefinitionError(f"expression {text!r} is not arithmetic")
    unknown = {str(s) for s in expr.free_symbols} - set(variables)
    if unknown:
        raise FieldDefinitionError(f"expression {text!r} uses unknown names: {sorted(unknown)}")
    if expr.atoms(AppliedUndef):
        raise FieldDefinitionError(f"expression {text!r} calls an unknown function")
    return expr


def _vectorise(exprs: Sequence[sp.Expr], symbols: Sequence[sp.Symbol]):
    funcs = [sp.lambdify(list(symbols), e, modules="numpy") for e in exprs]

    def call(x: np.ndarray) -> np.ndarray:
        args = [x[..., i] for i in range(len(symbols))]
        cols = [np.broadcast_to(np.asarray(f(*args), dtype=float), x.shape[:-1]) for f in funcs]
        return np.stack(cols, axis=-1)

    return call


def expression_field(
    exprs: Sequence[str],
    *,
    dim: int,
    potential: Optional[str] = None,
    constants: Optional[Mapping[str, Any]] = None,
) -> DriftField:
    if len(exprs) != dim:
        raise DimensionMismatchError(f"expr field: {len(exprs)} expressions for dim={dim}")
    numeric = {k: v for k, v in (constants or {}).items() if isinstance(v, (int, float))}
    symbols = [sp.Symbol(f"x{i + 1}", real=True) for i in range(dim)]
    variables = {str(s): s for s in symbols}
    parsed = [parse_expression(e, variables, numeric) for e in exprs]
    drift = _vectorise(parsed, symbols)

    potential_fn = None
    if potential is not None:
        v_expr = parse_expression(potential, variables, numeric)
        v_call = _vectorise([v_expr], symbols)

        def potential_fn(x: np.ndarray) -> np.ndarray:
            return v_call(x)[..., 0]

    return DriftField(name="expr", dim=dim, drift=drift, potential=potential_fn)


# ---------- S^1 angle chart ----------


def circle_field(diffusion: List[str], *, angle: str = "a") -> DriftField:
    """
    Angle SDE d(alpha) = sum_k s_k(alpha) o dW^k on [0, 2 pi).

    The Ito drift is the Stratonovich correction 1/2 sum_k s_k s_k', derived
    symbolically from the given coefficient expressions.
    """
    if not diffusion:
        raise FieldDefinitionError("circle field needs at least one diffusion coefficient")
    a = sp.Symbol(angle, real=True)
    coeffs = [parse_expression(e, {angle: a}) for e in diffusion]
    derivs = [sp.diff(c, a) for c in coeffs]
    ito = sp.simplify(sp.Rational(1, 2) * sum(c * dc for c, dc in zip(coeffs, derivs)))
    ito_prime = sp.simplify(sp.diff(ito, a))
    logger.debug("circle chart: Ito correction %s", ito)

    drift_call = _vectorise([ito], [a])
    jac_call = _vectorise([ito_prime], [a])
    diff_call = _vectorise(coeffs, [a])
    diff_jac_call = _vectorise(derivs, [a])
    m = len(coeffs)

    def jacobian(x: np.ndarray) -> np.ndarray:
        return jac_call(x)[..., None]

    def diffusion_fn(x: np.ndarray) -> np.ndarray:
        return diff_call(x).reshape(x.shape[:-1] + (1, m))

    def diffusion_jacobian(x: np.ndarray) -> np.ndarray:
        return diff_jac_call(x).reshape(x.shape[:-1] + (1, m, 1))

    return DriftField(
        name="circle_stratonovich",
        dim=1,
        drift=drift_call,
        jacobian=jacobian,
        noise_dim=m,
        diffusion=diffusion_fn,
        diffusion_jacobian=diffusion_jacobian,
        periodic=True,
    )
