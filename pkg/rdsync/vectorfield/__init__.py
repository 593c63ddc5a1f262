from rdsync.vectorfield.builtins import build, build_from_dict
from rdsync.vectorfield.field import (
    FD_STEP,
    DriftField,
    eval_drift,
    eval_jacobian,
    gradient_consistency,
    hessian_defect,
    lambda_minus,
    lambda_plus,
    symmetry_defect,
)

__all__ = [
    "FD_STEP",
    "DriftField",
    "build",
    "build_from_dict",
    "eval_drift",
    "eval_jacobian",
    "gradient_consistency",
    "hessian_defect",
    "lambda_minus",
    "lambda_plus",
    "symmetry_defect",
]
