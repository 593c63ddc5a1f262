from enum import Enum


class FieldKind(str, Enum):
    OU = "ou"
    DOUBLE_WELL = "double_well"
    V_E = "v_e"
    V_S = "v_s"
    RADIAL_POLYNOMIAL = "radial_polynomial"
    CIRCLE_STRATONOVICH = "circle_stratonovich"
    LINEAR = "linear"
    EXPR = "expr"


class Scheme(str, Enum):
    EULER_MARUYAMA = "euler_maruyama"
    TAMED_EULER = "tamed_euler"
    SPLIT_STEP_IMPLICIT = "split_step_implicit"


class ConditionKind(str, Enum):
    ONE_SIDED_LIPSCHITZ = "one_sided_lipschitz"
    EVENTUAL_MONOTONE = "eventual_monotone"
    MONOTONE_LARGE_SETS = "monotone_large_sets"
    GRADIENT_DIRECTION = "gradient_direction"
    HESSIAN_AT_MINIMA = "hessian_at_minima"


class Verdict(str, Enum):
    SATISFIED_EMPIRICALLY = "satisfied_empirically"
    VIOLATED_WITH_WITNESS = "violated_with_witness"
    INCONCLUSIVE = "inconclusive"


class Command(str, Enum):
    SIMULATE = "simulate"
    LYAPUNOV = "lyapunov"
    GIBBS = "gibbs"
    SYNC = "sync"
    DIAM = "diam"
    PULLBACK = "pullback"
    CLUSTER = "cluster"
    CHECK = "check"
    CONTROL = "control"
    PAPER_SUITE = "paper-suite"


class ExitCode(int, Enum):
    OK = 0
    CONFIG_ERROR = 2
    NUMERICAL_FAILURE = 3
    ACCEPTANCE_FAILURE = 4
