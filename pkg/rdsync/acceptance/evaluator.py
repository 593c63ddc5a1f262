from __future__ import annotations

import math
import operator
from typing import Any, Callable, Dict, List, Sequence

from rdsync.orchestration.dag_spec import MetricCheck

_OPS: Dict[str, Callable[[Any, Any], bool]] = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "==": operator.eq,
    "!=": operator.ne,
    "abs<=": lambda a, b: abs(a) <= b,
}


class CheckEvaluator:
    """Evaluates the YAML-declared metric checks of a suite node against its metrics."""

    def __init__(self, checks: Sequence[MetricCheck]) -> None:
        self.checks = list(checks)

    @staticmethod
    def describe(check: MetricCheck) -> str:
        return f"{check.metric} {check.op} {check.value!r}"

    def _eval(self, check: MetricCheck, metrics: Dict[str, Any]) -> bool:
        """Missing or non-finite metrics fail."""
        if check.metric not in metrics:
            return False
        value = metrics[check.metric]
        if value is None:
            return False
        if isinstance(value, float) and not math.isfinite(value):
            return False
        try:
            return bool(_OPS[check.op](value, check.value))
        except (TypeError, KeyError):
            return False

    def evaluate(self, metrics: Dict[str, Any]) -> List[str]:
        """Returns the descriptions of failed checks, with the observed value."""
        failed: List[str] = []
        for check in self.checks:
            if not self._eval(check, metrics):
                failed.append(f"{self.describe(check)} (observed {metrics.get(check.metric)!r})")
        return failed
