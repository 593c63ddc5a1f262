from rdsync.acceptance.evaluator import CheckEvaluator
from rdsync.acceptance.suite import render_report, reproduce_paper_examples

__all__ = ["CheckEvaluator", "render_report", "reproduce_paper_examples"]
