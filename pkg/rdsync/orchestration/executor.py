from __future__ import annotations

import copy
import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Generic, List, Optional, Sequence, Set, TypeVar

import networkx as nx

from rdsync.orchestration.dag_spec import NodeSpec

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class NodeFailure(Exception):
    pass


# ---------- Seed sweeps ----------


@dataclass
class TaskOutcome(Generic[R]):
    index: int
    ok: bool
    value: Optional[R] = None
    error: Optional[str] = None
    exception: Optional[BaseException] = field(default=None, repr=False)
    duration_s: float = 0.0


class SeedSweepExecutor:
    """
    Maps a task over an ordered list of inputs on a thread pool. Outcomes are
    returned in input order regardless of completion order; a failing task
    becomes TaskOutcome(ok=False) instead of aborting the sweep.
    """

    def __init__(self, max_workers: int = 1):
        if max_workers < 1:
            raise ValueError(f"max_workers must be >= 1, got {max_workers}")
        self.max_workers = max_workers

    @staticmethod
    def _run(index: int, fn: Callable[[T], R], item: T) -> TaskOutcome[R]:
        t0 = time.time()
        try:
            value = fn(item)
            return TaskOutcome(index=index, ok=True, value=value, duration_s=time.time() - t0)
        except Exception as e:
            logger.warning("task %d failed: %s", index, e)
            return TaskOutcome(index=index, ok=False, error=str(e), exception=e, duration_s=time.time() - t0)

    def map(self, fn: Callable[[T], R], items: Sequence[T]) -> List[TaskOutcome[R]]:
        if self.max_workers == 1 or len(items) <= 1:
            return [self._run(i, fn, item) for i, item in enumerate(items)]
        outcomes: List[TaskOutcome[R]] = []
        with ThreadPoolExecutor(max_workers=min(self.max_workers, len(items))) as pool:
            futures = [pool.submit(self._run, i, fn, item) for i, item in enumerate(items)]
            for fut in as_completed(futures):
                outcomes.append(fut.result())
        return sorted(outcomes, key=lambda o: o.index)

    def map_values(self, fn: Callable[[T], R], items: Sequence[T]) -> List[R]:
        """Like map, but re-raises the first failure (in input order)."""
        outcomes = self.map(fn, items)
        for o in outcomes:
            if not o.ok:
                if o.exception is not None:
                    raise o.exception
                raise RuntimeError(o.error or "task failed")
        return [o.value for o in outcomes]  # type: ignore[misc]


# ---------- DAG of suite criteria ----------


def merge_node_updates(ctx: Dict[str, Any], updates: Dict[str, Any], node_id: str) -> Dict[str, Any]:
    """
    Fold a node's updates into the shared suite context, in place.

    New keys are added as is. Mapping values (e.g. "criteria") are merged
    one level deep. Existing entries are never replaced: a colliding key is
    stored as "<node_id>.<key>" instead.
    """
    for key, value in updates.items():
        current = ctx.get(key)
        if key not in ctx:
            ctx[key] = value
        elif isinstance(current, dict) and isinstance(value, dict):
            inner = dict(current)
            for ik, iv in value.items():
                inner[f"{node_id}.{ik}" if ik in inner else ik] = iv
            ctx[key] = inner
        else:
            ctx[f"{node_id}.{key}"] = value
    return ctx


@dataclass
class NodeRunResult:
    node_id: str
    ok: bool
    updates: Dict[str, Any]
    error: Optional[str] = None
    skipped: bool = False
    duration_s: float = 0.0


class ParallelDAGExecutor:
    """
    Runs a DAG wave by wave: every node whose dependencies completed runs in
    the current wave, concurrently when enabled. A failed node does not stop
    the run; its descendants are skipped. Updates merge in node-id order.
    """

    def __init__(
        self,
        handlers: Dict[str, Callable[[Dict[str, Any], NodeSpec], Dict[str, Any]]],
        *,
        max_workers: int = 4,
        enable_wave_parallelism: bool = True,
    ):
        self.handlers = handlers
        self.max_workers = max_workers
        self.enable_wave_parallelism = enable_wave_parallelism

    def run(self, graph: nx.DiGraph, ctx: Dict[str, Any]) -> Dict[str, Any]:
        if not nx.is_directed_acyclic_graph(graph):
            raise ValueError("Graph must be a DAG")

        shared_ctx = ctx
        pending: Set[str] = set(graph.nodes)
        completed: Set[str] = set()
        failed: Set[str] = set()
        results: Dict[str, NodeRunResult] = {}
        deps_map: Dict[str, Set[str]] = {n: set(graph.predecessors(n)) for n in graph.nodes}

        while pending:
            blocked = sorted(n for n in pending if deps_map[n] & failed)
            for n in blocked:
                logger.warning("skipping %s: dependency failed", n)
                results[n] = NodeRunResult(node_id=n, ok=False, updates={}, error="dependency failed", skipped=True)
                pending.remove(n)
                failed.add(n)
            ready = sorted(n for n in pending if deps_map[n].issubset(completed))
            if not ready:
                if pending:
                    raise NodeFailure(f"DAG stuck; pending nodes cannot run: {sorted(pending)}")
                break

            if self.enable_wave_parallelism and len(ready) > 1:
                wave_outcomes = self._run_wave_parallel(graph, shared_ctx, ready)
            else:
                wave_outcomes = [self._run_single(graph, shared_ctx, n) for n in ready]

            for outcome in sorted(wave_outcomes, key=lambda r: r.node_id):
                results[outcome.node_id] = outcome
                pending.remove(outcome.node_id)
                if outcome.ok:
                    completed.add(outcome.node_id)
                    shared_ctx = merge_node_updates(shared_ctx, outcome.updates, outcome.node_id)
                else:
                    failed.add(outcome.node_id)
                    logger.warning("node %s failed: %s", outcome.node_id, outcome.error)

        shared_ctx["_dag_exec"] = {
            "completed": sorted(completed),
            "failed": sorted(failed),
            "node_results": {k: results[k].__dict__ for k in sorted(results)},
        }
        return shared_ctx

    def _run_wave_parallel(self, graph: nx.DiGraph, shared_ctx: Dict[str, Any], ready: List[str]) -> List[NodeRunResult]:
        wave_ctx = copy.deepcopy(shared_ctx)
        outcomes: List[NodeRunResult] = []
        with ThreadPoolExecutor(max_workers=min(self.max_workers, len(ready))) as pool:
            future_map = {pool.submit(self._run_single, graph, wave_ctx, node_id): node_id for node_id in ready}
            for fut in as_completed(future_map):
                outcomes.append(fut.result())
        return outcomes

    def _run_single(self, graph: nx.DiGraph, ctx_for_node: Dict[str, Any], node_id: str) -> NodeRunResult:
        spec: NodeSpec = graph.nodes[node_id]["spec"]
        handler = self.handlers.get(spec.handler)
        if not handler:
            raise ValueError(f"No handler registered for {spec.handler}")

        t0 = time.time()
        try:
            updates = handler(ctx_for_node, spec) or {}
            return NodeRunResult(node_id=node_id, ok=True, updates=updates, duration_s=time.time() - t0)
        except Exception as e:
            return NodeRunResult(
                node_id=node_id, ok=False, updates={}, error=f"{type(e).__name__}: {e}", duration_s=time.time() - t0
            )
