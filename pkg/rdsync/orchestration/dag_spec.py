from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import networkx as nx
import yaml

CHECK_OPS = ("<", "<=", ">", ">=", "==", "!=", "abs<=")


@dataclass(frozen=True)
class MetricCheck:
    metric: str
    op: str
    value: Any


@dataclass(frozen=True)
class NodeSpec:
    id: str
    title: str
    handler: str
    deps: List[str]
    params: Dict[str, Any] = field(default_factory=dict)
    quick: Dict[str, Any] = field(default_factory=dict)
    checks: List[MetricCheck] = field(default_factory=list)

    def params_for(self, scale: str) -> Dict[str, Any]:
        """Node params, with the `quick` overrides applied at scale=quick."""
        merged = dict(self.params)
        if scale == "quick":
            merged.update(self.quick)
        return merged


def default_suite_path() -> Path:
    return Path(__file__).resolve().parent / "paper_suite.yaml"


def _load_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return yaml.safe_load(f)


def load_dag_spec(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Loads the raw DAG spec dictionary from YAML.
    """
    spec = _load_yaml(path)
    if not isinstance(spec, dict) or "nodes" not in spec or not isinstance(spec["nodes"], list):
        raise ValueError("DAG spec invalid: nodes[] missing")
    return spec


def _parse_checks(node_id: str, raw: Any) -> List[MetricCheck]:
    if raw is None:
        return []
    if not isinstance(raw, list):
        raise ValueError(f"Node {node_id} checks must be a list")
    checks: List[MetricCheck] = []
    for c in raw:
        if not isinstance(c, dict) or not {"metric", "op", "value"} <= set(c):
            raise ValueError(f"Node {node_id}: each check needs metric, op and value")
        if c["op"] not in CHECK_OPS:
            raise ValueError(f"Node {node_id}: unknown check op {c['op']!r}")
        checks.append(MetricCheck(metric=str(c["metric"]), op=str(c["op"]), value=c["value"]))
    return checks


def build_graph_from_yaml(path: Optional[Union[str, Path]] = None, only: Optional[List[str]] = None) -> nx.DiGraph:
    """
    Build a NetworkX DiGraph from the suite YAML.

    Each node carries its NodeSpec under "spec"; edges run deps -> node_id.
    With `only`, the graph is restricted to those nodes and their ancestors.
    """
    spec = load_dag_spec(path or default_suite_path())
    nodes_raw: List[Dict[str, Any]] = spec["nodes"]

    g = nx.DiGraph()
    seen_ids: set = set()

    for n in nodes_raw:
        node_id = n.get("id")
        if not node_id or not isinstance(node_id, str):
            raise ValueError("Node missing string id")
        if node_id in seen_ids:
            raise ValueError(f"Duplicate node id: {node_id}")
        seen_ids.add(node_id)

        handler = n.get("handler")
        if not handler:
            raise ValueError(f"Node {node_id} missing handler")

        deps = n.get("deps", [])
        if deps is None:
            deps = []
        if not isinstance(deps, list):
            raise ValueError(f"Node {node_id} deps must be a list")

        params = n.get("params") or {}
        quick = n.get("quick") or {}
        if not isinstance(params, dict) or not isinstance(quick, dict):
            raise ValueError(f"Node {node_id} params/quick must be mappings")

        node_spec = NodeSpec(
            id=node_id,
            title=str(n.get("title", node_id)),
            handler=str(handler),
            deps=[str(d) for d in deps],
            params=params,
            quick=quick,
            checks=_parse_checks(node_id, n.get("checks")),
        )
        g.add_node(node_id, spec=node_spec)

    for node_id in list(g.nodes):
        node_spec: NodeSpec = g.nodes[node_id]["spec"]
        for dep in node_spec.deps:
            if dep not in g.nodes:
                raise ValueError(f"Node {node_id} depends on missing node: {dep}")
            g.add_edge(dep, node_id)

    if not nx.is_directed_acyclic_graph(g):
        cycle = nx.find_cycle(g, orientation="original")
        raise ValueError(f"DAG has a cycle: {cycle}")

    if only:
        missing = sorted(set(only) - set(g.nodes))
        if missing:
            raise ValueError(f"Unknown suite nodes: {missing}")
        keep = set(only)
        for n in only:
            keep |= nx.ancestors(g, n)
        g = g.subgraph(keep).copy()

    return g
