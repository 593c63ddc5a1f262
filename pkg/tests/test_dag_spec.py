from pathlib import Path

import networkx as nx
import pytest

from rdsync.orchestration.dag_spec import build_graph_from_yaml, default_suite_path, load_dag_spec
from rdsync.runtime.handlers import build_handlers


def test_load_dag_spec():
    path = Path(__file__).resolve().parent.parent / "rdsync" / "orchestration" / "paper_suite.yaml"
    spec = load_dag_spec(str(path))
    assert "nodes" in spec
    assert "dag_name" in spec
    assert len(spec["nodes"]) == 13


def test_build_graph():
    g = build_graph_from_yaml(default_suite_path())
    assert isinstance(g, nx.DiGraph)
    assert "A1" in g.nodes
    assert ("A6", "A1") in g.edges
    assert ("A1", "A2") in g.edges
    assert nx.is_directed_acyclic_graph(g)


def test_every_criterion_listed_once_with_checks():
    g = build_graph_from_yaml()
    assert sorted(g.nodes) == sorted(f"A{i}" for i in range(1, 14))
    for n in g.nodes:
        assert g.nodes[n]["spec"].checks, n


def test_every_handler_is_registered():
    handlers = build_handlers()
    g = build_graph_from_yaml()
    for n in g.nodes:
        assert g.nodes[n]["spec"].handler in handlers


def test_only_keeps_ancestors():
    g = build_graph_from_yaml(only=["A2"])
    assert set(g.nodes) == {"A1", "A2", "A6", "A8"}


def test_quick_overrides_params():
    g = build_graph_from_yaml()
    spec = g.nodes["A5"]["spec"]
    assert spec.params_for("full")["n_seeds"] == 200
    assert spec.params_for("quick")["n_seeds"] == 40
    assert spec.params_for("quick")["sigma"] == 1.0


def test_duplicate_ids_rejected(tmp_path):
    p = tmp_path / "dup.yaml"
    p.write_text(
        "dag_name: x\nnodes:\n"
        "  - {id: A1, handler: h, deps: []}\n"
        "  - {id: A1, handler: h, deps: []}\n",
        encoding="utf-8",
    )
    with pytest.raises(ValueError, match="Duplicate"):
        build_graph_from_yaml(p)


def test_unknown_check_op_rejected(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text(
        "dag_name: x\nnodes:\n"
        "  - {id: A1, handler: h, deps: [], checks: [{metric: m, op: '~', value: 1}]}\n",
        encoding="utf-8",
    )
    with pytest.raises(ValueError, match="unknown check op"):
        build_graph_from_yaml(p)
