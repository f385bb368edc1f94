import numpy as np
import pytest

from simbil.scenegraph import (
    EditOp,
    ObjectNode,
    RelationshipEdge,
    SceneGraph,
    apply_edit,
)

CATEGORIES = ("cube", "sphere", "cylinder", "cone")
PREDICATES = ("left of", "right of", "front of", "behind", "on", "near")


def random_bbox(rng) -> tuple:
    x = np.sort(rng.uniform(0, 1, 2))
    y = np.sort(rng.uniform(0, 1, 2))
    return (round(x[0], 4), round(y[0], 4),
            round(x[1] + 1e-4, 4), round(y[1] + 1e-4, 4))


def random_graph(rng, n_nodes=None, n_edges=None, image="img-1") -> SceneGraph:
    if n_nodes is None:
        n_nodes = int(rng.integers(2, 7))
    nodes = tuple(
        ObjectNode.make(
            f"n{i}",
            CATEGORIES[int(rng.integers(len(CATEGORIES)))],
            {"color": ["red", "blue", "green"][int(rng.integers(3))]},
            random_bbox(rng))
        for i in range(n_nodes))
    possible = [(a.id, p, b.id) for a in nodes for b in nodes if a.id != b.id
                for p in PREDICATES]
    if n_edges is None:
        n_edges = int(rng.integers(1, min(len(possible), 3 * n_nodes)))
    picks = rng.choice(len(possible), size=min(n_edges, len(possible)),
                       replace=False)
    edges = tuple(RelationshipEdge(*possible[int(i)]) for i in sorted(picks))
    return SceneGraph(image_ref=image, width=64, height=64,
                      nodes=nodes, edges=edges).validate()


def random_op(rng, graph: SceneGraph) -> EditOp | None:
    """One random valid op against the graph, or None when impossible."""
    kinds = ["remove", "add", "replace", "relationship_change"]
    rng.shuffle(kinds)
    for kind in kinds:
        if kind == "remove" and graph.nodes:
            node = graph.nodes[int(rng.integers(len(graph.nodes)))]
            return EditOp(kind="remove", target_id=node.id)
        if kind == "add":
            new_id = f"new{int(rng.integers(10_000))}"
            while graph.has_node(new_id):
                new_id += "x"
            node = ObjectNode.make(
                new_id, CATEGORIES[int(rng.integers(len(CATEGORIES)))],
                {}, random_bbox(rng))
            edges = ()
            if graph.nodes and rng.random() < 0.8:
                other = graph.nodes[int(rng.integers(len(graph.nodes)))]
                edges = (RelationshipEdge(new_id, PREDICATES[
                    int(rng.integers(len(PREDICATES)))], other.id),)
            return EditOp(kind="add", target_id=new_id, new_node=node,
                          new_edges=edges)
        if kind == "replace" and graph.nodes:
            node = graph.nodes[int(rng.integers(len(graph.nodes)))]
            return EditOp(kind="replace", target_id=node.id,
                          new_node=ObjectNode.make(
                              node.id, CATEGORIES[int(rng.integers(
                                  len(CATEGORIES)))],
                              {"color": "cyan"}, node.bbox))
        if kind == "relationship_change" and graph.edges:
            edge = graph.edges[int(rng.integers(len(graph.edges)))]
            existing = {e.key() for e in graph.edges}
            candidates = [
                RelationshipEdge(edge.subject_id, p, edge.object_id)
                for p in PREDICATES if p != edge.predicate
            ] + [RelationshipEdge(edge.object_id, edge.predicate,
                                  edge.subject_id)]
            candidates = [c for c in candidates if c.key() not in existing]
            if not candidates:
                continue
            new = candidates[int(rng.integers(len(candidates)))]
            return EditOp(kind="relationship_change",
                          target_id=edge.subject_id, edge_change=(edge, new))
    return None


def random_edit_sequence(rng, graph: SceneGraph, max_ops=3):
    """Apply up to max_ops random valid ops; returns (ops, final graph)."""
    ops = []
    current = graph
    for _ in range(int(rng.integers(1, max_ops + 1))):
        op = random_op(rng, current)
        if op is None:
            break
        current = apply_edit(current, op)
        ops.append(op)
    return ops, current


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
