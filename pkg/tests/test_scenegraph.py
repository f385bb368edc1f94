import json

import numpy as np
import pytest

from simbil.errors import (
    DiffError,
    EditError,
    EmptyTripletError,
    GraphError,
    SchemaError,
)
from simbil.scenegraph import (
    EditOp,
    ObjectNode,
    RelationshipEdge,
    SceneGraph,
    apply_edit,
    extract_modified_triplets,
    fold_edits,
    graph_diff,
    graphs_equal,
    invert_relationship_change,
    parse_edit_op,
    parse_scene_graph,
    serialize_edit_op,
    serialize_scene_graph,
)

from conftest import random_edit_sequence, random_graph

CLEVR_DOC = {
    "schema_version": 1,
    "image": "clevr_001",
    "width": 64,
    "height": 64,
    "objects": [
        {"id": "cyl1", "category": "cylinder",
         "attributes": {"color": "blue"}, "bbox": [0.1, 0.2, 0.3, 0.5]},
        {"id": "cube1", "category": "cube",
         "attributes": {"color": "red"}, "bbox": [0.5, 0.3, 0.7, 0.6]},
    ],
    "relationships": [
        {"subject": "cyl1", "predicate": "front of", "object": "cube1"},
    ],
}


class TestParse:
    def test_empty_document(self):
        graph = parse_scene_graph({"schema_version": 1, "image": "x",
                                   "width": 8, "height": 8,
                                   "objects": [], "relationships": []})
        assert graph.nodes == () and graph.edges == ()

    def test_two_node_one_edge(self):
        graph = parse_scene_graph(CLEVR_DOC)
        assert len(graph.nodes) == 2
        assert graph.edges[0].predicate == "front of"
        assert graph.node("cyl1").attribute_map == {"color": "blue"}

    def test_accepts_json_text(self):
        graph = parse_scene_graph(json.dumps(CLEVR_DOC))
        assert graph.image_ref == "clevr_001"

    def test_dangling_edge_rejected(self):
        doc = dict(CLEVR_DOC, relationships=[
            {"subject": "cyl1", "predicate": "near", "object": "ghost"}])
        with pytest.raises(GraphError, match="ghost"):
            parse_scene_graph(doc)

    def test_schema_error_names_path(self):
        doc = json.loads(json.dumps(CLEVR_DOC))
        doc["objects"][1]["bbox"] = [0.5, 0.3, 0.7]
        with pytest.raises(SchemaError) as err:
            parse_scene_graph(doc)
        assert err.value.path == "objects[1].bbox"

    def test_bad_bbox_order_rejected(self):
        doc = json.loads(json.dumps(CLEVR_DOC))
        doc["objects"][0]["bbox"] = [0.9, 0.2, 0.3, 0.5]
        with pytest.raises(SchemaError, match="x_min"):
            parse_scene_graph(doc)

    def test_duplicate_edges_rejected(self):
        doc = json.loads(json.dumps(CLEVR_DOC))
        doc["relationships"].append(doc["relationships"][0])
        with pytest.raises(GraphError, match="duplicate edge"):
            parse_scene_graph(doc)

    def test_wrong_version_rejected(self):
        with pytest.raises(SchemaError, match="schema_version"):
            parse_scene_graph(dict(CLEVR_DOC, schema_version=2))

    def test_roundtrip_is_fixed_point(self):
        graph = parse_scene_graph(CLEVR_DOC)
        doc = serialize_scene_graph(graph)
        again = parse_scene_graph(doc)
        assert graphs_equal(graph, again)
        assert serialize_scene_graph(again) == doc

    def test_roundtrip_randomized(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            graph = random_graph(rng)
            assert graphs_equal(graph,
                                parse_scene_graph(serialize_scene_graph(graph)))


class TestApplyEdit:
    def setup_method(self):
        self.graph = parse_scene_graph(CLEVR_DOC)

    def test_remove_deletes_node_and_incident_edges(self):
        rng = np.random.default_rng(3)
        graph = random_graph(rng, n_nodes=3, n_edges=4)
        target = graph.edges[0].subject_id
        incident = len(graph.incident_edges(target))
        out = apply_edit(graph, EditOp(kind="remove", target_id=target))
        assert len(out.nodes) == len(graph.nodes) - 1
        assert len(out.edges) == len(graph.edges) - incident
        assert not any(target in (e.subject_id, e.object_id)
                       for e in out.edges)
        # untouched edges survive verbatim
        assert set(out.edges) <= set(graph.edges)

    def test_remove_does_not_mutate_input(self):
        before = serialize_scene_graph(self.graph)
        apply_edit(self.graph, EditOp(kind="remove", target_id="cyl1"))
        assert serialize_scene_graph(self.graph) == before

    def test_relationship_change_swaps_exactly_one_edge(self):
        old = self.graph.edges[0]
        new = RelationshipEdge("cyl1", "behind", "cube1")
        out = apply_edit(self.graph, EditOp(
            kind="relationship_change", target_id="cyl1",
            edge_change=(old, new)))
        assert len(out.edges) == len(self.graph.edges)
        assert out.edges[0].predicate == "behind"

    def test_replace_keeps_id_edges_and_bbox(self):
        out = apply_edit(self.graph, EditOp(
            kind="replace", target_id="cube1",
            new_node=ObjectNode.make("cube1", "sphere", {"color": "green"},
                                     (0.0, 0.0, 0.1, 0.1))))
        assert out.edges == self.graph.edges
        assert [n.id for n in out.nodes] == [n.id for n in self.graph.nodes]
        node = out.node("cube1")
        assert node.category == "sphere"
        assert node.attribute_map == {"color": "green"}
        assert node.bbox == self.graph.node("cube1").bbox

    def test_add_inserts_node_and_edges(self):
        op = EditOp(kind="add", new_node=ObjectNode.make(
            "sph1", "sphere", {}, (0.2, 0.2, 0.4, 0.4)),
            new_edges=(RelationshipEdge("sph1", "left of", "cube1"),))
        out = apply_edit(self.graph, op)
        assert out.has_node("sph1")
        assert len(out.edges) == 2

    def test_add_colliding_id_rejected(self):
        op = EditOp(kind="add", new_node=ObjectNode.make(
            "cyl1", "sphere", {}, (0.2, 0.2, 0.4, 0.4)))
        with pytest.raises(EditError, match="already used"):
            apply_edit(self.graph, op)

    def test_remove_missing_target_rejected(self):
        with pytest.raises(EditError, match="ghost"):
            apply_edit(self.graph, EditOp(kind="remove", target_id="ghost"))

    def test_relationship_change_absent_edge_rejected(self):
        old = RelationshipEdge("cube1", "on", "cyl1")
        new = RelationshipEdge("cube1", "near", "cyl1")
        with pytest.raises(EditError, match="not in graph"):
            apply_edit(self.graph, EditOp(kind="relationship_change",
                                          target_id="cube1",
                                          edge_change=(old, new)))

    def test_edge_change_both_fields_rejected(self):
        old = self.graph.edges[0]
        new = RelationshipEdge("cube1", "behind", "cyl1")  # swapped + new pred
        with pytest.raises(EditError, match="not both"):
            apply_edit(self.graph, EditOp(kind="relationship_change",
                                          target_id="cyl1",
                                          edge_change=(old, new)))

    def test_relationship_change_involution(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            graph = random_graph(rng)
            edge = graph.edges[int(rng.integers(len(graph.edges)))]
            new = RelationshipEdge(edge.subject_id, "brand-new-predicate",
                                   edge.object_id)
            op = EditOp(kind="relationship_change", target_id=edge.subject_id,
                        edge_change=(edge, new))
            back = invert_relationship_change(op)
            assert graphs_equal(apply_edit(apply_edit(graph, op), back), graph)


class TestEditOpJson:
    def test_roundtrip_all_kinds(self):
        rng = np.random.default_rng(5)
        for _ in range(40):
            graph = random_graph(rng)
            ops, _ = random_edit_sequence(rng, graph, max_ops=3)
            for op in ops:
                doc = serialize_edit_op(op)
                assert parse_edit_op(json.dumps(doc)) == op

    def test_kind_field_requirements(self):
        with pytest.raises(EditError, match="requires target_id"):
            parse_edit_op({"schema_version": 1, "kind": "remove"})
        with pytest.raises(SchemaError, match="unknown kind"):
            parse_edit_op({"schema_version": 1, "kind": "recolor"})


class TestTriplets:
    def test_single_incident_edge(self):
        graph = parse_scene_graph(CLEVR_DOC)
        triplets = extract_modified_triplets(graph, graph, "cyl1")
        assert len(triplets) == 1
        t = triplets[0]
        assert t.target_is_subject is True
        assert t.predicate == "front of"
        assert t.reference_bbox == graph.node("cube1").bbox
        assert (t.subject_category, t.object_category) == ("cylinder", "cube")

    def test_reposition_example(self):
        graph = parse_scene_graph(CLEVR_DOC)
        old = graph.edges[0]
        new = RelationshipEdge("cyl1", "behind", "cube1")
        modified = apply_edit(graph, EditOp(
            kind="relationship_change", target_id="cyl1",
            edge_change=(old, new)))
        (t,) = extract_modified_triplets(graph, modified, "cyl1")
        assert t.predicate == "behind"
        assert t.target_is_subject

    def test_ordering_and_truncation(self):
        # 7 incident edges; canonical order is (predicate, reference id)
        nodes = [ObjectNode.make("t", "cube", {}, (0.4, 0.4, 0.6, 0.6))]
        nodes += [ObjectNode.make(f"r{i}", "sphere", {},
                                  (0.1 * i, 0.1, 0.1 * i + 0.05, 0.2))
                  for i in range(7)]
        edges = [
            RelationshipEdge("t", "behind", "r3"),
            RelationshipEdge("r5", "left of", "t"),
            RelationshipEdge("t", "behind", "r1"),
            RelationshipEdge("t", "front of", "r0"),
            RelationshipEdge("r2", "behind", "t"),
            RelationshipEdge("t", "left of", "r4"),
            RelationshipEdge("t", "on", "r6"),
        ]
        graph = SceneGraph(image_ref="x", width=8, height=8,
                           nodes=tuple(nodes), edges=tuple(edges)).validate()
        triplets = extract_modified_triplets(graph, graph, "t", max_triplets=5)
        # hand-applied rule: sort by (predicate, reference id), keep first 5:
        # (behind,r1) (behind,r2) (behind,r3) (front of,r0) (left of,r4)
        expected = [("behind", True), ("behind", False), ("behind", True),
                    ("front of", True), ("left of", True)]
        got = [(t.predicate, t.target_is_subject) for t in triplets]
        assert got == expected
        refs = [t.reference_bbox for t in triplets]
        assert refs[0] == graph.node("r1").bbox
        assert refs[1] == graph.node("r2").bbox

    def test_max_triplets_bounds_output(self):
        rng = np.random.default_rng(23)
        for _ in range(30):
            graph = random_graph(rng, n_nodes=5, n_edges=12)
            target = graph.edges[0].subject_id
            triplets = extract_modified_triplets(graph, graph, target,
                                                 max_triplets=3)
            incident = graph.incident_edges(target)
            assert 1 <= len(triplets) <= 3
            keys = {(e.predicate,
                     e.object_id if e.subject_id == target else e.subject_id)
                    for e in incident}
            for t in triplets:
                assert t.predicate in {k[0] for k in keys}

    def test_isolated_target_rejected(self):
        graph = parse_scene_graph(CLEVR_DOC)
        bare = SceneGraph(image_ref=graph.image_ref, width=64, height=64,
                          nodes=graph.nodes, edges=())
        with pytest.raises(EmptyTripletError):
            extract_modified_triplets(graph, bare, "cyl1")


class TestGraphDiff:
    def test_identical_graphs_empty_diff(self):
        graph = parse_scene_graph(CLEVR_DOC)
        assert graph_diff(graph, graph) == []

    def test_single_predicate_change(self):
        graph = parse_scene_graph(CLEVR_DOC)
        old = graph.edges[0]
        new = RelationshipEdge("cyl1", "behind", "cube1")
        modified = apply_edit(graph, EditOp(kind="relationship_change",
                                            target_id="cyl1",
                                            edge_change=(old, new)))
        ops = graph_diff(graph, modified)
        assert len(ops) == 1 and ops[0].kind == "relationship_change"

    def test_node_deletion_is_one_remove(self):
        graph = parse_scene_graph(CLEVR_DOC)
        modified = apply_edit(graph, EditOp(kind="remove", target_id="cyl1"))
        # oracle: node and edge set differences
        assert {n.id for n in graph.nodes} - {n.id for n in modified.nodes} \
            == {"cyl1"}
        ops = graph_diff(graph, modified)
        assert len(ops) == 1
        assert (ops[0].kind, ops[0].target_id) == ("remove", "cyl1")

    def test_different_images_rejected(self):
        graph = parse_scene_graph(CLEVR_DOC)
        other = SceneGraph(image_ref="other", width=64, height=64,
                           nodes=graph.nodes, edges=graph.edges)
        with pytest.raises(DiffError, match="different images"):
            graph_diff(graph, other)

    def test_inexpressible_bbox_change_rejected(self):
        graph = parse_scene_graph(CLEVR_DOC)
        import dataclasses
        moved = dataclasses.replace(
            graph, nodes=tuple(
                dataclasses.replace(n, bbox=(0.0, 0.0, 0.2, 0.2))
                if n.id == "cyl1" else n for n in graph.nodes))
        with pytest.raises(DiffError, match="bbox"):
            graph_diff(graph, moved)

    def test_fold_reconstructs_modified(self):
        rng = np.random.default_rng(99)
        for _ in range(200):
            graph = random_graph(rng)
            _, modified = random_edit_sequence(rng, graph, max_ops=3)
            ops = graph_diff(graph, modified)
            assert graphs_equal(fold_edits(graph, ops), modified)
