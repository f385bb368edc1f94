"""Scene-graph data model, validation, edit operations, and triplet extraction.

Graphs are immutable values: every edit returns a new graph, which keeps job
reproduction and UI undo trivial. Documents follow the versioned JSON schema
described in the package README (top-level ``schema_version: 1``).
"""

from __future__ import annotations

import json
from itertools import permutations
from dataclasses import dataclass, field, replace

from .errors import (
    DiffError,
    EditError,
    EmptyTripletError,
    GraphError,
    SchemaError,
)

SCHEMA_VERSION = 1

EDIT_KINDS = ("remove", "add", "replace", "relationship_change")

Bbox = tuple[float, float, float, float]


def _check_bbox(bbox, path: str) -> Bbox:
    if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
        raise SchemaError(path, "bbox must be a list of 4 numbers")
    vals = []
    for i, v in enumerate(bbox):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError(f"{path}[{i}]", "bbox coordinate must be a number")
        vals.append(float(v))
    x0, y0, x1, y1 = vals
    if not (0.0 <= x0 <= x1 <= 1.0):
        raise SchemaError(path, f"need 0 <= x_min <= x_max <= 1, got ({x0}, {x1})")
    if not (0.0 <= y0 <= y1 <= 1.0):
        raise SchemaError(path, f"need 0 <= y_min <= y_max <= 1, got ({y0}, {y1})")
    return (x0, y0, x1, y1)


@dataclass(frozen=True)
class ObjectNode:
    """An object in the scene: category, free-form attributes, normalized bbox."""

    id: str
    category: str
    attributes: tuple[tuple[str, str], ...] = ()
    bbox: Bbox = (0.0, 0.0, 1.0, 1.0)

    @staticmethod
    def make(id: str, category: str, attributes: dict[str, str] | None = None,
             bbox: Bbox = (0.0, 0.0, 1.0, 1.0)) -> "ObjectNode":
        attrs = tuple(sorted((attributes or {}).items()))
        return ObjectNode(id=id, category=category, attributes=attrs,
                          bbox=tuple(float(v) for v in bbox))

    @property
    def attribute_map(self) -> dict[str, str]:
        return dict(self.attributes)

    def center(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.bbox
        return ((x0 + x1) / 2.0, (y0 + y1) / 2.0)


@dataclass(frozen=True)
class RelationshipEdge:
    """A directed predicate edge: subject --predicate--> object."""

    subject_id: str
    predicate: str
    object_id: str

    def key(self) -> tuple[str, str, str]:
        return (self.subject_id, self.predicate, self.object_id)


@dataclass(frozen=True)
class SceneGraph:
    """The semantic interface users edit: objects plus predicate edges."""

    image_ref: str
    width: int
    height: int
    nodes: tuple[ObjectNode, ...] = ()
    edges: tuple[RelationshipEdge, ...] = ()

    def node(self, node_id: str) -> ObjectNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise GraphError(f"no node with id {node_id!r}")

    def has_node(self, node_id: str) -> bool:
        return any(n.id == node_id for n in self.nodes)

    def incident_edges(self, node_id: str) -> list[RelationshipEdge]:
        return [e for e in self.edges
                if e.subject_id == node_id or e.object_id == node_id]

    def validate(self) -> "SceneGraph":
        """Check all structural invariants; returns self for chaining."""
        if self.width <= 0 or self.height <= 0:
            raise GraphError(f"image extent must be positive, got "
                             f"{self.width}x{self.height}")
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise GraphError(f"duplicate node ids: {dupes}")
        id_set = set(ids)
        seen = set()
        for e in self.edges:
            if e.subject_id == e.object_id:
                raise GraphError(f"self-edge on node {e.subject_id!r}")
            for endpoint in (e.subject_id, e.object_id):
                if endpoint not in id_set:
                    raise GraphError(f"edge references missing node {endpoint!r}")
            if e.key() in seen:
                raise GraphError(f"duplicate edge {e.key()}")
            seen.add(e.key())
        return self


@dataclass(frozen=True)
class ObjectSource:
    """Where the pixels of an added/replacing object come from."""

    image_ref: str
    bbox: Bbox


@dataclass(frozen=True)
class EditOp:
    """One user edit: remove / add / replace / relationship_change."""

    kind: str
    target_id: str | None = None
    new_node: ObjectNode | None = None
    new_edges: tuple[RelationshipEdge, ...] = ()
    edge_change: tuple[RelationshipEdge, RelationshipEdge] | None = None
    object_source: ObjectSource | None = None


@dataclass(frozen=True)
class Triplet:
    """One subject-predicate-object edge prepared for position prediction.

    Exactly one endpoint is the (invisible) target; ``reference_bbox`` is the
    bbox of the other, visible endpoint.
    """

    subject_category: str
    predicate: str
    object_category: str
    target_is_subject: bool
    reference_bbox: Bbox


# ---------------------------------------------------------------------------
# Parsing / serialization


def _require(doc: dict, key: str, types, path: str):
    if key not in doc:
        raise SchemaError(f"{path}.{key}" if path else key, "missing required field")
    value = doc[key]
    if types is not None and (isinstance(value, bool) and bool not in _as_tuple(types)
                              or not isinstance(value, types)):
        raise SchemaError(f"{path}.{key}" if path else key,
                          f"expected {_type_names(types)}, got {type(value).__name__}")
    return value


def _as_tuple(types):
    return types if isinstance(types, tuple) else (types,)


def _type_names(types) -> str:
    return "/".join(t.__name__ for t in _as_tuple(types))


def _check_version(doc: dict, path: str = "") -> None:
    version = _require(doc, "schema_version", int, path)
    if version != SCHEMA_VERSION:
        key = f"{path}.schema_version" if path else "schema_version"
        raise SchemaError(key, f"unsupported schema_version {version}")


def _parse_node(doc, path: str) -> ObjectNode:
    if not isinstance(doc, dict):
        raise SchemaError(path, "object entry must be a mapping")
    node_id = _require(doc, "id", str, path)
    category = _require(doc, "category", str, path)
    attrs_doc = doc.get("attributes", {})
    if not isinstance(attrs_doc, dict):
        raise SchemaError(f"{path}.attributes", "must be a string->string mapping")
    for k, v in attrs_doc.items():
        if not isinstance(k, str) or not isinstance(v, str):
            raise SchemaError(f"{path}.attributes.{k}", "keys and values must be strings")
    bbox = _check_bbox(_require(doc, "bbox", (list, tuple), path), f"{path}.bbox")
    return ObjectNode.make(node_id, category, attrs_doc, bbox)


def _parse_edge(doc, path: str) -> RelationshipEdge:
    if not isinstance(doc, dict):
        raise SchemaError(path, "relationship entry must be a mapping")
    return RelationshipEdge(
        subject_id=_require(doc, "subject", str, path),
        predicate=_require(doc, "predicate", str, path),
        object_id=_require(doc, "object", str, path),
    )


def parse_scene_graph(document: str | dict) -> SceneGraph:
    """Parse and validate a scene-graph document (JSON text or mapping).

    Raises SchemaError naming the offending path on malformed input and
    GraphError on structural violations (dangling edges, duplicates).
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError("$", f"invalid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise SchemaError("$", "document root must be a mapping")
    _check_version(document)
    image_ref = _require(document, "image", str, "")
    width = _require(document, "width", int, "")
    height = _require(document, "height", int, "")
    objects_doc = _require(document, "objects", list, "")
    rel_doc = _require(document, "relationships", list, "")
    nodes = tuple(_parse_node(o, f"objects[{i}]") for i, o in enumerate(objects_doc))
    edges = tuple(_parse_edge(r, f"relationships[{i}]") for i, r in enumerate(rel_doc))
    graph = SceneGraph(image_ref=image_ref, width=width, height=height,
                       nodes=nodes, edges=edges)
    return graph.validate()


def serialize_scene_graph(graph: SceneGraph) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "image": graph.image_ref,
        "width": graph.width,
        "height": graph.height,
        "objects": [
            {"id": n.id, "category": n.category,
             "attributes": dict(n.attributes), "bbox": list(n.bbox)}
            for n in graph.nodes
        ],
        "relationships": [
            {"subject": e.subject_id, "predicate": e.predicate, "object": e.object_id}
            for e in graph.edges
        ],
    }


def parse_edit_op(document: str | dict) -> EditOp:
    """Parse one EditOp document; field requirements depend on ``kind``."""
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError("$", f"invalid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise SchemaError("$", "document root must be a mapping")
    _check_version(document)
    kind = _require(document, "kind", str, "")
    if kind not in EDIT_KINDS:
        raise SchemaError("kind", f"unknown kind {kind!r}, expected one of {EDIT_KINDS}")

    target_id = document.get("target_id")
    if target_id is not None and not isinstance(target_id, str):
        raise SchemaError("target_id", "must be a string")

    new_node = None
    if document.get("new_node") is not None:
        new_node = _parse_node(document["new_node"], "new_node")

    new_edges_doc = document.get("new_edges") or []
    if not isinstance(new_edges_doc, list):
        raise SchemaError("new_edges", "must be a list")
    new_edges = tuple(_parse_edge(e, f"new_edges[{i}]")
                      for i, e in enumerate(new_edges_doc))

    edge_change = None
    if document.get("edge_change") is not None:
        ec = document["edge_change"]
        if not isinstance(ec, dict):
            raise SchemaError("edge_change", "must be a mapping with 'old' and 'new'")
        old = _parse_edge(_require(ec, "old", dict, "edge_change"), "edge_change.old")
        new = _parse_edge(_require(ec, "new", dict, "edge_change"), "edge_change.new")
        edge_change = (old, new)

    object_source = None
    if document.get("object_source") is not None:
        src = document["object_source"]
        if not isinstance(src, dict):
            raise SchemaError("object_source", "must be a mapping")
        object_source = ObjectSource(
            image_ref=_require(src, "image", str, "object_source"),
            bbox=_check_bbox(_require(src, "bbox", (list, tuple), "object_source"),
                             "object_source.bbox"),
        )

    op = EditOp(kind=kind, target_id=target_id, new_node=new_node,
                new_edges=new_edges, edge_change=edge_change,
                object_source=object_source)
    check_op_shape(op)
    return op


def serialize_edit_op(op: EditOp) -> dict:
    doc: dict = {"schema_version": SCHEMA_VERSION, "kind": op.kind}
    if op.target_id is not None:
        doc["target_id"] = op.target_id
    if op.new_node is not None:
        n = op.new_node
        doc["new_node"] = {"id": n.id, "category": n.category,
                           "attributes": dict(n.attributes), "bbox": list(n.bbox)}
    if op.new_edges:
        doc["new_edges"] = [
            {"subject": e.subject_id, "predicate": e.predicate, "object": e.object_id}
            for e in op.new_edges
        ]
    if op.edge_change is not None:
        old, new = op.edge_change
        doc["edge_change"] = {
            "old": {"subject": old.subject_id, "predicate": old.predicate,
                    "object": old.object_id},
            "new": {"subject": new.subject_id, "predicate": new.predicate,
                    "object": new.object_id},
        }
    if op.object_source is not None:
        doc["object_source"] = {"image": op.object_source.image_ref,
                                "bbox": list(op.object_source.bbox)}
    return doc


def check_op_shape(op: EditOp) -> None:
    """Enforce that exactly the fields required by ``kind`` are present."""
    if op.kind not in EDIT_KINDS:
        raise EditError(f"unknown op kind {op.kind!r}")
    if op.kind == "remove":
        if op.target_id is None:
            raise EditError("remove requires target_id")
        if op.new_node or op.new_edges or op.edge_change:
            raise EditError("remove takes only target_id")
    elif op.kind == "add":
        if op.new_node is None:
            raise EditError("add requires new_node")
        if op.target_id is not None and op.target_id != op.new_node.id:
            raise EditError("add target_id must match new_node.id when given")
        if op.edge_change:
            raise EditError("add does not take edge_change")
    elif op.kind == "replace":
        if op.target_id is None or op.new_node is None:
            raise EditError("replace requires target_id and new_node")
        if op.new_edges or op.edge_change:
            raise EditError("replace takes only target_id and new_node")
    elif op.kind == "relationship_change":
        if op.target_id is None or op.edge_change is None:
            raise EditError("relationship_change requires target_id and edge_change")
        if op.new_node or op.new_edges:
            raise EditError("relationship_change takes only target_id and edge_change")
        old, new = op.edge_change
        same_order = old.subject_id == new.subject_id and old.object_id == new.object_id
        swapped = old.subject_id == new.object_id and old.object_id == new.subject_id
        if same_order:
            if old.predicate == new.predicate:
                raise EditError("edge_change old and new are identical")
        elif swapped:
            if old.predicate != new.predicate:
                raise EditError("edge_change may differ in predicate or in role "
                                "orientation, not both")
        else:
            raise EditError("edge_change endpoints must match (possibly swapped)")
        for e in (old, new):
            if op.target_id not in (e.subject_id, e.object_id):
                raise EditError(f"target {op.target_id!r} is not an endpoint "
                                f"of edge {e.key()}")


# ---------------------------------------------------------------------------
# Edit application


def apply_edit(graph: SceneGraph, op: EditOp) -> SceneGraph:
    """Apply one edit, returning a new graph; the input is never mutated."""
    check_op_shape(op)
    if op.kind == "remove":
        if not graph.has_node(op.target_id):
            raise EditError(f"remove: no node {op.target_id!r}")
        nodes = tuple(n for n in graph.nodes if n.id != op.target_id)
        edges = tuple(e for e in graph.edges
                      if op.target_id not in (e.subject_id, e.object_id))
        return replace(graph, nodes=nodes, edges=edges).validate()

    if op.kind == "add":
        new = op.new_node
        if graph.has_node(new.id):
            raise EditError(f"add: id {new.id!r} already used")
        for i, e in enumerate(op.new_edges):
            if new.id not in (e.subject_id, e.object_id):
                raise EditError(f"add: new_edges[{i}] does not involve {new.id!r}")
        return replace(graph, nodes=graph.nodes + (new,),
                       edges=graph.edges + op.new_edges).validate()

    if op.kind == "replace":
        if not graph.has_node(op.target_id):
            raise EditError(f"replace: no node {op.target_id!r}")
        # Keeps the old id, bbox, and edge set; swaps category + attributes.
        nodes = tuple(
            replace(n, category=op.new_node.category,
                    attributes=op.new_node.attributes)
            if n.id == op.target_id else n
            for n in graph.nodes
        )
        return replace(graph, nodes=nodes).validate()

    # relationship_change
    old, new = op.edge_change
    if old not in graph.edges:
        raise EditError(f"relationship_change: edge {old.key()} not in graph")
    edges = tuple(new if e == old else e for e in graph.edges)
    return replace(graph, edges=edges).validate()


def invert_relationship_change(op: EditOp) -> EditOp:
    """The inverse op: old/new edges swapped."""
    if op.kind != "relationship_change":
        raise EditError("only relationship_change ops have a defined inverse")
    old, new = op.edge_change
    return replace(op, edge_change=(new, old))


# ---------------------------------------------------------------------------
# Triplet extraction


def extract_modified_triplets(original: SceneGraph, modified: SceneGraph,
                              target_id: str, max_triplets: int = 5) -> list[Triplet]:
    """Collect every edge of ``modified`` incident to the target as Triplets.

    Reference bboxes come from the non-target endpoint in the modified graph.
    Edges are ordered by (predicate, reference node id) and truncated to
    ``max_triplets`` so the result is deterministic.
    """
    if max_triplets < 1:
        raise GraphError(f"max_triplets must be >= 1, got {max_triplets}")
    target = modified.node(target_id)
    incident = modified.incident_edges(target_id)
    if not incident:
        raise EmptyTripletError(
            f"node {target_id!r} has no incident edges; cannot predict a position"
        )

    def ref_id(edge: RelationshipEdge) -> str:
        return edge.object_id if edge.subject_id == target_id else edge.subject_id

    incident.sort(key=lambda e: (e.predicate, ref_id(e)))
    triplets = []
    for edge in incident[:max_triplets]:
        is_subject = edge.subject_id == target_id
        reference = modified.node(ref_id(edge))
        subject_cat = target.category if is_subject else reference.category
        object_cat = reference.category if is_subject else target.category
        triplets.append(Triplet(
            subject_category=subject_cat,
            predicate=edge.predicate,
            object_category=object_cat,
            target_is_subject=is_subject,
            reference_bbox=reference.bbox,
        ))
    return triplets


# ---------------------------------------------------------------------------
# Graph diff


def _node_signature(n: ObjectNode):
    return (n.category, n.attributes)


def graph_diff(original: SceneGraph, modified: SceneGraph) -> list[EditOp]:
    """Minimal op list whose fold over ``original`` reproduces ``modified``.

    Comparison is keyed on node ids. Raises DiffError when the difference is
    not expressible with the four edit operations (e.g. a bbox-only change or
    an edge added between surviving nodes with no removed counterpart).
    """
    if original.image_ref != modified.image_ref:
        raise DiffError(f"graphs reference different images: "
                        f"{original.image_ref!r} vs {modified.image_ref!r}")

    orig_ids = {n.id for n in original.nodes}
    mod_ids = {n.id for n in modified.nodes}
    removed_ids = sorted(orig_ids - mod_ids)
    added_ids = sorted(mod_ids - orig_ids)
    kept_ids = orig_ids & mod_ids

    ops: list[EditOp] = []
    for node_id in removed_ids:
        ops.append(EditOp(kind="remove", target_id=node_id))

    for node_id in sorted(kept_ids):
        before, after = original.node(node_id), modified.node(node_id)
        if before.bbox != after.bbox:
            raise DiffError(f"node {node_id!r} changed bbox; not expressible "
                            "as an edit op")
        if _node_signature(before) != _node_signature(after):
            ops.append(EditOp(kind="replace", target_id=node_id, new_node=after))

    # Edges among surviving nodes: pair removals with additions sharing the
    # same endpoint set -> relationship_change; anything unpaired is invalid
    # unless it belongs to an added node.
    surviving = kept_ids | set(added_ids)
    orig_edges = {e.key(): e for e in original.edges
                  if e.subject_id in kept_ids and e.object_id in kept_ids}
    mod_edges_kept = {e.key(): e for e in modified.edges
                      if e.subject_id in kept_ids and e.object_id in kept_ids}
    gone = [e for k, e in sorted(orig_edges.items()) if k not in mod_edges_kept]
    new = [e for k, e in sorted(mod_edges_kept.items()) if k not in orig_edges]

    def endpoints(e: RelationshipEdge) -> frozenset:
        return frozenset((e.subject_id, e.object_id))

    def single_op(old_edge, new_edge) -> bool:
        return (new_edge.subject_id == old_edge.subject_id
                or new_edge.predicate == old_edge.predicate)

    # Group by endpoint pair, then pick the pairing that needs the fewest
    # two-op decompositions (groups are tiny; brute force is fine).
    groups: dict[frozenset, tuple[list, list]] = {}
    for e in gone:
        groups.setdefault(endpoints(e), ([], []))[0].append(e)
    for e in new:
        if endpoints(e) not in groups:
            raise DiffError(f"edge {e.key()} appeared between existing "
                            "nodes; not expressible as an edit op")
        groups[endpoints(e)][1].append(e)

    pairs: list[tuple[RelationshipEdge, RelationshipEdge]] = []
    for pair_key in sorted(groups, key=sorted):
        gone_group, new_group = groups[pair_key]
        if len(gone_group) != len(new_group):
            raise DiffError(
                f"edge count between {sorted(pair_key)} changed from "
                f"{len(gone_group)} to {len(new_group)}; not expressible")
        best = None
        for perm in permutations(range(len(new_group))):
            cost = sum(0 if single_op(g, new_group[perm[i]]) else 1
                       for i, g in enumerate(gone_group))
            if best is None or cost < best[0]:
                best = (cost, perm)
        for i, g in enumerate(gone_group):
            pairs.append((g, new_group[best[1][i]]))

    live = set(orig_edges)  # edge keys present while the fold replays
    for old_edge, match in pairs:
        live.discard(old_edge.key())
        target = old_edge.subject_id  # canonical: subject is the moving entity
        if single_op(old_edge, match):
            ops.append(EditOp(kind="relationship_change", target_id=target,
                              edge_change=(old_edge, match)))
            live.add(match.key())
            continue
        # predicate and orientation both changed: go through an intermediate
        mids = (RelationshipEdge(old_edge.subject_id, match.predicate,
                                 old_edge.object_id),
                RelationshipEdge(match.subject_id, old_edge.predicate,
                                 match.object_id))
        mid = next((m for m in mids if m.key() not in live), None)
        if mid is None:
            raise DiffError(f"cannot decompose edge change {old_edge.key()} "
                            f"-> {match.key()} without colliding")
        ops.append(EditOp(kind="relationship_change", target_id=target,
                          edge_change=(old_edge, mid)))
        ops.append(EditOp(kind="relationship_change", target_id=target,
                          edge_change=(mid, match)))
        live.add(match.key())

    # Added nodes, in id order; each op carries the incident edges whose other
    # endpoint already exists at that point of the fold.
    placed = set(kept_ids)
    for node_id in added_ids:
        node = modified.node(node_id)
        edges = tuple(
            e for e in modified.edges
            if node_id in (e.subject_id, e.object_id)
            and (e.subject_id if e.object_id == node_id else e.object_id)
            in placed
        )
        ops.append(EditOp(kind="add", target_id=node_id, new_node=node,
                          new_edges=edges))
        placed.add(node_id)

    return ops


def fold_edits(graph: SceneGraph, ops: list[EditOp]) -> SceneGraph:
    """Apply a sequence of ops left to right."""
    for op in ops:
        graph = apply_edit(graph, op)
    return graph


def graphs_equal(a: SceneGraph, b: SceneGraph) -> bool:
    """Structural equality: same nodes (any order) and same edge set."""
    return (
        a.image_ref == b.image_ref
        and a.width == b.width and a.height == b.height
        and sorted(a.nodes, key=lambda n: n.id) == sorted(b.nodes, key=lambda n: n.id)
        and set(a.edges) == set(b.edges)
    )
