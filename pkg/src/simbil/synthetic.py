"""Synthetic test scenes: flat background, 2-4 solid-colored shapes,
pixel-exact ground-truth masks, and a scene graph with spatial predicates.

Everything is deterministic given a seed, so tests can regenerate scenes
instead of shipping fixtures. Spatial predicate convention (image coords,
y grows downward): "left of"/"right of" compare center x; "front of" means
nearer to the viewer, i.e. larger center y; "behind" smaller center y.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imageio import save_image, save_mask
from .scenegraph import ObjectNode, RelationshipEdge, SceneGraph, serialize_scene_graph
from .segmask import Mask

SHAPES = ("cube", "sphere", "cylinder")

COLORS = {
    "gray": (87, 87, 87),
    "red": (173, 35, 35),
    "blue": (42, 75, 215),
    "green": (29, 105, 20),
    "brown": (129, 74, 25),
    "purple": (129, 38, 192),
    "cyan": (41, 208, 208),
    "yellow": (255, 238, 51),
}

MATERIALS = ("rubber", "metal")

SPATIAL_PREDICATES = ("left of", "right of", "front of", "behind")

# Shapes must be separated on both axes so every predicate is strict.
MIN_AXIS_SEPARATION = 3


@dataclass
class SyntheticScene:
    """One generated scene with pixel-exact ground truth."""

    image: np.ndarray              # (H, W, 3) float64 in [0, 1]
    graph: SceneGraph
    masks: dict[str, Mask]         # node id -> mask, 0 = object pixels
    background: np.ndarray         # (3,) float64


def _shape_footprint(shape: str, cx: float, cy: float, half: float,
                     size: int) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size]
    x = xs + 0.5
    y = ys + 0.5
    if shape == "cube":
        return (np.abs(x - cx) <= half) & (np.abs(y - cy) <= half)
    if shape == "sphere":
        return (x - cx) ** 2 + (y - cy) ** 2 <= half ** 2
    # cylinder: narrow upright slab
    return (np.abs(x - cx) <= 0.6 * half) & (np.abs(y - cy) <= half)


def generate_scene(rng: np.random.Generator, size: int = 64,
                   n_objects: int | None = None,
                   image_ref: str = "synthetic",
                   half_range: tuple[float, float] = (0.08, 0.16)
                   ) -> SyntheticScene:
    """Place non-overlapping shapes on a flat gray background.

    ``half_range`` bounds the shape half-extent as a fraction of the image
    side; the default gives small-to-medium objects that always pack.
    """
    if n_objects is None:
        n_objects = int(rng.integers(2, 5))
    # quantized to 8-bit so in-memory scenes match their PNG round trip
    bg_value = round(float(rng.uniform(0.55, 0.75)) * 255) / 255
    background = np.full(3, bg_value)
    image = np.full((size, size, 3), bg_value, dtype=np.float64)

    occupied = np.zeros((size, size), dtype=bool)
    centers: list[tuple[float, float]] = []
    nodes: list[ObjectNode] = []
    masks: dict[str, Mask] = {}
    color_names = list(COLORS)

    placed = 0
    attempts = 0
    while placed < n_objects and attempts < 400:
        attempts += 1
        half = float(rng.uniform(half_range[0], half_range[1]) * size)
        cx = float(rng.uniform(half + 1, size - half - 1))
        cy = float(rng.uniform(half + 1, size - half - 1))
        if any(abs(cx - ox) < MIN_AXIS_SEPARATION
               or abs(cy - oy) < MIN_AXIS_SEPARATION for ox, oy in centers):
            continue
        shape = SHAPES[int(rng.integers(len(SHAPES)))]
        footprint = _shape_footprint(shape, cx, cy, half, size)
        if not footprint.any():
            continue
        # 2 px clearance between shapes keeps ground-truth masks separable
        grown = np.zeros_like(footprint)
        ys, xs = np.nonzero(footprint)
        for dy in (-2, -1, 0, 1, 2):
            for dx in (-2, -1, 0, 1, 2):
                yy = np.clip(ys + dy, 0, size - 1)
                xx = np.clip(xs + dx, 0, size - 1)
                grown[yy, xx] = True
        if (grown & occupied).any():
            continue

        color_name = color_names[int(rng.integers(len(color_names)))]
        color = np.array(COLORS[color_name], dtype=np.float64) / 255.0
        image[footprint] = color
        occupied |= grown

        node_id = f"obj_{placed}"
        ys, xs = np.nonzero(footprint)
        bbox = (xs.min() / size, ys.min() / size,
                (xs.max() + 1) / size, (ys.max() + 1) / size)
        nodes.append(ObjectNode.make(
            node_id, shape,
            {"color": color_name,
             "material": MATERIALS[int(rng.integers(2))]},
            bbox))
        masks[node_id] = Mask.from_array((~footprint).astype(np.uint8))
        centers.append((cx, cy))
        placed += 1

    if placed < n_objects:
        raise RuntimeError(f"could not place {n_objects} shapes in {size}x{size}")

    edges = []
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            (cxi, cyi), (cxj, cyj) = centers[i], centers[j]
            horizontal = "left of" if cxi < cxj else "right of"
            depth = "front of" if cyi > cyj else "behind"
            edges.append(RelationshipEdge(nodes[i].id, horizontal, nodes[j].id))
            edges.append(RelationshipEdge(nodes[i].id, depth, nodes[j].id))

    graph = SceneGraph(image_ref=image_ref, width=size, height=size,
                       nodes=tuple(nodes), edges=tuple(edges)).validate()
    return SyntheticScene(image=image, graph=graph, masks=masks,
                          background=background)


def generate_scenes(count: int, seed: int, size: int = 64,
                    half_range: tuple[float, float] = (0.08, 0.16)
                    ) -> list[SyntheticScene]:
    rng = np.random.default_rng(seed)
    return [generate_scene(rng, size=size, image_ref=f"synthetic_{i}",
                           half_range=half_range)
            for i in range(count)]


def write_scene(out_dir: str | Path, scene: SyntheticScene) -> None:
    """Persist one scene: image.png, graph.json, masks/<node>.png, meta.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_image(out / "image.png", scene.image)
    (out / "graph.json").write_text(
        json.dumps(serialize_scene_graph(scene.graph), indent=2))
    mask_dir = out / "masks"
    mask_dir.mkdir(exist_ok=True)
    for node_id, mask in scene.masks.items():
        save_mask(mask_dir / f"{node_id}.png", mask)
    (out / "meta.json").write_text(json.dumps(
        {"background": [float(v) for v in scene.background]}, indent=2))


def write_query_library(out_dir: str | Path, seed: int, scenes: int = 3,
                        size: int = 64) -> dict:
    """A small object library for addition/replacement sources.

    Entries reference full scene images plus the object bbox; the pipeline
    segments the source image to get clean crops.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, scene in enumerate(generate_scenes(scenes, seed=seed, size=size)):
        name = f"lib_{i}.png"
        save_image(out / name, scene.image)
        for node in scene.graph.nodes:
            entries.append({
                "category": node.category,
                "attributes": dict(node.attributes),
                "image": name,
                "bbox": list(node.bbox),
            })
    index = {"schema_version": 1, "entries": entries}
    (out / "index.json").write_text(json.dumps(index, indent=2))
    return index


# ---------------------------------------------------------------------------
# Position-prediction data


def relation_satisfied(predicate: str, target_center: tuple[float, float],
                       reference_center: tuple[float, float],
                       target_is_subject: bool) -> bool:
    """Whether the target sits on the correct side of the reference."""
    if not target_is_subject:
        # (ref, p, target) is equivalent to (target, inverse(p), ref)
        inverse = {"left of": "right of", "right of": "left of",
                   "front of": "behind", "behind": "front of"}
        predicate = inverse[predicate]
    tx, ty = target_center
    rx, ry = reference_center
    if predicate == "left of":
        return tx < rx
    if predicate == "right of":
        return tx > rx
    if predicate == "front of":
        return ty > ry
    if predicate == "behind":
        return ty < ry
    raise ValueError(f"unknown spatial predicate {predicate!r}")


def generate_position_pairs(count: int, seed: int, size: int = 64,
                            degenerate_every: int = 0
                            ) -> list[tuple[SceneGraph, SceneGraph, str]]:
    """(original, modified, target_id) tuples for dataset extraction.

    The modified graph is the scene's ground-truth graph, so the target's
    bbox is consistent with every incident predicate. When
    ``degenerate_every`` is n > 0, every n-th pair has its target isolated
    (no incident edges) to exercise skip counting downstream.
    """
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(count):
        scene = generate_scene(rng, size=size, image_ref=f"pospair_{i}")
        graph = scene.graph
        target_idx = int(rng.integers(len(graph.nodes)))
        target_id = graph.nodes[target_idx].id
        if degenerate_every and (i + 1) % degenerate_every == 0:
            isolated = SceneGraph(
                image_ref=graph.image_ref, width=graph.width, height=graph.height,
                nodes=graph.nodes,
                edges=tuple(e for e in graph.edges
                            if target_id not in (e.subject_id, e.object_id)))
            pairs.append((graph, isolated, target_id))
        else:
            pairs.append((graph, graph, target_id))
    return pairs
