"""Executes a batch of scene-graph edits on pixels.

Per edit: segment the target, restore the background over its (dilated)
mask, predict the new position when the edit calls for one, paste the object
crop, then measure. Every step persists its artifacts into the job directory,
so interrupted jobs can resume and reruns are reproducible.

Job directory layout::

    config.json  graph_before.json  graph_after.json  ops.json
    steps/NN_<name>/...  result.png  metrics.json  log.txt  state.json
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace as dc_replace
from pathlib import Path

import cv2
import numpy as np

from .errors import (
    CropSourceError,
    PipelineError,
    PlanConflictError,
    SegmentationError,
    ValidationFailure,
)
from .imageio import from_uint8, load_image, load_mask, save_image, save_mask, to_uint8
from .inpaint import InpaintSpec, inpaint, write_trace_csv
from .metrics import SSIM_WINDOW, RegionOfInterest, report
from .scenegraph import (
    EditOp,
    SceneGraph,
    Triplet,
    apply_edit,
    extract_modified_triplets,
    parse_edit_op,
    parse_scene_graph,
    serialize_edit_op,
    serialize_scene_graph,
)
from .segmask import (
    Bbox,
    HttpSegmentationBackend,
    Mask,
    SyntheticOracleBackend,
    bbox_to_pixels,
    bbox_union,
    clip_bbox,
    erode_foreground,
    mask_from_bbox,
    segment,
)

logger = logging.getLogger(__name__)

OP_STEPS = {
    "remove": ("segment", "remove_inpaint"),
    "replace": ("segment", "remove_inpaint", "paste", "final_inpaint"),
    "relationship_change": ("segment", "remove_inpaint", "predict_position",
                            "paste", "final_inpaint"),
    "add": ("predict_position", "paste", "final_inpaint"),
}


@dataclass(frozen=True)
class PlanStep:
    name: str
    op_index: int | None  # None for the trailing measure step


@dataclass(frozen=True)
class PipelinePlan:
    steps: tuple[PlanStep, ...]
    ops: tuple[EditOp, ...]

    def provenance(self) -> list[EditOp | None]:
        return [None if s.op_index is None else self.ops[s.op_index]
                for s in self.steps]


@dataclass
class PipelineConfig:
    inpaint: InpaintSpec = field(default_factory=InpaintSpec)
    erosion_radius: int = 1
    segmentation: dict = field(default_factory=lambda: {"kind": "oracle"})
    query_library: str | None = None
    position_model: str | None = None

    def to_dict(self) -> dict:
        return {
            "inpaint": self.inpaint.to_dict(),
            "erosion_radius": self.erosion_radius,
            "segmentation": dict(self.segmentation),
            "query_library": self.query_library,
            "position_model": self.position_model,
        }

    @staticmethod
    def from_dict(doc: dict) -> "PipelineConfig":
        return PipelineConfig(
            inpaint=InpaintSpec.from_dict(doc.get("inpaint", {})),
            erosion_radius=int(doc.get("erosion_radius", 1)),
            segmentation=dict(doc.get("segmentation", {"kind": "oracle"})),
            query_library=doc.get("query_library"),
            position_model=doc.get("position_model"),
        )

    def make_backend(self):
        kind = self.segmentation.get("kind", "oracle")
        if kind == "oracle":
            return SyntheticOracleBackend()
        if kind == "http":
            return HttpSegmentationBackend(self.segmentation["endpoint"])
        raise ValidationFailure(f"unknown segmentation backend kind {kind!r}")


@dataclass
class ExecutionResult:
    image: np.ndarray
    roi: RegionOfInterest | None
    metrics: object | None
    graph_after: SceneGraph
    artifacts: list[str]
    fallbacks: list[str]


def plan(graph: SceneGraph, ops: list[EditOp]) -> PipelinePlan:
    """Expand edits into the ordered step list; pure function of its inputs."""
    touched: dict[str, int] = {}
    scratch = graph
    steps: list[PlanStep] = []
    for i, op in enumerate(ops):
        node_id = op.new_node.id if op.kind == "add" else op.target_id
        if node_id in touched:
            raise PlanConflictError(
                f"ops {touched[node_id]} and {i} both touch node {node_id!r}")
        touched[node_id] = i
        scratch = apply_edit(scratch, op)  # validates the op against the graph
        steps.extend(PlanStep(name, i) for name in OP_STEPS[op.kind])
    if ops:
        steps.append(PlanStep("measure", None))
    return PipelinePlan(steps=tuple(steps), ops=tuple(ops))


# ---------------------------------------------------------------------------
# Paste


def paste_object(canvas: np.ndarray, crop: np.ndarray, crop_mask: Mask,
                 target_bbox: Bbox, erosion_radius: int = 1) -> np.ndarray:
    """Resize the crop into the target bbox and composite its foreground.

    The crop's foreground is the mask 0-set, eroded by ``erosion_radius`` to
    suppress resampling halos. Aspect ratio follows the target bbox. If the
    erosion swallows the whole foreground the canvas is returned unchanged.
    """
    h, w = canvas.shape[:2]
    x0, y0, x1, y1 = bbox_to_pixels(clip_bbox(target_bbox), w, h)
    if x1 <= x0 or y1 <= y0:
        raise PipelineError(f"target bbox {target_bbox} rasterizes to an "
                            f"empty pixel rect at {w}x{h}")
    tw, th = x1 - x0, y1 - y0
    resized = cv2.resize(crop, (tw, th), interpolation=cv2.INTER_LINEAR)
    if resized.ndim == 2 and canvas.ndim == 3:
        resized = resized[:, :, None].repeat(canvas.shape[2], axis=2)
    mask_f = cv2.resize(crop_mask.data.astype(np.float32), (tw, th),
                        interpolation=cv2.INTER_LINEAR)
    resized_mask = Mask.from_array((mask_f >= 0.5).astype(np.uint8))
    eroded = erode_foreground(resized_mask, erosion_radius)
    foreground = eroded.data == 0
    if not foreground.any():
        logger.warning("paste: erosion radius %d swallowed the whole "
                       "foreground; canvas left unchanged", erosion_radius)
        return canvas.copy()
    out = canvas.copy()
    region = out[y0:y1, x0:x1]
    region[foreground] = resized[foreground]
    return out


# ---------------------------------------------------------------------------
# Object crop sources


def load_query_library(library_dir: str | Path) -> list[dict]:
    index_path = Path(library_dir) / "index.json"
    if not index_path.exists():
        raise CropSourceError(f"no query library index at {index_path}")
    index = json.loads(index_path.read_text())
    return list(index.get("entries", []))


def object_crop_source(edit: EditOp, graph: SceneGraph, image: np.ndarray,
                       library_dir: str | Path | None,
                       backend=None) -> tuple[np.ndarray, Mask]:
    """Pixels + mask for the object an add/replace introduces.

    An explicit ``object_source`` wins; otherwise the query library is
    searched by category and the highest-scoring segmented instance is used.
    """
    backend = backend or SyntheticOracleBackend()
    category = edit.new_node.category if edit.new_node else None

    if edit.object_source is not None:
        src = edit.object_source
        if src.image_ref in ("self", graph.image_ref):
            src_image = image
        else:
            path = Path(src.image_ref)
            if not path.is_absolute() and library_dir is not None:
                path = Path(library_dir) / path
            if not path.exists():
                raise CropSourceError(f"object source image {path} not found")
            src_image = load_image(path)
        candidate = segment(src_image, category or "object", src.bbox, backend)
        return _crop_candidate(src_image, candidate)

    if library_dir is None:
        raise CropSourceError(
            f"no object_source given and no query library configured "
            f"(category {category!r})")
    entries = load_query_library(library_dir)
    matching = [e for e in entries if e["category"] == category]
    if not matching:
        available = sorted({e["category"] for e in entries})
        raise CropSourceError(
            f"category {category!r} not in query library; available: "
            f"{available}")
    best = None
    for entry in matching:
        src_image = load_image(Path(library_dir) / entry["image"])
        try:
            candidate = segment(src_image, category,
                                tuple(entry["bbox"]), backend)
        except SegmentationError:
            continue
        if best is None or candidate.score > best[0].score:
            best = (candidate, src_image)
    if best is None:
        raise CropSourceError(
            f"no library entry of category {category!r} segmented cleanly")
    return _crop_candidate(best[1], best[0])


def _crop_candidate(image: np.ndarray, candidate) -> tuple[np.ndarray, Mask]:
    h, w = image.shape[:2]
    x0, y0, x1, y1 = bbox_to_pixels(candidate.bbox, w, h)
    crop = image[y0:y1, x0:x1].copy()
    mask = Mask.from_array(candidate.mask.data[y0:y1, x0:x1])
    return crop, mask


# ---------------------------------------------------------------------------
# Position fallback

_PREDICATE_OFFSETS = {
    "left of": (-1, 0), "right of": (1, 0), "front of": (0, 1), "behind": (0, -1),
}


def heuristic_position(modified: SceneGraph, target_id: str, size_bbox: Bbox,
                       prefer_edge=None, gap: float = 0.02) -> np.ndarray:
    """Deterministic placement satisfying one of the target's triplets.

    Used when no trained position model is configured: the target keeps its
    size and lands adjacent to the reference on the predicate's side. For a
    relationship change the edited edge is passed as ``prefer_edge`` so the
    changed relation is the one honored; otherwise the first canonical
    triplet wins.
    """
    triplets = extract_modified_triplets(modified, modified, target_id)
    t = triplets[0]
    if prefer_edge is not None:
        is_subject = prefer_edge.subject_id == target_id
        ref_id = prefer_edge.object_id if is_subject else prefer_edge.subject_id
        t = Triplet(subject_category="", predicate=prefer_edge.predicate,
                    object_category="", target_is_subject=is_subject,
                    reference_bbox=modified.node(ref_id).bbox)
    rx0, ry0, rx1, ry1 = t.reference_bbox
    w = size_bbox[2] - size_bbox[0]
    h = size_bbox[3] - size_bbox[1]
    pred = t.predicate
    if not t.target_is_subject:
        inverse = {"left of": "right of", "right of": "left of",
                   "front of": "behind", "behind": "front of"}
        pred = inverse.get(pred, pred)
    dx, dy = _PREDICATE_OFFSETS.get(pred, (1, 0))
    cx = (rx0 + rx1) / 2 + dx * ((rx1 - rx0) / 2 + w / 2 + gap)
    cy = (ry0 + ry1) / 2 + dy * ((ry1 - ry0) / 2 + h / 2 + gap)
    x0 = min(max(cx - w / 2, 0.0), 1.0 - w)
    y0 = min(max(cy - h / 2, 0.0), 1.0 - h)
    return np.array([x0, y0, x0 + w, y0 + h])


# ---------------------------------------------------------------------------
# Execution


def _expand_region_for_window(bbox: Bbox, width: int, height: int) -> Bbox:
    """Grow a normalized bbox until it rasterizes to at least the SSIM window."""
    min_w = min(SSIM_WINDOW / width, 1.0)
    min_h = min(SSIM_WINDOW / height, 1.0)
    x0, y0, x1, y1 = clip_bbox(bbox)
    if x1 - x0 < min_w:
        cx = (x0 + x1) / 2
        x0, x1 = cx - min_w / 2, cx + min_w / 2
        if x0 < 0:
            x0, x1 = 0.0, min_w
        if x1 > 1:
            x0, x1 = 1.0 - min_w, 1.0
    if y1 - y0 < min_h:
        cy = (y0 + y1) / 2
        y0, y1 = cy - min_h / 2, cy + min_h / 2
        if y0 < 0:
            y0, y1 = 0.0, min_h
        if y1 > 1:
            y0, y1 = 1.0 - min_h, 1.0
    return (x0, y0, x1, y1)


class _Executor:
    def __init__(self, plan_: PipelinePlan, image: np.ndarray,
                 graph: SceneGraph, config: PipelineConfig,
                 job_dir: str | Path, progress=None):
        self.plan = plan_
        self.input_image = np.asarray(image, dtype=np.float64)
        self.image = self.input_image.copy()
        self.graph = graph
        self.config = config
        self.job_dir = Path(job_dir)
        self.progress = progress
        self.backend = config.make_backend()
        self.roi_bboxes: list[Bbox] = []
        self.fallbacks: list[str] = []
        self.op_state: dict[int, dict] = {}
        self.metrics = None
        self.completed = 0

    # -- persistence utilities

    def _step_dir(self, index: int) -> Path:
        name = self.plan.steps[index].name
        d = self.job_dir / "steps" / f"{index:02d}_{name}"
        d.mkdir(parents=True, exist_ok=True)
        return d

    def _log(self, message: str) -> None:
        stamp = time.strftime("%Y-%m-%dT%H:%M:%S")
        with open(self.job_dir / "log.txt", "a") as fh:
            fh.write(f"{stamp} {message}\n")
        logger.info("%s", message)

    def _save_state(self) -> None:
        state = {
            "completed": self.completed,
            "roi_bboxes": [list(b) for b in self.roi_bboxes],
            "graph": serialize_scene_graph(self.graph),
            "op_state": {str(k): v for k, v in self.op_state.items()},
            "fallbacks": self.fallbacks,
        }
        (self.job_dir / "state.json").write_text(json.dumps(state, indent=2))

    def _load_state(self) -> bool:
        path = self.job_dir / "state.json"
        if not path.exists():
            return False
        state = json.loads(path.read_text())
        self.completed = int(state["completed"])
        if self.completed == 0:
            return False
        self.roi_bboxes = [tuple(b) for b in state["roi_bboxes"]]
        self.graph = parse_scene_graph(state["graph"])
        self.op_state = {int(k): v for k, v in state["op_state"].items()}
        self.fallbacks = list(state["fallbacks"])
        last_output = self._latest_output(self.completed)
        if last_output is not None:
            self.image = load_image(last_output)
        return True

    def _latest_output(self, upto: int) -> Path | None:
        for i in range(upto - 1, -1, -1):
            candidate = self.job_dir / "steps" / \
                f"{i:02d}_{self.plan.steps[i].name}" / "output.png"
            if candidate.exists():
                return candidate
        return None

    # -- step handlers

    def run(self, resume: bool = False) -> ExecutionResult:
        self.job_dir.mkdir(parents=True, exist_ok=True)
        (self.job_dir / "config.json").write_text(
            json.dumps(self.config.to_dict(), indent=2))
        (self.job_dir / "graph_before.json").write_text(
            json.dumps(serialize_scene_graph(self.graph), indent=2))
        (self.job_dir / "ops.json").write_text(json.dumps(
            {"schema_version": 1,
             "ops": [serialize_edit_op(op) for op in self.plan.ops]}, indent=2))
        start_at = 0
        if resume and self._load_state():
            start_at = self.completed
            self._log(f"resuming at step {start_at}")

        for index in range(start_at, len(self.plan.steps)):
            step = self.plan.steps[index]
            step_dir = self._step_dir(index)
            self._log(f"step {index} {step.name} start")
            try:
                if self.progress:
                    self.progress(index, step.name, {})
                handler = getattr(self, f"_step_{step.name}")
                handler(index, step, step_dir)
            except Exception as exc:
                self._log(f"step {index} {step.name} failed: {exc}")
                raise PipelineError(str(exc), step_index=index) from exc
            # quantize to the on-disk precision so resumed runs see exactly
            # what uninterrupted runs saw
            self.image = from_uint8(to_uint8(self.image))
            save_image(step_dir / "output.png", self.image)
            self.completed = index + 1
            self._save_state()
            self._log(f"step {index} {step.name} done")

        save_image(self.job_dir / "result.png", self.image)
        (self.job_dir / "graph_after.json").write_text(
            json.dumps(serialize_scene_graph(self.graph), indent=2))
        roi = None
        if self.roi_bboxes:
            union = self.roi_bboxes[0]
            for b in self.roi_bboxes[1:]:
                union = bbox_union(union, b)
            roi = RegionOfInterest(bbox=clip_bbox(union),
                                   derivation="union of removed and pasted bboxes")
        artifacts = sorted(str(p.relative_to(self.job_dir))
                           for p in self.job_dir.rglob("*") if p.is_file())
        return ExecutionResult(image=self.image, roi=roi, metrics=self.metrics,
                               graph_after=self.graph, artifacts=artifacts,
                               fallbacks=self.fallbacks)

    def _op(self, step: PlanStep) -> EditOp:
        return self.plan.ops[step.op_index]

    def _state_for(self, step: PlanStep) -> dict:
        return self.op_state.setdefault(step.op_index, {})

    def _step_segment(self, index: int, step: PlanStep, step_dir: Path) -> None:
        op = self._op(step)
        node = self.graph.node(op.target_id)
        state = self._state_for(step)
        try:
            candidate = segment(self.image, node.category, node.bbox,
                                self.backend)
            removal_mask = candidate.mask
            info = {"category": candidate.category, "score": candidate.score,
                    "bbox": list(candidate.bbox), "fallback": False}
        except SegmentationError as exc:
            removal_mask = mask_from_bbox(node.bbox, self.graph.width,
                                          self.graph.height)
            info = {"category": node.category, "score": 0.0,
                    "bbox": list(node.bbox), "fallback": True,
                    "reason": str(exc)}
            self.fallbacks.append(
                f"segment step {index}: bbox fallback for {op.target_id} "
                f"({exc})")
        save_mask(step_dir / "mask.png", removal_mask)
        (step_dir / "candidate.json").write_text(json.dumps(info, indent=2))
        state["mask"] = str(step_dir / "mask.png")
        state["old_bbox"] = list(node.bbox)

        if op.kind == "relationship_change":
            # the object's own pixels move; crop them before removal
            h, w = self.image.shape[:2]
            x0, y0, x1, y1 = bbox_to_pixels(node.bbox, w, h)
            crop = self.image[y0:y1, x0:x1]
            crop_mask = Mask.from_array(removal_mask.data[y0:y1, x0:x1])
            save_image(step_dir / "crop.png", crop)
            save_mask(step_dir / "crop_mask.png", crop_mask)
            state["crop"] = str(step_dir / "crop.png")
            state["crop_mask"] = str(step_dir / "crop_mask.png")

    def _step_remove_inpaint(self, index: int, step: PlanStep,
                             step_dir: Path) -> None:
        op = self._op(step)
        state = self._state_for(step)
        removal_mask = load_mask(state["mask"])

        def forward(it, loss):
            if self.progress:
                self.progress(index, "remove_inpaint",
                              {"iteration": it, "loss": loss})

        result = inpaint(self.image, removal_mask, self.config.inpaint,
                         progress=forward)
        self.image = result.image
        write_trace_csv(step_dir / "trace.csv", result.trace)
        save_mask(step_dir / "dilated_mask.png", result.dilated_mask)
        if result.guide is not None and result.guide.fallback_rows:
            self.fallbacks.append(
                f"guide step {index}: global fallback on rows "
                f"{result.guide.fallback_rows}")
        self.roi_bboxes.append(tuple(state["old_bbox"]))
        self.graph = apply_edit(self.graph, op) if op.kind == "remove" else self.graph

    def _step_predict_position(self, index: int, step: PlanStep,
                               step_dir: Path) -> None:
        op = self._op(step)
        state = self._state_for(step)
        # graph as it will look after this edit, for triplet extraction
        modified = apply_edit(self.graph, op)
        target_id = op.new_node.id if op.kind == "add" else op.target_id
        if op.kind == "add":
            size_bbox = op.new_node.bbox
        else:
            size_bbox = tuple(state["old_bbox"])
        if self.config.position_model:
            from .position import load_model, predict_for_edit

            model = load_model(self.config.position_model)
            bbox = predict_for_edit(model, modified, target_id)
            method = "model"
        else:
            prefer = op.edge_change[1] if op.kind == "relationship_change" \
                else None
            bbox = heuristic_position(modified, target_id, size_bbox,
                                      prefer_edge=prefer)
            method = "heuristic"
            self.fallbacks.append(
                f"predict step {index}: heuristic placement for {target_id}")
        state["paste_bbox"] = [float(v) for v in bbox]
        (step_dir / "predicted_bbox.json").write_text(json.dumps(
            {"bbox": state["paste_bbox"], "method": method}, indent=2))

    def _step_paste(self, index: int, step: PlanStep, step_dir: Path) -> None:
        op = self._op(step)
        state = self._state_for(step)
        if op.kind == "relationship_change":
            crop = load_image(state["crop"])
            crop_mask = load_mask(state["crop_mask"])
            target_bbox = tuple(state["paste_bbox"])
        else:
            crop, crop_mask = object_crop_source(
                op, self.graph, self.image, self.config.query_library,
                backend=self.backend)
            save_image(step_dir / "crop.png", crop)
            save_mask(step_dir / "crop_mask.png", crop_mask)
            if op.kind == "add":
                target_bbox = tuple(state.get("paste_bbox",
                                              list(op.new_node.bbox)))
            else:  # replace pastes in place
                target_bbox = tuple(state["old_bbox"])
        self.image = paste_object(self.image, crop, crop_mask, target_bbox,
                                  erosion_radius=self.config.erosion_radius)
        state["pasted_bbox"] = [float(v) for v in target_bbox]
        (step_dir / "pasted_bbox.json").write_text(json.dumps(
            {"bbox": state["pasted_bbox"]}, indent=2))
        self.roi_bboxes.append(tuple(target_bbox))
        self.graph = self._fold_graph_after_paste(op, target_bbox)

    def _fold_graph_after_paste(self, op: EditOp, bbox: Bbox) -> SceneGraph:
        graph = apply_edit(self.graph, op)
        target_id = op.new_node.id if op.kind == "add" else op.target_id
        nodes = tuple(
            dc_replace(n, bbox=tuple(float(v) for v in bbox))
            if n.id == target_id else n
            for n in graph.nodes)
        return dc_replace(graph, nodes=nodes)

    def _step_final_inpaint(self, index: int, step: PlanStep,
                            step_dir: Path) -> None:
        # The removal fill already restored the background and the paste sits
        # on top, so nothing is left to synthesize: run with an all-known
        # mask, which returns the input verbatim and keeps the trace contract.
        mask = Mask.all_known(self.image.shape[1], self.image.shape[0])
        result = inpaint(self.image, mask, self.config.inpaint)
        self.image = result.image
        write_trace_csv(step_dir / "trace.csv", result.trace)

    def _step_measure(self, index: int, step: PlanStep, step_dir: Path) -> None:
        if not self.roi_bboxes:
            return
        union = self.roi_bboxes[0]
        for b in self.roi_bboxes[1:]:
            union = bbox_union(union, b)
        h, w = self.image.shape[:2]
        region = _expand_region_for_window(union, w, h)
        roi = RegionOfInterest(bbox=region,
                               derivation="union of removed and pasted bboxes")
        self.metrics = report(self.input_image, self.image, roi)
        self.metrics.save(self.job_dir / "metrics.json")


def execute(plan_: PipelinePlan, image: np.ndarray, graph: SceneGraph,
            config: PipelineConfig, job_dir: str | Path,
            resume: bool = False, progress=None) -> ExecutionResult:
    """Run the plan, persisting every intermediate under ``job_dir``.

    On a step failure all prior artifacts are retained and the raised
    PipelineError carries the step index. With ``resume=True`` completed
    steps are skipped based on the persisted state.
    """
    executor = _Executor(plan_, image, graph, config, job_dir,
                         progress=progress)
    return executor.run(resume=resume)


def load_ops_document(document: str | dict) -> list[EditOp]:
    """Parse an ops file: {"schema_version": 1, "ops": [EditOp...]}"""
    if isinstance(document, str):
        document = json.loads(document)
    if isinstance(document, list):
        return [parse_edit_op(o) for o in document]
    return [parse_edit_op(o) for o in document.get("ops", [])]
