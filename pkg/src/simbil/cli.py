"""Batch CLI exposing every pipeline stage.

Exit codes: 0 ok, 2 usage, 3 validation failure, 4 runtime failure.
Config precedence: CLI flag > config file > built-in default.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click

from . import __version__
from .errors import SimbilError, ValidationFailure

logger = logging.getLogger(__name__)

EXIT_VALIDATION = 3
EXIT_RUNTIME = 4

INPAINT_MODES = {"plain": "none", "guided": "global", "guided-rows": "row_wise"}


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def cli(verbose: bool) -> None:
    """Semantic image editing toolkit."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


@cli.command()
@click.option("--image", "image_path", required=True,
              type=click.Path(exists=True), help="Input image (PNG).")
@click.option("--graph", "graph_path", required=True,
              type=click.Path(exists=True), help="Scene graph JSON.")
@click.option("--ops", "ops_path", required=True,
              type=click.Path(exists=True), help="Edit ops JSON.")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Job directory for artifacts.")
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="Pipeline config JSON (inpaint knobs, backends, paths).")
def edit(image_path: str, graph_path: str, ops_path: str, out_dir: str,
         config_path: str | None) -> None:
    """Run the full pipeline for a batch of edits."""
    from .imageio import load_image
    from .pipeline import PipelineConfig, execute, load_ops_document, plan
    from .scenegraph import parse_scene_graph

    image = load_image(image_path)
    graph = parse_scene_graph(Path(graph_path).read_text())
    ops = load_ops_document(Path(ops_path).read_text())
    config = PipelineConfig.from_dict(
        json.loads(Path(config_path).read_text()) if config_path else {})
    job_plan = plan(graph, ops)
    result = execute(job_plan, image, graph, config, out_dir)
    click.echo(f"wrote {out_dir}/result.png "
               f"({len(result.artifacts)} artifacts)")
    if result.metrics is not None:
        click.echo(json.dumps(result.metrics.to_dict(), indent=2))


@cli.command()
@click.option("--image", "image_path", required=True,
              type=click.Path(exists=True))
@click.option("--mask", "mask_path", required=True,
              type=click.Path(exists=True),
              help="PNG mask: 255 = known, 0 = hole.")
@click.option("--mode", type=click.Choice(sorted(INPAINT_MODES)),
              default="guided", show_default=True)
@click.option("--iters", type=int, default=2000, show_default=True)
@click.option("--lambda", "lam", type=float, default=0.1, show_default=True)
@click.option("--dilate", type=int, default=None,
              help="Hole dilation radius in px (default scales with size).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--lr", type=float, default=0.01, show_default=True)
@click.option("--depth", type=int, default=5, show_default=True)
@click.option("--channels", type=int, default=64, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default="inpainted.png",
              show_default=True)
@click.option("--trace", "trace_path", type=click.Path(), default=None,
              help="Write the loss trace CSV here.")
def inpaint(image_path: str, mask_path: str, mode: str, iters: int,
            lam: float, dilate: int | None, seed: int, lr: float,
            depth: int, channels: int, out_path: str,
            trace_path: str | None) -> None:
    """Fill the masked hole of one image by internal learning."""
    from .imageio import load_image, load_mask, save_image
    from .inpaint import InpaintSpec, NetworkConfig
    from .inpaint import inpaint as run_inpaint
    from .inpaint import write_trace_csv

    spec = InpaintSpec(
        iterations=iters, lam=lam, dilation_radius=dilate,
        guide_mode=INPAINT_MODES[mode],
        network=NetworkConfig(depth=depth, channels=channels),
        noise_seed=seed, learning_rate=lr)
    result = run_inpaint(load_image(image_path), load_mask(mask_path), spec)
    save_image(out_path, result.image)
    if trace_path:
        write_trace_csv(trace_path, result.trace)
    final = result.trace[-1][3] if result.trace else 0.0
    click.echo(f"wrote {out_path} ({len(result.trace)} iterations, "
               f"final loss {final:.6g}, {result.elapsed:.1f}s)")


@cli.command("train-position")
@click.option("--dataset", "dataset_path", required=True,
              type=click.Path(exists=True), help="JSONL training examples.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--epochs", type=int, default=50, show_default=True)
@click.option("--batch", type=int, default=64, show_default=True)
@click.option("--lr", type=float, default=1e-3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--clevr-mode", is_flag=True,
              help="Drop category embeddings (spatial predicates only).")
def train_position(dataset_path: str, out_path: str, epochs: int, batch: int,
                   lr: float, seed: int, clevr_mode: bool) -> None:
    """Train the relational position model on an extracted dataset."""
    from .position import (
        PositionConfig,
        TrainOptions,
        build_position_model,
        load_dataset,
        save_model,
        train,
    )

    examples = load_dataset(dataset_path)
    if not examples:
        raise ValidationFailure(f"dataset {dataset_path} is empty")
    categories = sorted({c for ex in examples for t in ex.triplets
                         for c in (t.subject_category, t.object_category)})
    predicates = sorted({t.predicate for ex in examples for t in ex.triplets})
    config = PositionConfig(use_category_embeddings=not clevr_mode)
    model = build_position_model(config, categories, predicates, seed=seed)
    curve = train(model, examples,
                  TrainOptions(epochs=epochs, batch_size=batch,
                               learning_rate=lr, seed=seed))
    save_model(out_path, model)
    click.echo(f"wrote {out_path} (final epoch loss "
               f"{curve[-1]:.6g})" if curve else f"wrote {out_path}")


@cli.command("eval-position")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True))
@click.option("--dataset", "dataset_path", required=True,
              type=click.Path(exists=True))
@click.option("--resolution", type=int, default=256, show_default=True)
def eval_position(model_path: str, dataset_path: str, resolution: int) -> None:
    """Corner MAE in pixels plus relation-satisfaction rate."""
    from .position import (
        evaluate,
        load_dataset,
        load_model,
        relation_satisfaction_rate,
    )

    model = load_model(model_path)
    examples = load_dataset(dataset_path)
    stats = evaluate(model, examples, resolution=resolution)
    stats["relation_satisfaction"] = relation_satisfaction_rate(model, examples)
    click.echo(json.dumps(stats, indent=2))


@cli.command()
@click.option("--before", "before_path", required=True,
              type=click.Path(exists=True))
@click.option("--after", "after_path", required=True,
              type=click.Path(exists=True))
@click.option("--reference", "reference_path", type=click.Path(exists=True))
@click.option("--roi", "roi_text", default=None,
              help="x0,y0,x1,y1 normalized region of interest.")
def metrics(before_path: str, after_path: str, reference_path: str | None,
            roi_text: str | None) -> None:
    """MAE and SSIM, whole image and region-restricted."""
    from .imageio import load_image
    from .metrics import RegionOfInterest, mae, report, ssim

    before = load_image(before_path)
    after = load_image(after_path)
    reference = load_image(reference_path) if reference_path else None
    if roi_text is not None:
        parts = [float(v) for v in roi_text.split(",")]
        if len(parts) != 4:
            raise ValidationFailure(f"--roi needs 4 numbers, got {roi_text!r}")
        roi = RegionOfInterest(bbox=tuple(parts), derivation="cli")
        out = report(before, after, roi, reference=reference).to_dict()
    else:
        target = reference if reference is not None else before
        out = {"mae_all": mae(target, after), "ssim_all": ssim(target, after)}
    click.echo(json.dumps(out, indent=2))


@cli.command("gen-synthetic")
@click.option("--scenes", type=int, default=10, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--size", type=int, default=64, show_default=True)
def gen_synthetic(scenes: int, out_dir: str, seed: int, size: int) -> None:
    """Generate test scenes with graphs, masks, and a query library."""
    from .synthetic import generate_scenes, write_query_library, write_scene

    out = Path(out_dir)
    for i, scene in enumerate(generate_scenes(scenes, seed=seed, size=size)):
        write_scene(out / "scenes" / f"scene_{i:03d}", scene)
    write_query_library(out / "library", seed=seed + 1, size=size)
    click.echo(f"wrote {scenes} scenes and a query library under {out_dir}")


def resolve_serve_settings(port: int | None, data_dir: str | None,
                           workers: int | None,
                           env: dict | None = None) -> tuple[int, str, int]:
    """Flag > SIMBIL_* env var > built-in default."""
    env = os.environ if env is None else env
    port = port if port is not None else int(env.get("SIMBIL_PORT", 8008))
    data_dir = data_dir or env.get("SIMBIL_DATA", "./simbil-data")
    workers = workers if workers is not None \
        else int(env.get("SIMBIL_WORKERS", 1))
    return port, data_dir, workers


@cli.command()
@click.option("--port", type=int, default=None,
              help="Default: $SIMBIL_PORT or 8008.")
@click.option("--data", "data_dir", type=click.Path(), default=None,
              help="Store root. Default: $SIMBIL_DATA or ./simbil-data.")
@click.option("--workers", type=int, default=None,
              help="Concurrent jobs. Default: $SIMBIL_WORKERS or 1.")
@click.option("--frontend", "frontend_dir", type=click.Path(), default=None,
              help="Static UI build to serve under /ui.")
def serve(port: int | None, data_dir: str | None, workers: int | None,
          frontend_dir: str | None) -> None:
    """Run the HTTP job service."""
    import uvicorn

    from .service import create_app

    port, data_dir, workers = resolve_serve_settings(port, data_dir, workers)
    if frontend_dir is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        frontend_dir = str(bundled) if bundled.exists() else None
    logger.info("serving on port %d, data=%s, workers=%d, frontend=%s",
                port, data_dir, workers, frontend_dir)
    app = create_app(data_dir, workers=workers, frontend_dir=frontend_dir)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="info")


def main() -> None:
    try:
        cli(standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        sys.exit(2)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.Abort:
        sys.exit(130)
    except ValidationFailure as exc:
        click.echo(f"validation error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except SimbilError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)


if __name__ == "__main__":
    main()
