"""Command-line entry points.

Every subcommand wraps exactly one library operation. Flags can also be
set through SLIDESCRIBE_<COMMAND>_<FLAG> environment variables, or from
a JSON config file ({"train": {"iters": 500}, ...}) passed as --config;
explicit flags override the config file, which overrides defaults.

Failures inside the pipeline exit 1 with a one-line JSON object on
stderr; bad flags exit 2 via the usual usage error path.
"""

import functools
import json
import sys
from pathlib import Path

import click

from . import data as dataio
from .ablation import default_grid, run_ablation
from .document import build_document, canonical_json, parse_document
from .errors import SlidescribeError
from .narration import reading_order, script_for, to_markup, transcript
from .network import load_checkpoint, save_checkpoint, toy_network_config
from .pipeline import decode_image_bytes, segment_image
from .regions import default_adapters, recognize_all, regions_from_mask
from .training import TrainConfig, evaluate, train

CONTEXT = {"auto_envvar_prefix": "SLIDESCRIBE", "help_option_names": ["-h", "--help"]}

INJECTION_CHOICES = ("A", "B", "C", "D", "none")


def pipeline_errors(fn):
    """Convert library errors into exit 1 with one JSON line on stderr."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (SlidescribeError, FileNotFoundError, KeyError) as exc:
            message = str(exc) if not isinstance(exc, KeyError) else exc.args[0]
            click.echo(
                json.dumps({"error": message, "kind": type(exc).__name__}),
                err=True,
            )
            sys.exit(1)

    return wrapper


def parse_size(value, flag):
    """Parse 'HxW' into an (int, int) pair."""
    parts = str(value).lower().split("x")
    if len(parts) != 2:
        raise click.BadParameter(f"{flag} must look like HxW, got '{value}'")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise click.BadParameter(f"{flag} must look like HxW, got '{value}'") from None


@click.group(context_settings=CONTEXT)
@click.option(
    "--config",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="JSON file of per-command flag defaults.",
)
@click.pass_context
def main(ctx, config):
    """Slide segmentation, recognition, and narration toolkit."""
    if config:
        with open(config, encoding="utf-8") as fh:
            ctx.default_map = json.load(fh)


@main.command()
@click.option("--n", default=8, show_default=True, help="Number of slides per split.")
@click.option("--classes", default=5, show_default=True, help="Class count (3 to 5).")
@click.option("--seed", default=0, show_default=True)
@click.option("--canvas", default="96x128", show_default=True, help="Slide size HxW.")
@click.option("--val-n", default=0, show_default=True, help="Extra validation slides.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@pipeline_errors
def toyset(n, classes, seed, canvas, val_n, out):
    """Generate a synthetic slide dataset under OUT."""
    size = parse_size(canvas, "--canvas")
    label_set = dataio.toy_label_set(classes)
    samples = dataio.make_toy_dataset(n, classes, seed, canvas=size)
    dataio.save_dataset(samples, out, "train")
    if val_n:
        val = dataio.make_toy_dataset(val_n, classes, seed + 1, canvas=size)
        dataio.save_dataset(val, out, "val")
    dataio.save_label_set(Path(out) / "labels.txt", label_set)
    click.echo(json.dumps({"out": str(out), "splits": dataio.split_sizes(out)}))


def load_labeled_split(root, split):
    labels_file = Path(root) / "labels.txt"
    if not labels_file.is_file():
        raise SlidescribeError(
            f"no label set at {labels_file}; expected a labels.txt in the dataset root"
        )
    label_set = dataio.load_label_set(labels_file)
    return dataio.load_dataset(root, split, label_set), label_set


@main.command(name="train")
@click.option("--data", "data_root", required=True, type=click.Path(file_okay=False))
@click.option("--iters", default=500, show_default=True)
@click.option("--lr0", default=0.02, show_default=True)
@click.option("--batch", default=2, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--aux-weight", default=0.4, show_default=True)
@click.option("--crop", default="auto", show_default=True,
              help="Training crop HxW, or 'auto' for the first image's size.")
@click.option("--augment/--no-augment", "enable_aug", default=False,
              show_default=True, help="Random scale, blur, and color jitter.")
@click.option("--injection-point", default="B", show_default=True,
              type=click.Choice(INJECTION_CHOICES))
@click.option("--frequency", default=1.0, show_default=True)
@click.option("--beta-init", default=0.0, show_default=True)
@click.option("--coordconv", is_flag=True, default=False)
@click.option("--width", default=64, show_default=True, help="Backbone width.")
@click.option("--out", "ckpt_out", required=True, type=click.Path(dir_okay=False))
@click.option("--history", "history_out", default=None, type=click.Path(dir_okay=False),
              help="Training history JSONL path (default: <out>.history.jsonl).")
@pipeline_errors
def train_cmd(data_root, iters, lr0, batch, seed, aux_weight, crop, enable_aug,
              injection_point, frequency, beta_init, coordconv, width,
              ckpt_out, history_out):
    """Train a segmentation network on a prepared dataset."""
    dataset, label_set = load_labeled_split(data_root, "train")
    samples = list(dataset)
    if crop == "auto":
        if not samples:
            raise SlidescribeError(f"no training images under {data_root}")
        crop_size = samples[0].image.shape[:2]
    else:
        crop_size = parse_size(crop, "--crop")
    sizes = dataio.split_sizes(data_root)
    val = dataio.load_dataset(data_root, "val", label_set) if sizes.get("val") else None
    network_config = toy_network_config(
        len(label_set),
        width=width,
        injection_point=injection_point,
        frequency=frequency,
        beta_init=beta_init,
        coordconv=coordconv,
    )
    train_config = TrainConfig(
        lr0=lr0,
        max_iteration=iters,
        batch=batch,
        seed=seed,
        aux_weight=aux_weight,
        crop=crop_size,
        enable_scale=enable_aug,
        enable_blur=enable_aug,
        enable_color=enable_aug,
    )
    if history_out is None:
        history_out = str(ckpt_out) + ".history.jsonl"
    network, history = train(
        samples, network_config, train_config,
        val_dataset=val, history_path=history_out,
    )
    save_checkpoint(
        ckpt_out, network,
        labels=label_set.names,
        extra={"coarse_map": dict(label_set.coarse_map)},
    )
    final = history[-1] if history else {}
    click.echo(json.dumps({
        "checkpoint": str(ckpt_out),
        "history": str(history_out),
        "iterations": iters,
        "final": final,
    }))


@main.command(name="eval")
@click.option("--data", "data_root", required=True, type=click.Path(file_okay=False))
@click.option("--split", default="val", show_default=True,
              type=click.Choice(dataio.SPLITS))
@click.option("--ckpt", required=True, type=click.Path(dir_okay=False))
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--accuracy-mode", default="per-decision", show_default=True,
              type=click.Choice(("per-decision", "any-label")))
@click.option("--out", default=None, type=click.Path(dir_okay=False))
@pipeline_errors
def eval_cmd(data_root, split, ckpt, threshold, accuracy_mode, out):
    """Report mIoU and pixel accuracy of a checkpoint on one split."""
    dataset, _ = load_labeled_split(data_root, split)
    network, _ = load_checkpoint(ckpt)
    report = evaluate(network, dataset, threshold=threshold,
                      accuracy_mode=accuracy_mode)
    payload = json.dumps(report.as_dict(), sort_keys=True)
    if out:
        Path(out).write_text(payload + "\n", encoding="utf-8")
    click.echo(payload)


@main.command()
@click.option("--data", "data_root", required=True, type=click.Path(file_okay=False))
@click.option("--iters", default=120, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--width", default=16, show_default=True)
@click.option("--cells", default=None,
              help="Comma-separated cell names (default: the full grid).")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@pipeline_errors
def ablate(data_root, iters, seed, width, cells, out):
    """Run the encoding ablation grid at toy scale."""
    dataset, label_set = load_labeled_split(data_root, "train")
    samples = list(dataset)
    if not samples:
        raise SlidescribeError(f"no training images under {data_root}")
    grid = default_grid()
    if cells:
        wanted = [c.strip() for c in cells.split(",") if c.strip()]
        by_name = {cell.name: cell for cell in grid}
        missing = [name for name in wanted if name not in by_name]
        if missing:
            raise SlidescribeError(f"unknown ablation cells: {missing}")
        grid = [by_name[name] for name in wanted]
    crop = samples[0].image.shape[:2]
    train_config = TrainConfig(
        max_iteration=iters, seed=seed, crop=crop, batch=2,
        enable_scale=False, enable_blur=False, enable_color=False,
    )
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = run_ablation(
        grid, samples, train_config, len(label_set),
        network_kwargs={"width": width},
        csv_path=out_dir / "ablation.csv",
        json_path=out_dir / "ablation.json",
    )
    click.echo(json.dumps({
        "out": str(out_dir),
        "cells": [row["name"] for row in rows],
    }))


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path(dir_okay=False))
@click.option("--ckpt", required=True, type=click.Path(dir_okay=False))
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Mask container output path.")
@pipeline_errors
def segment(image_path, ckpt, threshold, out):
    """Segment one image into a multi-label mask container."""
    network, _ = load_checkpoint(ckpt)
    image = decode_image_bytes(Path(image_path).read_bytes())
    mask, _ = segment_image(image, network, threshold=threshold)
    Path(out).write_bytes(dataio.encode_mask(mask))
    click.echo(json.dumps({
        "out": str(out),
        "classes": int(mask.shape[0]),
        "height": int(mask.shape[1]),
        "width": int(mask.shape[2]),
        "positive_pixels": int(mask.sum()),
    }))


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path(dir_okay=False))
@click.option("--mask", "mask_path", required=True, type=click.Path(dir_okay=False))
@click.option("--labels", "labels_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--min-area", default=None, type=int,
              help="Minimum region area in pixels (default: 0.1% of the image).")
@click.option("--out", default=None, type=click.Path(dir_okay=False),
              help="Document output path (default: stdout).")
@pipeline_errors
def extract(image_path, mask_path, labels_path, min_area, out):
    """Turn an image plus mask into a recognized slide document."""
    label_set = dataio.load_label_set(labels_path)
    image = decode_image_bytes(Path(image_path).read_bytes())
    mask = dataio.decode_mask(Path(mask_path).read_bytes())
    regions = regions_from_mask(mask, label_set, min_region_area=min_area)
    recognized = recognize_all(image, regions, default_adapters())
    order = reading_order([r for r, _ in recognized])
    doc = build_document(
        Path(image_path).name, image.shape[1], image.shape[0], recognized, order
    )
    payload = canonical_json(doc)
    if out:
        Path(out).write_text(payload + "\n", encoding="utf-8")
        click.echo(json.dumps({"out": str(out), "regions": len(doc["regions"])}))
    else:
        click.echo(payload)


@main.command()
@click.option("--doc", "doc_path", required=True, type=click.Path(dir_okay=False))
@click.option("--mode", default="read_all", show_default=True,
              type=click.Choice(("read_all", "non_interactive", "interactive")))
@click.option("--region", default=None, type=int,
              help="Region id (interactive mode only).")
@click.option("--format", "fmt", default="transcript", show_default=True,
              type=click.Choice(("transcript", "markup")))
@click.option("--out", default=None, type=click.Path(dir_okay=False))
@pipeline_errors
def narrate(doc_path, mode, region, fmt, out):
    """Print the narration transcript (or markup) for a document."""
    doc = parse_document(Path(doc_path).read_text(encoding="utf-8"))
    if fmt == "markup":
        text = to_markup(doc)
    else:
        if mode == "read_all":
            mode = "non_interactive"
        script = script_for(doc, mode, region_id=region)
        text = transcript(script)
    if out:
        Path(out).write_text(text, encoding="utf-8")
        click.echo(json.dumps({"out": str(out)}))
    else:
        click.echo(text, nl=False)


@main.command()
@click.option("--ckpt", required=True, type=click.Path(dir_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--cache-size", default=64, show_default=True)
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--camera-source", default=None, type=click.Path(dir_okay=False),
              help="Image file fetched when a capture request has no body.")
@click.option("--check", is_flag=True, default=False,
              help="Build the app, print its routes, and exit without serving.")
@pipeline_errors
def serve(ckpt, host, port, cache_size, threshold, camera_source, check):
    """Serve the capture pipeline over HTTP."""
    from .service import app_from_checkpoint

    app = app_from_checkpoint(
        ckpt,
        cache_size=cache_size,
        threshold=threshold,
        camera_source=camera_source,
    )
    routes = sorted(
        f"{','.join(sorted(r.methods))} {r.path}"
        for r in app.routes
        if getattr(r, "methods", None)
    )
    if check:
        click.echo(json.dumps({"checkpoint": str(ckpt), "routes": routes}))
        return
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
