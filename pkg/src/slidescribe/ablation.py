"""Ablation harness over attention configuration axes.

Trains one small model per grid cell and tabulates validation metrics,
mirroring the experiment axes: where the position grid is injected
(A/B/C/D/none), the sinusoid frequency, how the height/width blend
weight is set (fixed 0, 1, 0.5, or learned), and a coordinate-channel
baseline that replaces the sinusoidal grid entirely.
"""

import csv
import json
from dataclasses import asdict, dataclass

from .errors import SlidescribeError
from .network import toy_network_config
from .training import TrainConfig, evaluate, train

BETA_MODES = ("fixed0", "fixed1", "fixed0.5", "learned")

_BETA_INIT = {"fixed0": 0.0, "fixed1": 1.0, "fixed0.5": 0.5, "learned": 0.0}


@dataclass(frozen=True)
class AblationCell:
    name: str
    injection_point: str = "B"
    frequency: float = 1.0
    beta_mode: str = "learned"
    coordconv: bool = False

    def __post_init__(self):
        if self.beta_mode not in BETA_MODES:
            raise ValueError(f"beta_mode must be one of {BETA_MODES}, got '{self.beta_mode}'")


def default_grid():
    """The full study: injection rows, frequency rows, beta rows, baseline."""
    cells = [
        AblationCell("no-encoding", injection_point="none"),
        AblationCell("inject-A", injection_point="A"),
        AblationCell("inject-B", injection_point="B"),
        AblationCell("inject-C", injection_point="C"),
        AblationCell("inject-D", injection_point="D"),
        AblationCell("inject-B-freq-2", injection_point="B", frequency=2.0),
        AblationCell("inject-B-freq-0.5", injection_point="B", frequency=0.5),
        AblationCell("coordconv", injection_point="none", coordconv=True),
        AblationCell("beta-0", beta_mode="fixed0"),
        AblationCell("beta-1", beta_mode="fixed1"),
        AblationCell("beta-0.5", beta_mode="fixed0.5"),
        AblationCell("beta-learned", beta_mode="learned"),
    ]
    return cells


def _network_config_for(cell: AblationCell, num_classes, network_kwargs):
    return toy_network_config(
        num_classes,
        injection_point=cell.injection_point,
        frequency=cell.frequency,
        beta_init=_BETA_INIT[cell.beta_mode],
        beta_trainable=cell.beta_mode == "learned",
        coordconv=cell.coordconv,
        **network_kwargs,
    )


def run_ablation(
    grid,
    train_dataset,
    train_config: TrainConfig,
    num_classes,
    *,
    val_dataset=None,
    network_kwargs=None,
    csv_path=None,
    json_path=None,
    progress=None,
):
    """Train and score every cell; failures mark their row, not the run.

    Returns a list of row dicts with the cell's axes plus miou, pa, and
    status ("ok" or "failed" with an error message).
    """
    grid = list(grid)
    if not grid:
        raise ValueError("ablation grid must not be empty")
    network_kwargs = dict(network_kwargs or {})
    rows = []
    for cell in grid:
        row = asdict(cell)
        try:
            config = _network_config_for(cell, num_classes, network_kwargs)
            network, history = train(train_dataset, config, train_config)
            report = evaluate(
                network,
                val_dataset if val_dataset is not None else train_dataset,
                train_config.threshold,
            )
            row.update(
                status="ok",
                miou=report.mean_iou,
                pa=report.pixel_accuracy,
                final_loss=history[-1]["loss"] if history else None,
            )
        except (SlidescribeError, ValueError) as exc:
            row.update(status="failed", miou=None, pa=None, final_loss=None,
                       error=str(exc))
        rows.append(row)
        if progress:
            progress(row)

    if csv_path:
        fields = ["name", "injection_point", "frequency", "beta_mode", "coordconv",
                  "status", "miou", "pa", "final_loss", "error"]
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: row.get(k, "") for k in fields})
    if json_path:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump({"rows": rows}, fh, indent=2, sort_keys=True)
    return rows
