"""Training and evaluation loop for the segmentation network.

SGD with momentum, a polynomial learning-rate decay, per-group weight
decay (backbone vs head, none on scalars and norm parameters), paired
image/mask augmentation, and a binary cross entropy loss summed over
the main and auxiliary heads.
"""

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image, ImageFilter

from .errors import ConfigError, ShapeError, TrainingDiverged
from .metrics import compute_metrics, merge_reports
from .network import NetworkConfig, SegmentationNetwork, predict_mask


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 0.02
    momentum: float = 0.9
    wd_backbone: float = 5e-4
    wd_head: float = 1e-4
    max_iteration: int = 1000
    poly_power: float = 0.9
    crop: tuple = (540, 720)
    batch: int = 2
    aux_weight: float = 0.4
    scale_range: tuple = (0.5, 2.0)
    threshold: float = 0.5
    seed: int = 0
    enable_scale: bool = True
    enable_blur: bool = True
    enable_color: bool = True
    validate_every_fraction: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "crop", tuple(self.crop))
        object.__setattr__(self, "scale_range", tuple(self.scale_range))
        if self.lr0 <= 0:
            raise ConfigError("lr0 must be positive")
        if self.poly_power <= 0:
            raise ConfigError("poly_power must be positive")
        if self.max_iteration < 0:
            raise ConfigError("max_iteration must be non-negative")
        if self.batch < 1:
            raise ConfigError("batch must be at least 1")
        if not self.scale_range[0] < self.scale_range[1]:
            raise ConfigError(f"scale_range min must be below max, got {self.scale_range}")
        if self.aux_weight < 0:
            raise ConfigError("aux_weight must be non-negative")
        if not 0 < self.threshold < 1:
            raise ConfigError("threshold must lie in (0,1)")
        if len(self.crop) != 2 or any(c < 1 for c in self.crop):
            raise ConfigError(f"crop must be two positive sizes, got {self.crop}")


def poly_lr(iteration, config: TrainConfig) -> float:
    """lr0 scaled by (1 - iteration/max_iteration)^poly_power."""
    if iteration < 0:
        raise ConfigError("iteration must be non-negative")
    if iteration >= config.max_iteration:
        if iteration > config.max_iteration:
            warnings.warn(
                f"iteration {iteration} beyond max_iteration {config.max_iteration}; "
                "learning rate clamped to 0",
                stacklevel=2,
            )
        return 0.0
    return config.lr0 * (1 - iteration / config.max_iteration) ** config.poly_power


def bce_multilabel_loss(logits, target, aux_logits=None, aux_weight=0.0):
    """Mean per-class binary cross entropy, plus a weighted auxiliary term."""
    if logits.shape != target.shape:
        raise ShapeError(f"logits {tuple(logits.shape)} vs target {tuple(target.shape)}")
    target = target.detach()
    if not ((target == 0) | (target == 1)).all():
        raise ValueError("target mask must be binary")
    target = target.to(logits.dtype)
    loss = F.binary_cross_entropy_with_logits(logits, target)
    if aux_logits is not None and aux_weight:
        if aux_logits.shape != target.shape:
            raise ShapeError(
                f"aux_logits {tuple(aux_logits.shape)} vs target {tuple(target.shape)}"
            )
        loss = loss + aux_weight * F.binary_cross_entropy_with_logits(aux_logits, target)
    return loss


def _resize_pair(image, mask, size):
    h, w = size
    if (h, w) == image.shape[:2]:
        return image, mask
    pil = Image.fromarray(image).resize((w, h), Image.BILINEAR)
    planes = [
        np.asarray(Image.fromarray(plane.astype(np.uint8) * 255).resize((w, h), Image.NEAREST)) > 0
        for plane in mask
    ]
    return np.asarray(pil), np.stack(planes)


def _reflect_pad_pair(image, mask, min_h, min_w):
    h, w = image.shape[:2]
    ph, pw = max(0, min_h - h), max(0, min_w - w)
    if ph == 0 and pw == 0:
        return image, mask
    # reflect needs pad < dim; fall back to edge replication for tiny inputs
    mode = "reflect" if ph < h and pw < w else "edge"
    image = np.pad(image, ((0, ph), (0, pw), (0, 0)), mode=mode)
    mask = np.pad(mask, ((0, 0), (0, ph), (0, pw)), mode=mode)
    return image, mask


def augment(image, mask, config: TrainConfig, seed) -> tuple:
    """Jointly transform one image/mask pair to the training crop size.

    Geometric steps (scale, crop, padding) hit both rasters, the mask
    with nearest-neighbor resampling; photometric steps hit the image
    only. Deterministic for a given seed.
    """
    rng = np.random.default_rng(seed)
    image = np.asarray(image)
    mask = np.asarray(mask).astype(bool)

    if config.enable_scale:
        s = rng.uniform(*config.scale_range)
        new_h = max(1, round(image.shape[0] * s))
        new_w = max(1, round(image.shape[1] * s))
        image, mask = _resize_pair(image, mask, (new_h, new_w))

    if config.enable_blur and rng.random() < 0.5:
        radius = float(rng.uniform(0.3, 1.2))
        image = np.asarray(Image.fromarray(image).filter(ImageFilter.GaussianBlur(radius)))

    if config.enable_color:
        brightness = rng.uniform(0.85, 1.15)
        contrast = rng.uniform(0.85, 1.15)
        shifted = (image.astype(np.float32) - 128.0) * contrast + 128.0 * brightness
        image = np.clip(shifted, 0, 255).astype(np.uint8)

    crop_h, crop_w = config.crop
    image, mask = _reflect_pad_pair(image, mask, crop_h, crop_w)
    max_y = image.shape[0] - crop_h
    max_x = image.shape[1] - crop_w
    y0 = int(rng.integers(0, max_y + 1))
    x0 = int(rng.integers(0, max_x + 1))
    return (
        image[y0:y0 + crop_h, x0:x0 + crop_w],
        mask[:, y0:y0 + crop_h, x0:x0 + crop_w],
    )


def _to_tensor(image):
    array = np.ascontiguousarray(image)
    if not array.flags.writeable:
        array = array.copy()
    return torch.from_numpy(array).permute(2, 0, 1).float() / 255.0


def _param_groups(network: SegmentationNetwork, config: TrainConfig):
    backbone_ids = {id(p) for p in network.backbone.parameters()}
    backbone, head, no_decay = [], [], []
    for param in network.parameters():
        if param.dim() <= 1:
            no_decay.append(param)
        elif id(param) in backbone_ids:
            backbone.append(param)
        else:
            head.append(param)
    return [
        {"params": backbone, "weight_decay": config.wd_backbone},
        {"params": head, "weight_decay": config.wd_head},
        {"params": no_decay, "weight_decay": 0.0},
    ]


def evaluate(network, dataset, threshold=0.5, accuracy_mode="per-decision"):
    """Aggregate metrics of a network over every sample in a dataset."""
    was_training = network.training
    network.eval()
    reports = []
    with torch.no_grad():
        for sample in dataset:
            logits, _ = network(_to_tensor(sample.image))
            pred = predict_mask(logits, threshold).numpy()
            reports.append(compute_metrics(pred, sample.mask, accuracy_mode))
    if was_training:
        network.train()
    return merge_reports(reports)


def train(
    dataset,
    network_config: NetworkConfig,
    train_config: TrainConfig,
    *,
    val_dataset=None,
    history_path=None,
    progress=None,
):
    """Run the full optimization loop; returns (network, history).

    History is one record per iteration {iteration, loss, lr}, extended
    with {miou, pa} at each validation point (every tenth of the run and
    at the end). A non-finite loss aborts with diagnostics.
    """
    samples = list(dataset)
    if not samples:
        raise ConfigError("dataset is empty")
    if val_dataset is None:
        val_dataset = samples

    torch.manual_seed(train_config.seed)
    rng = np.random.default_rng(train_config.seed)
    network = SegmentationNetwork(network_config)
    if network_config.num_classes != samples[0].mask.shape[0]:
        raise ConfigError(
            f"network expects {network_config.num_classes} classes, "
            f"dataset masks have {samples[0].mask.shape[0]}"
        )
    optimizer = torch.optim.SGD(
        _param_groups(network, train_config),
        lr=train_config.lr0,
        momentum=train_config.momentum,
    )

    validate_every = max(1, math.ceil(train_config.max_iteration
                                      * train_config.validate_every_fraction))
    history = []
    sink = open(history_path, "w", encoding="utf-8") if history_path else None
    try:
        order = []
        network.train()
        for step in range(train_config.max_iteration):
            lr = poly_lr(step, train_config)
            for group in optimizer.param_groups:
                group["lr"] = lr

            batch_images, batch_masks = [], []
            for _ in range(train_config.batch):
                if not order:
                    order = list(rng.permutation(len(samples)))
                sample = samples[order.pop()]
                aug_seed = int(rng.integers(0, 2**31 - 1))
                image, mask = augment(sample.image, sample.mask, train_config, aug_seed)
                batch_images.append(_to_tensor(image))
                batch_masks.append(torch.from_numpy(mask))
            images = torch.stack(batch_images)
            masks = torch.stack(batch_masks)

            optimizer.zero_grad()
            logits, aux = network(images)
            loss = bce_multilabel_loss(logits, masks, aux, train_config.aux_weight)
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    "loss became non-finite",
                    diagnostics={
                        "iteration": step,
                        "loss": float(loss.item()),
                        "lr": lr,
                        "batch_ids": [s.id for s in samples],
                    },
                )
            loss.backward()
            optimizer.step()

            record = {"iteration": step, "loss": float(loss.item()), "lr": lr}
            is_last = step == train_config.max_iteration - 1
            if (step + 1) % validate_every == 0 or is_last:
                report = evaluate(network, val_dataset, train_config.threshold)
                record["miou"] = report.mean_iou
                record["pa"] = report.pixel_accuracy
            history.append(record)
            if sink:
                sink.write(json.dumps(record) + "\n")
            if progress:
                progress(record)
    finally:
        if sink:
            sink.close()
    network.eval()
    return network, history
