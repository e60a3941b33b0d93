"""Multi-label slide segmentation network.

A small strided backbone feeds two parallel branches, a dilated
multi-scale branch and a position-aware attention branch. Their
concatenated features are fused, refined together with an early
high-resolution tap, and decoded into one sigmoid score map per
region class, so a pixel may carry several labels at once.
"""

import dataclasses
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .attention import AttentionConfig, LocationEncodedAttention
from .errors import ConfigError, ShapeError
from .location_encoding import EncodingConfig

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class BackboneContract:
    """Names a feature extractor and the geometry the rest of the net assumes."""

    name: str
    output_stride: int = 16
    feature_channels: int = 64
    aux_tap: str = "stage3"

    def __post_init__(self):
        if self.output_stride not in (8, 16):
            raise ConfigError(f"output_stride must be 8 or 16, got {self.output_stride}")
        if self.feature_channels < 1:
            raise ConfigError("feature_channels must be positive")


@dataclass(frozen=True)
class NetworkConfig:
    backbone: BackboneContract
    num_classes: int
    attention: AttentionConfig
    encoding: EncodingConfig
    aspp_rates: tuple = (1, 2, 3)
    decoder_channels: int = 64
    low_level_skip: bool = True

    def __post_init__(self):
        object.__setattr__(self, "aspp_rates", tuple(self.aspp_rates))
        if self.num_classes < 1:
            raise ConfigError("num_classes must be at least 1")
        if not self.aspp_rates:
            raise ConfigError("aspp_rates must be non-empty")
        if len(set(self.aspp_rates)) != len(self.aspp_rates):
            raise ConfigError(f"aspp_rates must be distinct, got {self.aspp_rates}")
        if any(r < 1 for r in self.aspp_rates):
            raise ConfigError("aspp_rates must be positive")
        if self.decoder_channels < 1:
            raise ConfigError("decoder_channels must be positive")
        if self.encoding.channels != self.attention.proj_channels:
            raise ConfigError(
                "encoding channels must match attention proj_channels "
                f"({self.encoding.channels} != {self.attention.proj_channels})"
            )
        if self.attention.in_channels != self.backbone.feature_channels:
            raise ConfigError(
                "attention in_channels must match backbone feature_channels "
                f"({self.attention.in_channels} != {self.backbone.feature_channels})"
            )


def _group_norm(channels):
    return nn.GroupNorm(math.gcd(channels, 8), channels)


def _conv_block(cin, cout, stride=1, dilation=1):
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, stride=stride, padding=dilation, dilation=dilation),
        _group_norm(cout),
        nn.ReLU(inplace=True),
        nn.Conv2d(cout, cout, 3, padding=dilation, dilation=dilation),
        _group_norm(cout),
        nn.ReLU(inplace=True),
    )


class ToyBackbone(nn.Module):
    """Four strided stages; GroupNorm so batch size 2 trains stably.

    Taps: stage 2 output (stride 4) as the high-resolution skip, stage 3
    (stride 8) for the auxiliary head, stage 4 as the main features.
    """

    def __init__(self, feature_channels, output_stride=16):
        super().__init__()
        if feature_channels % 8:
            raise ConfigError(
                f"toy backbone needs feature_channels divisible by 8, got {feature_channels}"
            )
        widths = [feature_channels // 8, feature_channels // 4,
                  feature_channels // 2, feature_channels]
        self.stage1 = _conv_block(3, widths[0], stride=2)
        self.stage2 = _conv_block(widths[0], widths[1], stride=2)
        self.stage3 = _conv_block(widths[1], widths[2], stride=2)
        if output_stride == 16:
            self.stage4 = _conv_block(widths[2], widths[3], stride=2)
        else:
            self.stage4 = _conv_block(widths[2], widths[3], stride=1, dilation=2)
        self.out_channels = widths[3]
        self.aux_channels = widths[2]
        self.low_channels = widths[1]

    def forward(self, x):
        s1 = self.stage1(x)
        s2 = self.stage2(s1)
        s3 = self.stage3(s2)
        s4 = self.stage4(s3)
        return s4, s3, s2


BACKBONES = {
    "toy": lambda contract: ToyBackbone(contract.feature_channels, contract.output_stride),
}


def build_backbone(contract):
    try:
        builder = BACKBONES[contract.name]
    except KeyError:
        raise ConfigError(
            f"unknown backbone '{contract.name}' (registered: {sorted(BACKBONES)})"
        ) from None
    module = builder(contract)
    if module.out_channels != contract.feature_channels:
        raise ConfigError(
            f"backbone '{contract.name}' produces {module.out_channels} channels, "
            f"contract says {contract.feature_channels}"
        )
    return module


def _clamp_pad(x, pad_h, pad_w):
    # edge-replicating pad that tolerates pads wider than the input
    if pad_h == 0 and pad_w == 0:
        return x
    h, w = x.shape[-2], x.shape[-1]
    idx_h = torch.clamp(torch.arange(-pad_h, h + pad_h, device=x.device), 0, h - 1)
    idx_w = torch.clamp(torch.arange(-pad_w, w + pad_w, device=x.device), 0, w - 1)
    return x.index_select(-2, idx_h).index_select(-1, idx_w)


def _pad_bottom_right(x, multiple):
    h, w = x.shape[-2], x.shape[-1]
    ph, pw = (-h) % multiple, (-w) % multiple
    if ph == 0 and pw == 0:
        return x
    idx_h = torch.clamp(torch.arange(h + ph, device=x.device), 0, h - 1)
    idx_w = torch.clamp(torch.arange(w + pw, device=x.device), 0, w - 1)
    return x.index_select(-2, idx_h).index_select(-1, idx_w)


class Aspp(nn.Module):
    """Parallel dilated branches plus an optional global-pool branch.

    Branches use edge-replicating padding so a constant input stays
    constant across space. Rate 1 is a plain 1x1 projection.
    """

    def __init__(self, in_channels, out_channels, rates, global_branch=True):
        super().__init__()
        rates = tuple(rates)
        if not rates or len(set(rates)) != len(rates) or any(r < 1 for r in rates):
            raise ConfigError(f"rates must be distinct positive integers, got {rates}")
        self.rates = rates
        self.branches = nn.ModuleList(
            nn.Conv2d(in_channels, out_channels, 1 if r == 1 else 3, dilation=r)
            for r in rates
        )
        self.global_conv = nn.Conv2d(in_channels, out_channels, 1) if global_branch else None
        n_branches = len(rates) + (1 if global_branch else 0)
        self.project = nn.Conv2d(n_branches * out_channels, out_channels, 1)

    def forward(self, x):
        h, w = x.shape[-2], x.shape[-1]
        outs = []
        for rate, conv in zip(self.rates, self.branches):
            if conv.kernel_size[0] == 1:
                outs.append(F.relu(conv(x)))
                continue
            if rate >= min(h, w):
                warnings.warn(
                    f"dilation rate {rate} exceeds the {h}x{w} feature extent; "
                    "off-center taps clamp to the border",
                    stacklevel=2,
                )
            outs.append(F.relu(conv(_clamp_pad(x, rate, rate))))
        if self.global_conv is not None:
            pooled = F.relu(self.global_conv(x.mean(dim=(-2, -1), keepdim=True)))
            outs.append(pooled.expand(-1, -1, h, w))
        return self.project(torch.cat(outs, dim=1))


class SegmentationNetwork(nn.Module):
    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        self.backbone = build_backbone(config.backbone)
        self.attention = LocationEncodedAttention(config.attention, config.encoding)
        dec = config.decoder_channels
        self.aspp = Aspp(config.backbone.feature_channels, dec, config.aspp_rates)
        self.fuse = nn.Sequential(
            nn.Conv2d(dec + config.attention.proj_channels, dec, 1),
            _group_norm(dec),
            nn.ReLU(inplace=True),
        )
        if config.low_level_skip:
            skip = max(dec // 2, 8)
            self.low_proj = nn.Sequential(
                nn.Conv2d(self.backbone.low_channels, skip, 1),
                _group_norm(skip),
                nn.ReLU(inplace=True),
            )
            dec_in = dec + skip
        else:
            self.low_proj = None
            dec_in = dec
        self.decoder = nn.Sequential(
            nn.Conv2d(dec_in, dec, 3, padding=1),
            _group_norm(dec),
            nn.ReLU(inplace=True),
            nn.Conv2d(dec, dec, 3, padding=1),
            _group_norm(dec),
            nn.ReLU(inplace=True),
        )
        self.classifier = nn.Conv2d(dec, config.num_classes, 1)
        self.aux_head = nn.Sequential(
            nn.Conv2d(self.backbone.aux_channels, dec, 3, padding=1),
            _group_norm(dec),
            nn.ReLU(inplace=True),
            nn.Conv2d(dec, config.num_classes, 1),
        )

    def forward(self, image):
        """Score maps for one [3,H,W] image or a [N,3,H,W] batch.

        Returns (logits, aux_logits), both at full input resolution.
        """
        single = image.dim() == 3
        x = image[None] if single else image
        if x.dim() != 4 or x.shape[1] != 3:
            raise ShapeError(f"expected [3,H,W] or [N,3,H,W] image, got {tuple(image.shape)}")
        hi, wi = x.shape[-2], x.shape[-1]
        x = _pad_bottom_right(x, 16)

        high, aux_feat, low = self.backbone(x)
        attended = torch.stack([self.attention(f) for f in high])
        fused = self.fuse(torch.cat([self.aspp(high), attended], dim=1))
        if self.low_proj is not None:
            fused = F.interpolate(
                fused, size=low.shape[-2:], mode="bilinear", align_corners=False
            )
            fused = torch.cat([fused, self.low_proj(low)], dim=1)
        logits = self.classifier(self.decoder(fused))
        logits = F.interpolate(logits, size=x.shape[-2:], mode="bilinear", align_corners=False)
        logits = logits[..., :hi, :wi]

        aux = F.interpolate(
            self.aux_head(aux_feat), size=x.shape[-2:], mode="bilinear", align_corners=False
        )
        aux = aux[..., :hi, :wi]
        if single:
            return logits[0], aux[0]
        return logits, aux


def predict_mask(logits, threshold=0.5):
    """Threshold per-class sigmoid scores; ties at the threshold count as on."""
    if not 0 < threshold < 1:
        raise ConfigError(f"threshold must lie in (0,1), got {threshold}")
    return torch.sigmoid(logits) >= threshold


def config_to_dict(config: NetworkConfig) -> dict:
    return dataclasses.asdict(config)


def config_from_dict(data: dict) -> NetworkConfig:
    try:
        return NetworkConfig(
            backbone=BackboneContract(**data["backbone"]),
            num_classes=data["num_classes"],
            attention=AttentionConfig(**data["attention"]),
            encoding=EncodingConfig(**data["encoding"]),
            aspp_rates=tuple(data["aspp_rates"]),
            decoder_channels=data["decoder_channels"],
            low_level_skip=data["low_level_skip"],
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed network config: {exc}") from exc


def _jsonable(config: NetworkConfig) -> dict:
    return json.loads(json.dumps(config_to_dict(config)))


def save_checkpoint(path, network: SegmentationNetwork, labels=None, extra=None):
    """Write a self-describing parameter container.

    Holds a format version, the full network config, the label names the
    head was trained for, and every parameter and buffer by name.
    """
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "config": _jsonable(network.config),
        "labels": list(labels) if labels is not None else None,
        "extra": extra,
    }
    arrays = {
        f"param/{name}": tensor.detach().cpu().numpy()
        for name, tensor in network.state_dict().items()
    }
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path, expected_config: NetworkConfig | None = None):
    """Rebuild a network from a checkpoint file.

    Returns (network, meta). When expected_config is given, any field that
    differs from the stored config is a hard error, named in the message.
    """
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise ConfigError(f"not a readable checkpoint: {path} ({exc})") from exc
    with data:
        if "__meta__" not in data:
            raise ConfigError(f"not a checkpoint file (missing metadata): {path}")
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ConfigError(
                f"unsupported checkpoint format_version {meta.get('format_version')!r}, "
                f"expected {CHECKPOINT_VERSION}"
            )
        config = config_from_dict(meta["config"])
        if expected_config is not None:
            stored, wanted = meta["config"], _jsonable(expected_config)
            for key in sorted(set(stored) | set(wanted)):
                if stored.get(key) != wanted.get(key):
                    raise ConfigError(
                        f"checkpoint config mismatch at '{key}': "
                        f"stored {stored.get(key)!r}, expected {wanted.get(key)!r}"
                    )
        network = SegmentationNetwork(config)
        state = {}
        for key in data.files:
            if key.startswith("param/"):
                state[key[len("param/"):]] = torch.from_numpy(np.array(data[key]))
        try:
            network.load_state_dict(state, strict=True)
        except RuntimeError as exc:
            raise ConfigError(f"checkpoint parameters do not fit the config: {exc}") from exc
    network.eval()
    return network, meta


def toy_network_config(
    num_classes,
    *,
    width=64,
    proj_channels=32,
    decoder_channels=64,
    injection_point="B",
    frequency=1.0,
    beta_init=0.0,
    beta_trainable=True,
    coordconv=False,
    grid=(6, 8),
    jitter_amplitude=0.05,
    aspp_rates=(1, 2, 3),
):
    """Desk-scale configuration used by the synthetic-slide tests and CLI."""
    backbone = BackboneContract("toy", 16, width, "stage3")
    attention = AttentionConfig(
        in_channels=width,
        proj_channels=proj_channels,
        injection_point=injection_point,
        beta_init=beta_init,
        beta_trainable=beta_trainable,
        coordconv=coordconv,
    )
    encoding = EncodingConfig(
        channels=proj_channels,
        grid_height=grid[0],
        grid_width=grid[1],
        reduction_ratio=16,
        frequency=frequency,
        jitter_amplitude=jitter_amplitude,
    )
    return NetworkConfig(
        backbone=backbone,
        num_classes=num_classes,
        attention=attention,
        encoding=encoding,
        aspp_rates=aspp_rates,
        decoder_channels=decoder_channels,
    )
