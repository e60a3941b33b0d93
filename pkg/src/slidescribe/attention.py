"""Spatial self-attention with an additive location-encoding signal.

The module reduces its input to four projections A, B, C, D, adds the
location grid L to one configurable projection, builds a row-stochastic
pairwise affinity map S over the N = H*W positions, and mixes the
attended values back with the residual:

    S[j, i] = softmax_i( (B_i + L_i) . C_j )
    E_j     = alpha * sum_i S[j, i] * D_i  +  (1 - alpha) * A_j

``alpha`` and ``beta`` (the L blend weight) start at 0, so a freshly
constructed module is an exact identity on A.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from . import location_encoding as locenc
from .errors import ConfigError, NumericError, ShapeError

INJECTION_POINTS = ("A", "B", "C", "D", "none")


@dataclass(frozen=True)
class AttentionConfig:
    in_channels: int
    proj_channels: int
    injection_point: str = "B"
    alpha_init: float = 0.0
    beta_init: float = 0.0
    beta_trainable: bool = True
    coordconv: bool = False

    def __post_init__(self):
        if self.in_channels < 1 or self.proj_channels < 1:
            raise ConfigError(
                f"channel counts must be >= 1, got in={self.in_channels} "
                f"proj={self.proj_channels}"
            )
        if self.injection_point not in INJECTION_POINTS:
            raise ConfigError(
                f"injection_point must be one of {INJECTION_POINTS}, "
                f"got {self.injection_point!r}"
            )
        if self.coordconv and self.injection_point != "none":
            raise ConfigError(
                "coordconv replaces location-encoding injection; "
                "set injection_point='none'"
            )


def attention_map(
    b: torch.Tensor,
    c_feat: torch.Tensor,
    enc_values: torch.Tensor | None,
    injection_point: str = "B",
) -> torch.Tensor:
    """Pairwise position affinities, normalized over the source index.

    Inputs are [C, H, W] grids.  The location grid is added to B or C
    here when so configured; for injection at A or D the addition has
    already happened upstream and ``enc_values`` is ignored.  Returns
    S with S[j, i] = weight of source position i for target position j;
    every row sums to 1.
    """
    if b.shape != c_feat.shape:
        raise ShapeError(f"B and C shapes differ: {tuple(b.shape)} vs {tuple(c_feat.shape)}")
    if enc_values is not None:
        if enc_values.shape != b.shape:
            raise ShapeError(
                f"location grid shape {tuple(enc_values.shape)} does not match "
                f"features {tuple(b.shape)}"
            )
        if injection_point == "B":
            b = b + enc_values
        elif injection_point == "C":
            c_feat = c_feat + enc_values

    for name, t in (("B", b), ("C", c_feat)):
        bad = ~torch.isfinite(t)
        if bad.any():
            pos = bad.nonzero()[0].tolist()
            raise NumericError(f"non-finite value in {name} at position {pos}")

    c, h, w = b.shape
    n = h * w
    b_flat = b.reshape(c, n)
    c_flat = c_feat.reshape(c, n)
    logits = c_flat.transpose(0, 1) @ b_flat  # [N, N], entry (j, i)
    logits = logits - logits.max(dim=1, keepdim=True).values
    expo = torch.exp(logits)
    return expo / expo.sum(dim=1, keepdim=True)


def mix(
    a: torch.Tensor,
    d: torch.Tensor,
    s: torch.Tensor,
    alpha: torch.Tensor | float,
) -> torch.Tensor:
    """Blend attended values into the residual: alpha*(D @ S^T) + (1-alpha)*A."""
    if a.shape != d.shape:
        raise ShapeError(f"A and D shapes differ: {tuple(a.shape)} vs {tuple(d.shape)}")
    c, h, w = a.shape
    n = h * w
    if s.shape != (n, n):
        raise ShapeError(f"attention map must be [{n}, {n}], got {tuple(s.shape)}")
    attended = (d.reshape(c, n) @ s.transpose(0, 1)).reshape(c, h, w)
    return alpha * attended + (1.0 - alpha) * a


class LocationEncodedAttention(nn.Module):
    """Attention head with learnable alpha/beta and baked-in axis encodings.

    The axis encodings are registered as buffers at the configured grid
    size and resized to the incoming feature dimensions on the fly, so
    one module serves any input resolution.
    """

    def __init__(self, config: AttentionConfig, encoding: locenc.EncodingConfig):
        super().__init__()
        if encoding.channels != config.proj_channels:
            raise ConfigError(
                f"encoding channels ({encoding.channels}) must equal "
                f"proj_channels ({config.proj_channels})"
            )
        self.config = config
        self.encoding = encoding
        in_ch = config.in_channels + (2 if config.coordconv else 0)
        cp = config.proj_channels
        self.conv_a = nn.Conv2d(in_ch, cp, kernel_size=1)
        self.conv_b = nn.Conv2d(cp, cp, kernel_size=1)
        self.conv_c = nn.Conv2d(cp, cp, kernel_size=1)
        self.conv_d = nn.Conv2d(cp, cp, kernel_size=1)
        self.alpha = nn.Parameter(torch.tensor(float(config.alpha_init)))
        self.beta = nn.Parameter(
            torch.tensor(float(config.beta_init)), requires_grad=config.beta_trainable
        )
        self.register_buffer(
            "pe_h",
            locenc.make_axis_encoding(
                encoding.grid_width, cp, base=encoding.base, frequency=encoding.frequency
            ),
        )
        self.register_buffer(
            "pe_v",
            locenc.make_axis_encoding(
                encoding.grid_height, cp, base=encoding.base, frequency=encoding.frequency
            ),
        )

    def project(
        self, x: torch.Tensor, enc_values: torch.Tensor | None = None
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
        """Compute the A, B, C, D projections of one [C_in, H, W] input.

        Injection at A or D happens here, immediately after the named
        projection: an A-injection feeds B, C, D (and the residual) the
        location-shifted A.
        """
        expected = self.conv_a.in_channels
        if x.ndim != 3 or x.shape[0] != expected:
            raise ShapeError(
                f"expected input [C={expected}, H, W], got {tuple(x.shape)}"
            )
        inj = self.config.injection_point
        a = self.conv_a(x[None])[0]
        if inj == "A" and enc_values is not None:
            a = a + enc_values
        b = self.conv_b(a[None])[0]
        c_feat = self.conv_c(a[None])[0]
        d = self.conv_d(a[None])[0]
        if inj == "D" and enc_values is not None:
            d = d + enc_values
        return a, b, c_feat, d

    def location_grid(self, height: int, width: int) -> locenc.LocationEncoding:
        """Blend the buffered axis encodings and fit them to (height, width)."""
        enc = locenc.blend(self.pe_h, self.pe_v, self.beta)
        return locenc.resize_to(enc, height, width)

    def forward(
        self, x: torch.Tensor, enc: locenc.LocationEncoding | None = None
    ) -> torch.Tensor:
        """Run the full attend-and-mix pass on one [C_in, H, W] input.

        ``enc`` overrides the internally blended grid (tests use this);
        jitter is applied only in training mode.
        """
        if x.ndim != 3:
            raise ShapeError(f"expected a [C, H, W] input, got {tuple(x.shape)}")
        h, w = x.shape[1], x.shape[2]
        if self.config.coordconv:
            x = torch.cat([x, _coord_channels(h, w, x.dtype, x.device)], dim=0)

        inj = self.config.injection_point
        enc_values = None
        if inj != "none":
            if enc is None:
                enc = self.location_grid(h, w)
            elif enc.values.shape[0] != self.config.proj_channels:
                raise ShapeError(
                    f"encoding has {enc.values.shape[0]} channels, "
                    f"expected {self.config.proj_channels}"
                )
            else:
                enc = locenc.resize_to(enc, h, w)
            if self.training and self.encoding.jitter_amplitude > 0:
                seed = int(torch.randint(0, 2**31 - 1, (1,)).item())
                enc = locenc.apply_jitter(enc, self.encoding.jitter_amplitude, seed)
            enc_values = enc.values.to(dtype=x.dtype, device=x.device)

        a, b, c_feat, d = self.project(x, enc_values)
        s = attention_map(b, c_feat, enc_values, inj)
        return mix(a, d, s, self.alpha)


def _coord_channels(
    height: int, width: int, dtype: torch.dtype, device: torch.device
) -> torch.Tensor:
    """Two channels of y/x coordinates normalized to [-1, 1]."""
    ys = torch.linspace(-1.0, 1.0, height, dtype=dtype, device=device)
    xs = torch.linspace(-1.0, 1.0, width, dtype=dtype, device=device)
    if height == 1:
        ys = torch.zeros(1, dtype=dtype, device=device)
    if width == 1:
        xs = torch.zeros(1, dtype=dtype, device=device)
    yy = ys[:, None].expand(height, width)
    xx = xs[None, :].expand(height, width)
    return torch.stack([yy, xx], dim=0)
