"""Sinusoidal location-encoding grids.

A location encoding is a [C, H, W] grid built from two 1-D sinusoidal axis
encodings (one over rows, one over columns) blended by a scalar weight.
Even channels carry sin, odd channels cos, with per-pair wavelengths
spread geometrically by ``base``.  All functions are pure; jitter takes an
explicit seed so determinism is the caller's contract.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import torch
import torch.nn.functional as F

from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class EncodingConfig:
    """Parameters of the encoding grid.

    ``grid_height``/``grid_width`` are the feature-map dimensions the grid
    is built for (input size divided by ``reduction_ratio``).
    """

    channels: int
    grid_height: int
    grid_width: int
    reduction_ratio: int = 16
    frequency: float = 1.0
    jitter_amplitude: float = 0.05
    base: float = 100.0

    def __post_init__(self):
        if self.channels < 1 or self.grid_height < 1 or self.grid_width < 1:
            raise ConfigError(
                f"channels/grid dims must be >= 1, got "
                f"{self.channels}x{self.grid_height}x{self.grid_width}"
            )
        if self.reduction_ratio < 1:
            raise ConfigError(f"reduction_ratio must be >= 1, got {self.reduction_ratio}")
        if self.frequency <= 0:
            raise ConfigError(f"frequency must be > 0, got {self.frequency}")
        if self.jitter_amplitude < 0:
            raise ConfigError(f"jitter_amplitude must be >= 0, got {self.jitter_amplitude}")
        if self.base <= 1:
            raise ConfigError(f"base must be > 1, got {self.base}")


@dataclass(frozen=True)
class LocationEncoding:
    """A blended [C, H, W] grid plus the blend weight that produced it."""

    values: torch.Tensor
    beta: torch.Tensor | float

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.values.shape)


def make_axis_encoding(
    axis_length: int,
    channels: int,
    base: float = 100.0,
    frequency: float = 1.0,
    dtype: torch.dtype = torch.float32,
) -> torch.Tensor:
    """Build the 1-D sinusoidal encoding for one axis.

    Entry (2i, p) is sin(frequency * p / base^(2i/channels)) and entry
    (2i+1, p) the matching cos.  An unpaired last channel (odd channel
    count) uses the sin branch.  Returns a [channels, axis_length] grid
    with every entry in [-1, 1].
    """
    if axis_length < 1 or channels < 1:
        raise ConfigError(
            f"axis_length and channels must be >= 1, got {axis_length}, {channels}"
        )
    if base <= 1:
        raise ConfigError(f"base must be > 1, got {base}")
    if frequency <= 0:
        raise ConfigError(f"frequency must be > 0, got {frequency}")

    positions = torch.arange(axis_length, dtype=dtype)
    chans = torch.arange(channels)
    # wavelength scale of a sin/cos pair is keyed by its even channel index
    pair_even = (chans - chans % 2).to(dtype)
    scale = torch.pow(torch.tensor(float(base), dtype=dtype), pair_even / channels)
    angle = frequency * positions[None, :] / scale[:, None]
    is_sin = (chans % 2 == 0)[:, None]
    return torch.where(is_sin, torch.sin(angle), torch.cos(angle))


def blend(
    pe_h: torch.Tensor,
    pe_v: torch.Tensor,
    beta: torch.Tensor | float,
) -> LocationEncoding:
    """Blend the horizontal and vertical axis encodings into one grid.

    ``pe_h`` [C, W] is broadcast over rows, ``pe_v`` [C, H] over columns;
    the result is beta * pe_h + (1 - beta) * pe_v, affine in beta.
    """
    if pe_h.ndim != 2 or pe_v.ndim != 2:
        raise ShapeError(f"axis encodings must be 2-D, got {pe_h.ndim}-D and {pe_v.ndim}-D")
    if pe_h.shape[0] != pe_v.shape[0]:
        raise ShapeError(
            f"channel mismatch between axis encodings: {pe_h.shape[0]} vs {pe_v.shape[0]}"
        )
    if not torch.is_tensor(beta):
        beta = torch.tensor(float(beta), dtype=pe_h.dtype)
    values = beta * pe_h[:, None, :] + (1.0 - beta) * pe_v[:, :, None]
    return LocationEncoding(values=values, beta=beta)


def apply_jitter(enc: LocationEncoding, amplitude: float, seed: int) -> LocationEncoding:
    """Perturb every entry by uniform noise in [-amplitude, amplitude]."""
    if amplitude < 0:
        raise ConfigError(f"jitter amplitude must be >= 0, got {amplitude}")
    if amplitude == 0:
        return enc
    gen = torch.Generator()
    gen.manual_seed(int(seed))
    noise = torch.rand(enc.values.shape, generator=gen, dtype=enc.values.dtype)
    noise = (noise * 2.0 - 1.0) * amplitude
    return replace(enc, values=enc.values + noise)


def resize_to(enc: LocationEncoding, target_height: int, target_width: int) -> LocationEncoding:
    """Bilinearly resize the grid to the target spatial dimensions.

    A same-size resize returns the input grid untouched (bit-identical).
    """
    if target_height < 1 or target_width < 1:
        raise ConfigError(f"target dims must be >= 1, got {target_height}x{target_width}")
    _, h, w = enc.values.shape
    if (h, w) == (target_height, target_width):
        return enc
    values = F.interpolate(
        enc.values[None],
        size=(target_height, target_width),
        mode="bilinear",
        align_corners=False,
    )[0]
    return replace(enc, values=values)


def grid_encoding(
    config: EncodingConfig,
    beta: torch.Tensor | float = 0.0,
    dtype: torch.dtype = torch.float32,
) -> LocationEncoding:
    """Convenience: axis encodings for ``config``, blended with ``beta``."""
    pe_h = make_axis_encoding(
        config.grid_width, config.channels, base=config.base,
        frequency=config.frequency, dtype=dtype,
    )
    pe_v = make_axis_encoding(
        config.grid_height, config.channels, base=config.base,
        frequency=config.frequency, dtype=dtype,
    )
    return blend(pe_h, pe_v, beta)
