"""Slide dataset plumbing.

Covers the label vocabulary, an on-disk run-length container for
overlapping class masks, loaders for externally annotated datasets, and
a deterministic synthetic slide generator small enough for tests.

Dataset root layout:
    images/<split>/<id>.png
    masks/<split>/<id>.mlm            (run-length container), or
    masks/<split>/<id>/<class>.png    (one binary plane per class)
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, DatasetError, MaskFormatError

COARSE_KINDS = ("text", "figure", "equation", "table", "other")

SPLITS = ("train", "val", "test")

# 25 region categories: slide text roles, figure sub-types, math, tables.
DEFAULT_LABELS = (
    ("title", "text"),
    ("heading", "text"),
    ("paragraph", "text"),
    ("list", "text"),
    ("enumeration", "text"),
    ("caption", "text"),
    ("footnote", "text"),
    ("page_number", "text"),
    ("url", "text"),
    ("email", "text"),
    ("date", "text"),
    ("author", "text"),
    ("affiliation", "text"),
    ("code", "text"),
    ("quote", "text"),
    ("natural_image", "figure"),
    ("diagram", "figure"),
    ("chart", "figure"),
    ("map", "figure"),
    ("logo", "figure"),
    ("legend", "figure"),
    ("screenshot", "figure"),
    ("equation", "equation"),
    ("table", "table"),
    ("decoration", "other"),
)


@dataclass(frozen=True)
class LabelSet:
    names: tuple
    coarse_map: dict = field(compare=False)

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(set(self.names)) != len(self.names):
            raise ConfigError("label names must be unique")
        if not self.names:
            raise ConfigError("label set must not be empty")
        missing = [n for n in self.names if n not in self.coarse_map]
        if missing:
            raise ConfigError(f"coarse_map missing entries for {missing}")
        bad = {n: c for n, c in self.coarse_map.items() if c not in COARSE_KINDS}
        if bad:
            raise ConfigError(f"coarse_map values must be in {COARSE_KINDS}, got {bad}")

    def __len__(self):
        return len(self.names)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown class '{name}'") from None

    def coarse(self, name):
        return self.coarse_map[name]


def default_label_set():
    return LabelSet(
        names=tuple(n for n, _ in DEFAULT_LABELS),
        coarse_map={n: c for n, c in DEFAULT_LABELS},
    )


def save_label_set(path, label_set: LabelSet):
    lines = ["# class_name coarse_kind"]
    lines += [f"{n} {label_set.coarse_map[n]}" for n in label_set.names]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_label_set(path) -> LabelSet:
    names, coarse = [], {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConfigError(f"{path}:{line_no}: expected '<name> <coarse>', got {raw!r}")
        names.append(parts[0])
        coarse[parts[0]] = parts[1]
    return LabelSet(names=tuple(names), coarse_map=coarse)


@dataclass
class SlideSample:
    image: np.ndarray
    mask: np.ndarray
    id: str

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise DatasetError(f"sample {self.id}: image must be [H,W,3]")
        if self.mask.ndim != 3:
            raise DatasetError(f"sample {self.id}: mask must be [K,H,W]")
        if self.image.shape[:2] != self.mask.shape[1:]:
            raise DatasetError(
                f"sample {self.id}: image {self.image.shape[:2]} and "
                f"mask {self.mask.shape[1:]} dimensions differ"
            )


MASK_MAGIC = b"MLM\x01"


def encode_mask(mask) -> bytes:
    """Pack a binary [K,H,W] mask as per-class run lengths, row-major."""
    mask = np.asarray(mask).astype(bool)
    if mask.ndim != 3:
        raise MaskFormatError(f"mask must be [K,H,W], got shape {mask.shape}")
    k, h, w = mask.shape
    out = [MASK_MAGIC, struct.pack("<III", k, h, w)]
    for plane in mask.reshape(k, -1):
        padded = np.diff(np.concatenate(([0], plane.view(np.int8), [0])))
        starts = np.flatnonzero(padded == 1)
        ends = np.flatnonzero(padded == -1)
        out.append(struct.pack("<I", len(starts)))
        if len(starts):
            runs = np.empty(2 * len(starts), dtype="<u4")
            runs[0::2] = starts
            runs[1::2] = ends - starts
            out.append(runs.tobytes())
    return b"".join(out)


def decode_mask(data: bytes) -> np.ndarray:
    def need(offset, count, what):
        if offset + count > len(data):
            raise MaskFormatError(
                f"truncated mask stream, needed {count} bytes for {what}", offset=offset
            )

    if data[:3] != MASK_MAGIC[:3]:
        raise MaskFormatError("bad magic, not a mask container", offset=0)
    if data[3:4] != MASK_MAGIC[3:]:
        raise MaskFormatError(
            f"unsupported mask format version {data[3] if len(data) > 3 else '?'}", offset=3
        )
    offset = 4
    need(offset, 12, "header")
    k, h, w = struct.unpack_from("<III", data, offset)
    offset += 12
    if k == 0 or h == 0 or w == 0:
        raise MaskFormatError(f"degenerate dimensions K={k} H={h} W={w}", offset=4)
    plane_size = h * w
    mask = np.zeros((k, plane_size), dtype=bool)
    for c in range(k):
        need(offset, 4, f"run count of class {c}")
        (n_runs,) = struct.unpack_from("<I", data, offset)
        offset += 4
        need(offset, 8 * n_runs, f"runs of class {c}")
        runs = np.frombuffer(data, dtype="<u4", count=2 * n_runs, offset=offset)
        offset += 8 * n_runs
        prev_end = 0
        for i in range(n_runs):
            start, length = int(runs[2 * i]), int(runs[2 * i + 1])
            run_offset = offset - 8 * (n_runs - i)
            if length == 0:
                raise MaskFormatError("zero-length run", offset=run_offset)
            if start < prev_end:
                raise MaskFormatError(
                    f"runs overlap or are unsorted (start {start} < previous end {prev_end})",
                    offset=run_offset,
                )
            if start + length > plane_size:
                raise MaskFormatError(
                    f"run [{start},{start + length}) exceeds plane size {plane_size}",
                    offset=run_offset,
                )
            mask[c, start:start + length] = True
            prev_end = start + length
    if offset != len(data):
        raise MaskFormatError(f"{len(data) - offset} trailing bytes", offset=offset)
    return mask.reshape(k, h, w)


# Synthetic slides carry their text as pixel-encoded bytes so the stub
# recognizers can read real content back out of an image crop: a marker
# pixel (7, 181, n) followed by n pixels (7, 182, byte).
_MARK_R = 7
_MARK_HEAD = 181
_MARK_BYTE = 182


def embed_text(image, y, x, text):
    data = text.encode("ascii")
    if len(data) > 255:
        raise ConfigError("embedded text longer than 255 bytes")
    if x + 1 + len(data) > image.shape[1]:
        raise ConfigError("embedded text does not fit in the row")
    image[y, x] = (_MARK_R, _MARK_HEAD, len(data))
    for i, b in enumerate(data):
        image[y, x + 1 + i] = (_MARK_R, _MARK_BYTE, b)


def find_embedded_texts(crop) -> list:
    """Scan a crop row-major for embedded strings, deduplicated in order."""
    crop = np.asarray(crop)
    found = []
    seen = set()
    heads = np.argwhere(
        (crop[:, :, 0] == _MARK_R) & (crop[:, :, 1] == _MARK_HEAD)
    )
    for y, x in heads:
        n = int(crop[y, x, 2])
        if x + 1 + n > crop.shape[1]:
            continue
        run = crop[y, x + 1:x + 1 + n]
        if not ((run[:, 0] == _MARK_R) & (run[:, 1] == _MARK_BYTE)).all():
            continue
        text = bytes(run[:, 2].tolist()).decode("ascii", errors="replace")
        if text not in seen:
            seen.add(text)
            found.append(text)
    return found


TOY_CLASS_ORDER = ("title", "paragraph", "diagram", "equation", "table")


def toy_label_set(num_classes) -> LabelSet:
    if num_classes < 2:
        raise ConfigError("toy datasets need at least 2 classes")
    defaults = default_label_set()
    names = list(TOY_CLASS_ORDER[:num_classes])
    for name in defaults.names:
        if len(names) == num_classes:
            break
        if name not in names:
            names.append(name)
    if len(names) < num_classes:
        raise ConfigError(f"cannot build a {num_classes}-class toy label set")
    return LabelSet(names=tuple(names), coarse_map={n: defaults.coarse_map[n] for n in names})


def _fill(image, mask, plane, y0, y1, x0, x1, color):
    image[y0:y1, x0:x1] = color
    mask[plane, y0:y1, x0:x1] = True


def _embed_rows(image, y0, y1, x0, text):
    h = y1 - y0
    for frac in (1, 2, 3):
        embed_text(image, y0 + max(1, h * frac // 4), x0 + 2, text)


def make_toy_dataset(n_slides, num_classes, seed, canvas=(96, 128)):
    """Render n deterministic synthetic slides with exact masks.

    Layout: a title band in the top quarter, one or two paragraph
    blocks, and with enough classes a diagram holding an overlapping
    inner paragraph, an equation strip, and a 2x2 ruled table.
    """
    if n_slides < 1:
        raise ConfigError("n_slides must be at least 1")
    h, w = canvas
    if h < 48 or w < 64:
        raise ConfigError(f"canvas {canvas} too small, need at least 48x64")
    label_set = toy_label_set(num_classes)
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n_slides):
        image = np.full((h, w, 3), 245, dtype=np.uint8)
        mask = np.zeros((num_classes, h, w), dtype=bool)

        def jit(frac, limit):
            return int(frac * limit) + int(rng.integers(-limit // 50 - 1, limit // 50 + 2))

        # title stays inside the top quarter by construction
        ty0, ty1 = max(1, jit(0.04, h)), int(0.16 * h)
        tx0, tx1 = jit(0.05, w), jit(0.70, w)
        _fill(image, mask, 0, ty0, ty1, tx0, tx1, (60, 60, 150))
        _embed_rows(image, ty0, ty1, tx0, f"slide {i} overview")

        py0, py1 = jit(0.30, h), jit(0.48, h)
        px0, px1 = jit(0.06, w), jit(0.50, w)
        _fill(image, mask, 1, py0, py1, px0, px1, (120, 120, 120))
        _embed_rows(image, py0, py1, px0, f"main point {i}")

        if rng.random() < 0.5 or num_classes < 4:
            qy0, qy1 = jit(0.56, h), jit(0.72, h)
            qx0, qx1 = jit(0.06, w), jit(0.45, w)
            _fill(image, mask, 1, qy0, qy1, qx0, qx1, (120, 120, 120))
            _embed_rows(image, qy0, qy1, qx0, f"detail note {i}")

        if num_classes >= 3:
            fy0, fy1 = jit(0.30, h), jit(0.70, h)
            fx0, fx1 = jit(0.58, w), jit(0.94, w)
            _fill(image, mask, 2, fy0, fy1, fx0, fx1, (200, 220, 240))
            image[fy0, fx0:fx1] = (0, 0, 0)
            image[fy1 - 1, fx0:fx1] = (0, 0, 0)
            image[fy0:fy1, fx0] = (0, 0, 0)
            image[fy0:fy1, fx1 - 1] = (0, 0, 0)
            # paragraph nested inside the figure: overlapping labels
            iy0, iy1 = fy0 + (fy1 - fy0) * 2 // 5, fy0 + (fy1 - fy0) * 3 // 5
            ix0, ix1 = fx0 + 3, fx1 - 3
            _fill(image, mask, 1, iy0, iy1, ix0, ix1, (120, 120, 120))
            mask[2, iy0:iy1, ix0:ix1] = True
            _embed_rows(image, iy0, iy1, ix0, f"figure label {i}")

        if num_classes >= 4:
            ey0, ey1 = jit(0.78, h), jit(0.88, h)
            ex0, ex1 = jit(0.08, w), jit(0.52, w)
            _fill(image, mask, 3, ey0, ey1, ex0, ex1, (225, 205, 170))
            _embed_rows(image, ey0, ey1, ex0, f"y = {i} x + 2")

        if num_classes >= 5:
            gy0, gy1 = jit(0.74, h), jit(0.95, h)
            gx0, gx1 = jit(0.58, w), jit(0.95, w)
            _fill(image, mask, 4, gy0, gy1, gx0, gx1, (250, 250, 250))
            gym, gxm = (gy0 + gy1) // 2, (gx0 + gx1) // 2
            for yy in (gy0, gym, gy1 - 1):
                image[yy, gx0:gx1] = (0, 0, 0)
            for xx in (gx0, gxm, gx1 - 1):
                image[gy0:gy1, xx] = (0, 0, 0)
            cells = [
                (gy0, gx0, "k"), (gy0, gxm, "v1"),
                (gym, gx0, "n"), (gym, gxm, "v2"),
            ]
            for cy, cx, text in cells:
                embed_text(image, cy + (gym - gy0) // 2, cx + 2, f"{text} {i}")

        samples.append(SlideSample(image=image, mask=mask, id=f"toy-{seed}-{i:03d}"))
    return samples


def save_dataset(samples, root, split, container=True):
    """Write samples under the documented root layout."""
    root = Path(root)
    image_dir = root / "images" / split
    mask_dir = root / "masks" / split
    image_dir.mkdir(parents=True, exist_ok=True)
    mask_dir.mkdir(parents=True, exist_ok=True)
    for sample in samples:
        Image.fromarray(sample.image).save(image_dir / f"{sample.id}.png")
        if container:
            (mask_dir / f"{sample.id}.mlm").write_bytes(encode_mask(sample.mask))
        else:
            raise ConfigError("per-class PNG writing requires a label set; use save_dataset_planes")


def save_dataset_planes(samples, root, split, label_set: LabelSet):
    root = Path(root)
    image_dir = root / "images" / split
    image_dir.mkdir(parents=True, exist_ok=True)
    for sample in samples:
        Image.fromarray(sample.image).save(image_dir / f"{sample.id}.png")
        plane_dir = root / "masks" / split / sample.id
        plane_dir.mkdir(parents=True, exist_ok=True)
        for k, name in enumerate(label_set.names):
            if sample.mask[k].any():
                plane = (sample.mask[k] * 255).astype(np.uint8)
                Image.fromarray(plane).save(plane_dir / f"{name}.png")


class SlideDataset:
    """Lazy sequence of SlideSample read from a dataset root."""

    def __init__(self, root, split, label_set: LabelSet):
        if split not in SPLITS:
            raise ConfigError(f"split must be one of {SPLITS}, got '{split}'")
        self.root = Path(root)
        self.split = split
        self.label_set = label_set
        image_dir = self.root / "images" / split
        if not image_dir.is_dir():
            raise DatasetError(f"no such split directory: {image_dir}")
        self.ids = sorted(p.stem for p in image_dir.glob("*.png"))
        if not self.ids:
            raise DatasetError(f"empty dataset: no images under {image_dir}")
        missing = [i for i in self.ids if self._mask_path(i) is None]
        if missing:
            raise DatasetError(
                f"{len(missing)} image(s) lack masks in split '{split}': "
                + ", ".join(missing[:10])
            )

    def _mask_path(self, sample_id):
        plane_dir = self.root / "masks" / self.split / sample_id
        if plane_dir.is_dir():
            return plane_dir
        container = self.root / "masks" / self.split / f"{sample_id}.mlm"
        if container.is_file():
            return container
        return None

    def __len__(self):
        return len(self.ids)

    def __getitem__(self, index) -> SlideSample:
        sample_id = self.ids[index]
        image = np.asarray(
            Image.open(self.root / "images" / self.split / f"{sample_id}.png").convert("RGB")
        )
        mask = self._load_mask(sample_id, image.shape[:2])
        return SlideSample(image=image, mask=mask, id=sample_id)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def _load_mask(self, sample_id, hw):
        path = self._mask_path(sample_id)
        if path is None:
            raise DatasetError(f"missing mask for sample '{sample_id}'")
        k = len(self.label_set)
        if path.is_dir():
            mask = np.zeros((k, *hw), dtype=bool)
            for plane_file in sorted(path.glob("*.png")):
                name = plane_file.stem
                if name not in self.label_set.names:
                    raise DatasetError(
                        f"sample '{sample_id}' has a mask plane for unknown class '{name}'"
                    )
                plane = np.asarray(Image.open(plane_file).convert("L")) > 0
                if plane.shape != hw:
                    raise DatasetError(
                        f"sample '{sample_id}' plane '{name}' is {plane.shape}, image is {hw}"
                    )
                mask[self.label_set.index(name)] = plane
            return mask
        try:
            mask = decode_mask(path.read_bytes())
        except MaskFormatError as exc:
            raise DatasetError(f"sample '{sample_id}': {exc}") from exc
        if mask.shape[0] != k:
            raise DatasetError(
                f"sample '{sample_id}' mask has {mask.shape[0]} classes, "
                f"label set has {k}"
            )
        if mask.shape[1:] != hw:
            raise DatasetError(
                f"sample '{sample_id}' mask is {mask.shape[1:]}, image is {hw}"
            )
        return mask


def load_dataset(root, split, label_set: LabelSet) -> SlideDataset:
    return SlideDataset(root, split, label_set)


def split_sizes(root) -> dict:
    """Count images per split without reading any file contents."""
    sizes = {}
    for split in SPLITS:
        image_dir = Path(root) / "images" / split
        if image_dir.is_dir():
            sizes[split] = sum(1 for _ in image_dir.glob("*.png"))
    return sizes
