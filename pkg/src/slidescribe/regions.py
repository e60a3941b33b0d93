"""Discrete logical regions from multi-label masks, plus recognizer routing.

Each class plane is split into 4-connected components; components above
a minimum area become Region records with a tight bounding box and a
confidence score. Regions are routed by coarse kind to a recognizer
adapter (OCR, figure classifier, equation reader, table recognizer).
The shipped adapters are deterministic stubs that read the pixel-embedded
text the synthetic slide generator writes, so the whole pipeline runs
without external engines.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .data import LabelSet, find_embedded_texts
from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class Region:
    id: int
    class_name: str
    coarse: str
    bbox: tuple  # (x, y, w, h)
    pixel_count: int
    confidence: float


# coarse class -> adapter kind; plain "other" content still reads as text
COARSE_TO_KIND = {
    "text": "ocr",
    "figure": "figure",
    "equation": "equation",
    "table": "table",
    "other": "ocr",
}

# cross-shaped structuring element: 4-connectivity
_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def default_min_region_area(height, width):
    return max(1, round(0.001 * height * width))


def regions_from_mask(mask, label_set: LabelSet, min_region_area=None, probs=None):
    """Extract per-class connected components as Region records.

    Ordering is deterministic: class index first, then the component's
    raster-scan discovery order. Overlapping classes produce overlapping
    regions. Confidence is the mean of probs over the component's pixels
    when probability maps are supplied, else 1.0.
    """
    mask = np.asarray(mask).astype(bool)
    if mask.ndim != 3:
        raise ShapeError(f"mask must be [K,H,W], got {mask.shape}")
    if mask.shape[0] != len(label_set):
        raise ShapeError(
            f"mask has {mask.shape[0]} planes, label set has {len(label_set)}"
        )
    if probs is not None:
        probs = np.asarray(probs)
        if probs.shape != mask.shape:
            raise ShapeError(f"probs shape {probs.shape} != mask shape {mask.shape}")
    _, height, width = mask.shape
    if min_region_area is None:
        min_region_area = default_min_region_area(height, width)

    regions = []
    next_id = 0
    for k, name in enumerate(label_set.names):
        labeled, count = ndimage.label(mask[k], structure=_FOUR_CONNECTED)
        if not count:
            continue
        slices = ndimage.find_objects(labeled)
        for component, bounds in enumerate(slices, start=1):
            component_mask = labeled[bounds] == component
            area = int(component_mask.sum())
            if area < min_region_area:
                continue
            ys, xs = bounds
            if probs is not None:
                confidence = float(probs[k][bounds][component_mask].mean())
            else:
                confidence = 1.0
            regions.append(
                Region(
                    id=next_id,
                    class_name=name,
                    coarse=label_set.coarse(name),
                    bbox=(xs.start, ys.start, xs.stop - xs.start, ys.stop - ys.start),
                    pixel_count=area,
                    confidence=confidence,
                )
            )
            next_id += 1
    return regions


def regions_to_mask(regions, shape, label_set: LabelSet):
    """Rasterize region bounding boxes back into a [K,H,W] mask."""
    k = len(label_set)
    mask = np.zeros((k, *shape), dtype=bool)
    for region in regions:
        x, y, w, h = region.bbox
        mask[label_set.index(region.class_name), y:y + h, x:x + w] = True
    return mask


class StubOcr:
    """Reads pixel-embedded strings out of the crop; joins them by line."""

    kind = "ocr"

    def recognize(self, crop, region):
        return {"text": "\n".join(find_embedded_texts(crop))}


class StubFigureClassifier:
    kind = "figure"

    def recognize(self, crop, region):
        return {"figure_class": "diagram"}


class StubEquationReader:
    kind = "equation"

    def recognize(self, crop, region):
        return {"equation_description": " ".join(find_embedded_texts(crop))}


class StubTableRecognizer:
    """Infers the ruling grid from full-length dark lines in the crop."""

    kind = "table"

    def recognize(self, crop, region):
        crop = np.asarray(crop)
        dark = (crop < 40).all(axis=2)
        h_lines = _count_line_runs(dark.mean(axis=1) > 0.9)
        v_lines = _count_line_runs(dark.mean(axis=0) > 0.9)
        rows = max(1, h_lines - 1)
        cols = max(1, v_lines - 1)
        cell_texts = find_embedded_texts(crop)
        return {
            "table": {
                "grid": [rows, cols],
                "cells": rows * cols,
                "cell_texts": cell_texts,
            }
        }


def _count_line_runs(is_line):
    padded = np.diff(np.concatenate(([0], is_line.astype(np.int8), [0])))
    return int((padded == 1).sum())


def default_adapters():
    return {
        "ocr": StubOcr(),
        "figure": StubFigureClassifier(),
        "equation": StubEquationReader(),
        "table": StubTableRecognizer(),
    }


def recognize_all(image, regions, adapters):
    """Run each region's crop through the adapter for its coarse kind.

    Adapter availability is checked up front; a failing adapter yields an
    error payload for its region and the rest still get processed.
    """
    image = np.asarray(image)
    needed = {COARSE_TO_KIND[r.coarse] for r in regions}
    missing = sorted(needed - set(adapters))
    if missing:
        raise ConfigError(f"no adapter registered for kind(s): {', '.join(missing)}")
    results = []
    for region in regions:
        x, y, w, h = region.bbox
        crop = image[y:y + h, x:x + w]
        adapter = adapters[COARSE_TO_KIND[region.coarse]]
        try:
            payload = adapter.recognize(crop, region)
        except Exception as exc:
            payload = {"error": f"{type(exc).__name__}: {exc}"}
        results.append((region, payload))
    return results
