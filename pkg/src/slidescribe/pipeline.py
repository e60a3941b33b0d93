"""End-to-end glue: image bytes to a validated slide document."""

import io

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .document import build_document
from .errors import SlidescribeError
from .narration import reading_order
from .regions import default_adapters, recognize_all, regions_from_mask


def decode_image_bytes(data: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as img:
            return np.array(img.convert("RGB"))
    except (UnidentifiedImageError, OSError) as exc:
        raise SlidescribeError(f"cannot decode image: {exc}") from exc


def segment_image(image, network, threshold=0.5):
    """Run the network on one [H,W,3] image; returns (mask, probs)."""
    array = np.ascontiguousarray(image)
    if not array.flags.writeable:
        array = array.copy()
    tensor = torch.from_numpy(array).permute(2, 0, 1).float() / 255.0
    network.eval()
    with torch.no_grad():
        logits, _ = network(tensor)
        probs = torch.sigmoid(logits)
    mask = (probs >= threshold).numpy()
    return mask, probs.numpy()


def process_image(
    image,
    network,
    label_set,
    *,
    image_ref="capture",
    threshold=0.5,
    min_region_area=None,
    adapters=None,
):
    """Segment, extract, recognize, and assemble one slide document."""
    image = np.asarray(image)
    mask, probs = segment_image(image, network, threshold)
    regions = regions_from_mask(mask, label_set, min_region_area, probs=probs)
    recognized = recognize_all(image, regions, adapters or default_adapters())
    order = reading_order(regions)
    return build_document(
        image_ref=image_ref,
        width=image.shape[1],
        height=image.shape[0],
        recognized=recognized,
        reading_order=order,
    )
