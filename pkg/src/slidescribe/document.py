"""The JSON slide document: assembly, validation, canonical serialization.

A slide document carries the image reference, its dimensions, every
recognized region (id, class, coarse kind, bounding box, confidence,
recognizer payload), and a reading order over region ids. Serialization
is canonical: sorted keys, compact separators, confidences rounded to
six decimals, so equal documents are byte-equal.
"""

import json
from importlib import resources

import jsonschema

from .errors import DocumentValidationError

DOCUMENT_VERSION = "1"

# the coarse kind each payload variant belongs to; "error" fits any kind
_PAYLOAD_KEY_FOR_COARSE = {
    "text": "text",
    "other": "text",
    "figure": "figure_class",
    "equation": "equation_description",
    "table": "table",
}


def document_schema() -> dict:
    ref = resources.files("slidescribe") / "schema" / "slide_document_v1.json"
    return json.loads(ref.read_text(encoding="utf-8"))


def validate_document(doc):
    """Schema plus structural checks; errors name the offending field."""
    try:
        jsonschema.validate(doc, document_schema())
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path) or "(document root)"
        raise DocumentValidationError(f"{path}: {exc.message}") from exc

    ids = [r["id"] for r in doc["regions"]]
    if len(set(ids)) != len(ids):
        raise DocumentValidationError("regions: duplicate region ids")
    if sorted(doc["reading_order"]) != sorted(ids):
        raise DocumentValidationError(
            "reading_order: not a permutation of region ids "
            f"({doc['reading_order']} vs ids {ids})"
        )
    for region in doc["regions"]:
        x, y, w, h = (region["bbox"][k] for k in ("x", "y", "w", "h"))
        if x + w > doc["width"] or y + h > doc["height"]:
            raise DocumentValidationError(
                f"regions.{region['id']}.bbox: box ({x},{y},{w},{h}) exceeds "
                f"the {doc['width']}x{doc['height']} image"
            )
        expected_key = _PAYLOAD_KEY_FOR_COARSE[region["coarse"]]
        payload_keys = set(region["payload"])
        if payload_keys != {expected_key} and payload_keys != {"error"}:
            raise DocumentValidationError(
                f"regions.{region['id']}.payload: coarse '{region['coarse']}' "
                f"requires the '{expected_key}' variant, got {sorted(payload_keys)}"
            )
    return doc


def build_document(image_ref, width, height, recognized, reading_order):
    """Assemble and validate a document from (Region, payload) pairs."""
    regions = []
    for region, payload in recognized:
        x, y, w, h = region.bbox
        regions.append(
            {
                "id": region.id,
                "class": region.class_name,
                "coarse": region.coarse,
                "bbox": {"x": int(x), "y": int(y), "w": int(w), "h": int(h)},
                "confidence": round(float(region.confidence), 6),
                "payload": payload,
            }
        )
    doc = {
        "image_ref": image_ref,
        "width": int(width),
        "height": int(height),
        "regions": regions,
        "reading_order": [int(i) for i in reading_order],
        "version": DOCUMENT_VERSION,
    }
    return validate_document(doc)


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def parse_document(text) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentValidationError(f"not valid JSON: {exc}") from exc
    return validate_document(doc)
