"""Reading order, tagged markup, and narration scripts for slide documents.

Reading order puts title-like regions first, then groups the rest into
horizontal bands (two regions share a band when their vertical extents
overlap by at least half the shorter one) read top to bottom, left to
right. A region containing another starts at or before it, so
containers are read before their contents; exact ties fall back to ids.
"""

import warnings
from dataclasses import dataclass
from xml.etree import ElementTree
from xml.sax.saxutils import escape

from .errors import SlidescribeError

TITLE_CLASSES = ("title", "heading")

MODES = ("interactive", "non_interactive")


@dataclass(frozen=True)
class Utterance:
    region_id: int
    label_preamble: str
    body: str


@dataclass(frozen=True)
class NarrationScript:
    utterances: tuple
    mode: str


@dataclass(frozen=True)
class AudioArtifact:
    container_format: str
    data: bytes


def _bbox_tuple(region):
    bbox = region["bbox"] if isinstance(region, dict) else region.bbox
    if isinstance(bbox, dict):
        return bbox["x"], bbox["y"], bbox["w"], bbox["h"]
    return tuple(bbox)


def _class_of(region):
    return region["class"] if isinstance(region, dict) else region.class_name


def _id_of(region):
    return region["id"] if isinstance(region, dict) else region.id


def reading_order(regions, title_classes=TITLE_CLASSES):
    """Deterministic narration permutation over region ids.

    Accepts Region records or document region dicts.
    """
    titles = [r for r in regions if _class_of(r) in title_classes]
    rest = [r for r in regions if _class_of(r) not in title_classes]

    def corner_key(region):
        x, y, _, _ = _bbox_tuple(region)
        return (y, x, _id_of(region))

    ordered = [_id_of(r) for r in sorted(titles, key=corner_key)]

    # union-find over band membership
    parent = list(range(len(rest)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(rest)):
        xi, yi, wi, hi = _bbox_tuple(rest[i])
        for j in range(i + 1, len(rest)):
            xj, yj, wj, hj = _bbox_tuple(rest[j])
            overlap = min(yi + hi, yj + hj) - max(yi, yj)
            if overlap >= 0.5 * min(hi, hj):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj

    bands = {}
    for i, region in enumerate(rest):
        bands.setdefault(find(i), []).append(region)

    def band_key(members):
        return min(_bbox_tuple(r)[1] for r in members), min(_id_of(r) for r in members)

    def within_band_key(region):
        x, y, _, _ = _bbox_tuple(region)
        return (x, y, _id_of(region))

    for members in sorted(bands.values(), key=band_key):
        ordered.extend(_id_of(r) for r in sorted(members, key=within_band_key))
    return ordered


def _region_body(region) -> str:
    payload = region["payload"]
    if "text" in payload:
        return payload["text"]
    if "figure_class" in payload:
        return payload["figure_class"]
    if "equation_description" in payload:
        return payload["equation_description"]
    if "table" in payload:
        return " | ".join(payload["table"]["cell_texts"])
    return f"(recognition error: {payload.get('error', 'unknown')})"


def to_markup(doc) -> str:
    """Tagged text: one <class>content</class> block per region, in reading order."""
    by_id = {r["id"]: r for r in doc["regions"]}
    lines = ["<slide>"]
    for order, region_id in enumerate(doc["reading_order"]):
        region = by_id[region_id]
        body = escape(_region_body(region))
        lines.append(f'  <{region["class"]} order="{order}">{body}</{region["class"]}>')
    lines.append("</slide>")
    return "\n".join(lines) + "\n"


def parse_markup(text):
    """Inverse of to_markup: [(class_name, content, order)] in document order."""
    try:
        root = ElementTree.fromstring(text)
    except ElementTree.ParseError as exc:
        raise SlidescribeError(f"malformed markup: {exc}") from exc
    if root.tag != "slide":
        raise SlidescribeError(f"expected a <slide> envelope, got <{root.tag}>")
    triples = []
    for child in root:
        if "order" not in child.attrib:
            raise SlidescribeError(f"<{child.tag}> block lacks an order attribute")
        triples.append((child.tag, child.text or "", int(child.attrib["order"])))
    return triples


def _pretty(class_name) -> str:
    return class_name.replace("_", " ").capitalize()


def _utterance_for(region) -> Utterance:
    payload = region["payload"]
    if "error" in payload:
        preamble = f"{_pretty(region['class'])}:"
        body = f"(recognition error: {payload['error']})"
    elif "table" in payload:
        rows, cols = payload["table"]["grid"]
        preamble = f"Table with {rows} rows and {cols} columns:"
        body = ", ".join(payload["table"]["cell_texts"])
    elif "figure_class" in payload:
        preamble = f"Figure, type {payload['figure_class']}:"
        body = payload.get("text", "")
    elif "equation_description" in payload:
        preamble = "Equation:"
        body = payload["equation_description"]
    else:
        preamble = f"{_pretty(region['class'])}:"
        body = payload["text"]
    return Utterance(region_id=region["id"], label_preamble=preamble, body=body)


def script_for(doc, mode, region_id=None) -> NarrationScript:
    """Narration utterances for the whole slide or a single region."""
    if mode not in MODES:
        raise SlidescribeError(f"mode must be one of {MODES}, got '{mode}'")
    by_id = {r["id"]: r for r in doc["regions"]}
    if mode == "interactive":
        if region_id is None:
            raise SlidescribeError("interactive mode needs a region_id")
        if region_id not in by_id:
            raise KeyError(f"region id {region_id} not in document")
        chosen = [by_id[region_id]]
    else:
        chosen = [by_id[i] for i in doc["reading_order"]]
    return NarrationScript(
        utterances=tuple(_utterance_for(r) for r in chosen), mode=mode
    )


def transcript(script: NarrationScript) -> str:
    lines = [
        f"{u.label_preamble} {u.body}".strip().replace("\n", " ")
        for u in script.utterances
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def synthesize(script: NarrationScript, tts_adapter=None):
    """Audio via the adapter when present, else a plain-text transcript.

    An adapter must expose container_format and speak(text) -> bytes.
    Adapter failure falls back to the transcript with a warning.
    """
    if tts_adapter is None:
        return transcript(script)
    try:
        chunks = [
            tts_adapter.speak(f"{u.label_preamble} {u.body}".strip())
            for u in script.utterances
        ]
        return AudioArtifact(
            container_format=tts_adapter.container_format, data=b"".join(chunks)
        )
    except Exception as exc:
        warnings.warn(f"speech adapter failed ({exc}); falling back to transcript",
                      stacklevel=2)
        return transcript(script)
