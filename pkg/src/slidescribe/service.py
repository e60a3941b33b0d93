"""HTTP service around the capture pipeline.

Endpoints:
  POST /capture                      raw image bytes -> SlideDocument JSON
  GET  /slides/{id}                  cached document by slide id
  GET  /slides/{id}/audio            transcript (or adapter audio) for a slide
  GET  /healthz                      liveness probe

Slide ids are content-addressed (truncated SHA-256 of the uploaded
bytes), so identical captures share one cache entry and one body.
Inference runs behind a lock; everything else is safe to serve
concurrently. Documents are cached as canonical JSON strings and
returned byte-identical on every hit.
"""

import hashlib
import logging
import threading
import uuid
from collections import OrderedDict
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse

from .data import LabelSet
from .document import canonical_json, parse_document
from .errors import ConfigError, SlidescribeError
from .narration import script_for, synthesize, transcript
from .pipeline import decode_image_bytes, process_image

log = logging.getLogger("slidescribe.service")

SLIDE_ID_LENGTH = 16


class DocumentCache:
    """Bounded LRU cache of canonical document strings, thread safe."""

    def __init__(self, capacity=64):
        if capacity < 1:
            raise ConfigError("cache capacity must be at least 1")
        self.capacity = capacity
        self._entries = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key):
        with self._lock:
            if key not in self._entries:
                return None
            self._entries.move_to_end(key)
            return self._entries[key]

    def put(self, key, value):
        with self._lock:
            self._entries[key] = value
            self._entries.move_to_end(key)
            while len(self._entries) > self.capacity:
                self._entries.popitem(last=False)

    def __len__(self):
        with self._lock:
            return len(self._entries)


def slide_id_for(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:SLIDE_ID_LENGTH]


def label_set_from_meta(meta) -> LabelSet:
    """Rebuild the label set stored in a checkpoint's metadata."""
    names = meta.get("labels")
    extra = meta.get("extra") or {}
    coarse_map = extra.get("coarse_map")
    if not names or not coarse_map:
        raise ConfigError(
            "checkpoint metadata lacks label names or a coarse_map; "
            "pass an explicit label set file"
        )
    return LabelSet(names=tuple(names), coarse_map=dict(coarse_map))


def create_app(
    network,
    label_set: LabelSet,
    *,
    adapters=None,
    tts_adapter=None,
    cache_size=64,
    threshold=0.5,
    min_region_area=None,
    camera_source=None,
    process_fn=process_image,
) -> FastAPI:
    """Build the service application around a loaded network.

    camera_source, when set, is a file path polled on empty capture
    bodies, standing in for classroom camera hardware. process_fn is
    injectable for tests.
    """
    app = FastAPI(title="slidescribe", docs_url=None, redoc_url=None)
    cache = DocumentCache(cache_size)
    inference_lock = threading.Lock()
    network.eval()

    def error(status, message):
        return JSONResponse({"error": message}, status_code=status)

    @app.post("/capture")
    async def capture(request: Request):
        data = await request.body()
        if not data:
            if camera_source is None:
                return error(400, "empty capture body and no camera source configured")
            source = Path(camera_source)
            if not source.is_file():
                return error(400, f"camera source has no image: {source}")
            data = source.read_bytes()
        slide_id = slide_id_for(data)
        body = cache.get(slide_id)
        if body is None:
            try:
                image = decode_image_bytes(data)
            except SlidescribeError as exc:
                return error(400, str(exc))
            try:
                with inference_lock:
                    doc = process_fn(
                        image,
                        network,
                        label_set,
                        image_ref=slide_id,
                        threshold=threshold,
                        min_region_area=min_region_area,
                        adapters=adapters,
                    )
                body = doc if isinstance(doc, str) else canonical_json(doc)
            except Exception:
                error_id = uuid.uuid4().hex
                log.exception("capture failed [error_id=%s]", error_id)
                return JSONResponse(
                    {"error": "internal error", "error_id": error_id},
                    status_code=500,
                )
            cache.put(slide_id, body)
        return Response(content=body, media_type="application/json")

    @app.get("/slides/{slide_id}")
    async def get_slide(slide_id: str):
        body = cache.get(slide_id)
        if body is None:
            return error(404, f"unknown slide id '{slide_id}'")
        return Response(content=body, media_type="application/json")

    @app.get("/slides/{slide_id}/audio")
    async def get_audio(slide_id: str, mode: str = None, region: str = None):
        body = cache.get(slide_id)
        if body is None:
            return error(404, f"unknown slide id '{slide_id}'")
        doc = parse_document(body)
        region_id = None
        if region is not None:
            try:
                region_id = int(region)
            except ValueError:
                return error(400, f"region must be an integer, got '{region}'")
        if mode is None:
            mode = "interactive" if region_id is not None else "read_all"
        if mode == "read_all":
            mode = "non_interactive"
        if mode not in ("interactive", "non_interactive"):
            return error(400, f"unknown mode '{mode}'")
        if mode == "interactive" and region_id is None:
            return error(400, "interactive mode requires a region parameter")
        try:
            script = script_for(doc, mode, region_id=region_id)
        except KeyError:
            return error(404, f"slide has no region {region_id}")
        except SlidescribeError as exc:
            return error(400, str(exc))
        if tts_adapter is None:
            return PlainTextResponse(transcript(script))
        artifact = synthesize(script, tts_adapter)
        if isinstance(artifact, str):
            return PlainTextResponse(artifact)
        return Response(
            content=artifact.data,
            media_type=f"audio/{artifact.container_format}",
        )

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok", "cached_documents": len(cache)}

    return app


def app_from_checkpoint(
    checkpoint_path,
    *,
    label_set=None,
    cache_size=64,
    threshold=0.5,
    camera_source=None,
):
    """Load a checkpoint and wrap it as a ready-to-serve application."""
    from .network import load_checkpoint

    network, meta = load_checkpoint(checkpoint_path)
    if label_set is None:
        label_set = label_set_from_meta(meta)
    return create_app(
        network,
        label_set,
        cache_size=cache_size,
        threshold=threshold,
        camera_source=camera_source,
    )
