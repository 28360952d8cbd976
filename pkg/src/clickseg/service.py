"""Live annotation service: one click in, one refreshed mask out.

HTTP+JSON surface:

    POST /sessions                multipart image (+ optional gt mask) -> {id}
    POST /sessions/{id}/clicks    {row, col, polarity} -> {mask_rle, iou?, latency_ms}
    POST /sessions/{id}/undo      remove last click, recompute from the rest
    POST /sessions/{id}/reset     clear all clicks
    GET  /sessions/{id}/mask      current mask as a lossless single-channel PNG
    GET  /healthz

The mask is a pure function of (image, click log, weights, post-process
params): each click updates the interaction maps incrementally, runs inference
and graph-cut refinement; undo re-encodes from the remaining clicks. Inference
requests from all sessions are serialized through a single bounded executor
(queue overflow -> 503).

The RLE in JSON bodies is row-major run-length encoding with alternating run
lengths starting with a (possibly zero-length) background run:
{"shape": [H, W], "counts": [n0_bg, n1_fg, n2_bg, ...]}.
"""

from __future__ import annotations

import io
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, File, HTTPException, UploadFile
from fastapi.responses import JSONResponse, Response
from PIL import Image
from pydantic import BaseModel

from .evaluation import iou
from .interactions import (
    Click,
    ClickSet,
    InteractionMapPair,
    NEGATIVE,
    POSITIVE,
    encode_clicks,
    incremental_update,
)

DEFAULT_MAX_DIM = 2048
DEFAULT_QUEUE_DEPTH = 8


def rle_encode(mask: np.ndarray) -> dict:
    flat = np.asarray(mask, dtype=bool).ravel()
    counts = []
    value = False
    run = 0
    changes = np.flatnonzero(np.diff(flat.astype(np.int8)))
    prev = 0
    for idx in changes:
        counts.append(int(idx + 1 - prev))
        prev = idx + 1
    counts.append(int(flat.size - prev))
    if flat.size and flat[0]:
        counts.insert(0, 0)
    return {"shape": list(mask.shape), "counts": counts}


def rle_decode(payload: dict) -> np.ndarray:
    shape = tuple(payload["shape"])
    out = np.zeros(int(np.prod(shape)), dtype=bool)
    pos = 0
    value = False
    for run in payload["counts"]:
        if value:
            out[pos:pos + run] = True
        pos += run
        value = not value
    if pos != out.size:
        raise ValueError(f"RLE covers {pos} of {out.size} pixels")
    return out.reshape(shape)


class QueueFull(RuntimeError):
    pass


class ModelExecutor:
    """Serializes inference across sessions; bounded admission queue."""

    def __init__(self, depth: int = DEFAULT_QUEUE_DEPTH):
        self._slots = threading.Semaphore(depth)
        self._lock = threading.Lock()

    def run(self, fn):
        if not self._slots.acquire(blocking=False):
            raise QueueFull("inference queue is full")
        try:
            with self._lock:
                return fn()
        finally:
            self._slots.release()


@dataclass
class Session:
    session_id: str
    image: np.ndarray
    clicks: ClickSet
    maps: InteractionMapPair
    mask: np.ndarray
    prob: np.ndarray | None = None
    gt: np.ndarray | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def shape(self) -> tuple[int, int]:
        return self.image.shape[:2]


class ClickBody(BaseModel):
    row: int
    col: int
    polarity: str


def _decode_image(data: bytes, max_dim: int) -> np.ndarray:
    if not data:
        raise HTTPException(status_code=400, detail="empty image payload")
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception:
        raise HTTPException(status_code=400, detail="undecodable image")
    if max(img.size) > max_dim:
        raise HTTPException(status_code=413,
                            detail=f"image exceeds the {max_dim}px limit")
    return np.asarray(img.convert("RGB"), dtype=np.uint8)


def _decode_gt(data: bytes, shape: tuple[int, int]) -> np.ndarray:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception:
        raise HTTPException(status_code=400, detail="undecodable ground-truth mask")
    gt = np.asarray(img.convert("L")) > 0
    if gt.shape != shape:
        raise HTTPException(status_code=422,
                            detail=f"ground truth {gt.shape} does not match image {shape}")
    return gt


def create_app(pipeline, max_dim: int = DEFAULT_MAX_DIM,
               queue_depth: int = DEFAULT_QUEUE_DEPTH) -> FastAPI:
    """Build the service around a segmenter pipeline.

    `pipeline` needs `.probability(image, clicks) -> (H,W) float` and
    `.mask_from_probability(prob, image, clicks) -> bool mask`.
    """
    app = FastAPI(title="clickseg annotation service")
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()
    executor = ModelExecutor(queue_depth)

    def get_session(session_id: str) -> Session:
        with registry_lock:
            session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return session

    def infer(session: Session) -> tuple[np.ndarray, np.ndarray]:
        """(probability, mask) for the session's current click set."""
        if len(session.clicks) == 0:
            return None, np.zeros(session.shape, dtype=bool)

        def _run():
            prob = pipeline.probability(session.image, session.clicks)
            return prob, pipeline.mask_from_probability(prob, session.image, session.clicks)

        try:
            return executor.run(_run)
        except QueueFull:
            raise HTTPException(status_code=503, detail="inference queue is full")

    def state_payload(session: Session, latency_ms: float | None = None,
                      **extra) -> dict:
        body = {
            "session_id": session.session_id,
            "click_count": len(session.clicks),
            "mask_rle": rle_encode(session.mask),
        }
        if latency_ms is not None:
            body["latency_ms"] = round(latency_ms, 3)
        if session.gt is not None:
            body["iou"] = iou(session.mask, session.gt)
        body.update(extra)
        return body

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/sessions")
    async def create_session(image: UploadFile = File(...),
                             gt: UploadFile | None = File(default=None)):
        data = await image.read()
        arr = _decode_image(data, max_dim)
        session = Session(
            session_id=uuid.uuid4().hex,
            image=arr,
            clicks=ClickSet(),
            maps=encode_clicks(arr.shape[0], arr.shape[1], ClickSet()),
            mask=np.zeros(arr.shape[:2], dtype=bool),
        )
        if gt is not None:
            session.gt = _decode_gt(await gt.read(), session.shape)
        with registry_lock:
            sessions[session.session_id] = session
        return JSONResponse({"id": session.session_id,
                             "height": arr.shape[0], "width": arr.shape[1]})

    @app.post("/sessions/{session_id}/clicks")
    def add_click(session_id: str, body: ClickBody):
        session = get_session(session_id)
        if body.polarity not in (POSITIVE, NEGATIVE):
            raise HTTPException(status_code=422,
                                detail=f"polarity must be {POSITIVE!r} or {NEGATIVE!r}")
        h, w = session.shape
        if not (0 <= body.row < h and 0 <= body.col < w):
            raise HTTPException(status_code=422,
                                detail=f"click ({body.row}, {body.col}) outside {h}x{w}")
        click = Click(body.row, body.col, body.polarity)
        with session.lock:
            start = time.perf_counter()
            new_clicks = session.clicks.with_click(click)
            if len(new_clicks) != len(session.clicks):
                session.maps = incremental_update(session.maps, click)
                session.clicks = new_clicks
            session.prob, session.mask = infer(session)
            latency = (time.perf_counter() - start) * 1e3
            return state_payload(session, latency_ms=latency)

    @app.post("/sessions/{session_id}/undo")
    def undo(session_id: str):
        session = get_session(session_id)
        with session.lock:
            if len(session.clicks) == 0:
                return state_payload(session, noop=True)
            start = time.perf_counter()
            session.clicks = session.clicks.without_last()
            h, w = session.shape
            session.maps = encode_clicks(h, w, session.clicks)
            session.prob, session.mask = infer(session)
            latency = (time.perf_counter() - start) * 1e3
            return state_payload(session, latency_ms=latency, noop=False)

    @app.post("/sessions/{session_id}/reset")
    def reset(session_id: str):
        session = get_session(session_id)
        with session.lock:
            session.clicks = ClickSet()
            h, w = session.shape
            session.maps = encode_clicks(h, w, ClickSet())
            session.prob = None
            session.mask = np.zeros(session.shape, dtype=bool)
            return state_payload(session)

    @app.get("/sessions/{session_id}/mask")
    def get_mask(session_id: str):
        session = get_session(session_id)
        with session.lock:
            img = Image.fromarray((session.mask * 255).astype(np.uint8), mode="L")
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    return app


@dataclass
class DistanceFieldPipeline:
    """Torch-free stand-in segmenter for service tests and demos: foreground
    probability from the relative distance to positive vs negative clicks."""

    softness: float = 12.0
    threshold: float = 0.5

    def probability(self, image, clicks: ClickSet) -> np.ndarray:
        h, w = np.asarray(image).shape[:2]
        maps = encode_clicks(h, w, clicks)
        gap = maps.negative_map - maps.positive_map
        return 1.0 / (1.0 + np.exp(-gap / self.softness))

    def mask_from_probability(self, prob, image, clicks: ClickSet) -> np.ndarray:
        return prob > self.threshold
