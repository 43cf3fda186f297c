"""HTTP inference service.

POST /infer runs deterministic prompt-conditioned removal on a base64 PNG;
GET /healthz reports the loaded checkpoint. Inputs whose dimensions do not
satisfy the network's divisibility constraint are reflect-padded and the
response is cropped back, so clients never see the padding.
"""

import time
import zlib
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .errors import ArgumentError, DimensionError, NumericError
from .imgio import (
    decode_png_base64,
    encode_png_base64,
    overlay_mask,
    pad_to_multiple,
)
from .model import config_hash, load_checkpoint, predict
from .prompts import KINDS, SUBJECT_MASK, Prompt

DEFAULT_MAX_SIDE = 1024


class PromptPayload(BaseModel):
    kind: str
    points: Optional[List[Tuple[float, float]]] = None
    mask: Optional[str] = None  # base64 PNG, required for subject_mask


class InferOptions(BaseModel):
    return_mask: bool = True
    return_overlay: bool = False


class InferRequest(BaseModel):
    image: str  # base64 PNG
    prompt: PromptPayload
    options: InferOptions = InferOptions()


class InferResponse(BaseModel):
    removal: str
    mask: Optional[str] = None
    overlay: Optional[str] = None
    timing_ms: float


def _build_prompt(payload: PromptPayload, height: int, width: int) -> Prompt:
    if payload.kind not in KINDS:
        raise ArgumentError(f"unknown prompt kind {payload.kind!r}")
    if payload.kind == SUBJECT_MASK:
        if not payload.mask:
            raise ArgumentError("subject_mask prompt needs a mask image")
        mask = decode_png_base64(payload.mask, mode="L")
        if mask.shape != (height, width):
            raise ArgumentError(
                f"mask shape {mask.shape} does not match image {height}x{width}"
            )
        return Prompt.subject_mask((mask > 0.5).astype(np.uint8))
    if not payload.points:
        raise ArgumentError(f"{payload.kind} prompt needs points")
    for x, y in payload.points:
        if not (0 <= x < width and 0 <= y < height):
            raise ArgumentError(
                f"{payload.kind} coordinate ({x}, {y}) out of bounds for {width}x{height}"
            )
    if payload.kind == "dot":
        if len(payload.points) != 1:
            raise ArgumentError("dot prompt needs exactly one point")
        return Prompt.dot(*payload.points[0])
    return Prompt.line(payload.points)


def _pad_prompt(prompt: Prompt, multiple: int) -> Prompt:
    if prompt.kind != SUBJECT_MASK:
        return prompt
    padded = pad_to_multiple(prompt.mask, multiple, mode="constant")
    return Prompt.subject_mask(padded)


def create_app(checkpoint_path=None, max_side: int = DEFAULT_MAX_SIDE) -> FastAPI:
    app = FastAPI(title="shadowprompt inference")
    app.state.model = None
    app.state.checkpoint_id = None
    app.state.config_hash = None
    app.state.max_side = max_side
    if checkpoint_path is not None:
        load_model(app, checkpoint_path)

    @app.get("/healthz")
    def healthz():
        if app.state.model is None:
            return JSONResponse(status_code=503, content={"status": "loading"})
        return {
            "status": "ok",
            "checkpoint_id": app.state.checkpoint_id,
            "config_hash": app.state.config_hash,
        }

    @app.post("/infer", response_model=InferResponse, response_model_exclude_none=True)
    def infer(req: InferRequest):
        if app.state.model is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        started = time.perf_counter()
        try:
            image = decode_png_base64(req.image)
            h, w = image.shape[:2]
            if h > app.state.max_side or w > app.state.max_side:
                raise HTTPException(
                    status_code=413,
                    detail=f"image {w}x{h} exceeds the {app.state.max_side} px limit",
                )
            prompt = _build_prompt(req.prompt, h, w)
            multiple = app.state.model.cfg.divisor
            padded = pad_to_multiple(image, multiple)
            y_hat, m_hat = predict(app.state.model, padded, _pad_prompt(prompt, multiple))
        except HTTPException:
            raise
        except (ArgumentError, DimensionError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except NumericError as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc

        y_hat = y_hat[:h, :w]
        m_hat = m_hat[:h, :w]
        if not (np.isfinite(y_hat).all() and np.isfinite(m_hat).all()):
            raise HTTPException(status_code=500, detail="non-finite network output")
        resp = InferResponse(
            removal=encode_png_base64(y_hat),
            timing_ms=(time.perf_counter() - started) * 1000.0,
        )
        if req.options.return_mask:
            resp.mask = encode_png_base64(m_hat)
        if req.options.return_overlay:
            resp.overlay = encode_png_base64(overlay_mask(image, m_hat))
        return resp

    return app


def load_model(app: FastAPI, checkpoint_path) -> None:
    path = Path(checkpoint_path)
    model = load_checkpoint(path)
    model.eval()
    app.state.model = model
    app.state.checkpoint_id = f"{path.name}-{zlib.crc32(path.read_bytes()):08x}"
    app.state.config_hash = config_hash(model.cfg, model.flags)
