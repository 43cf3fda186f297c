"""Image encode/decode and padding helpers shared by the CLI and service."""

import base64
import io

import numpy as np
from PIL import Image as PILImage

from .errors import ArgumentError, FormatError

OVERLAY_OPACITY = 0.4
OVERLAY_TINT = np.array([1.0, 0.1, 0.1])


def load_image(path) -> np.ndarray:
    try:
        img = PILImage.open(path).convert("RGB")
    except Exception as exc:
        raise FormatError(f"cannot read image {path}: {exc}") from exc
    return np.array(img, dtype=np.float64) / 255.0


def save_image(path, arr: np.ndarray) -> None:
    PILImage.fromarray(_to_uint8(arr)).save(path)


def _to_uint8(arr: np.ndarray) -> np.ndarray:
    return np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)


def encode_png_base64(arr: np.ndarray) -> str:
    """Lossless PNG bytes (base64) for an (H, W, 3) or (H, W) array in [0, 1]."""
    buf = io.BytesIO()
    PILImage.fromarray(_to_uint8(arr)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_png_base64(data: str, mode: str = "RGB") -> np.ndarray:
    try:
        raw = base64.b64decode(data, validate=True)
        img = PILImage.open(io.BytesIO(raw)).convert(mode)
    except Exception as exc:
        raise ArgumentError(f"malformed image payload: {exc}") from exc
    return np.array(img, dtype=np.float64) / 255.0


def pad_to_multiple(arr: np.ndarray, multiple: int, mode: str = "reflect") -> np.ndarray:
    """Pad height/width up to the next multiple (bottom/right edges only)."""
    h, w = arr.shape[:2]
    ph = (multiple - h % multiple) % multiple
    pw = (multiple - w % multiple) % multiple
    if ph == 0 and pw == 0:
        return arr
    pads = [(0, ph), (0, pw)] + [(0, 0)] * (arr.ndim - 2)
    return np.pad(arr, pads, mode=mode)


def overlay_mask(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Tint the image where the mask is on, at fixed opacity."""
    alpha = OVERLAY_OPACITY * mask[..., None]
    return (1.0 - alpha) * image + alpha * OVERLAY_TINT


def side_by_side(*images) -> np.ndarray:
    """Horizontal panel of equally sized (H, W, 3) images with thin separators."""
    h = images[0].shape[0]
    sep = np.ones((h, 2, 3))
    parts = []
    for i, img in enumerate(images):
        if i:
            parts.append(sep)
        parts.append(img)
    return np.concatenate(parts, axis=1)
