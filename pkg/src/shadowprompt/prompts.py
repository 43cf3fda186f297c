"""User prompts (dot, line, subject mask) and their rasterization.

A prompt picks out one subject in the image; it is rasterized into a
one-channel binary map and fused with the image by channel concatenation
before entering the mask-prediction network.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ArgumentError

DOT_RADIUS = 5.0
LINE_WIDTH = 3.0

DOT = "dot"
LINE = "line"
SUBJECT_MASK = "subject_mask"
KINDS = (DOT, LINE, SUBJECT_MASK)


@dataclass(frozen=True)
class Prompt:
    kind: str
    points: Optional[Tuple[Tuple[float, float], ...]] = None  # (x, y) pairs
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArgumentError(f"unknown prompt kind {self.kind!r}")
        if self.kind == DOT:
            if self.points is None or len(self.points) != 1:
                raise ArgumentError("dot prompt needs exactly one point")
        elif self.kind == LINE:
            if self.points is None or len(self.points) < 2:
                raise ArgumentError("line prompt needs at least two vertices")
        else:
            m = self.mask
            if m is None or m.ndim != 2:
                raise ArgumentError("subject_mask prompt needs a 2-D mask")
            if not np.isin(m, (0, 1)).all():
                raise ArgumentError("subject mask must be binary")
            if not m.any():
                raise ArgumentError("subject mask has no foreground pixels")

    @staticmethod
    def dot(x: float, y: float) -> "Prompt":
        return Prompt(DOT, points=((float(x), float(y)),))

    @staticmethod
    def line(points: Sequence[Tuple[float, float]]) -> "Prompt":
        return Prompt(LINE, points=tuple((float(x), float(y)) for x, y in points))

    @staticmethod
    def subject_mask(mask: np.ndarray) -> "Prompt":
        return Prompt(SUBJECT_MASK, mask=np.ascontiguousarray(mask))


def _check_bounds(points, height, width, kind):
    for x, y in points:
        if not (0 <= x < width and 0 <= y < height):
            raise ArgumentError(
                f"{kind} coordinate ({x}, {y}) out of bounds for {width}x{height}"
            )


def _segment_stroke(height, width, p0, p1, half_width):
    """Pixels whose center lies within half_width of the segment p0-p1."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    seg_len2 = dx * dx + dy * dy
    if seg_len2 == 0:
        dist2 = (xx - p0[0]) ** 2 + (yy - p0[1]) ** 2
    else:
        t = ((xx - p0[0]) * dx + (yy - p0[1]) * dy) / seg_len2
        t = np.clip(t, 0.0, 1.0)
        dist2 = (xx - (p0[0] + t * dx)) ** 2 + (yy - (p0[1] + t * dy)) ** 2
    return dist2 <= half_width * half_width


def rasterize(
    prompt: Prompt,
    height: int,
    width: int,
    dot_radius: float = DOT_RADIUS,
    line_width: float = LINE_WIDTH,
) -> np.ndarray:
    """Render a prompt as a binary (H, W) float32 map.

    Dots become filled disks, lines become fixed-width strokes (one capsule
    per segment), subject masks are copied verbatim.
    """
    if prompt.kind == SUBJECT_MASK:
        m = prompt.mask
        if m.shape != (height, width):
            raise ArgumentError(
                f"subject mask shape {m.shape} does not match {height}x{width}"
            )
        return m.astype(np.float32)

    _check_bounds(prompt.points, height, width, prompt.kind)
    if prompt.kind == DOT:
        x, y = prompt.points[0]
        yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
        hit = (xx - x) ** 2 + (yy - y) ** 2 <= dot_radius * dot_radius
    else:
        hit = np.zeros((height, width), dtype=bool)
        for p0, p1 in zip(prompt.points[:-1], prompt.points[1:]):
            hit |= _segment_stroke(height, width, p0, p1, line_width / 2.0)
    return hit.astype(np.float32)


def encode_input(x: np.ndarray, prompt: Prompt) -> np.ndarray:
    """Stack the image's three channels with the rasterized prompt map.

    Returns a channels-first (4, H, W) float32 array ready for the network
    stem.
    """
    if x.ndim != 3 or x.shape[2] != 3:
        raise ArgumentError(f"expected an (H, W, 3) image, got {x.shape}")
    h, w = x.shape[:2]
    pmap = rasterize(prompt, h, w)
    return np.concatenate(
        [x.astype(np.float32).transpose(2, 0, 1), pmap[None]], axis=0
    )
