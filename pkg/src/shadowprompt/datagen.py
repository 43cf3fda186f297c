"""Synthetic prompt-annotated shadow scenes.

Each scene composites flat-colored subjects (ellipses or convex-ish
polygons) over a background; every subject casts a shadow obtained by an
affine shear/translation of its silhouette. Shadows darken multiplicatively
after Gaussian feathering of the mask boundary, so any single shadow layer
can be inverted exactly. Dot and line prompts are derived from each subject
mask via a two-pass chamfer distance transform and a ridge trace over it.

On-disk layout:
    root/index.json                -- {"splits": {split: [ids...]}}
    root/{split}/{id}/shadow.png, shadow_free.png,
                      subject_{k}_mask.png, subject_{k}_shadow.png,
                      prompts.json
prompts.json: {"blur_sigma": s, "subjects": [{"dot": [x, y],
    "line": [[x, y], ...], "mask": "subject_k_mask.png", "darkening": d}]}
PNGs are lossless 8-bit; images are snapped to the 8-bit grid at synthesis
time so a write/read round trip is exact.
"""

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, List, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image as PILImage
from PIL import ImageDraw

from .errors import ArgumentError, FormatError
from .prompts import Prompt, rasterize

BACKGROUNDS = ("gradient", "noise", "flat")
MIN_SUBJECT_AREA = 25
MIN_SHADOW_AREA = 16
MAX_PLACEMENT_TRIES = 100
LINE_MAX_VERTICES = 8
LINE_SIMPLIFY_TOL = 1.5
LINE_MAX_LEN = 64


@dataclass
class SceneConfig:
    image_size: Tuple[int, int] = (256, 256)
    num_subjects: Tuple[int, int] = (2, 4)
    shadow_darkening: Tuple[float, float] = (0.35, 0.65)
    shadow_blur_sigma: float = 2.0
    background: str = "gradient"
    seed: int = 0

    def __post_init__(self):
        h, w = self.image_size
        if h % 32 or w % 32:
            raise ArgumentError(f"image size {h}x{w} must be a multiple of 32")
        lo, hi = self.num_subjects
        if lo < 1 or hi < lo:
            raise ArgumentError("num_subjects range must satisfy 1 <= lo <= hi")
        dlo, dhi = self.shadow_darkening
        if not (0.0 < dlo <= dhi < 1.0):
            raise ArgumentError("shadow_darkening must lie strictly inside (0, 1)")
        if self.shadow_blur_sigma < 0:
            raise ArgumentError("shadow_blur_sigma must be non-negative")
        if self.background not in BACKGROUNDS:
            raise ArgumentError(f"background must be one of {BACKGROUNDS}")
        if self.seed < 0:
            raise ArgumentError("seed must be non-negative")


@dataclass
class SubjectRecord:
    subject_mask: np.ndarray  # (H, W) uint8 in {0, 1}
    shadow_mask: np.ndarray
    darkening: float
    dot: Prompt
    line: Prompt
    mask_prompt: Prompt


@dataclass
class SampleRecord:
    shadow_image: np.ndarray  # (H, W, 3) float32 on the 8-bit grid
    shadow_free_image: np.ndarray
    subjects: List[SubjectRecord]
    blur_sigma: float


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with zero padding (masks live on zero)."""
    if sigma <= 0:
        return np.asarray(img, dtype=np.float64).copy()
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    k /= k.sum()
    size = 2 * radius + 1
    out = np.pad(np.asarray(img, dtype=np.float64), radius)
    out = sliding_window_view(out, size, axis=0) @ k
    out = sliding_window_view(out, size, axis=1) @ k
    return out


def attenuation_map(shadow_mask: np.ndarray, darkening: float, sigma: float) -> np.ndarray:
    """Per-pixel multiplicative factor of one shadow layer: 1 outside, the
    darkening factor in the fully covered core, feathered in between."""
    alpha = gaussian_blur(shadow_mask.astype(np.float64), sigma)
    return 1.0 - (1.0 - darkening) * alpha


def chamfer_distance_transform(mask: np.ndarray) -> np.ndarray:
    """Two-pass 3-4 chamfer distance to the background, in chamfer units.

    Off-image pixels count as background, so masks touching the border stay
    shallow there. Axial steps cost 3, diagonal steps 4; divide by 3 for an
    approximate pixel distance.
    """
    m = np.asarray(mask).astype(bool)
    h, w = m.shape
    big = np.int64(1) << 40
    d = np.zeros((h + 2, w + 2), dtype=np.int64)
    d[1:-1, 1:-1] = np.where(m, big, 0)
    cols = 3 * np.arange(w + 2, dtype=np.int64)

    def row_min(prev, t):
        t = np.minimum(t, prev + 3)
        t = np.minimum(t, np.concatenate(([big], prev[:-1])) + 4)
        t = np.minimum(t, np.concatenate((prev[1:], [big])) + 4)
        return t

    for i in range(1, h + 2):
        t = row_min(d[i - 1], d[i])
        d[i] = np.minimum.accumulate(t - cols) + cols
    for i in range(h, -1, -1):
        t = row_min(d[i + 1], d[i])
        rev = t[::-1] - cols
        d[i] = (np.minimum.accumulate(rev) + cols)[::-1]
    return d[1:-1, 1:-1]


def derive_dot(subject_mask: np.ndarray) -> Prompt:
    """Deepest interior pixel of the mask under the chamfer metric.

    Ties break toward the smallest row, then column.
    """
    m = np.asarray(subject_mask).astype(bool)
    if not m.any():
        raise ArgumentError("cannot derive a dot from an empty mask")
    dt = chamfer_distance_transform(m)
    r, c = np.unravel_index(int(np.argmax(dt)), dt.shape)
    return Prompt.dot(c, r)


def _dilate8(mask: np.ndarray) -> np.ndarray:
    padded = np.pad(mask.astype(bool), 1)
    out = np.zeros_like(mask, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            out |= padded[1 + di : 1 + di + mask.shape[0], 1 + dj : 1 + dj + mask.shape[1]]
    return out


def _point_segment_dist(p, a, b):
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    denom = dx * dx + dy * dy
    if denom == 0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / denom))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def _douglas_peucker(pts, tol):
    if len(pts) <= 2:
        return list(pts)
    a, b = pts[0], pts[-1]
    dists = [_point_segment_dist(p, a, b) for p in pts[1:-1]]
    idx = int(np.argmax(dists)) + 1
    if dists[idx - 1] <= tol:
        return [a, b]
    left = _douglas_peucker(pts[: idx + 1], tol)
    right = _douglas_peucker(pts[idx:], tol)
    return left[:-1] + right


def _simplify(pts, tol, max_vertices):
    out = _douglas_peucker(pts, tol)
    while len(out) > max_vertices:
        tol *= 1.5
        out = _douglas_peucker(pts, tol)
    return out


def _ridge_trace(dt, mask, start, max_len):
    """Greedy walk along the chamfer ridge from the deepest pixel, in two
    opposing directions, stopping below 25% of the starting depth or when a
    step would fall off the ridge (the transform is 4-Lipschitz per step, so
    losing more than half the current depth in one step means the ridge
    ended, not that it is descending)."""
    h, w = mask.shape
    threshold = 0.25 * dt[start]
    visited = {start}

    def walk(limit):
        path = []
        cur = start
        while len(path) < limit:
            cands = []
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    if di == 0 and dj == 0:
                        continue
                    nxt = (cur[0] + di, cur[1] + dj)
                    if 0 <= nxt[0] < h and 0 <= nxt[1] < w and mask[nxt] and nxt not in visited:
                        cands.append(nxt)
            if not cands:
                break
            best = max(cands, key=lambda p: (dt[p], -p[0], -p[1]))
            if dt[best] < threshold or dt[best] < 0.51 * dt[cur]:
                break
            visited.add(best)
            path.append(best)
            cur = best
        return path

    half = max_len // 2
    forward = walk(half - 1)
    backward = walk(half)
    return list(reversed(backward)) + [start] + forward


def _line_contained(vertices_rc, mask, dilated):
    pts = [(c, r) for r, c in vertices_rc]
    raster = rasterize(Prompt.line(pts), mask.shape[0], mask.shape[1])
    return bool(dilated[raster.astype(bool)].all())


def derive_line(subject_mask: np.ndarray) -> Prompt:
    """Polyline along the mask's chamfer ridge, simplified to few vertices.

    The rasterized stroke is kept inside the 1-px-dilated mask; if the
    simplified polyline escapes (thin or strongly curved masks), the traced
    path is trimmed from its shallow ends and re-simplified.
    """
    m = np.asarray(subject_mask).astype(bool)
    if m.sum() < 2:
        raise ArgumentError("cannot derive a line from a mask with fewer than 2 pixels")
    dt = chamfer_distance_transform(m)
    start = tuple(np.unravel_index(int(np.argmax(dt)), dt.shape))
    path = _ridge_trace(dt, m, start, LINE_MAX_LEN)
    if len(path) == 1:
        rr, cc = np.nonzero(m)
        d2 = (rr - start[0]) ** 2 + (cc - start[1]) ** 2
        d2[(rr == start[0]) & (cc == start[1])] = np.iinfo(np.int64).max
        j = int(np.argmin(d2))
        path = [start, (int(rr[j]), int(cc[j]))]

    dilated = _dilate8(m)
    pts = path
    while True:
        cand = _simplify(pts, LINE_SIMPLIFY_TOL, LINE_MAX_VERTICES)
        if len(cand) < 2:
            cand = [pts[0], pts[-1]]
        if _line_contained(cand, m, dilated):
            return Prompt.line([(c, r) for r, c in cand])
        if len(pts) <= 2:
            # adjacent interior pixels; their stroke cannot escape the dilation
            nbr = max(
                (p for p in path if p != start),
                key=lambda p: (dt[p], -p[0], -p[1]),
                default=path[-1],
            )
            return Prompt.line([(start[1], start[0]), (nbr[1], nbr[0])])
        pts = pts[1:-1]


def _bilinear_field(rng, h, w, coarse=5):
    grid = rng.uniform(0.25, 0.95, size=(coarse, coarse, 3))
    yi = np.linspace(0, coarse - 1, h)
    xi = np.linspace(0, coarse - 1, w)
    y0 = np.clip(yi.astype(int), 0, coarse - 2)
    x0 = np.clip(xi.astype(int), 0, coarse - 2)
    ty = (yi - y0)[:, None, None]
    tx = (xi - x0)[None, :, None]
    g00 = grid[y0][:, x0]
    g01 = grid[y0][:, x0 + 1]
    g10 = grid[y0 + 1][:, x0]
    g11 = grid[y0 + 1][:, x0 + 1]
    return (1 - ty) * ((1 - tx) * g00 + tx * g01) + ty * ((1 - tx) * g10 + tx * g11)


def _background(cfg, rng, h, w):
    if cfg.background == "flat":
        return np.ones((h, w, 3)) * rng.uniform(0.3, 0.9, size=3)
    if cfg.background == "noise":
        return _bilinear_field(rng, h, w)
    c0, c1 = rng.uniform(0.25, 0.95, size=(2, 3))
    phi = rng.uniform(0, 2 * math.pi)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    t = xx * math.cos(phi) + yy * math.sin(phi)
    t = (t - t.min()) / max(t.max() - t.min(), 1e-9)
    return c0 + t[..., None] * (c1 - c0)


def _polygon_mask(h, w, xs, ys):
    img = PILImage.new("L", (w, h), 0)
    ImageDraw.Draw(img).polygon(list(zip(xs, ys)), fill=1)
    return np.array(img, dtype=bool)


def _ellipse_mask(h, w, cx, cy, rx, ry, theta):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xx - cx, yy - cy
    u = dx * math.cos(theta) + dy * math.sin(theta)
    v = -dx * math.sin(theta) + dy * math.cos(theta)
    return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0


def _sample_subject(rng, h, w, occupied):
    base = min(h, w)
    for _ in range(MAX_PLACEMENT_TRIES):
        r = rng.uniform(0.08, 0.20) * base
        cx = rng.uniform(r, w - 1 - r)
        cy = rng.uniform(r, h - 1 - r)
        if rng.random() < 0.5:
            mask = _ellipse_mask(h, w, cx, cy, r, r * rng.uniform(0.5, 1.0),
                                 rng.uniform(0, math.pi))
        else:
            n = int(rng.integers(5, 9))
            angles = np.sort(rng.uniform(0, 2 * math.pi, size=n))
            radii = rng.uniform(0.55, 1.0, size=n) * r
            mask = _polygon_mask(h, w, cx + radii * np.cos(angles), cy + radii * np.sin(angles))
        if mask.sum() < MIN_SUBJECT_AREA:
            continue
        if (mask & occupied).any():
            continue
        return mask, (cx, cy), r
    raise ArgumentError(f"could not place a subject after {MAX_PLACEMENT_TRIES} attempts")


def _warp_mask(mask, matrix, offset, center):
    """Nearest-neighbor affine warp of a binary mask around a center point."""
    h, w = mask.shape
    inv = np.linalg.inv(matrix)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    px = xx - center[0] - offset[0]
    py = yy - center[1] - offset[1]
    sx = inv[0, 0] * px + inv[0, 1] * py + center[0]
    sy = inv[1, 0] * px + inv[1, 1] * py + center[1]
    si = np.rint(sy).astype(int)
    sj = np.rint(sx).astype(int)
    ok = (si >= 0) & (si < h) & (sj >= 0) & (sj < w)
    out = np.zeros_like(mask, dtype=bool)
    out[ok] = mask[si[ok], sj[ok]]
    return out


def _sample_shadow(rng, subject_mask, center, radius):
    h, w = subject_mask.shape
    for _ in range(MAX_PLACEMENT_TRIES):
        shear = rng.uniform(-0.5, 0.5)
        stretch = rng.uniform(0.7, 1.25)
        matrix = np.array([[1.0, shear], [0.0, stretch]])
        theta = rng.uniform(0, 2 * math.pi)
        dist = rng.uniform(0.5, 1.1) * 2 * radius
        offset = (dist * math.cos(theta), dist * math.sin(theta))
        shadow = _warp_mask(subject_mask, matrix, offset, center) & ~subject_mask
        if shadow.sum() >= MIN_SHADOW_AREA:
            return shadow
    raise ArgumentError(f"could not cast a shadow after {MAX_PLACEMENT_TRIES} attempts")


def _quantize8(img):
    return (np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0).astype(np.float32)


def synth_scene(cfg: SceneConfig) -> SampleRecord:
    """Render one deterministic scene from the config seed."""
    rng = np.random.default_rng(cfg.seed)
    h, w = cfg.image_size
    shadow_free = _background(cfg, rng, h, w)

    count = int(rng.integers(cfg.num_subjects[0], cfg.num_subjects[1] + 1))
    occupied = np.zeros((h, w), dtype=bool)
    placed = []
    colors = []
    for _ in range(count):
        mask, center, radius = _sample_subject(rng, h, w, occupied)
        occupied |= mask
        for _ in range(MAX_PLACEMENT_TRIES):
            color = rng.uniform(0.1, 0.95, size=3)
            if all(np.linalg.norm(color - c) >= 0.25 for c in colors):
                break
        colors.append(color)
        shadow_free[mask] = color
        placed.append((mask, center, radius, color))

    subjects = []
    attenuation = np.ones((h, w), dtype=np.float64)
    for mask, center, radius, _ in placed:
        shadow = _sample_shadow(rng, mask, center, radius)
        darkening = float(rng.uniform(*cfg.shadow_darkening))
        attenuation *= attenuation_map(shadow, darkening, cfg.shadow_blur_sigma)
        subjects.append(
            SubjectRecord(
                subject_mask=mask.astype(np.uint8),
                shadow_mask=shadow.astype(np.uint8),
                darkening=darkening,
                dot=derive_dot(mask),
                line=derive_line(mask),
                mask_prompt=Prompt.subject_mask(mask.astype(np.uint8)),
            )
        )

    shadow_free_q = _quantize8(shadow_free)
    shadow_q = _quantize8(shadow_free * attenuation[..., None])
    return SampleRecord(
        shadow_image=shadow_q,
        shadow_free_image=shadow_free_q,
        subjects=subjects,
        blur_sigma=cfg.shadow_blur_sigma,
    )


def _save_rgb(path: Path, img: np.ndarray) -> None:
    PILImage.fromarray(np.round(img * 255.0).astype(np.uint8), mode="RGB").save(path)


def _save_mask(path: Path, mask: np.ndarray) -> None:
    PILImage.fromarray((mask > 0).astype(np.uint8) * 255, mode="L").save(path)


def _load_file(path: Path) -> Path:
    if not path.is_file():
        raise FormatError(f"missing dataset file: {path}")
    return path


def _load_rgb(path: Path) -> np.ndarray:
    arr = np.array(PILImage.open(_load_file(path)).convert("RGB"))
    return (arr.astype(np.float64) / 255.0).astype(np.float32)


def _load_mask(path: Path) -> np.ndarray:
    arr = np.array(PILImage.open(_load_file(path)).convert("L"))
    return (arr > 127).astype(np.uint8)


def write_dataset(records: Iterable[SampleRecord], root, split: str = "train") -> List[str]:
    """Write records under root/{split}/ and update root/index.json."""
    root = Path(root)
    split_dir = root / split
    split_dir.mkdir(parents=True, exist_ok=True)
    ids = []
    for i, rec in enumerate(records):
        sid = f"{i:05d}"
        d = split_dir / sid
        d.mkdir(parents=True, exist_ok=True)
        _save_rgb(d / "shadow.png", rec.shadow_image)
        _save_rgb(d / "shadow_free.png", rec.shadow_free_image)
        manifest = {"blur_sigma": rec.blur_sigma, "subjects": []}
        for k, s in enumerate(rec.subjects):
            _save_mask(d / f"subject_{k}_mask.png", s.subject_mask)
            _save_mask(d / f"subject_{k}_shadow.png", s.shadow_mask)
            manifest["subjects"].append(
                {
                    "dot": [s.dot.points[0][0], s.dot.points[0][1]],
                    "line": [[x, y] for x, y in s.line.points],
                    "mask": f"subject_{k}_mask.png",
                    "darkening": s.darkening,
                }
            )
        (d / "prompts.json").write_text(json.dumps(manifest, indent=1))
        ids.append(sid)

    index_path = root / "index.json"
    index = {"splits": {}}
    if index_path.is_file():
        index = json.loads(index_path.read_text())
    index.setdefault("splits", {})[split] = ids
    index_path.write_text(json.dumps(index, indent=1))
    return ids


def read_dataset(root, split: str = "train") -> List[SampleRecord]:
    root = Path(root)
    index_path = root / "index.json"
    if not index_path.is_file():
        raise FormatError(f"missing dataset file: {index_path}")
    try:
        index = json.loads(index_path.read_text())
        ids = index["splits"][split]
    except (json.JSONDecodeError, KeyError) as exc:
        raise FormatError(f"corrupt or incomplete index: {index_path} ({exc})") from exc

    records = []
    for sid in ids:
        d = root / split / sid
        shadow = _load_rgb(d / "shadow.png")
        shadow_free = _load_rgb(d / "shadow_free.png")
        manifest_path = _load_file(d / "prompts.json")
        try:
            manifest = json.loads(manifest_path.read_text())
            raw_subjects = manifest["subjects"]
            blur_sigma = float(manifest["blur_sigma"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"corrupt prompt record: {manifest_path} ({exc})") from exc
        subjects = []
        for k, entry in enumerate(raw_subjects):
            subject_mask = _load_mask(d / entry["mask"])
            shadow_mask = _load_mask(d / f"subject_{k}_shadow.png")
            subjects.append(
                SubjectRecord(
                    subject_mask=subject_mask,
                    shadow_mask=shadow_mask,
                    darkening=float(entry["darkening"]),
                    dot=Prompt.dot(*entry["dot"]),
                    line=Prompt.line([tuple(p) for p in entry["line"]]),
                    mask_prompt=Prompt.subject_mask(subject_mask),
                )
            )
        records.append(SampleRecord(shadow, shadow_free, subjects, blur_sigma))
    return records


def generate_split(
    num_train: int,
    num_val: int,
    num_test: int,
    base_seed: int,
    root,
    scene: SceneConfig = None,
) -> Path:
    """Generate train/val/test splits from disjoint seed ranges."""
    for name, n in (("train", num_train), ("val", num_val), ("test", num_test)):
        if n < 1:
            raise ArgumentError(f"{name} count must be >= 1")
    base = scene or SceneConfig()
    root = Path(root)
    offsets = {
        "train": range(base_seed, base_seed + num_train),
        "val": range(base_seed + num_train, base_seed + num_train + num_val),
        "test": range(
            base_seed + num_train + num_val,
            base_seed + num_train + num_val + num_test,
        ),
    }
    for split, seeds in offsets.items():
        write_dataset(
            (synth_scene(replace(base, seed=s)) for s in seeds), root, split
        )
    return root
