"""Deterministic synthetic detection scenes.

Well-lit source domain stand-in: soft low-frequency color backgrounds with
1..5 filled shapes (circle, rectangle, triangle) and tight ground-truth
boxes. Every scene is a pure function of (seed, index), so corpora are
reproducible and pairs can be synthesized in any order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SceneConfig
from .isp import DarkIspParams, derive_sample_seed, sample_params, synthesize_low_light

SHAPES = ("circle", "rectangle", "triangle")


@dataclass
class SceneSample:
    image: np.ndarray  # [3,H,W] in [0,1], float32 (stored corpora are large)
    boxes: np.ndarray  # [n,4] as x0,y0,x1,y1 pixels
    index: int


@dataclass
class PairedSample:
    well_lit: np.ndarray
    dark: np.ndarray
    boxes: np.ndarray
    params: DarkIspParams
    index: int


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of [n,4] and [m,4] xyxy boxes."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    x0 = np.maximum(a[:, None, 0], b[None, :, 0])
    y0 = np.maximum(a[:, None, 1], b[None, :, 1])
    x1 = np.minimum(a[:, None, 2], b[None, :, 2])
    y1 = np.minimum(a[:, None, 3], b[None, :, 3])
    inter = np.clip(x1 - x0, 0, None) * np.clip(y1 - y0, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(union > 0, inter / union, 0.0)
    return out


def _bilinear_field(rng: np.random.Generator, grid: int, h: int, w: int) -> np.ndarray:
    """Low-frequency field in [0,1]: coarse uniform grid, bilinear upsample."""
    coarse = rng.uniform(0.0, 1.0, size=(grid, grid))
    ys = np.linspace(0, grid - 1, h)
    xs = np.linspace(0, grid - 1, w)
    y0 = np.clip(ys.astype(int), 0, grid - 2)
    x0 = np.clip(xs.astype(int), 0, grid - 2)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    c00 = coarse[y0][:, x0]
    c01 = coarse[y0][:, x0 + 1]
    c10 = coarse[y0 + 1][:, x0]
    c11 = coarse[y0 + 1][:, x0 + 1]
    return (c00 * (1 - fy) * (1 - fx) + c01 * (1 - fy) * fx + c10 * fy * (1 - fx) + c11 * fy * fx)


def _shape_mask(kind: str, box: tuple, h: int, w: int) -> np.ndarray:
    x0, y0, x1, y1 = box
    yy, xx = np.mgrid[0:h, 0:w]
    yc = yy + 0.5
    xc = xx + 0.5
    if kind == "rectangle":
        return (xc >= x0) & (xc < x1) & (yc >= y0) & (yc < y1)
    if kind == "circle":
        r = (x1 - x0) / 2.0
        cx = (x0 + x1) / 2.0
        cy = (y0 + y1) / 2.0
        return (xc - cx) ** 2 + (yc - cy) ** 2 <= r * r
    if kind == "triangle":
        # isoceles, apex at top-center of the box
        ax, ay = (x0 + x1) / 2.0, y0
        bx, by = x0, y1
        cx_, cy_ = x1, y1

        def side(px, py, qx, qy):
            return (qx - px) * (yc - py) - (qy - py) * (xc - px)

        d1 = side(ax, ay, bx, by)
        d2 = side(bx, by, cx_, cy_)
        d3 = side(cx_, cy_, ax, ay)
        return ((d1 >= 0) & (d2 >= 0) & (d3 >= 0)) | ((d1 <= 0) & (d2 <= 0) & (d3 <= 0))
    raise ValueError(f"unknown shape {kind!r}")


def generate_scene(seed: int, index: int, cfg: SceneConfig | None = None) -> SceneSample:
    cfg = cfg or SceneConfig()
    h, w = cfg.height, cfg.width
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), int(index))))

    img = np.empty((3, h, w), dtype=np.float64)
    for c in range(3):
        img[c] = cfg.bg_lo + (cfg.bg_hi - cfg.bg_lo) * _bilinear_field(rng, 5, h, w)

    n_obj = int(rng.integers(cfg.min_objects, cfg.max_objects + 1))
    boxes: list[tuple] = []
    max_side = min(40, h // 2)
    for _ in range(n_obj):
        kind = SHAPES[int(rng.integers(0, len(SHAPES)))]
        box = None
        lo_side, hi_side = cfg.min_side, max_side
        for attempt in range(300):
            if kind == "circle":
                s = float(rng.uniform(lo_side, hi_side))
                bw = bh = s
            else:
                bw = float(rng.uniform(lo_side, hi_side))
                bh = float(rng.uniform(lo_side, hi_side))
            x0 = float(rng.uniform(0, w - bw))
            y0 = float(rng.uniform(0, h - bh))
            cand = (x0, y0, x0 + bw, y0 + bh)
            if boxes and iou_matrix(np.array([cand]), np.array(boxes)).max() > cfg.max_iou:
                if attempt and attempt % 60 == 0:
                    hi_side = max(lo_side + 1, hi_side * 0.8)  # ease packing
                continue
            box = cand
            break
        if box is None:
            raise RuntimeError(f"scene ({seed},{index}): could not place object {len(boxes) + 1}")
        fill = rng.uniform(cfg.fill_lo, cfg.fill_hi, size=3)
        mask = _shape_mask(kind, box, h, w)
        img[:, mask] = fill[:, None]
        boxes.append(box)

    return SceneSample(image=img.astype(np.float32), boxes=np.array(boxes, dtype=np.float64), index=index)


def generate_corpus(n: int, seed: int, cfg: SceneConfig | None = None) -> list[SceneSample]:
    if n < 1:
        raise ValueError("corpus size must be >= 1")
    return [generate_scene(seed, i, cfg) for i in range(n)]


def build_pairs(corpus: list[SceneSample], seed: int, params_fn=sample_params) -> list[PairedSample]:
    """Attach a synthesized dark member to each scene. Geometry is untouched:
    the dark member keeps the exact ground-truth boxes. params_fn maps a
    per-sample seed to DarkIspParams; the default draws from the training
    degradation ranges."""
    if not corpus:
        raise ValueError("build_pairs: empty corpus")
    out = []
    for sample in corpus:
        p = params_fn(derive_sample_seed(seed, sample.index))
        dark = synthesize_low_light(sample.image, p).astype(np.float32)
        out.append(
            PairedSample(well_lit=sample.image, dark=dark, boxes=sample.boxes.copy(), params=p, index=sample.index)
        )
    return out
