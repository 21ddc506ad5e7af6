"""PNG emitters for qualitative inspection: scene pairs, decompositions,
decoded reflectance, and g_f feature-channel grids."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def to_uint8(img: np.ndarray) -> np.ndarray:
    """[3,H,W] or [H,W] float in [0,1] to HWC/HW uint8."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr.transpose(1, 2, 0)
    return (np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_image(img: np.ndarray, path) -> None:
    Image.fromarray(to_uint8(img)).save(Path(path))


def save_feature_grid(features: np.ndarray, path, cols: int = 4, pad: int = 2) -> None:
    """[C,H,W] activations to one grid PNG, each channel min-max normalized."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 3:
        raise ValueError(f"feature grid expects [C,H,W], got {f.shape}")
    c, h, w = f.shape
    rows = (c + cols - 1) // cols
    canvas = np.zeros((rows * (h + pad) - pad, cols * (w + pad) - pad))
    for i in range(c):
        ch = f[i]
        lo, hi = ch.min(), ch.max()
        norm = (ch - lo) / (hi - lo) if hi > lo else np.zeros_like(ch)
        r, col = divmod(i, cols)
        canvas[r * (h + pad) : r * (h + pad) + h, col * (w + pad) : col * (w + pad) + w] = norm
    save_image(canvas, path)


def save_boxes_overlay(img: np.ndarray, boxes: np.ndarray, path, value=(1.0, 0.1, 0.1)) -> None:
    """Draw 1px box outlines onto a copy of [3,H,W] and save."""
    out = np.asarray(img, dtype=np.float64).copy()
    h, w = out.shape[-2:]
    for x0, y0, x1, y1 in np.asarray(boxes, dtype=np.float64).reshape(-1, 4):
        xi0, yi0 = int(max(0, round(x0))), int(max(0, round(y0)))
        xi1, yi1 = int(min(w - 1, round(x1))), int(min(h - 1, round(y1)))
        for c in range(3):
            out[c, yi0, xi0 : xi1 + 1] = value[c]
            out[c, yi1, xi0 : xi1 + 1] = value[c]
            out[c, yi0 : yi1 + 1, xi0] = value[c]
            out[c, yi0 : yi1 + 1, xi1] = value[c]
    save_image(out, path)
