"""Independent reference implementations used to check the library.

Everything here is deliberately written the slow, obvious way (nested loops,
scalar arithmetic, central finite differences) and never calls the code paths
under test. Tests freeze values produced by these oracles or compare against
them directly.
"""

from __future__ import annotations

import math

import numpy as np


# -- finite differences ----------------------------------------------------


def fd_gradients(fn, arrays, h: float = 1e-5):
    """Central-difference gradients of a scalar function of float64 arrays.

    fn(arrays) -> float. Returns one gradient array per input. O(2N) calls.
    """
    grads = []
    for a in arrays:
        a = np.asarray(a, dtype=np.float64)
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = fn(arrays)
            flat[i] = orig - h
            lo = fn(arrays)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * h)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric, floor: float = 1e-6) -> float:
    """Worst elementwise relative error between two gradient sets."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a = np.asarray(a, dtype=np.float64)
        n = np.asarray(n, dtype=np.float64)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


# -- convolution -----------------------------------------------------------


def conv2d_loop(x, w, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Nested-loop 2D cross-correlation. x [B,C,H,W] or [C,H,W], w [Co,Ci,k,k]."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    batched = x.ndim == 4
    if not batched:
        x = x[None]
    b, cin, h, wid = x.shape
    cout, _, k, _ = w.shape
    ho = (h + 2 * padding - k) // stride + 1
    wo = (wid + 2 * padding - k) // stride + 1
    xp = np.zeros((b, cin, h + 2 * padding, wid + 2 * padding))
    xp[:, :, padding : padding + h, padding : padding + wid] = x
    out = np.zeros((b, cout, ho, wo))
    for n in range(b):
        for co in range(cout):
            for oy in range(ho):
                for ox in range(wo):
                    acc = 0.0
                    for ci in range(cin):
                        for ky in range(k):
                            for kx in range(k):
                                acc += (
                                    xp[n, ci, oy * stride + ky, ox * stride + kx]
                                    * w[co, ci, ky, kx]
                                )
                    out[n, co, oy, ox] = acc
    return out if batched else out[0]


# -- SSIM ------------------------------------------------------------------


def gaussian_window_ref(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    c = (size - 1) / 2.0
    g = np.array([math.exp(-((i - c) ** 2) / (2.0 * sigma**2)) for i in range(size)])
    g = g / g.sum()
    return np.outer(g, g)


def ssim_reference(a, b, window: int = 11, sigma: float = 1.5,
                   c1: float = 1e-4, c2: float = 9e-4) -> float:
    """Mean SSIM over valid window positions, channels treated independently.

    Weighted moments per window, biased (E[x^2] - E[x]^2) variance.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    planes_a = a.reshape(-1, a.shape[-2], a.shape[-1])
    planes_b = b.reshape(-1, b.shape[-2], b.shape[-1])
    w = gaussian_window_ref(window, sigma)
    vals = []
    for pa, pb in zip(planes_a, planes_b):
        h, wid = pa.shape
        for oy in range(h - window + 1):
            for ox in range(wid - window + 1):
                wa = pa[oy : oy + window, ox : ox + window]
                wb = pb[oy : oy + window, ox : ox + window]
                mu_a = float(np.sum(w * wa))
                mu_b = float(np.sum(w * wb))
                ea2 = float(np.sum(w * wa * wa))
                eb2 = float(np.sum(w * wb * wb))
                eab = float(np.sum(w * wa * wb))
                var_a = ea2 - mu_a * mu_a
                var_b = eb2 - mu_b * mu_b
                cov = eab - mu_a * mu_b
                num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
                den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
                vals.append(num / den)
    return float(sum(vals) / len(vals))


# -- detection AP ----------------------------------------------------------


def _iou_scalar(a, b) -> float:
    x0 = max(a[0], b[0])
    y0 = max(a[1], b[1])
    x1 = min(a[2], b[2])
    y1 = min(a[3], b[3])
    inter = max(x1 - x0, 0.0) * max(y1 - y0, 0.0)
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


def ap_reference(predictions, ground_truth, iou_thresh: float = 0.5) -> float:
    """All-point interpolated AP via plain Python loops and sequential sums."""
    n_gt = sum(len(np.asarray(g).reshape(-1, 4)) for g in ground_truth)
    flat = []
    for img_idx, (boxes, scores) in enumerate(predictions):
        boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
        scores = np.asarray(scores, dtype=np.float64).reshape(-1)
        for bx, s in zip(boxes, scores):
            flat.append((float(s), img_idx, [float(v) for v in bx]))
    flat.sort(key=lambda t: -t[0])  # python sort is stable

    matched = {i: [False] * len(np.asarray(g).reshape(-1, 4)) for i, g in enumerate(ground_truth)}
    tp_flags = []
    for score, img_idx, box in flat:
        gt = np.asarray(ground_truth[img_idx], dtype=np.float64).reshape(-1, 4)
        best_iou, best_j = -1.0, -1
        for j in range(len(gt)):
            iou = -1.0 if matched[img_idx][j] else _iou_scalar(box, gt[j])
            if iou > best_iou:
                best_iou, best_j = iou, j
        if best_j >= 0 and best_iou >= iou_thresh:
            tp_flags.append(1)
            matched[img_idx][best_j] = True
        else:
            tp_flags.append(0)

    recalls, precisions = [0.0], [0.0]
    tp = 0
    for rank, flag in enumerate(tp_flags, start=1):
        tp += flag
        precisions.append(tp / rank)
        recalls.append(tp / n_gt if n_gt > 0 else 0.0)
    recalls.append(recalls[-1])
    precisions.append(0.0)
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    ap = 0.0
    for i in range(len(recalls) - 1):
        if recalls[i + 1] != recalls[i]:
            ap += (recalls[i + 1] - recalls[i]) * precisions[i + 1]
    return ap


# -- small direct helpers ----------------------------------------------------


def softmax_reference(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    e = np.exp(v - v.max())
    return e / e.sum()


def kl_reference(p, q) -> float:
    return float(sum(pi * (math.log(pi) - math.log(qi)) for pi, qi in zip(p, q)))
