"""Image-domain measures shared by every loss: SSIM, MAE/MSE, forward-difference
gradients, softmax normalization and the (symmetric) KL divergence.

All functions run on `tensor.Tensor` and stay differentiable end to end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor, as_tensor


@dataclass(frozen=True)
class SsimConfig:
    """Gaussian-window SSIM constants.

    c1, c2 derive from the dynamic range D as (k1*D)^2 and (k2*D)^2; images
    here live in [0, 1] so D = 1.
    """

    window: int = 11
    sigma: float = 1.5
    c1: float = (0.01 * 1.0) ** 2
    c2: float = (0.03 * 1.0) ** 2

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError(f"ssim window must be odd and >= 3, got {self.window}")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("ssim stabilization constants must be > 0")

    @staticmethod
    def from_range(window: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03, d: float = 1.0):
        return SsimConfig(window=window, sigma=sigma, c1=(k1 * d) ** 2, c2=(k2 * d) ** 2)


def gaussian_window(window: int, sigma: float, dtype=np.float64) -> np.ndarray:
    """Normalized 2D Gaussian, the outer product of the 1D profile."""
    half = (window - 1) / 2.0
    x = np.arange(window, dtype=np.float64) - half
    g1 = np.exp(-(x * x) / (2.0 * sigma * sigma))
    g1 /= g1.sum()
    return np.outer(g1, g1).astype(dtype)


def _flatten_channels(img: Tensor) -> tuple[Tensor, int, int]:
    """View any of [H,W], [C,H,W], [B,C,H,W] as a [N,1,H,W] channel stack."""
    if img.ndim == 2:
        n = 1
    elif img.ndim in (3, 4):
        n = int(np.prod(img.shape[:-2]))
    else:
        raise ValueError(f"expected rank 2..4 image tensor, got shape {img.shape}")
    h, w = img.shape[-2], img.shape[-1]
    return T.reshape(img, (n, 1, h, w)), h, w


def ssim(a, b, cfg: SsimConfig | None = None) -> Tensor:
    """Mean of the local SSIM map over all valid windows and channels.

    Inputs share a shape, values in [0,1]; returns a differentiable scalar
    in [-1, 1]. Windows are valid-position only (no padding).
    """
    a, b = as_tensor(a), as_tensor(b)
    cfg = cfg or SsimConfig()
    if a.shape != b.shape:
        raise ValueError(f"ssim: shape mismatch {a.shape} vs {b.shape}")
    h, w = a.shape[-2], a.shape[-1]
    if h < cfg.window or w < cfg.window:
        raise ValueError(f"ssim: image {h}x{w} smaller than window {cfg.window}")

    xa, _, _ = _flatten_channels(a)
    xb, _, _ = _flatten_channels(b)
    g = Tensor(gaussian_window(cfg.window, cfg.sigma, dtype=a.dtype)[None, None])

    def filt(t):
        return T.conv2d(t, g, stride=1, padding=0)

    mu_a = filt(xa)
    mu_b = filt(xb)
    mu_aa = filt(xa * xa)
    mu_bb = filt(xb * xb)
    mu_ab = filt(xa * xb)

    var_a = mu_aa - mu_a * mu_a
    var_b = mu_bb - mu_b * mu_b
    cov = mu_ab - mu_a * mu_b

    num = (2.0 * mu_a * mu_b + cfg.c1) * (2.0 * cov + cfg.c2)
    den = (mu_a * mu_a + mu_b * mu_b + cfg.c1) * (var_a + var_b + cfg.c2)
    return T.tmean(num / den)


def mae(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"mae: shape mismatch {a.shape} vs {b.shape}")
    return T.tmean(T.absolute(a - b))


def mse(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"mse: shape mismatch {a.shape} vs {b.shape}")
    d = a - b
    return T.tmean(d * d)


def spatial_gradient(img) -> tuple[Tensor, Tensor]:
    """Forward differences along width (gx) and height (gy).

    The trailing column/row is zero-padded so outputs keep the input shape.
    """
    img = as_tensor(img)
    if img.ndim < 2 or img.shape[-1] < 2 or img.shape[-2] < 2:
        raise ValueError(f"spatial_gradient needs H, W >= 2, got shape {img.shape}")
    gx = T.forward_diff(img, axis=img.ndim - 1)
    gy = T.forward_diff(img, axis=img.ndim - 2)
    return gx, gy


def softmax(v) -> Tensor:
    """Softmax over the last axis; max-shifted for stability."""
    v = as_tensor(v)
    shift = v - v.data.max(axis=-1, keepdims=True)
    e = T.exp(shift)
    denom = T.tsum(e) if v.ndim == 1 else _lastaxis_sum(e)
    return e / denom


def _lastaxis_sum(a: Tensor) -> Tensor:
    out = Tensor(a.data.sum(axis=-1, keepdims=True))

    def bwd(g):
        T._accum(a, np.broadcast_to(g, a.shape).astype(a.dtype, copy=False))

    return T._record(out, (a,), bwd)


def kl_divergence(p, q) -> Tensor:
    """Sum of p_i * ln(p_i / q_i) over probability vectors p, q."""
    p, q = as_tensor(p), as_tensor(q)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"kl_divergence: need equal-length vectors, got {p.shape} vs {q.shape}")
    if np.any(p.data <= 0) or np.any(q.data <= 0):
        raise ValueError("kl_divergence: entries must be > 0 (pre-smooth and renormalize)")
    for name, v in (("p", p), ("q", q)):
        s = float(v.data.sum())
        if abs(s - 1.0) > 1e-9:
            raise ValueError(f"kl_divergence: {name} sums to {s!r}, not 1 within 1e-9")
    return T.tsum(p * (T.log(p) - T.log(q)))
