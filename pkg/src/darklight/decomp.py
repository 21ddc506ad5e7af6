"""Retinex decomposition net: trained once on synthetic well-lit/dark pairs,
then frozen to emit reflectance and illumination pseudo ground truth.

The net never ships gradients to the detector; it exists so the detector's
reflectance decoder has something honest to regress.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import metrics, nn
from . import tensor as T
from .config import DecompNetConfig, LossWeights
from .tensor import Tape, Tensor

SMOOTH_EDGE_WEIGHT = 10.0  # exponent weight on reflectance edges in L_smooth
LUM_PRIOR_EPS = 1e-3  # keeps logit(luminance) finite on saturated pixels


def luminance_logit(img: np.ndarray) -> np.ndarray:
    """Channel-mean luminance of [*,3,H,W], mapped through the logit so it can
    seed a sigmoid head at exactly that luminance. Constant w.r.t. weights."""
    lum = np.clip(img.mean(axis=-3, keepdims=True), LUM_PRIOR_EPS, 1.0 - LUM_PRIOR_EPS)
    return np.log(lum / (1.0 - lum))


@dataclass
class DecompositionPair:
    """Reflectance [*,3,H,W] in (0,1) and illumination [*,1,H,W] in (0,1)."""

    reflectance: object
    illumination: object


class DecompNet(nn.Module):
    """Shared relu conv trunk, two sigmoid heads (3-ch reflectance, 1-ch
    illumination). All convs are 3x3, stride 1, padding 1, so outputs align
    with the input pixel grid at any size >= 8.

    The illumination head carries a parameter-free luminance prior: the
    input's channel-mean luminance is added to the head's logits. Plain
    reconstruction admits a degenerate optimum (illumination identically 1,
    reflectance = the image) in which nothing absorbs the lighting; seeding
    illumination at the observed luminance puts optimization in the basin
    where illumination tracks brightness and reflectance keeps the
    illumination-invariant content."""

    def __init__(self, cfg: DecompNetConfig | None = None, seed: int = 0, dtype=np.float64):
        self.cfg = cfg or DecompNetConfig()
        self.seed = seed
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        c = self.cfg.channels
        self.trunk = [nn.Conv2d(3, c, 3, padding=1, rng=rng, dtype=dtype)]
        self.trunk += [nn.Conv2d(c, c, 3, padding=1, rng=rng, dtype=dtype) for _ in range(self.cfg.depth - 1)]
        self.head_r = nn.Conv2d(c, 3, 3, padding=1, rng=rng, dtype=dtype)
        self.head_l = nn.Conv2d(c, 1, 3, padding=1, rng=rng, dtype=dtype)
        self.ready = False

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for i, layer in enumerate(self.trunk):
            out.update(nn.conv_names(f"trunk{i}", layer))
        out.update(nn.conv_names("head_r", self.head_r))
        out.update(nn.conv_names("head_l", self.head_l))
        return out

    def forward(self, img) -> DecompositionPair:
        """Differentiable decomposition of [3,H,W] or [B,3,H,W] in [0,1]."""
        x = T.as_tensor(img)
        prior = luminance_logit(x.data)
        for layer in self.trunk:
            x = T.relu(layer(x))
        r = T.sigmoid(self.head_r(x))
        l = T.sigmoid(self.head_l(x) + prior)
        return DecompositionPair(reflectance=r, illumination=l)

    def decompose(self, img: np.ndarray) -> DecompositionPair:
        """Frozen inference; plain arrays out, no tape, bit-stable per input."""
        if not self.ready:
            raise RuntimeError("decomposition net has no trained weights loaded")
        img = np.asarray(img, dtype=self.dtype)
        if img.ndim != 3 or img.shape[0] != 3:
            raise ValueError(f"decompose expects [3,H,W], got shape {img.shape}")
        pair = self.forward(img)
        return DecompositionPair(reflectance=pair.reflectance.data, illumination=pair.illumination.data)

    def load(self, path) -> dict:
        meta = super().load(path)
        self.ready = True
        return meta


def smoothness_loss(illum, refl) -> Tensor:
    """Edge-aware total variation: illumination gradients are cheap where the
    reflectance has edges, expensive where it is flat."""
    gx_l, gy_l = metrics.spatial_gradient(illum)
    gx_r, gy_r = metrics.spatial_gradient(refl)
    ch_axis = refl.ndim - 3  # channel axis of [*,3,H,W]
    wx = T.exp(-SMOOTH_EDGE_WEIGHT * T.mean_axis(T.absolute(gx_r), axis=ch_axis))
    wy = T.exp(-SMOOTH_EDGE_WEIGHT * T.mean_axis(T.absolute(gy_r), axis=ch_axis))
    return T.tmean(T.absolute(gx_l) * wx + T.absolute(gy_l) * wy)


def decomposition_loss(pair_n: DecompositionPair, pair_l: DecompositionPair, img_n, img_l,
                       w: LossWeights, parts: dict | None = None) -> Tensor:
    """recon + lambda_smooth * smooth + lambda_ir * ir on one decomposed pair.

    pair_n belongs to the well-lit image img_n, pair_l to the dark img_l.
    Only matched reconstructions enter recon; the reflectances of the two
    members are tied together by the invariance term ir.
    """
    r_n, l_n = T.as_tensor(pair_n.reflectance), T.as_tensor(pair_n.illumination)
    r_l, l_l = T.as_tensor(pair_l.reflectance), T.as_tensor(pair_l.illumination)
    img_n, img_l = T.as_tensor(img_n), T.as_tensor(img_l)
    if r_n.shape != r_l.shape or r_n.shape[-2:] != img_n.shape[-2:]:
        raise ValueError(
            f"decomposition_loss: misaligned shapes r_n {r_n.shape} r_l {r_l.shape} img {img_n.shape}"
        )

    recon = metrics.mae(r_l * l_l, img_l) + metrics.mae(r_n * l_n, img_n)
    ir = metrics.mse(r_l, r_n) + (1.0 - metrics.ssim(r_l, r_n))
    smooth = smoothness_loss(l_n, r_n) + smoothness_loss(l_l, r_l)
    if parts is not None:
        parts["L_recon"] = recon.item()
        parts["L_smooth"] = smooth.item()
        parts["L_ir"] = ir.item()
    return recon + w.lambda_smooth * smooth + w.lambda_ir * ir


def _pair_arrays(sample) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(sample, "well_lit"):
        return sample.well_lit, sample.dark
    a, b = sample[0], sample[1]
    return a, b


def pretrain(corpus, cfg: DecompNetConfig | None = None, epochs: int = 10, lr: float = 1e-3,
             seed: int = 0, batch_pairs: int = 8, patch: int = 32, dtype=np.float32,
             log_fn=None) -> tuple[DecompNet, list[float]]:
    """Train a DecompNet from scratch on (well-lit, dark) pairs; freeze it.

    Each epoch visits every pair once, on one random crop per visit (the same
    crop for both members, keeping the pair pixel-aligned). Returns the ready
    net and per-epoch mean losses. epochs = 0 returns the initialization.
    """
    if not corpus:
        raise ValueError("pretrain: empty corpus")
    net = DecompNet(cfg, seed=seed, dtype=dtype)
    pairs = [_pair_arrays(s) for s in corpus]
    h, w_ = pairs[0][0].shape[-2:]
    patch = min(patch or h, h)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xD0)))
    opt = nn.Adam(net.parameters(), lr=lr)
    weights = LossWeights()
    history: list[float] = []

    for epoch in range(epochs):
        order = rng.permutation(len(pairs))
        epoch_losses = []
        for start in range(0, len(order), batch_pairs):
            idx = order[start : start + batch_pairs]
            ims_n, ims_l = [], []
            for i in idx:
                a, b = pairs[i]
                y = rng.integers(0, h - patch + 1)
                x = rng.integers(0, w_ - patch + 1)
                ims_n.append(a[:, y : y + patch, x : x + patch])
                ims_l.append(b[:, y : y + patch, x : x + patch])
            img_n = np.stack(ims_n).astype(dtype)
            img_l = np.stack(ims_l).astype(dtype)
            with Tape():
                both = net.forward(np.concatenate([img_n, img_l], axis=0))
                k = len(idx)
                pair_n = DecompositionPair(
                    T.take_range(both.reflectance, 0, k), T.take_range(both.illumination, 0, k)
                )
                pair_l = DecompositionPair(
                    T.take_range(both.reflectance, k, 2 * k), T.take_range(both.illumination, k, 2 * k)
                )
                loss = decomposition_loss(pair_n, pair_l, img_n, img_l, weights)
                if not np.isfinite(loss.item()):
                    raise RuntimeError(
                        f"pretrain diverged: non-finite loss at epoch {epoch}, batch start {start}"
                    )
                net.zero_grad()
                T.backward(loss)
            opt.step()
            epoch_losses.append(loss.item())
        history.append(float(np.mean(epoch_losses)))
        if log_fn:
            log_fn(epoch, history[-1])
    net.ready = True
    return net, history
