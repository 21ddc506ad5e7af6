"""Dark-illuminated detector: a small grid detector whose backbone learns an
illumination-invariant (reflectance) representation from paired well-lit and
synthetic dark images.

The backbone's frontal segment g_f (first `split_index` conv blocks) feeds a
light reflectance decoder; the full backbone g_b feeds the detection head.
Training couples the two domains with:
  - a reflectance regression loss against frozen pseudo ground truth,
  - the decomposition loss reusing decoded reflectance with pseudo illumination,
  - an interchange step: rebuild each image from the other domain's
    reflectance, decompose again, and cohere first- and second-round
    reflectances (rc loss),
  - a mutual feature alignment loss between the two domains' g_f statistics.
At inference only the plain detection path runs.
"""

from __future__ import annotations

import numpy as np

from . import metrics, nn
from . import tensor as T
from .config import BackboneConfig, LossWeights, ReflectanceDecoderConfig
from .tensor import Tensor

PROB_FLOOR = 1e-4  # objectness probability clamp for the BCE terms
DIST_FLOOR = 1e-8  # channel-statistics clamp before normalization


def _block_plan(cfg: BackboneConfig) -> list[tuple[int, int, int, int, int]]:
    """(cin, cout, stride, kernel, padding) per block: channels double after
    every second block (capped at 4x base), downsampling at blocks 1, 2, 4.
    Downsampling blocks use an even 2x2 kernel without padding so the output
    extent is exactly half the input (the conv contract requires integral
    extents); stride-1 blocks use 3x3 with padding 1."""
    plan = []
    cin = 3
    for i in range(cfg.blocks):
        cout = cfg.base_channels * min(4, 2 ** (i // 2))
        if i in (1, 2, 4):
            plan.append((cin, cout, 2, 2, 0))
        else:
            plan.append((cin, cout, 1, 3, 1))
        cin = cout
    return plan


class DAINet(nn.Module):
    """Backbone + detection head + optional decode branches."""

    def __init__(self, backbone: BackboneConfig | None = None,
                 decoder: ReflectanceDecoderConfig | None = None,
                 with_reflectance: bool = True, with_illumination: bool = False,
                 seed: int = 0, dtype=np.float64):
        self.backbone_cfg = backbone or BackboneConfig()
        self.decoder_cfg = decoder or ReflectanceDecoderConfig()
        self.dtype = dtype
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0xDA1)))
        plan = _block_plan(self.backbone_cfg)
        self.blocks = [
            nn.Conv2d(ci, co, k, stride=s, padding=p, rng=rng, dtype=dtype) for ci, co, s, k, p in plan
        ]
        self.head = nn.Conv2d(plan[-1][1], 5, 1, rng=rng, dtype=dtype)
        self.stride = int(np.prod([s for _, _, s, _, _ in plan]))
        self.split_channels = plan[self.backbone_cfg.split_index - 1][1]
        self.split_stride = int(np.prod([s for _, _, s, _, _ in plan[: self.backbone_cfg.split_index]]))

        self.decoder_r = None
        self.decoder_l = None
        if with_reflectance:
            self.decoder_r = self._build_decoder(rng, out_channels=3)
        if with_illumination:
            self.decoder_l = self._build_decoder(rng, out_channels=1)

    def _build_decoder(self, rng, out_channels: int) -> list[nn.Conv2d]:
        c = self.split_channels
        k = self.decoder_cfg.kernel
        pad = k // 2
        layers = [nn.Conv2d(c, c, k, padding=pad, rng=rng, dtype=self.dtype)
                  for _ in range(self.decoder_cfg.depth - 1)]
        layers.append(nn.Conv2d(c, out_channels, k, padding=pad, rng=rng, dtype=self.dtype))
        return layers

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for i, b in enumerate(self.blocks):
            out.update(nn.conv_names(f"bb{i}", b))
        out.update(nn.conv_names("head", self.head))
        for tag, dec in (("dec_r", self.decoder_r), ("dec_l", self.decoder_l)):
            if dec is not None:
                for i, layer in enumerate(dec):
                    out.update(nn.conv_names(f"{tag}{i}", layer))
        return out

    def forward_split(self, img) -> tuple[Tensor, Tensor]:
        """One pass through the backbone; returns (g_f features, head raw).

        raw is [*, 5, H/stride, W/stride]: objectness logit plus box offsets
        (tx, ty, tw, th) in stride units.
        """
        x = T.as_tensor(img)
        f = None
        for i, block in enumerate(self.blocks):
            x = T.relu(block(x))
            if i + 1 == self.backbone_cfg.split_index:
                f = x
        return f, self.head(x)

    def features(self, img) -> Tensor:
        """g_f only: the frontal blocks up to the split."""
        x = T.as_tensor(img)
        for block in self.blocks[: self.backbone_cfg.split_index]:
            x = T.relu(block(x))
        return x

    def _decode_with(self, layers: list[nn.Conv2d], f: Tensor) -> Tensor:
        x = f
        for layer in layers[:-1]:
            x = T.relu(layer(x))
        x = T.upsample_nearest(x, self.split_stride)
        return T.sigmoid(layers[-1](x))

    def reflectance_decode(self, f: Tensor) -> Tensor:
        """g_f features to a full-resolution reflectance image in (0,1)."""
        if self.decoder_r is None:
            raise RuntimeError("model was built without a reflectance decoder")
        return self._decode_with(self.decoder_r, f)

    def illumination_decode(self, f: Tensor) -> Tensor:
        if self.decoder_l is None:
            raise RuntimeError("model was built without an illumination decoder")
        return self._decode_with(self.decoder_l, f)


# -- losses ---------------------------------------------------------------


def feature_distribution(f: Tensor) -> Tensor:
    """Per-sample channel distribution: spatial mean, floor, softmax.

    Statistics are carried in 64-bit regardless of the feature dtype so the
    result satisfies the strict sums-to-one contract of the KL divergence.
    """
    if f.ndim < 3 or f.shape[-3] == 0:
        raise ValueError(f"feature tensor needs [*,C,H,W] with C >= 1, got {f.shape}")
    v = T.cast(T.spatial_mean(f), np.float64)
    v = T.maximum_scalar(v, DIST_FLOOR)
    return metrics.softmax(v)


def mfa_loss(f_n: Tensor, f_l: Tensor, mode: str = "kl") -> Tensor:
    """Mutual alignment of the two domains' channel statistics.

    'kl' is the symmetric KL divergence of Eq-style alignment; 'l1'/'l2'
    swap the distance while keeping the same normalized distributions.
    Batched inputs are averaged over the batch.
    """
    f_n, f_l = T.as_tensor(f_n), T.as_tensor(f_l)
    if f_n.shape != f_l.shape:
        raise ValueError(f"mfa_loss: shape mismatch {f_n.shape} vs {f_l.shape}")
    p = feature_distribution(f_n)
    q = feature_distribution(f_l)
    if p.ndim == 1:
        rows = [(p, q)]
    else:
        rows = [(T.take_range(p, i, i + 1), T.take_range(q, i, i + 1)) for i in range(p.shape[0])]
        rows = [(T.reshape(a, (a.shape[-1],)), T.reshape(b, (b.shape[-1],))) for a, b in rows]
    terms = []
    for pi, qi in rows:
        if mode == "kl":
            terms.append(metrics.kl_divergence(pi, qi) + metrics.kl_divergence(qi, pi))
        elif mode == "l1":
            terms.append(T.tsum(T.absolute(pi - qi)))
        elif mode == "l2":
            d = pi - qi
            terms.append(T.tsum(d * d))
        else:
            raise ValueError(f"unknown mfa mode {mode!r}")
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total / float(len(terms))


def ref_loss(r: Tensor, r_hat) -> Tensor:
    """MAE plus structural dissimilarity against pseudo ground truth."""
    r, r_hat = T.as_tensor(r), T.as_tensor(r_hat)
    if r.shape != r_hat.shape:
        raise ValueError(f"ref_loss: shape mismatch {r.shape} vs {r_hat.shape}")
    return metrics.mae(r, r_hat) + (1.0 - metrics.ssim(r, r_hat))


def interchange_reconstruct(r1_n: Tensor, r1_l: Tensor, l_hat_n, l_hat_l) -> tuple[Tensor, Tensor]:
    """Rebuild each domain's image from the other domain's reflectance:
    i2_l = r1_n * l_hat_l, i2_n = r1_l * l_hat_n, clamped to [0,1] with a
    straight-through gradient."""
    i2_l = T.clamp01_st(T.as_tensor(r1_n) * T.as_tensor(l_hat_l))
    i2_n = T.clamp01_st(T.as_tensor(r1_l) * T.as_tensor(l_hat_n))
    return i2_l, i2_n


class InterchangeState:
    """Everything the interchange round produces, for the rc loss."""

    def __init__(self, r1_n, r1_l, l_hat_n, l_hat_l, i2_n=None, i2_l=None, r2_n=None, r2_l=None):
        self.r1_n, self.r1_l = r1_n, r1_l
        self.l_hat_n, self.l_hat_l = l_hat_n, l_hat_l
        self.i2_n, self.i2_l = i2_n, i2_l
        self.r2_n, self.r2_l = r2_n, r2_l


def rc_loss(state: InterchangeState) -> Tensor:
    """Coherence between rounds: the reflectance that built an image should
    come back out of it. Gradients flow through both decompositions."""
    if state.r2_n is None or state.r2_l is None:
        raise ValueError("rc_loss: second-round reflectances missing; run the redecomposition first")
    return metrics.mae(T.as_tensor(state.r1_n), T.as_tensor(state.r2_l)) + metrics.mae(
        T.as_tensor(state.r1_l), T.as_tensor(state.r2_n)
    )


def penalty_loss(i2_l, i2_n, img_l, img_n) -> Tensor:
    """Plain reconstruction penalty on the interchange images (the vanilla
    alternative to rc_loss)."""
    return metrics.mae(T.as_tensor(i2_l), T.as_tensor(img_l)) + metrics.mae(
        T.as_tensor(i2_n), T.as_tensor(img_n)
    )


def build_targets(gt_boxes, grid_h: int, grid_w: int, stride: int, dtype=np.float64):
    """Center-in-cell assignment. Returns (obj [gh,gw], box [4,gh,gw])."""
    obj = np.zeros((grid_h, grid_w), dtype=dtype)
    box = np.zeros((4, grid_h, grid_w), dtype=dtype)
    boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    if len(boxes) and ((boxes[:, 2] <= boxes[:, 0]).any() or (boxes[:, 3] <= boxes[:, 1]).any()):
        raise ValueError("degenerate ground-truth box (zero or negative area)")
    for x0, y0, x1, y1 in boxes:
        cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
        col = min(int(cx / stride), grid_w - 1)
        row = min(int(cy / stride), grid_h - 1)
        obj[row, col] = 1.0
        box[0, row, col] = cx / stride - col
        box[1, row, col] = cy / stride - row
        box[2, row, col] = (x1 - x0) / stride
        box[3, row, col] = (y1 - y0) / stride
    return obj, box


def detection_loss(raw: Tensor, gt_boxes, stride: int) -> Tensor:
    """BCE on objectness over all cells plus L1 on box offsets of positive
    cells. raw is [5,gh,gw] with gt_boxes one box list, or [B,5,gh,gw] with a
    list of B box lists; batched input averages over every cell of the batch.
    """
    raw = T.as_tensor(raw)
    batched = raw.ndim == 4
    if not batched:
        raw = T.reshape(raw, (1,) + raw.shape)
        gt_boxes = [gt_boxes]
    b, ch, gh, gw = raw.shape
    if ch != 5:
        raise ValueError(f"detection head must emit 5 channels, got {ch}")
    if len(gt_boxes) != b:
        raise ValueError(f"detection_loss: {b} images but {len(gt_boxes)} box lists")

    objs, boxes = [], []
    for gb in gt_boxes:
        o, bx = build_targets(gb, gh, gw, stride, dtype=raw.dtype)
        objs.append(o)
        boxes.append(bx)
    obj_t = np.stack(objs)[:, None]  # [B,1,gh,gw]
    box_t = np.stack(boxes)  # [B,4,gh,gw]
    pos = obj_t[:, 0] > 0  # [B,gh,gw]

    obj_logit = _channel_slice(raw, 0, 1)
    offsets = _channel_slice(raw, 1, 5)

    p = T.sigmoid(obj_logit)
    p = T.maximum_scalar(p, PROB_FLOOR)
    p = 1.0 - T.maximum_scalar(1.0 - p, PROB_FLOOR)
    bce = -T.tmean(Tensor(obj_t) * T.log(p) + Tensor(1.0 - obj_t) * T.log(1.0 - p))

    n_pos = int(pos.sum())
    if n_pos == 0:
        return bce
    mask = np.broadcast_to(pos[:, None], (b, 4, gh, gw)).astype(raw.dtype)
    diff = T.absolute(offsets - Tensor(box_t)) * Tensor(mask)
    l1 = T.tsum(diff) / float(4 * n_pos)
    return bce + l1


def _channel_slice(t: Tensor, lo: int, hi: int) -> Tensor:
    """Differentiable slice of the channel axis of [B,C,H,W]."""
    out = Tensor(t.data[:, lo:hi])

    def bwd(g):
        gi = np.zeros_like(t.data)
        gi[:, lo:hi] = g
        T._accum(t, gi)

    return T._record(out, (t,), bwd)


def total_loss(components: dict, w: LossWeights) -> Tensor:
    """det + lambda_mfa*mfa + lambda_rc*rc + ref + decom (+ lambda_rc*penalty
    in the ablation that uses the plain penalty). Missing entries count as 0;
    non-finite entries abort with the component named."""
    for name, v in components.items():
        val = v.item() if isinstance(v, Tensor) else float(v)
        if not np.isfinite(val):
            raise FloatingPointError(f"loss component {name} is non-finite ({val})")

    def get(name):
        return components.get(name)

    total = None

    def add(term):
        nonlocal total
        total = term if total is None else total + term

    if get("det") is not None:
        add(w.detection * get("det"))
    if get("mfa") is not None:
        add(w.lambda_mfa * get("mfa"))
    if get("rc") is not None:
        add(w.lambda_rc * get("rc"))
    if get("penalty") is not None:
        add(w.lambda_rc * get("penalty"))
    if get("ref") is not None:
        add(get("ref"))
    if get("decom") is not None:
        add(get("decom"))
    if total is None:
        raise ValueError("total_loss: no components given")
    return total


def decode_detections(raw: np.ndarray, stride: int, score_thresh: float = 0.01,
                      nms_iou: float = 0.5, image_hw: tuple | None = None):
    """Raw head output [5,gh,gw] to (boxes [n,4], scores [n]) after greedy NMS."""
    from .evalmap import nms

    raw = np.asarray(raw)
    if raw.ndim != 3 or raw.shape[0] != 5:
        raise ValueError(f"decode_detections expects [5,gh,gw], got {raw.shape}")
    _, gh, gw = raw.shape
    scores = 1.0 / (1.0 + np.exp(-raw[0]))
    rows, cols = np.nonzero(scores >= score_thresh)
    if len(rows) == 0:
        return np.zeros((0, 4)), np.zeros(0)
    s = scores[rows, cols]
    tx, ty, tw, th = (raw[i + 1, rows, cols] for i in range(4))
    cx = (cols + tx) * stride
    cy = (rows + ty) * stride
    bw = np.clip(tw, 0, None) * stride
    bh = np.clip(th, 0, None) * stride
    boxes = np.stack([cx - bw / 2, cy - bh / 2, cx + bw / 2, cy + bh / 2], axis=1)
    if image_hw is not None:
        h, w = image_hw
        boxes[:, 0::2] = np.clip(boxes[:, 0::2], 0, w)
        boxes[:, 1::2] = np.clip(boxes[:, 1::2], 0, h)
    keep = nms(boxes, s, iou_thresh=nms_iou)
    return boxes[keep], s[keep]
