"""Training orchestration and evaluation at desk scale.

Owns the benchmark (seeded corpora and pairs), the per-step training loop
with its JSON-lines loss log, the mAP evaluation, the component-ablation
ladder, and the feature-channel alignment diagnostic.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import decomp as decomp_mod
from . import dainet
from . import tensor as T
from .config import ABLATION_ROWS, LADDER_ROWS, AblationFlags, TrainConfig
from .decomp import DecompNet, DecompositionPair
from .evalmap import EvalReport, evaluate_map
from .isp import sample_target_params
from .nn import Adam
from .scenes import PairedSample, build_pairs, generate_corpus
from .tensor import Tape, Tensor

TRAIN_SCENE_SEED = 0x5CE
TRAIN_PAIR_SEED = 0x9A1B
TEST_SCENE_SEED = 0x7E57
TEST_PAIR_SEED = 0xDA2C  # disjoint stream from training pair degradations

LOG_KEYS = ("step", "L_det", "L_mfa", "L_rc", "L_ref", "L_recon", "L_smooth", "L_ir", "total")


@dataclass
class ChannelStats:
    """Per-channel mean |g_f activation| over a well-lit and a dark set, and
    the Pearson correlation between the two profiles."""

    well_lit: np.ndarray
    dark: np.ndarray
    alignment: float


@dataclass
class TrainResult:
    model: dainet.DAINet
    loss_log: list
    config: TrainConfig


def benchmark_corpora(cfg: TrainConfig) -> tuple[list[PairedSample], list[PairedSample]]:
    """Training pairs and dark-test pairs. The test set stands in for an
    unseen dark target domain: its scene geometry and degradation seeds live
    in streams disjoint from training, and its darkness is drawn from
    sample_target_params rather than the training synthesis ranges."""
    train_scenes = generate_corpus(cfg.n_train, seed=TRAIN_SCENE_SEED, cfg=cfg.scene)
    train_pairs = build_pairs(train_scenes, seed=TRAIN_PAIR_SEED)
    test_scenes = generate_corpus(cfg.n_test, seed=TEST_SCENE_SEED, cfg=cfg.scene)
    test_pairs = build_pairs(test_scenes, seed=TEST_PAIR_SEED, params_fn=sample_target_params)
    return train_pairs, test_pairs


class PseudoGtCache:
    """Frozen decompositions of pair members, keyed by scene index. The
    decomposition net never changes during detector training, so entries can
    be shared across every configuration trained on the same corpus."""

    def __init__(self, net: DecompNet, dtype=np.float32):
        self.net = net
        self.dtype = dtype
        self._store: dict[int, tuple] = {}

    def get(self, sample: PairedSample) -> tuple:
        hit = self._store.get(sample.index)
        if hit is None:
            pn = self.net.decompose(sample.well_lit.astype(self.net.dtype))
            pl = self.net.decompose(sample.dark.astype(self.net.dtype))
            hit = (
                pn.reflectance.astype(self.dtype),
                pn.illumination.astype(self.dtype),
                pl.reflectance.astype(self.dtype),
                pl.illumination.astype(self.dtype),
            )
            self._store[sample.index] = hit
        return hit


def _log_line(step: int, parts: dict, total: float) -> dict:
    line = {
        "step": step,
        "L_det": parts.get("det", 0.0),
        "L_mfa": parts.get("mfa", 0.0),
        "L_rc": parts.get("rc", 0.0),
        "L_ref": parts.get("ref", 0.0),
        "L_recon": parts.get("L_recon", 0.0),
        "L_smooth": parts.get("L_smooth", 0.0),
        "L_ir": parts.get("L_ir", 0.0),
        "total": total,
    }
    if "penalty" in parts:
        line["L_p"] = parts["penalty"]
    return line


def train(cfg: TrainConfig, decomp_net: DecompNet | None = None,
          train_pairs: list[PairedSample] | None = None,
          pseudo_cache: PseudoGtCache | None = None,
          log_path=None, dtype=np.float32) -> TrainResult:
    """Train one configuration. Deterministic in cfg.seed given fixed inputs.

    Detection supervision follows the ablation flags: the baseline trains on
    the well-lit member and the disp-only row trains directly on the dark
    member. Decode configurations keep detection supervision on the well-lit
    member (training detection directly on synthesized dark images is what
    the disp row shows to hurt); their dark member shapes the backbone only
    through the decomposition and alignment branches.

    The decode and alignment branches join after cfg.warmup_steps
    detection-only steps, standing in for the pretrained detector these
    branches normally attach to. Rows without such branches are unaffected.
    """
    flags = cfg.flags
    if flags.decode and decomp_net is None:
        raise ValueError("decode configurations need a pretrained decomposition net")
    if train_pairs is None:
        train_pairs, _ = benchmark_corpora(cfg)
    if flags.decode and pseudo_cache is None:
        pseudo_cache = PseudoGtCache(decomp_net, dtype=dtype)

    model = dainet.DAINet(
        backbone=cfg.backbone,
        decoder=cfg.decoder,
        with_reflectance="r" in flags.decode,
        with_illumination="l" in flags.decode,
        seed=cfg.seed,
        dtype=dtype,
    )
    opt = Adam(model.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xB0)))
    w = cfg.weights
    b = cfg.batch_pairs
    loss_log: list[dict] = []
    log_file = open(log_path, "w") if log_path else None
    snapshot = {k: v.copy() for k, v in model.state_arrays().items()}

    def run_step(batch, imgs_n, imgs_l, boxes, extras):
        # One optimizer step's forward and backward. Everything tensor-shaped
        # stays local so the step's whole graph is released on return.
        parts_t: dict[str, Tensor] = {}
        parts_f: dict[str, float] = {}
        decode_now = bool(flags.decode) and extras
        mfa_now = bool(flags.mfa) and extras
        need_both = decode_now or mfa_now
        with Tape():
            if need_both:
                f_all, raw_all = model.forward_split(np.concatenate([imgs_n, imgs_l]))
                f_n, f_l = T.take_range(f_all, 0, b), T.take_range(f_all, b, 2 * b)
                if flags.disp and not flags.decode:
                    det_raw = T.take_range(raw_all, b, 2 * b)  # dark member
                else:
                    det_raw = T.take_range(raw_all, 0, b)  # well-lit member
                parts_t["det"] = dainet.detection_loss(det_raw, boxes, model.stride)
            elif flags.disp and not flags.decode:
                _, raw_l = model.forward_split(imgs_l)
                parts_t["det"] = dainet.detection_loss(raw_l, boxes, model.stride)
            else:
                _, raw_n = model.forward_split(imgs_n)
                parts_t["det"] = dainet.detection_loss(raw_n, boxes, model.stride)

            if decode_now:
                pgt = [pseudo_cache.get(s) for s in batch]
                r_hat_n = np.stack([p[0] for p in pgt])
                l_hat_n = np.stack([p[1] for p in pgt])
                r_hat_l = np.stack([p[2] for p in pgt])
                l_hat_l = np.stack([p[3] for p in pgt])

                ref_total = None
                r1_n = r1_l = None
                il_n = il_l = None
                if "r" in flags.decode:
                    r1 = model.reflectance_decode(f_all)
                    r1_n, r1_l = T.take_range(r1, 0, b), T.take_range(r1, b, 2 * b)
                    ref_total = dainet.ref_loss(r1_n, r_hat_n) + dainet.ref_loss(r1_l, r_hat_l)
                if "l" in flags.decode:
                    il = model.illumination_decode(f_all)
                    il_n, il_l = T.take_range(il, 0, b), T.take_range(il, b, 2 * b)
                    l_term = dainet.ref_loss(il_n, l_hat_n) + dainet.ref_loss(il_l, l_hat_l)
                    ref_total = l_term if ref_total is None else ref_total + l_term
                parts_t["ref"] = ref_total

                pair_n = DecompositionPair(
                    reflectance=r1_n if r1_n is not None else Tensor(r_hat_n),
                    illumination=il_n if il_n is not None else Tensor(l_hat_n),
                )
                pair_l = DecompositionPair(
                    reflectance=r1_l if r1_l is not None else Tensor(r_hat_l),
                    illumination=il_l if il_l is not None else Tensor(l_hat_l),
                )
                parts_t["decom"] = decomp_mod.decomposition_loss(
                    pair_n, pair_l, imgs_n, imgs_l, w, parts=parts_f
                )

                if flags.rc or flags.penalty:
                    i2_l, i2_n = dainet.interchange_reconstruct(r1_n, r1_l, l_hat_n, l_hat_l)
                    if flags.penalty:
                        parts_t["penalty"] = dainet.penalty_loss(i2_l, i2_n, imgs_l, imgs_n)
                    if flags.rc:
                        f2, _ = model.forward_split(T.concat0([i2_l, i2_n]))
                        r2 = model.reflectance_decode(f2)
                        r2_l, r2_n = T.take_range(r2, 0, b), T.take_range(r2, b, 2 * b)
                        state = dainet.InterchangeState(
                            r1_n=r1_n, r1_l=r1_l, l_hat_n=l_hat_n, l_hat_l=l_hat_l,
                            i2_n=i2_n, i2_l=i2_l, r2_n=r2_n, r2_l=r2_l,
                        )
                        parts_t["rc"] = dainet.rc_loss(state)

            if mfa_now:
                parts_t["mfa"] = dainet.mfa_loss(f_n, f_l, mode=flags.mfa)

            total = dainet.total_loss(parts_t, w)
            model.zero_grad()
            T.backward(total)
        for k, v in parts_t.items():
            parts_f[k] = v.item()
        return parts_f, total.item()

    try:
        for step in range(cfg.steps):
            idx = rng.integers(0, len(train_pairs), size=b)
            batch = [train_pairs[i] for i in idx]
            imgs_n = np.stack([s.well_lit for s in batch]).astype(dtype)
            imgs_l = np.stack([s.dark for s in batch]).astype(dtype)
            boxes = [s.boxes for s in batch]

            try:
                parts_f, total_f = run_step(batch, imgs_n, imgs_l, boxes,
                                            extras=step >= cfg.warmup_steps)
            except FloatingPointError as e:
                model.load_state_arrays(snapshot)
                raise RuntimeError(f"training aborted at step {step}: {e}; weights restored "
                                   f"to the last good snapshot") from e
            opt.step()

            line = _log_line(step, parts_f, total_f)
            loss_log.append(line)
            if log_file:
                log_file.write(json.dumps(line) + "\n")
            if step % 25 == 0:
                snapshot = {k: v.copy() for k, v in model.state_arrays().items()}
    finally:
        if log_file:
            log_file.close()
    return TrainResult(model=model, loss_log=loss_log, config=cfg)


def evaluate(model: dainet.DAINet, images: list[np.ndarray], gt_boxes: list[np.ndarray],
             iou_thresh: float = 0.5, batch: int = 25) -> EvalReport:
    """mAP of the plain detection path (no decoder, no tape) on a dataset."""
    if len(images) == 0:
        raise ValueError("evaluate: empty dataset")
    h, w = images[0].shape[-2:]
    preds = []
    for lo in range(0, len(images), batch):
        chunk = np.stack(images[lo : lo + batch]).astype(model.dtype)
        _, raw = model.forward_split(chunk)
        for i in range(raw.shape[0]):
            boxes, scores = dainet.decode_detections(raw.data[i], model.stride, image_hw=(h, w))
            preds.append((boxes, scores))
    return evaluate_map(preds, gt_boxes, iou_thresh=iou_thresh)


def evaluate_dark(model: dainet.DAINet, test_pairs: list[PairedSample], iou_thresh: float = 0.5) -> EvalReport:
    return evaluate(model, [s.dark for s in test_pairs], [s.boxes for s in test_pairs], iou_thresh)


def channel_stats(model: dainet.DAINet, well_lit: list[np.ndarray], dark: list[np.ndarray],
                  batch: int = 32) -> ChannelStats:
    """Mean |g_f activation| per channel for each set, plus their Pearson
    correlation (1.0 = the dark domain excites the channels exactly like the
    well-lit domain, the alignment the method is after)."""
    if len(well_lit) < 32 or len(dark) < 32:
        raise ValueError("channel_stats needs at least 32 images per set")

    def profile(images):
        acc = None
        for lo in range(0, len(images), batch):
            chunk = np.stack(images[lo : lo + batch]).astype(model.dtype)
            f = model.features(chunk)
            s = np.abs(f.data).mean(axis=(0, 2, 3)) * len(chunk)
            acc = s if acc is None else acc + s
        return acc / len(images)

    p_n = profile(well_lit)
    p_l = profile(dark)
    corr = float(np.corrcoef(p_n, p_l)[0, 1])
    return ChannelStats(well_lit=p_n, dark=p_l, alignment=corr)


def run_ablation(seeds: list[int], rows: tuple = LADDER_ROWS, cfg_base: TrainConfig | None = None,
                 decomp_net: DecompNet | None = None, csv_path=None, log_dir=None,
                 progress=None, on_model=None) -> list[dict]:
    """Train every named configuration on identical corpora per seed.

    Returns one dict per configuration with per-seed mAPs, mean and std.
    A configuration crash is recorded in its row; remaining rows continue.
    on_model(name, seed, model, test_pairs), when given, sees each trained
    model before it is discarded (e.g. for feature diagnostics).
    """
    if len(seeds) < 3:
        raise ValueError("run_ablation needs at least 3 seeds")
    cfg_base = cfg_base or TrainConfig()
    train_pairs, test_pairs = benchmark_corpora(cfg_base)
    if decomp_net is None:
        decomp_net = default_decomp_net(train_pairs)

    results: dict[str, dict] = {
        name: {"configuration": name, "maps": [], "error": ""} for name in rows
    }
    cache = PseudoGtCache(decomp_net)  # corpus-keyed, valid for every seed and row
    for seed in seeds:
        for name in rows:
            flags = ABLATION_ROWS[name]
            cfg = _with(cfg_base, seed=seed, flags=flags)
            log_path = Path(log_dir) / f"{name}_seed{seed}.jsonl" if log_dir else None
            try:
                res = train(cfg, decomp_net=decomp_net, train_pairs=train_pairs,
                            pseudo_cache=cache, log_path=log_path)
                report = evaluate_dark(res.model, test_pairs)
                results[name]["maps"].append(report.map_50)
                if on_model:
                    on_model(name, seed, res.model, test_pairs)
                if progress:
                    progress(name, seed, report.map_50)
            except Exception as e:  # noqa: BLE001 - record and continue per contract
                results[name]["error"] = f"seed {seed}: {type(e).__name__}: {e}"
                if progress:
                    progress(name, seed, None)

    table = []
    for name in rows:
        maps = results[name]["maps"]
        table.append(
            {
                "configuration": name,
                "mean_map": float(np.mean(maps)) if maps else float("nan"),
                "std_map": float(np.std(maps)) if maps else float("nan"),
                "maps": [float(m) for m in maps],
                "error": results[name]["error"],
            }
        )
    if csv_path:
        write_ablation_csv(table, csv_path, seeds)
    return table


def write_ablation_csv(table: list[dict], path, seeds: list[int]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["configuration", "mean_map", "std_map"] + [f"map_seed{s}" for s in seeds])
        for row in table:
            maps = row["maps"] + [""] * (len(seeds) - len(row["maps"]))
            writer.writerow([row["configuration"], f"{row['mean_map']:.6f}", f"{row['std_map']:.6f}"]
                            + [f"{m:.6f}" if m != "" else "" for m in maps])


def default_decomp_net(train_pairs: list[PairedSample], seed: int = 123,
                       cache_path=None) -> DecompNet:
    """Pretrain (or load) the shared frozen decomposition net for a corpus."""
    if cache_path and Path(cache_path).exists():
        net = DecompNet(seed=seed, dtype=np.float32)
        net.load(cache_path)
        return net
    net, _ = decomp_mod.pretrain(train_pairs, seed=seed)
    if cache_path:
        net.save(cache_path, meta={"seed": seed, "pairs": len(train_pairs)})
    return net


def _with(cfg: TrainConfig, **kw) -> TrainConfig:
    import dataclasses

    return dataclasses.replace(cfg, **kw)
