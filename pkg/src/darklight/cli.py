"""Command line front end.

Subcommands:
  synth            darken a directory of PNGs, one params sidecar per image
  pretrain-decomp  train the decomposition net on (well-lit, dark) pairs
  train            train a detector configuration on the synthetic benchmark
  eval             mAP of a trained detector on the dark test set
  ablate           the component ladder over seeds, CSV out
  stats            feature-channel alignment diagnostic
  viz              qualitative PNGs: pairs, decompositions, feature grids

Every error exits nonzero with a one-line message on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import decomp as decomp_mod
from . import harness, viz
from .config import (
    ABLATION_ROWS,
    LADDER_ROWS,
    AblationFlags,
    BackboneConfig,
    DecompNetConfig,
    ReflectanceDecoderConfig,
    TrainConfig,
    train_config_from_json,
)
from .dainet import DAINet
from .decomp import DecompNet
from .isp import derive_sample_seed, sample_params, synthesize_low_light
from .scenes import build_pairs, generate_corpus

RC_SWEEP = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)


def _load_png(path: Path) -> np.ndarray:
    from PIL import Image

    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1)


def _iter_pngs(d: Path):
    files = sorted(p for p in d.iterdir() if p.suffix.lower() == ".png")
    if not files:
        raise FileNotFoundError(f"no PNG files in {d}")
    return files


def cmd_synth(args) -> int:
    src = Path(args.in_dir)
    dst = Path(args.out_dir)
    dst.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(_iter_pngs(src)):
        img = _load_png(f)
        p = sample_params(derive_sample_seed(args.seed, i))
        dark = synthesize_low_light(img, p)
        viz.save_image(dark, dst / f.name)
        (dst / (f.stem + ".json")).write_text(json.dumps(p.to_dict(), indent=1))
    print(f"synthesized {i + 1} images into {dst}")
    return 0


def _pairs_from_dirs(data: Path, seed: int):
    light_dir = data / "light"
    dark_dir = data / "dark"
    if light_dir.is_dir() and dark_dir.is_dir():
        pairs = []
        for f in _iter_pngs(light_dir):
            dark_f = dark_dir / f.name
            if not dark_f.exists():
                raise FileNotFoundError(f"missing dark counterpart for {f.name}")
            pairs.append((_load_png(f), _load_png(dark_f)))
        return pairs
    pairs = []
    for i, f in enumerate(_iter_pngs(data)):
        img = _load_png(f)
        p = sample_params(derive_sample_seed(seed, i))
        pairs.append((img, synthesize_low_light(img, p)))
    return pairs


def cmd_pretrain_decomp(args) -> int:
    data = Path(args.data)
    if data.exists():
        pairs = _pairs_from_dirs(data, args.seed)
    else:
        raise FileNotFoundError(f"data directory {data} does not exist")
    net, history = decomp_mod.pretrain(
        pairs, DecompNetConfig(), epochs=args.epochs, lr=args.lr, seed=args.seed
    )
    net.save(args.out, meta={"kind": "decomp", "seed": args.seed,
                             "channels": net.cfg.channels, "depth": net.cfg.depth})
    print(f"pretrained on {len(pairs)} pairs; epoch losses: " + ", ".join(f"{h:.4f}" for h in history))
    print(f"weights written to {args.out}")
    return 0


def load_decomp(path) -> DecompNet:
    import json as _json

    manifest = _json.loads(Path(str(path) + ".json").read_text())
    meta = manifest.get("meta", {})
    cfg = DecompNetConfig(channels=int(meta.get("channels", 32)), depth=int(meta.get("depth", 5)))
    net = DecompNet(cfg, dtype=np.float32)
    net.load(path)
    return net


def save_model(model: DAINet, cfg: TrainConfig, path) -> None:
    meta = {
        "kind": "dainet",
        "flags": dataclasses.asdict(cfg.flags),
        "backbone": dataclasses.asdict(cfg.backbone),
        "decoder": dataclasses.asdict(cfg.decoder),
        "seed": cfg.seed,
    }
    model.save(path, meta=meta)


def load_model(path) -> tuple[DAINet, AblationFlags]:
    manifest = json.loads(Path(str(path) + ".json").read_text())
    meta = manifest.get("meta", {})
    flags = AblationFlags(**meta.get("flags", {}))
    model = DAINet(
        backbone=BackboneConfig(**meta.get("backbone", {})),
        decoder=ReflectanceDecoderConfig(**meta.get("decoder", {})),
        with_reflectance="r" in flags.decode,
        with_illumination="l" in flags.decode,
        seed=int(meta.get("seed", 0)),
        dtype=np.float32,
    )
    model.load(path)
    return model, flags


def _config_from_args(args) -> TrainConfig:
    if args.config:
        cfg = train_config_from_json(args.config)
    else:
        cfg = TrainConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "row", None):
        cfg = dataclasses.replace(cfg, flags=ABLATION_ROWS[args.row])
    return cfg


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    train_pairs, test_pairs = harness.benchmark_corpora(cfg)
    decomp_net = None
    if cfg.flags.decode:
        if not args.decomp:
            raise ValueError("this configuration needs --decomp weights (decode branch active)")
        decomp_net = load_decomp(args.decomp)
    res = harness.train(cfg, decomp_net=decomp_net, train_pairs=train_pairs, log_path=args.log)
    save_model(res.model, cfg, args.out)
    report = harness.evaluate_dark(res.model, test_pairs)
    print(f"trained {cfg.steps} steps; dark-test mAP@50 = {report.map_50:.4f}")
    print(f"weights written to {args.out}" + (f", loss log to {args.log}" if args.log else ""))
    return 0


def cmd_eval(args) -> int:
    model, _ = load_model(args.weights)
    cfg = _config_from_args(args)
    _, test_pairs = harness.benchmark_corpora(cfg)
    report = harness.evaluate_dark(model, test_pairs, iou_thresh=args.iou)
    print(json.dumps({"map_50": report.map_50, **report.counts()}, indent=1))
    return 0


def cmd_ablate(args) -> int:
    cfg = _config_from_args(args)
    seeds = [int(s) for s in args.seeds.split(",")]
    rows = tuple(ABLATION_ROWS) if args.rows == "all" else LADDER_ROWS
    train_pairs, _ = harness.benchmark_corpora(cfg)
    decomp_net = load_decomp(args.decomp) if args.decomp else harness.default_decomp_net(train_pairs)

    if args.sweep_rc:
        table = []
        for lam in RC_SWEEP:
            cfg_l = dataclasses.replace(cfg, weights=dataclasses.replace(cfg.weights, lambda_rc=lam))
            sub = harness.run_ablation(seeds, rows=("rd_r_rc",), cfg_base=cfg_l, decomp_net=decomp_net)
            row = sub[0]
            row["configuration"] = f"rd_r_rc@lambda_rc={lam:g}"
            table.append(row)
            print(f"lambda_rc={lam:g}: mean mAP {row['mean_map']:.4f}")
        harness.write_ablation_csv(table, args.out, seeds)
    else:
        def progress(name, seed, m):
            print(f"  {name} seed {seed}: " + (f"mAP {m:.4f}" if m is not None else "FAILED"), flush=True)

        table = harness.run_ablation(seeds, rows=rows, cfg_base=cfg, decomp_net=decomp_net,
                                     csv_path=args.out, progress=progress)
        for row in table:
            print(f"{row['configuration']:>16}: mean {row['mean_map']:.4f} std {row['std_map']:.4f}"
                  + (f"  [{row['error']}]" if row["error"] else ""))
    print(f"table written to {args.out}")
    return 0


def cmd_stats(args) -> int:
    model, _ = load_model(args.weights)
    cfg = _config_from_args(args)
    _, test_pairs = harness.benchmark_corpora(cfg)
    n = min(args.n, len(test_pairs))
    stats = harness.channel_stats(
        model, [s.well_lit for s in test_pairs[:n]], [s.dark for s in test_pairs[:n]]
    )
    out = {
        "alignment": stats.alignment,
        "well_lit": [float(v) for v in stats.well_lit],
        "dark": [float(v) for v in stats.dark],
    }
    print(json.dumps(out, indent=1))
    return 0


def cmd_viz(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _config_from_args(args)
    _, test_pairs = harness.benchmark_corpora(cfg)
    model = None
    if args.weights:
        model, _ = load_model(args.weights)
    decomp_net = load_decomp(args.decomp) if args.decomp else None

    for s in test_pairs[: args.n]:
        tag = f"scene{s.index:04d}"
        viz.save_boxes_overlay(s.well_lit, s.boxes, out / f"{tag}_light.png")
        viz.save_boxes_overlay(s.dark, s.boxes, out / f"{tag}_dark.png")
        if decomp_net is not None:
            pair = decomp_net.decompose(s.dark.astype(np.float32))
            viz.save_image(pair.reflectance, out / f"{tag}_pseudo_r.png")
            viz.save_image(pair.illumination[0], out / f"{tag}_pseudo_l.png")
        if model is not None:
            f = model.features(np.stack([s.dark]).astype(model.dtype))
            viz.save_feature_grid(f.data[0], out / f"{tag}_gf.png")
            if model.decoder_r is not None:
                r = model.reflectance_decode(f)
                viz.save_image(r.data[0], out / f"{tag}_decoded_r.png")
    print(f"wrote visualizations for {min(args.n, len(test_pairs))} scenes to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="darklight", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("synth", help="darken a directory of PNG images")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("pretrain-decomp", help="train the decomposition net")
    p.add_argument("--data", required=True, help="dir of PNGs, or dir with light/ and dark/ subdirs")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=123)
    p.set_defaults(fn=cmd_pretrain_decomp)

    p = sub.add_parser("train", help="train one detector configuration")
    p.add_argument("--config", help="JSON training config")
    p.add_argument("--row", choices=sorted(ABLATION_ROWS), help="named configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--decomp", help="pretrained decomposition weights")
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="JSON-lines loss log path")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained detector")
    p.add_argument("--weights", required=True)
    p.add_argument("--config", help="JSON training config (for the benchmark definition)")
    p.add_argument("--iou", type=float, default=0.5)
    p.set_defaults(fn=cmd_eval, seed=None, row=None)

    p = sub.add_parser("ablate", help="run the component ladder")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--rows", choices=("ladder", "all"), default="ladder")
    p.add_argument("--config", help="JSON training config")
    p.add_argument("--decomp", help="pretrained decomposition weights")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--sweep-rc", action="store_true",
                   help="sweep lambda_rc over {1e-4,1e-3,1e-2,1e-1,1} instead of the ladder")
    p.set_defaults(fn=cmd_ablate, seed=None, row=None)

    p = sub.add_parser("stats", help="feature-channel alignment diagnostic")
    p.add_argument("--weights", required=True)
    p.add_argument("--config")
    p.add_argument("--n", type=int, default=64)
    p.set_defaults(fn=cmd_stats, seed=None, row=None)

    p = sub.add_parser("viz", help="qualitative PNG dumps")
    p.add_argument("--weights")
    p.add_argument("--decomp")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=4)
    p.set_defaults(fn=cmd_viz, seed=None, row=None)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as e:  # noqa: BLE001 - CLI boundary, report and exit nonzero
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
