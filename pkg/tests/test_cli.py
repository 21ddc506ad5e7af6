"""End-to-end command line flow on miniature inputs.

One module-scoped workspace carries artifacts through the natural pipeline:
synth -> pretrain-decomp -> train -> eval / ablate / stats / viz. Commands
run in-process through cli.main so exit codes and stdout are assertable.
"""

import json

import numpy as np
import pytest

from darklight import cli, viz
from darklight.config import train_config_to_json, TrainConfig, SceneConfig
from darklight.isp import DarkIspParams

STEPS = 2


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """Workspace with source PNGs and the two config files the flow needs."""
    root = tmp_path_factory.mktemp("cliflow")
    src = root / "src_pngs"
    src.mkdir()
    rng = np.random.default_rng(42)
    for i in range(3):
        viz.save_image(rng.uniform(0.2, 1.0, size=(3, 32, 32)), src / f"img{i}.png")

    tiny = TrainConfig(n_train=6, n_test=4, steps=STEPS, batch_pairs=2,
                       scene=SceneConfig(height=48, width=48))
    train_config_to_json(tiny, root / "tiny.json")
    stats_cfg = TrainConfig(n_train=6, n_test=32, steps=STEPS, batch_pairs=2,
                            scene=SceneConfig(height=48, width=48))
    train_config_to_json(stats_cfg, root / "stats.json")
    return root


def run(*argv) -> int:
    return cli.main([str(a) for a in argv])


class TestSynth:
    def test_writes_darkened_pngs_with_sidecars(self, ws):
        out = ws / "synth_out"
        assert run("synth", "--in", ws / "src_pngs", "--out", out, "--seed", 3) == 0
        pngs = sorted(p.name for p in out.glob("*.png"))
        assert pngs == ["img0.png", "img1.png", "img2.png"]
        sidecar = json.loads((out / "img0.json").read_text())
        DarkIspParams.from_dict(sidecar)  # parses back into a valid degradation
        assert 0 < sidecar["attenuation"] <= 1.0

    def test_output_is_darker_than_input(self, ws):
        from PIL import Image

        out = ws / "synth_out"
        for name in ("img0.png", "img1.png"):
            bright = np.asarray(Image.open(ws / "src_pngs" / name), dtype=float)
            dark = np.asarray(Image.open(out / name), dtype=float)
            assert dark.mean() < bright.mean()

    def test_deterministic_in_seed(self, ws):
        again = ws / "synth_again"
        assert run("synth", "--in", ws / "src_pngs", "--out", again, "--seed", 3) == 0
        a = (ws / "synth_out" / "img2.png").read_bytes()
        assert (again / "img2.png").read_bytes() == a

    def test_missing_input_dir_exits_nonzero(self, ws, capsys):
        assert run("synth", "--in", ws / "nowhere", "--out", ws / "x") == 1
        assert "error:" in capsys.readouterr().err


class TestPretrainDecomp:
    def test_trains_and_saves_manifest(self, ws):
        out = ws / "decomp.w"
        assert run("pretrain-decomp", "--data", ws / "src_pngs", "--out", out,
                   "--epochs", 1, "--seed", 5) == 0
        assert out.exists()
        manifest = json.loads((ws / "decomp.w.json").read_text())
        assert manifest["meta"]["kind"] == "decomp"
        net = cli.load_decomp(out)
        assert net.ready

    def test_paired_directory_layout(self, ws):
        light = ws / "paired" / "light"
        dark = ws / "paired" / "dark"
        light.mkdir(parents=True)
        dark.mkdir()
        rng = np.random.default_rng(0)
        for i in range(2):
            img = rng.uniform(0.3, 1.0, size=(3, 32, 32))
            viz.save_image(img, light / f"s{i}.png")
            viz.save_image(img * 0.2, dark / f"s{i}.png")
        assert run("pretrain-decomp", "--data", ws / "paired", "--out", ws / "d2.w",
                   "--epochs", 1) == 0

    def test_mismatched_pair_listing_fails(self, ws, capsys):
        light = ws / "broken" / "light"
        dark = ws / "broken" / "dark"
        light.mkdir(parents=True)
        dark.mkdir()
        viz.save_image(np.full((3, 16, 16), 0.5), light / "only_here.png")
        assert run("pretrain-decomp", "--data", ws / "broken", "--out", ws / "d3.w") == 1
        assert "dark counterpart" in capsys.readouterr().err


class TestTrainEval:
    def test_train_baseline_writes_weights_and_log(self, ws):
        assert run("train", "--row", "baseline", "--config", ws / "tiny.json",
                   "--out", ws / "base.w", "--log", ws / "base.jsonl") == 0
        lines = [json.loads(s) for s in (ws / "base.jsonl").read_text().splitlines()]
        assert len(lines) == STEPS
        assert lines[0]["step"] == 0 and "total" in lines[0]
        manifest = json.loads((ws / "base.w.json").read_text())
        assert manifest["meta"]["kind"] == "dainet"
        assert manifest["meta"]["flags"]["decode"] == ""

    def test_decode_row_requires_decomp_weights(self, ws, capsys):
        assert run("train", "--row", "rd_r", "--config", ws / "tiny.json",
                   "--out", ws / "x.w") == 1
        assert "--decomp" in capsys.readouterr().err

    def test_train_decode_row_with_decomp(self, ws):
        assert run("train", "--row", "rd_r", "--config", ws / "tiny.json",
                   "--decomp", ws / "decomp.w", "--out", ws / "rd.w") == 0
        manifest = json.loads((ws / "rd.w.json").read_text())
        assert manifest["meta"]["flags"]["decode"] == "r"

    def test_eval_prints_map_json(self, ws, capsys):
        assert run("eval", "--weights", ws / "base.w", "--config", ws / "tiny.json") == 0
        report = json.loads(capsys.readouterr().out)
        assert 0.0 <= report["map_50"] <= 1.0
        assert report["ground_truth"] > 0
        assert report["predictions"] >= 0

    def test_eval_restores_the_trained_flags(self, ws):
        model, flags = cli.load_model(ws / "rd.w")
        assert flags.decode == "r"
        assert model.decoder_r is not None

    def test_missing_weights_exit_nonzero(self, ws, capsys):
        assert run("eval", "--weights", ws / "ghost.w", "--config", ws / "tiny.json") == 1
        assert "error:" in capsys.readouterr().err


class TestAblate:
    def test_ladder_csv(self, ws):
        out = ws / "ladder.csv"
        assert run("ablate", "--seeds", "0,1,2", "--config", ws / "tiny.json",
                   "--decomp", ws / "decomp.w", "--out", out) == 0
        header, *rows = out.read_text().splitlines()
        assert header.startswith("configuration,mean_map,std_map,map_seed0")
        assert [r.split(",")[0] for r in rows] == ["baseline", "disp", "rd_r", "rd_r_rc", "full_kl"]

    def test_rc_weight_sweep(self, ws):
        out = ws / "sweep.csv"
        assert run("ablate", "--sweep-rc", "--seeds", "0,1,2", "--config", ws / "tiny.json",
                   "--decomp", ws / "decomp.w", "--out", out) == 0
        rows = out.read_text().splitlines()[1:]
        names = [r.split(",")[0] for r in rows]
        assert len(names) == len(cli.RC_SWEEP)
        assert all(n.startswith("rd_r_rc@lambda_rc=") for n in names)


class TestStats:
    def test_alignment_json(self, ws, capsys):
        assert run("stats", "--weights", ws / "base.w", "--config", ws / "stats.json",
                   "--n", 32) == 0
        payload = json.loads(capsys.readouterr().out)
        assert -1.0 <= payload["alignment"] <= 1.0
        assert len(payload["well_lit"]) == len(payload["dark"]) > 0

    def test_too_few_images_exits_nonzero(self, ws, capsys):
        assert run("stats", "--weights", ws / "base.w", "--config", ws / "tiny.json",
                   "--n", 32) == 1
        assert "32" in capsys.readouterr().err


class TestViz:
    def test_writes_expected_pngs(self, ws):
        out = ws / "gallery"
        assert run("viz", "--weights", ws / "rd.w", "--decomp", ws / "decomp.w",
                   "--config", ws / "tiny.json", "--out", out, "--n", 2) == 0
        names = sorted(p.name for p in out.glob("scene0000_*.png"))
        assert names == [
            "scene0000_dark.png",
            "scene0000_decoded_r.png",
            "scene0000_gf.png",
            "scene0000_light.png",
            "scene0000_pseudo_l.png",
            "scene0000_pseudo_r.png",
        ]
        assert len(list(out.glob("scene0001_*.png"))) == 6

    def test_runs_without_models(self, ws):
        out = ws / "gallery_bare"
        assert run("viz", "--config", ws / "tiny.json", "--out", out, "--n", 1) == 0
        assert sorted(p.name for p in out.glob("*.png")) == [
            "scene0000_dark.png",
            "scene0000_light.png",
        ]
