"""Decode-row probe on the candidate target regime.

Trains rd_r, rd_r_rc, full_kl at 500 steps (seed 0) with the frozen decomp
net, evaluates light + target-regime dark, and re-reports baseline/disp for
the same seed. Also prints channel-alignment correlations (criterion-7
geometry) for baseline vs full.
"""
import resource, sys, time
import numpy as np

sys.path.insert(0, "/root/pkg/src")
from darklight import harness, scenes
from darklight.config import TrainConfig, ABLATION_ROWS
from darklight.decomp import DecompNet
from darklight.isp import sample_target_params as target_params


def rss_mb():
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss // 1024


cfg = TrainConfig()
t0 = time.time()
train_scenes = scenes.generate_corpus(cfg.n_train, seed=harness.TRAIN_SCENE_SEED, cfg=cfg.scene)
train_pairs = scenes.build_pairs(train_scenes, seed=harness.TRAIN_PAIR_SEED)
del train_scenes
test_scenes = scenes.generate_corpus(200, seed=harness.TEST_SCENE_SEED, cfg=cfg.scene)
test_pairs = scenes.build_pairs(test_scenes, seed=harness.TEST_PAIR_SEED, params_fn=target_params)
dark_set = ([s.dark for s in test_pairs], [s.boxes for s in test_pairs])
light_set = ([s.well_lit for s in test_pairs], [s.boxes for s in test_pairs])

net = DecompNet(seed=123, dtype=np.float32)
net.load("/root/pkg/.tune/decomp.w")
cache = harness.PseudoGtCache(net)
print(f"ready {time.time()-t0:.0f}s rss {rss_mb()} MB", flush=True)

models = {}
for row in ("baseline", "disp", "rd_r", "rd_r_rc", "full_kl"):
    c = harness._with(cfg, steps=500, seed=0, flags=ABLATION_ROWS[row])
    t1 = time.time()
    res = harness.train(c, decomp_net=net, train_pairs=train_pairs, pseudo_cache=cache)
    models[row] = res.model
    li = harness.evaluate(res.model, *light_set).map_50
    da = harness.evaluate(res.model, *dark_set).map_50
    last = res.loss_log[-1]
    print(f"{row:9} light {li:.4f} dark {da:.4f} L_det {last['L_det']:.3f} "
          f"({time.time()-t1:.0f}s rss {rss_mb()} MB)", flush=True)

for row in ("baseline", "full_kl"):
    st = harness.channel_stats(models[row], light_set[0][:64], dark_set[0][:64])
    print(f"channel alignment {row}: {st.alignment:.4f}", flush=True)
print(f"done {time.time()-t0:.0f}s rss {rss_mb()} MB", flush=True)
