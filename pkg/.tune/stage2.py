import time, numpy as np
import darklight as dl
from darklight import decomp, harness
from darklight.config import TrainConfig, ABLATION_ROWS

t0 = time.perf_counter()
cfg = TrainConfig()
train_pairs, test_pairs = harness.benchmark_corpora(cfg)
net = harness.default_decomp_net(train_pairs, cache_path="/root/pkg/.tune/decomp.w")
print(f"setup: {time.perf_counter()-t0:.1f}s", flush=True)

cache = harness.PseudoGtCache(net)
for row in ("baseline", "disp", "rd_r", "rd_r_rc", "full_kl"):
    t0 = time.perf_counter()
    c = TrainConfig(flags=ABLATION_ROWS[row], seed=0)
    res = harness.train(c, decomp_net=net, train_pairs=train_pairs, pseudo_cache=cache)
    rep = harness.evaluate_dark(res.model, test_pairs)
    light = harness.evaluate(res.model, [p.well_lit for p in test_pairs], [p.boxes for p in test_pairs])
    fp = rep.counts()
    print(f"{row:9s}: dark mAP {rep.map_50:.4f}  light mAP {light.map_50:.4f}  "
          f"TP {fp['true_positives']}/{fp['ground_truth']} preds {fp['predictions']}  "
          f"({time.perf_counter()-t0:.0f}s)", flush=True)
    print("   last:", {k: round(v, 4) for k, v in res.loss_log[-1].items()}, flush=True)
