import time, json, numpy as np
import darklight as dl
from darklight import decomp, harness
from darklight.config import TrainConfig, ABLATION_ROWS

t0 = time.perf_counter()
cfg = TrainConfig()
train_pairs, test_pairs = harness.benchmark_corpora(cfg)
print(f"corpora: {time.perf_counter()-t0:.1f}s ({len(train_pairs)} train, {len(test_pairs)} test)", flush=True)

t0 = time.perf_counter()
net = harness.default_decomp_net(train_pairs, cache_path="/root/pkg/.tune/decomp.w")
print(f"decomp net ready: {time.perf_counter()-t0:.1f}s", flush=True)

for row in ("baseline", "disp"):
    t0 = time.perf_counter()
    c = TrainConfig(flags=ABLATION_ROWS[row], seed=0)
    res = harness.train(c, decomp_net=net, train_pairs=train_pairs)
    rep = harness.evaluate_dark(res.model, test_pairs)
    light = harness.evaluate(res.model, [p.well_lit for p in test_pairs], [p.boxes for p in test_pairs])
    print(f"{row}: dark mAP {rep.map_50:.4f} light mAP {light.map_50:.4f} "
          f"({time.perf_counter()-t0:.0f}s, P {rep.precision:.3f} R {rep.recall:.3f}, "
          f"npred {rep.n_predictions})", flush=True)
    print("  last log:", {k: round(v, 4) for k, v in res.loss_log[-1].items()}, flush=True)
