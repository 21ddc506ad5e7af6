import time, resource, numpy as np
import darklight as dl
from darklight import harness
from darklight.config import TrainConfig, ABLATION_ROWS

def rss_mb():
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024

cfg0 = TrainConfig()
train_pairs, test_pairs = harness.benchmark_corpora(cfg0)
sub_test = test_pairs[:200]
print(f"corpora ready rss {rss_mb():.0f} MB", flush=True)

for lr in (1e-3, 3e-3):
    for steps in (500, 1000, 1500):
        c = TrainConfig(flags=ABLATION_ROWS["baseline"], seed=0, lr=lr, steps=steps)
        t0 = time.perf_counter()
        res = harness.train(c, train_pairs=train_pairs)
        dark = harness.evaluate(res.model, [p.dark for p in sub_test], [p.boxes for p in sub_test])
        light = harness.evaluate(res.model, [p.well_lit for p in sub_test], [p.boxes for p in sub_test])
        print(f"baseline lr {lr:.0e} steps {steps:4d}: light {light.map_50:.3f} dark {dark.map_50:.3f} "
              f"L_det last {res.loss_log[-1]['L_det']:.3f} ({time.perf_counter()-t0:.0f}s)", flush=True)

t0 = time.perf_counter()
net = harness.default_decomp_net(train_pairs, cache_path="/root/pkg/.tune/decomp.w")
print(f"decomp pretrained: {time.perf_counter()-t0:.0f}s rss {rss_mb():.0f} MB", flush=True)

cache = harness.PseudoGtCache(net)
for row in ("disp", "rd_r", "full_kl"):
    for steps in (500, 1000):
        c = TrainConfig(flags=ABLATION_ROWS[row], seed=0, lr=1e-3, steps=steps)
        t0 = time.perf_counter()
        res = harness.train(c, decomp_net=net, train_pairs=train_pairs, pseudo_cache=cache)
        dark = harness.evaluate(res.model, [p.dark for p in sub_test], [p.boxes for p in sub_test])
        light = harness.evaluate(res.model, [p.well_lit for p in sub_test], [p.boxes for p in sub_test])
        print(f"{row:8s} steps {steps:4d}: light {light.map_50:.3f} dark {dark.map_50:.3f} "
              f"({time.perf_counter()-t0:.0f}s rss {rss_mb():.0f} MB)", flush=True)
        print("   last:", {k: round(v, 4) for k, v in res.loss_log[-1].items()}, flush=True)
