import time, resource, numpy as np
import darklight as dl
from darklight import harness
from darklight.config import TrainConfig, ABLATION_ROWS

def rss_mb():
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024

cfg0 = TrainConfig()
train_pairs, test_pairs = harness.benchmark_corpora(cfg0)
print(f"corpora ready, rss {rss_mb():.0f} MB", flush=True)
sub_test = test_pairs[:200]

for lr in (1e-3, 3e-3, 1e-2):
    for steps in (500, 1500):
        c = TrainConfig(flags=ABLATION_ROWS["baseline"], seed=0, lr=lr, steps=steps)
        t0 = time.perf_counter()
        res = harness.train(c, train_pairs=train_pairs)
        dark = harness.evaluate(res.model, [p.dark for p in sub_test], [p.boxes for p in sub_test])
        light = harness.evaluate(res.model, [p.well_lit for p in sub_test], [p.boxes for p in sub_test])
        mid = res.loss_log[steps // 2]["L_det"]
        last = res.loss_log[-1]["L_det"]
        print(f"lr {lr:7.0e} steps {steps:4d}: light {light.map_50:.3f} dark {dark.map_50:.3f} "
              f"L_det mid {mid:.3f} last {last:.3f} ({time.perf_counter()-t0:.0f}s, rss {rss_mb():.0f} MB)",
              flush=True)
