"""Re-pretrain production decomp net (luminance prior), then ladder probe."""
import resource, sys, time
import numpy as np

sys.path.insert(0, "/root/pkg/src")
from darklight import decomp, harness, scenes
from darklight.config import TrainConfig, ABLATION_ROWS

def rss_mb():
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss // 1024

cfg = TrainConfig()
t0 = time.time()
train_pairs, test_pairs_full = harness.benchmark_corpora(cfg)
test_pairs = test_pairs_full[:200]
dark_set = ([s.dark for s in test_pairs], [s.boxes for s in test_pairs])
light_set = ([s.well_lit for s in test_pairs], [s.boxes for s in test_pairs])
print(f"corpora {time.time()-t0:.0f}s rss {rss_mb()} MB", flush=True)

t1 = time.time()
net, hist = decomp.pretrain(train_pairs, epochs=10, lr=1e-3, seed=123,
                            log_fn=lambda e, l: print(f"  epoch {e}: {l:.4f}", flush=True))
net.save("/root/pkg/.tune/decomp.w", meta={"kind": "decomp", "seed": 123,
         "channels": net.cfg.channels, "depth": net.cfg.depth})
print(f"pretrained {time.time()-t1:.0f}s rss {rss_mb()} MB", flush=True)

# invariance asymmetry + held-out recon (criterion-5 geometry)
dr, dl, rec = [], [], []
for s in test_pairs[:64]:
    pn = net.decompose(s.well_lit.astype(np.float32))
    pl = net.decompose(s.dark.astype(np.float32))
    dr.append(np.abs(pn.reflectance - pl.reflectance).mean())
    dl.append(np.abs(pn.illumination - pl.illumination).mean())
    rec.append(np.abs(pn.reflectance * pn.illumination - s.well_lit).mean())
print(f"|R_n-R_l| {np.mean(dr):.4f}  |L_n-L_l| {np.mean(dl):.4f}  heldout recon {np.mean(rec):.4f}", flush=True)

cache = harness.PseudoGtCache(net)
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
