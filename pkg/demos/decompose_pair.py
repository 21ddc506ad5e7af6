"""Walk one image pair through the decomposition story.

Generates a synthetic well-lit scene, darkens it with a sampled degradation,
pretrains a small decomposition net on a pocket corpus, and writes out the
pieces: the pair itself, reflectance, illumination, and the R*L
reconstructions. A minute of compute, no downloads.

Run from the repository root:
    python3 demos/decompose_pair.py
Outputs land in demos/out/decompose/.
"""

from pathlib import Path

import numpy as np

from darklight import decomp, scenes, viz
from darklight.isp import derive_sample_seed, sample_params, synthesize_low_light
from darklight.metrics import mae

OUT = Path(__file__).parent / "out" / "decompose"
OUT.mkdir(parents=True, exist_ok=True)

# A pocket corpus: 24 scenes is plenty for the net to learn that dividing
# out a smooth illumination field explains both members of every pair.
corpus = scenes.generate_corpus(24, seed=7)
pairs = scenes.build_pairs(corpus, seed=99)

print("pretraining the decomposition net on 24 pairs ...")
net, history = decomp.pretrain(pairs, epochs=8, seed=1)
print("epoch losses:", " ".join(f"{h:.3f}" for h in history))

# Decompose a pair the net has seen and one fresh scene it has not.
fresh = scenes.generate_scene(seed=1234, index=0)
fresh_dark = synthesize_low_light(fresh.image, sample_params(derive_sample_seed(5, 0)))

for tag, well_lit, dark in [
    ("train0", pairs[0].well_lit, pairs[0].dark),
    ("fresh", fresh.image.astype(np.float32), fresh_dark.astype(np.float32)),
]:
    dn = net.decompose(well_lit.astype(np.float32))
    dl = net.decompose(dark.astype(np.float32))
    recon_n = dn.reflectance * dn.illumination
    recon_l = dl.reflectance * dl.illumination

    viz.save_image(well_lit, OUT / f"{tag}_input_light.png")
    viz.save_image(dark, OUT / f"{tag}_input_dark.png")
    viz.save_image(dn.reflectance, OUT / f"{tag}_reflectance_light.png")
    viz.save_image(dl.reflectance, OUT / f"{tag}_reflectance_dark.png")
    viz.save_image(dn.illumination[0], OUT / f"{tag}_illumination_light.png")
    viz.save_image(dl.illumination[0], OUT / f"{tag}_illumination_dark.png")
    viz.save_image(recon_n, OUT / f"{tag}_recon_light.png")
    viz.save_image(recon_l, OUT / f"{tag}_recon_dark.png")

    # The whole point: the two reflectances should look alike even though
    # the inputs differ by the darkening, and R*L should give back each input.
    print(
        f"{tag}: |R_light - R_dark| = {mae(dn.reflectance, dl.reflectance).item():.4f}   "
        f"|R*L - I| light {mae(recon_n, well_lit).item():.4f} "
        f"dark {mae(recon_l, dark).item():.4f}"
    )

print(f"wrote PNGs to {OUT}")
