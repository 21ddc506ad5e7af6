"""Render the degradation model across its parameter ranges.

Takes one synthetic scene and sweeps each degradation knob in isolation
(attenuation, white-balance gains, shot/read noise, quantization depth),
then samples a handful of full draws from the training distribution and
from the evaluation target domain side by side. The two strips make the
domain gap visible: training darkness is harsher and noisier than the
darkness the benchmark evaluates on.

Run from the repository root:
    python3 demos/darkness_gallery.py
Outputs land in demos/out/gallery/.
"""

import dataclasses
from pathlib import Path

import numpy as np

from darklight import scenes, viz
from darklight.isp import (
    DarkIspParams,
    derive_sample_seed,
    sample_params,
    sample_target_params,
    synthesize_low_light,
)

OUT = Path(__file__).parent / "out" / "gallery"
OUT.mkdir(parents=True, exist_ok=True)

scene = scenes.generate_scene(seed=2024, index=0)
img = scene.image
viz.save_image(img, OUT / "source.png")

clean = DarkIspParams(wb_gains=(1.0, 1.0, 1.0), attenuation=0.5,
                      shot_noise=0.0, read_noise=0.0, quant_bits=0, seed=0)

# One knob at a time against the clean reference.
for att in (0.05, 0.15, 0.3, 0.6):
    p = dataclasses.replace(clean, attenuation=att)
    viz.save_image(synthesize_low_light(img, p), OUT / f"attenuation_{att:.2f}.png")

for g in (0.7, 1.0, 1.3):
    p = dataclasses.replace(clean, wb_gains=(g, 1.0, 2.0 - g))
    viz.save_image(synthesize_low_light(img, p), OUT / f"wb_red_{g:.1f}.png")

for noise in (1e-4, 1e-3, 1e-2):
    p = dataclasses.replace(clean, shot_noise=noise, read_noise=noise, seed=11)
    viz.save_image(synthesize_low_light(img, p), OUT / f"noise_{noise:g}.png")

for bits in (8, 4, 3):
    p = dataclasses.replace(clean, quant_bits=bits)
    viz.save_image(synthesize_low_light(img, p), OUT / f"quant_{bits}bit.png")

# Full draws: the training distribution vs the evaluation target domain.
rows = []
for i in range(6):
    p_train = sample_params(derive_sample_seed(1, i))
    p_target = sample_target_params(derive_sample_seed(2, i))
    rows.append((synthesize_low_light(img, p_train), synthesize_low_light(img, p_target)))
    print(f"draw {i}:  train att {p_train.attenuation:.2f} shot {p_train.shot_noise:.4f}"
          f"   target att {p_target.attenuation:.2f} shot {p_target.shot_noise:.4f}")

strip_train = np.concatenate([r[0] for r in rows], axis=2)
strip_target = np.concatenate([r[1] for r in rows], axis=2)
viz.save_image(strip_train, OUT / "strip_training_darkness.png")
viz.save_image(strip_target, OUT / "strip_target_darkness.png")
print(f"wrote PNGs to {OUT}")
