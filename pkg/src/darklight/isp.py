"""Physics-inspired low-light degradation synthesis.

Turns a well-lit sRGB image into a plausible dark counterpart by undoing the
display encoding, darkening in the linear domain, injecting sensor noise,
quantizing, and re-encoding. Pure numpy, no gradients: synthesis is offline
and pairs are frozen before training.

Stage order (all in [0,1] unless noted):
  decode sRGB -> divide by white-balance gains -> multiply by attenuation
  -> add Gaussian noise (variance = shot * signal + read^2) -> clamp
  -> quantize -> re-apply gains -> clamp -> encode sRGB
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SRGB_DECODE_KNEE = 0.04045
SRGB_ENCODE_KNEE = 0.0031308
SRGB_EXPONENT = 2.4

ATTENUATION_RANGE = (0.05, 0.4)
WB_GAIN_RANGE = (0.7, 1.3)
SHOT_NOISE_RANGE = (1e-4, 1e-2)
READ_NOISE_RANGE = (1e-4, 1e-2)

# evaluation target domain: see sample_target_params
TARGET_ATTENUATION_RANGE = (0.30, 0.60)
TARGET_WB_GAIN_RANGE = (0.95, 1.05)
TARGET_NOISE_RANGE = (1e-4, 5e-4)


def _check_unit_range(img: np.ndarray, strict: bool, what: str) -> np.ndarray:
    if strict and (img.min() < 0.0 or img.max() > 1.0):
        raise ValueError(f"{what}: values outside [0,1] (min {img.min():.4g}, max {img.max():.4g})")
    return np.clip(img, 0.0, 1.0)


def srgb_to_linear(img, strict: bool = False) -> np.ndarray:
    """sRGB display values to linear light (EOTF)."""
    x = _check_unit_range(np.asarray(img, dtype=np.float64), strict, "srgb_to_linear")
    low = x <= SRGB_DECODE_KNEE
    out = np.empty_like(x)
    out[low] = x[low] / 12.92
    out[~low] = ((x[~low] + 0.055) / 1.055) ** SRGB_EXPONENT
    return out


def linear_to_srgb(img, strict: bool = False) -> np.ndarray:
    """Linear light to sRGB display values (OETF)."""
    y = _check_unit_range(np.asarray(img, dtype=np.float64), strict, "linear_to_srgb")
    low = y <= SRGB_ENCODE_KNEE
    out = np.empty_like(y)
    out[low] = y[low] * 12.92
    out[~low] = 1.055 * y[~low] ** (1.0 / SRGB_EXPONENT) - 0.055
    return out


@dataclass(frozen=True)
class DarkIspParams:
    """One sampled degradation. `gamma` records the decode exponent; the
    sRGB transfer pair above is the actual curve, so it is fixed at 2.4."""

    gamma: float = SRGB_EXPONENT
    wb_gains: tuple = (1.0, 1.0, 1.0)
    attenuation: float = 0.2
    shot_noise: float = 1e-3
    read_noise: float = 1e-3
    quant_bits: int = 8
    seed: int = 0

    def __post_init__(self):
        g = np.asarray(self.wb_gains, dtype=np.float64)
        if g.shape != (3,) or np.any(g <= 0):
            raise ValueError(f"wb_gains must be 3 positive floats, got {self.wb_gains!r}")
        if not (0.0 < self.attenuation <= 1.0):
            raise ValueError(f"attenuation must be in (0,1], got {self.attenuation}")
        if self.shot_noise < 0 or self.read_noise < 0:
            raise ValueError("noise coefficients must be >= 0")
        if self.quant_bits < 0:
            raise ValueError("quant_bits must be >= 0 (0 disables quantization)")

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "wb_gains": [float(v) for v in self.wb_gains],
            "attenuation": float(self.attenuation),
            "shot_noise": float(self.shot_noise),
            "read_noise": float(self.read_noise),
            "quant_bits": int(self.quant_bits),
            "seed": int(self.seed),
        }

    @staticmethod
    def from_dict(d: dict) -> "DarkIspParams":
        return DarkIspParams(
            gamma=float(d.get("gamma", SRGB_EXPONENT)),
            wb_gains=tuple(float(v) for v in d["wb_gains"]),
            attenuation=float(d["attenuation"]),
            shot_noise=float(d["shot_noise"]),
            read_noise=float(d["read_noise"]),
            quant_bits=int(d.get("quant_bits", 8)),
            seed=int(d["seed"]),
        )


def sample_params(rng_seed: int) -> DarkIspParams:
    """Uniformly sample a degradation within the declared ranges.

    Deterministic in rng_seed; the per-image noise seed is drawn from the
    same stream so one integer pins the whole degradation.
    """
    rng = np.random.default_rng(rng_seed)
    gains = tuple(rng.uniform(*WB_GAIN_RANGE, size=3).tolist())
    att = float(rng.uniform(*ATTENUATION_RANGE))
    shot = float(rng.uniform(*SHOT_NOISE_RANGE))
    read = float(rng.uniform(*READ_NOISE_RANGE))
    noise_seed = int(rng.integers(0, 2**63 - 1))
    return DarkIspParams(
        wb_gains=gains, attenuation=att, shot_noise=shot, read_noise=read, quant_bits=8, seed=noise_seed
    )


def sample_target_params(rng_seed: int) -> DarkIspParams:
    """Sample a degradation from the evaluation target domain.

    Zero-shot adaptation means the dark domain seen at test time is not the
    one synthesized for training. This regime is shifted accordingly: milder
    attenuation, near-neutral white balance, an order less noise, and no
    quantization, none of which the training ranges cover. A detector can
    only score here by generalizing across dark appearance, not by fitting
    the training degradation.
    """
    rng = np.random.default_rng(rng_seed)
    gains = tuple(rng.uniform(*TARGET_WB_GAIN_RANGE, size=3).tolist())
    att = float(rng.uniform(*TARGET_ATTENUATION_RANGE))
    shot = float(rng.uniform(*TARGET_NOISE_RANGE))
    read = float(rng.uniform(*TARGET_NOISE_RANGE))
    noise_seed = int(rng.integers(0, 2**63 - 1))
    return DarkIspParams(
        wb_gains=gains, attenuation=att, shot_noise=shot, read_noise=read,
        quant_bits=0, seed=noise_seed,
    )


def derive_sample_seed(global_seed: int, sample_index: int) -> int:
    """Stable per-sample stream so parallel synthesis order cannot matter."""
    ss = np.random.SeedSequence((int(global_seed), int(sample_index)))
    return int(ss.generate_state(1, np.uint64)[0])


def _quantize(x: np.ndarray, bits: int) -> np.ndarray:
    # round half away from zero; x is nonnegative here so floor(x+0.5) does it
    levels = float(2**bits - 1)
    return np.floor(x * levels + 0.5) / levels


def synthesize_low_light(img_srgb, p: DarkIspParams) -> np.ndarray:
    """Degrade a well-lit [3,H,W] sRGB image into its low-light pair member."""
    img = np.asarray(img_srgb, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"synthesize_low_light expects [3,H,W], got shape {img.shape}")
    gains = np.asarray(p.wb_gains, dtype=np.float64)[:, None, None]

    lin = srgb_to_linear(img)
    lin = lin / gains
    lin = lin * p.attenuation

    if p.shot_noise > 0 or p.read_noise > 0:
        var = p.shot_noise * np.clip(lin, 0.0, None) + p.read_noise**2
        rng = np.random.default_rng(p.seed)
        lin = lin + rng.standard_normal(lin.shape) * np.sqrt(var)

    lin = np.clip(lin, 0.0, 1.0)
    if p.quant_bits > 0:
        lin = _quantize(lin, p.quant_bits)
    lin = np.clip(lin * gains, 0.0, 1.0)
    return linear_to_srgb(lin)
