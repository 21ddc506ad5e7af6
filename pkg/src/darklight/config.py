"""Configuration dataclasses shared across the package, with JSON round-trip
for the command-line tools. Defaults here ARE the experiment; change them in
a config file, not in code.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass(frozen=True)
class LossWeights:
    """Weights of the combined objective
    total = det + lambda_mfa*mfa + lambda_rc*rc + ref + decom,
    with decom = recon + lambda_smooth*smooth + lambda_ir*ir."""

    lambda_smooth: float = 0.5
    lambda_ir: float = 0.01
    lambda_mfa: float = 0.1
    lambda_rc: float = 0.001
    detection: float = 1.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"loss weight {f.name} must be >= 0")


@dataclass(frozen=True)
class DecompNetConfig:
    """Decomposition net: shared relu conv trunk, sigmoid reflectance and
    illumination heads."""

    channels: int = 32
    depth: int = 5

    def __post_init__(self):
        if self.depth < 2:
            raise ValueError("decomposition net depth must be >= 2")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")


@dataclass(frozen=True)
class BackboneConfig:
    """Detector backbone g_b; the first split_index conv blocks are g_f."""

    split_index: int = 2
    blocks: int = 6
    base_channels: int = 16

    def __post_init__(self):
        if not (1 <= self.split_index < self.blocks):
            raise ValueError(f"need 1 <= split_index < blocks, got {self.split_index}/{self.blocks}")


@dataclass(frozen=True)
class ReflectanceDecoderConfig:
    """Light decoder head on g_f features; depth conv+relu layers, sigmoid out."""

    depth: int = 2
    kernel: int = 3

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("decoder depth must be >= 1")


@dataclass(frozen=True)
class AblationFlags:
    """One row of the component-ablation table.

    disp: train detection on the synthesized dark member (instead of, or in
          the presence of decode branches in addition to, the well-lit one)
    decode: '' (no decode branch), 'r', 'l', or 'rl' - which pseudo-GT
          component(s) the decoder branch regresses
    penalty: interchange reconstruction penalty on swapped-reflectance images
    rc: redecomposition cohering loss
    mfa: '' | 'kl' | 'l1' | 'l2' - feature alignment distance
    """

    disp: bool = False
    decode: str = ""
    penalty: bool = False
    rc: bool = False
    mfa: str = ""

    def __post_init__(self):
        if self.decode not in ("", "r", "l", "rl"):
            raise ValueError(f"decode flag must be one of '', 'r', 'l', 'rl', got {self.decode!r}")
        if self.mfa not in ("", "kl", "l1", "l2"):
            raise ValueError(f"mfa flag must be one of '', 'kl', 'l1', 'l2', got {self.mfa!r}")
        if (self.penalty or self.rc) and "r" not in self.decode:
            raise ValueError("interchange losses require the reflectance decode branch")


FULL_FLAGS = AblationFlags(disp=True, decode="r", rc=True, mfa="kl")

# Ablation rows, mirroring the component table: name -> flags.
ABLATION_ROWS: dict[str, AblationFlags] = {
    "baseline": AblationFlags(),
    "disp": AblationFlags(disp=True),
    "rd_r": AblationFlags(disp=True, decode="r"),
    "rd_l": AblationFlags(disp=True, decode="l"),
    "rd_rl": AblationFlags(disp=True, decode="rl"),
    "rd_r_penalty": AblationFlags(disp=True, decode="r", penalty=True),
    "rd_r_rc": AblationFlags(disp=True, decode="r", rc=True),
    "rd_r_penalty_rc": AblationFlags(disp=True, decode="r", penalty=True, rc=True),
    "full_kl": FULL_FLAGS,
    "full_l1": AblationFlags(disp=True, decode="r", rc=True, mfa="l1"),
    "full_l2": AblationFlags(disp=True, decode="r", rc=True, mfa="l2"),
}

# The subset whose ordering the acceptance gate asserts.
LADDER_ROWS = ("baseline", "disp", "rd_r", "rd_r_rc", "full_kl")


@dataclass(frozen=True)
class SceneConfig:
    """Synthetic well-lit scene generator settings."""

    height: int = 96
    width: int = 96
    min_objects: int = 1
    max_objects: int = 5
    min_side: int = 8
    max_iou: float = 0.3
    fill_lo: float = 0.3
    fill_hi: float = 1.0
    bg_lo: float = 0.4
    bg_hi: float = 0.9


@dataclass(frozen=True)
class TrainConfig:
    """End-to-end training/evaluation recipe at desk scale."""

    n_train: int = 2000
    n_test: int = 500
    steps: int = 500
    warmup_steps: int = 0
    batch_pairs: int = 4
    lr: float = 1e-3
    seed: int = 0
    flags: AblationFlags = field(default_factory=AblationFlags)
    weights: LossWeights = field(default_factory=LossWeights)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    decoder: ReflectanceDecoderConfig = field(default_factory=ReflectanceDecoderConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    decomp: DecompNetConfig = field(default_factory=DecompNetConfig)


def _to_jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    return obj


_NESTED = {
    "flags": AblationFlags,
    "weights": LossWeights,
    "backbone": BackboneConfig,
    "decoder": ReflectanceDecoderConfig,
    "scene": SceneConfig,
    "decomp": DecompNetConfig,
}


def train_config_to_json(cfg: TrainConfig, path) -> None:
    Path(path).write_text(json.dumps(_to_jsonable(cfg), indent=1))


def train_config_from_json(path) -> TrainConfig:
    d = json.loads(Path(path).read_text())
    return train_config_from_dict(d)


def train_config_from_dict(d: dict) -> TrainConfig:
    kwargs = {}
    for f in dataclasses.fields(TrainConfig):
        if f.name not in d:
            continue
        v = d[f.name]
        if f.name in _NESTED and isinstance(v, dict):
            v = _NESTED[f.name](**v)
        kwargs[f.name] = v
    return TrainConfig(**kwargs)
