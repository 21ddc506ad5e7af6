"""darklight: dark-domain object detection from well-lit data only.

A desk-scale study of reflectance representation learning: synthesize
low-light counterparts of well-lit scenes, decompose images into
reflectance and illumination, and teach a small grid detector's backbone
to see the illumination-invariant part.

Layout:
  tensor    reverse-mode autodiff on numpy arrays
  metrics   SSIM, MAE/MSE, spatial gradients, KL divergence
  isp       low-light degradation synthesis
  scenes    seeded synthetic detection scenes and day/dark pairs
  decomp    decomposition net (pretrained, then frozen)
  dainet    detector with reflectance decoder and all training losses
  evalmap   NMS, greedy matching, interpolated average precision
  harness   training loop, ablation ladder, channel statistics
  cli       command line entry points
"""

from .config import (
    ABLATION_ROWS,
    LADDER_ROWS,
    AblationFlags,
    BackboneConfig,
    DecompNetConfig,
    LossWeights,
    ReflectanceDecoderConfig,
    SceneConfig,
    TrainConfig,
)
from .decomp import DecompNet, DecompositionPair, decomposition_loss, pretrain
from .dainet import (
    DAINet,
    InterchangeState,
    detection_loss,
    interchange_reconstruct,
    mfa_loss,
    penalty_loss,
    rc_loss,
    ref_loss,
    total_loss,
)
from .evalmap import EvalReport, evaluate_map, nms
from .harness import ChannelStats, benchmark_corpora, channel_stats, evaluate, run_ablation, train
from .isp import (
    DarkIspParams,
    linear_to_srgb,
    sample_params,
    sample_target_params,
    srgb_to_linear,
    synthesize_low_light,
)
from .metrics import SsimConfig, kl_divergence, mae, mse, spatial_gradient, ssim
from .scenes import PairedSample, SceneSample, build_pairs, generate_corpus
from .tensor import Tape, Tensor, backward

__version__ = "0.1.0"
