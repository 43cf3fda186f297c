"""Prompt-controlled shadow removal: models, data, metrics, training, serving."""

from .blocks import (
    DenseSparseAttention,
    ShuffleAttentionBlock,
    SpatialFrequencyBlock,
    TokenBatch,
    WaveletCoeffs,
    dense_attention,
    dwt2,
    idwt2,
    inverse_shuffle,
    shuffle,
    sparse_attention,
)
from .datagen import SampleRecord, SceneConfig, derive_dot, derive_line, synth_scene
from .losses import LossConfig, loss_total
from .metrics import RegionReport, mask_bce, mask_iou, psnr, region_report, rmse, ssim
from .model import (
    AblationFlags,
    ControllableRemovalNet,
    NetworkConfig,
    PermutationPolicy,
    build_model,
    load_checkpoint,
    predict,
    save_checkpoint,
)
from .prompts import Prompt, encode_input, rasterize
from .training import TrainConfig, construct_target, evaluate, grad_check, train

__all__ = [
    "AblationFlags",
    "ControllableRemovalNet",
    "DenseSparseAttention",
    "LossConfig",
    "NetworkConfig",
    "PermutationPolicy",
    "Prompt",
    "RegionReport",
    "SampleRecord",
    "SceneConfig",
    "ShuffleAttentionBlock",
    "SpatialFrequencyBlock",
    "TokenBatch",
    "TrainConfig",
    "WaveletCoeffs",
    "build_model",
    "construct_target",
    "dense_attention",
    "derive_dot",
    "derive_line",
    "dwt2",
    "encode_input",
    "evaluate",
    "grad_check",
    "idwt2",
    "inverse_shuffle",
    "load_checkpoint",
    "loss_total",
    "mask_bce",
    "mask_iou",
    "predict",
    "psnr",
    "rasterize",
    "region_report",
    "rmse",
    "save_checkpoint",
    "shuffle",
    "sparse_attention",
    "ssim",
    "synth_scene",
    "train",
]
