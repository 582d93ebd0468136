"""Flow-guided self-attention recombination for temporally consistent frame generation."""

__version__ = "0.1.0"

from .attention import FloatConfig, float_recombine, inject_kv, masked_correction, self_attention  # noqa: E402
from .flow import FlowParams, compute_mask, estimate_flow, read_flo, write_flo  # noqa: E402
from .metrics import MetricReport, normal_condition_metrics, psnr, rmse, self_ssim, ssim  # noqa: E402
from .synth import ClothSceneParams, gen_cloth_sequence, gen_translation_sequence  # noqa: E402
from .toygen import GenerationMode, build_toy_denoiser, generate_sequence  # noqa: E402
from .warp import bilinear_warp, resample_flow, resample_mask, resize_field  # noqa: E402

__all__ = [
    "ClothSceneParams",
    "FloatConfig",
    "FlowParams",
    "GenerationMode",
    "MetricReport",
    "bilinear_warp",
    "build_toy_denoiser",
    "compute_mask",
    "estimate_flow",
    "float_recombine",
    "gen_cloth_sequence",
    "gen_translation_sequence",
    "generate_sequence",
    "inject_kv",
    "masked_correction",
    "normal_condition_metrics",
    "psnr",
    "read_flo",
    "resample_flow",
    "resample_mask",
    "resize_field",
    "rmse",
    "self_attention",
    "self_ssim",
    "ssim",
    "write_flo",
]
