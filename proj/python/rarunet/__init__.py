"""RAR-U-Net segmentation with adaptive denoising learning."""

from ._core import (
    Model,
    RarunetError,
    calibrate,
    corrupt,
    dilate,
    elastic_deform,
    erode,
    evaluate,
    gen_synth,
    gradcheck,
    load_checkpoint,
    overlap_alpha,
    param_count,
    schedule_n,
)

__all__ = [
    "Model",
    "RarunetError",
    "calibrate",
    "corrupt",
    "dilate",
    "elastic_deform",
    "erode",
    "evaluate",
    "gen_synth",
    "gradcheck",
    "load_checkpoint",
    "overlap_alpha",
    "param_count",
    "schedule_n",
]
