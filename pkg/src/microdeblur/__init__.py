"""Blind, spatially non-uniform deblurring for large microscopy images."""

from .blind_estimation import (
    EstimationConfig,
    data_energy,
    delta_kernel,
    estimate_kernel_multiscale,
    estimate_kernel_multiscale_traced,
    fit_gaussian,
    ista_gradient_update,
    kernel_solve_fft,
    kernel_update,
    render_gaussian,
    sigma_window_search,
    total_variation_distance,
)
from .blur_synthesis import (
    LEVELS,
    BlurSpec,
    DistortionLevel,
    apply_variant_blur,
    make_level_dataset,
    sigma_field,
)
from .errors import DeblurError, NumericError, SingularSystemError
from .evaluation import EvalReport, psnr, run_benchmark, sharpness_proxy
from .image_core import (
    GradientField,
    Pyramid,
    Tile,
    TileGrid,
    build_pyramid,
    convolve2d,
    convolve2d_adjoint,
    gradients,
    split_tiles,
    stitch_tiles,
    to_grayscale,
)
from .imgio import load_image, load_kernel_text, save_image, save_kernel_text
from .nonblind_deconv import DeconvConfig, deconvolve, enhance_image
from .pipeline import EnhanceResult, RunConfig, enhance
from .tile_propagation import TilePlan, estimate_all, plan_tiles, propagation_order

__version__ = "0.1.0"

__all__ = [
    "BlurSpec",
    "DeblurError",
    "DeconvConfig",
    "DistortionLevel",
    "EnhanceResult",
    "EstimationConfig",
    "EvalReport",
    "GradientField",
    "LEVELS",
    "NumericError",
    "Pyramid",
    "RunConfig",
    "SingularSystemError",
    "Tile",
    "TileGrid",
    "TilePlan",
    "apply_variant_blur",
    "build_pyramid",
    "convolve2d",
    "convolve2d_adjoint",
    "data_energy",
    "deconvolve",
    "delta_kernel",
    "enhance",
    "enhance_image",
    "estimate_all",
    "estimate_kernel_multiscale",
    "estimate_kernel_multiscale_traced",
    "fit_gaussian",
    "gradients",
    "ista_gradient_update",
    "kernel_solve_fft",
    "kernel_update",
    "load_image",
    "load_kernel_text",
    "make_level_dataset",
    "plan_tiles",
    "propagation_order",
    "psnr",
    "render_gaussian",
    "run_benchmark",
    "save_image",
    "save_kernel_text",
    "sharpness_proxy",
    "sigma_field",
    "split_tiles",
    "stitch_tiles",
    "to_grayscale",
    "total_variation_distance",
]
