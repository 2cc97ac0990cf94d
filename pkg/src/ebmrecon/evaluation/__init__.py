"""Image-quality metrics and post-hoc analysis tools."""

from .analysis import (
    LAMBDA_GRID,
    Landscape,
    SplineCalibration,
    grid_search_lambda,
    initial_residuum,
    lambda_fit,
    landscape_projection,
    linear_spline_fit,
    null_space_residual,
    radial_profile,
    spline_apply,
    spline_fit,
)
from .metrics import PSNR_CAP, metric_report, nmse, psnr, ssim

__all__ = [
    "LAMBDA_GRID",
    "Landscape",
    "PSNR_CAP",
    "SplineCalibration",
    "grid_search_lambda",
    "initial_residuum",
    "lambda_fit",
    "landscape_projection",
    "linear_spline_fit",
    "metric_report",
    "nmse",
    "null_space_residual",
    "radial_profile",
    "psnr",
    "spline_apply",
    "spline_fit",
    "ssim",
]
