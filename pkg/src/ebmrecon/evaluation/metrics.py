from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = ["PSNR_CAP", "psnr", "nmse", "ssim", "metric_report"]

#: value reported in tables for identical images (``psnr`` itself returns inf)
PSNR_CAP = 300.0


def _pair(x, ref):
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {ref.shape}")
    return x, ref


def psnr(x, ref):
    """Peak signal-to-noise ratio in dB with peak ``max(ref)``; ``inf`` for identical inputs."""
    x, ref = _pair(x, ref)
    mse = np.mean((x - ref) ** 2)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(ref.max() ** 2 / mse))


def nmse(x, ref):
    """``||x - ref||^2 / ||ref||^2``."""
    x, ref = _pair(x, ref)
    denom = np.sum(ref**2)
    if denom == 0:
        raise ValueError("reference is identically zero")
    return float(np.sum((x - ref) ** 2) / denom)


def ssim(x, ref, win_size=7, k1=0.01, k2=0.03, data_range=None):
    """Mean SSIM over all fully contained ``win_size`` x ``win_size`` uniform windows.

    Local (co)variances use the unbiased ``N - 1`` normalization; the dynamic
    range defaults to ``max(ref) - min(ref)``.
    """
    x, ref = _pair(x, ref)
    if min(x.shape) < win_size:
        raise ValueError(f"images must be at least {win_size}x{win_size}")
    if data_range is None:
        data_range = ref.max() - ref.min()
    wx = sliding_window_view(x, (win_size, win_size))
    wy = sliding_window_view(ref, (win_size, win_size))
    n = win_size * win_size
    mx, my = wx.mean(axis=(-2, -1)), wy.mean(axis=(-2, -1))
    cov_norm = n / (n - 1.0)
    vx = cov_norm * ((wx**2).mean(axis=(-2, -1)) - mx**2)
    vy = cov_norm * ((wy**2).mean(axis=(-2, -1)) - my**2)
    vxy = cov_norm * ((wx * wy).mean(axis=(-2, -1)) - mx * my)
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    s = ((2 * mx * my + c1) * (2 * vxy + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2))
    return float(s.mean())


def metric_report(x, ref):
    """PSNR (capped at :data:`PSNR_CAP`), NMSE and SSIM of one image pair."""
    return {
        "psnr_db": min(psnr(x, ref), PSNR_CAP),
        "nmse": nmse(x, ref),
        "ssim": ssim(x, ref),
    }
