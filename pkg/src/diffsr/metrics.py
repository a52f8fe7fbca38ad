"""Bicubic upsampling baseline and image quality metrics (PSNR, SSIM, RMSE).

Conventions are pinned so independent reimplementations agree: bicubic uses
the cubic-convolution kernel with a = -0.5, half-pixel-centered coordinates
and clamped borders; SSIM uses an 11x11 Gaussian window (sigma 1.5),
K1 = 0.01, K2 = 0.03, dynamic range 1.0, averaged over fully-valid windows
only; PSNR uses peak 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .forward import ImageGrid


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    rmse: float


def _cubic_kernel(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    ax = np.abs(x)
    near = (a + 2.0) * ax**3 - (a + 3.0) * ax**2 + 1.0
    far = a * (ax**3 - 5.0 * ax**2 + 8.0 * ax - 4.0)
    return np.where(ax <= 1.0, near, np.where(ax < 2.0, far, 0.0))


def _upsample_matrix(n_in: int, factor: int) -> np.ndarray:
    """(n_out, n_in) row-stochastic interpolation weights for one axis."""
    n_out = n_in * factor
    out_idx = np.arange(n_out)
    src = (out_idx + 0.5) / factor - 0.5
    base = np.floor(src).astype(int)
    frac = src - base
    weights = np.zeros((n_out, n_in))
    for tap in (-1, 0, 1, 2):
        w = _cubic_kernel(frac - tap)
        col = np.clip(base + tap, 0, n_in - 1)
        np.add.at(weights, (out_idx, col), w)
    return weights


def bicubic_upsample(x_lr: ImageGrid, factor: int) -> ImageGrid:
    """Cubic-convolution upsampling by an integer factor >= 2."""
    if int(factor) != factor or factor < 2:
        raise ValueError(f"factor must be an integer >= 2, got {factor}")
    factor = int(factor)
    rows = _upsample_matrix(x_lr.height, factor)
    cols = _upsample_matrix(x_lr.width, factor)
    return ImageGrid(rows @ x_lr.data @ cols.T)


def _check_same_dims(a: ImageGrid, b: ImageGrid) -> None:
    if a.shape != b.shape:
        raise ValueError(f"image dims differ: {a.shape} vs {b.shape}")


def psnr(a: ImageGrid, b: ImageGrid, peak: float = 1.0) -> float:
    _check_same_dims(a, b)
    mse = np.mean((a.data - b.data) ** 2)
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / mse))


def rmse(a: ImageGrid, b: ImageGrid) -> float:
    _check_same_dims(a, b)
    return float(np.sqrt(np.mean((a.data - b.data) ** 2)))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = size // 2
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma * sigma))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(a: ImageGrid, b: ImageGrid) -> float:
    """Mean local SSIM over valid (no-padding) 11x11 windows."""
    _check_same_dims(a, b)
    win_size = 11
    if min(a.shape) < win_size:
        raise ValueError(f"images must be at least {win_size}x{win_size}, got {a.shape}")
    window = _gaussian_window(win_size, 1.5)
    k1, k2, peak = 0.01, 0.03, 1.0
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2

    def local_stats(img):
        views = sliding_window_view(img, (win_size, win_size))
        return np.tensordot(views, window, axes=([2, 3], [0, 1]))

    x, y = a.data, b.data
    mu_x = local_stats(x)
    mu_y = local_stats(y)
    xx = local_stats(x * x) - mu_x * mu_x
    yy = local_stats(y * y) - mu_y * mu_y
    xy = local_stats(x * y) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def metric_report(reference: ImageGrid, candidate: ImageGrid) -> MetricReport:
    return MetricReport(
        psnr=psnr(reference, candidate),
        ssim=ssim(reference, candidate),
        rmse=rmse(reference, candidate),
    )
