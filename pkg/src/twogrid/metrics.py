"""Reconstruction quality metrics: MSE, PSNR, SSIM and MS-SSIM.

SSIM uses an 11x11 Gaussian window (sigma 1.5) evaluated at every fully
contained window position. Unless given, ``peak`` is the joint data range of
both images, so every metric is symmetric in its arguments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ArgumentError
from .grid import as_image, same_shape

PSNR_CAP = 99.0
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


@dataclass(frozen=True)
class MetricReport:
    mse: float
    psnr: float
    ssim: float
    ms_ssim: float


def _pair(a, b):
    a, b = as_image(a, "a"), as_image(b, "b")
    same_shape(a, b)
    return a, b


def data_range(a: np.ndarray, b: np.ndarray) -> float:
    rng = float(max(a.max(), b.max()) - min(a.min(), b.min()))
    return rng if rng > 0 else 1.0


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, peak: float | None = None) -> float:
    a, b = _pair(a, b)
    if peak is None:
        peak = data_range(a, b)
    if peak <= 0:
        raise ArgumentError(f"peak must be positive, got {peak}")
    err = float(np.mean((a - b) ** 2))
    if err < 1e-12:
        return PSNR_CAP
    return float(10.0 * np.log10(peak * peak / err))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """Normalized 1-D Gaussian taps; the 2-D window is their outer product."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = len(g)
    x = sliding_window_view(x, k, axis=0) @ g
    return sliding_window_view(x, k, axis=1) @ g


def _ssim_maps(a, b, window, sigma, k1, k2, peak):
    g = gaussian_window(window, sigma)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a ** 2
    var_b = _filter_valid(b * b, g) - mu_b ** 2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    lum = (2 * mu_a * mu_b + c1) / (mu_a ** 2 + mu_b ** 2 + c1)
    cs = (2 * cov + c2) / (var_a + var_b + c2)
    return lum, cs


def _check_window(shape, window):
    if min(shape) < window:
        raise ArgumentError(f"image {shape[0]}x{shape[1]} is smaller than the {window}-pixel SSIM window")


def ssim(a, b, window: int = 11, k1: float = 0.01, k2: float = 0.03,
         peak: float | None = None, sigma: float = 1.5) -> float:
    a, b = _pair(a, b)
    _check_window(a.shape, window)
    if peak is None:
        peak = data_range(a, b)
    lum, cs = _ssim_maps(a, b, window, sigma, k1, k2, peak)
    return float(np.mean(lum * cs))


def _pool2(x: np.ndarray) -> np.ndarray:
    h, w = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
    x = x[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def feasible_scales(side: int, window: int = 11, limit: int = len(MS_SSIM_WEIGHTS)) -> int:
    """Largest scale count whose coarsest image still fits one window."""
    n = 0
    while n < limit and side >= window * (1 << n):
        n += 1
    return n


def default_weights(scales: int) -> tuple[float, ...]:
    """Leading entries of the standard weight vector, renormalized to sum to one."""
    if not 1 <= scales <= len(MS_SSIM_WEIGHTS):
        raise ArgumentError(f"scales must be in [1, {len(MS_SSIM_WEIGHTS)}] for default weights")
    w = np.array(MS_SSIM_WEIGHTS[:scales])
    return tuple((w / w.sum()).tolist())


def ms_ssim(a, b, scales: int = 5, weights=None, window: int = 11, k1: float = 0.01,
            k2: float = 0.03, peak: float | None = None, sigma: float = 1.5) -> float:
    """Multi-scale SSIM.

    Contrast-structure terms are taken at every scale and luminance only at
    the coarsest one. Per-scale terms are clipped at zero before the
    fractional powers are applied.
    """
    a, b = _pair(a, b)
    if scales < 1:
        raise ArgumentError(f"scales must be >= 1, got {scales}")
    if weights is None:
        weights = default_weights(scales)
    weights = [float(w) for w in weights]
    if len(weights) != scales:
        raise ArgumentError(f"{scales} scales need {scales} weights, got {len(weights)}")
    if abs(sum(weights) - 1.0) > 1e-3:
        raise ArgumentError(f"MS-SSIM weights must sum to 1, got {sum(weights):.6f}")
    need = window * (1 << (scales - 1))
    if min(a.shape) < need:
        raise ArgumentError(
            f"{scales} scales with a {window}-pixel window need images of side >= {need}, got {a.shape}"
        )
    if peak is None:
        peak = data_range(a, b)
    result = 1.0
    for j, w in enumerate(weights):
        lum, cs = _ssim_maps(a, b, window, sigma, k1, k2, peak)
        if j == scales - 1:
            term = float(np.mean(lum * cs))
        else:
            term = float(np.mean(cs))
            a, b = _pool2(a), _pool2(b)
        result *= max(term, 0.0) ** w
    return float(result)


def report(a, b, peak: float | None = None, window: int = 11, scales: int | None = None) -> MetricReport:
    """All four metrics, with MS-SSIM at the largest scale count the image allows."""
    a, b = _pair(a, b)
    if peak is None:
        peak = data_range(a, b)
    if scales is None:
        scales = feasible_scales(min(a.shape), window)
    return MetricReport(
        mse=mse(a, b),
        psnr=psnr(a, b, peak),
        ssim=ssim(a, b, window=window, peak=peak),
        ms_ssim=ms_ssim(a, b, scales=scales, window=window, peak=peak),
    )
