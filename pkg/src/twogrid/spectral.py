"""Low/high frequency band decomposition of images.

The forward transform is the unnormalized separable DFT (the Fourier matrix
applied along both axes, ``omega = exp(-2*pi*i/N)``); the inverse carries the
``1/(H*W)`` factor. Spectra use the unshifted layout, frequency 0 at index 0.
Frequencies are compared in signed, centred form (``-N/2 .. N/2-1``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, BoundsError, NumericError
from .grid import as_image

GEOMETRIES = ("square", "radial")
IMAG_TOL = 1e-9


@dataclass(frozen=True)
class BandPair:
    low: np.ndarray
    high: np.ndarray
    threshold_k0: int


def dft2(image) -> np.ndarray:
    """Unnormalized 2-D DFT; the result is complex with the image's shape."""
    return np.fft.fft2(as_image(image))


def idft2(spectrum: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(spectrum)


def max_frequency(height: int, width: int) -> int:
    return min(height, width) // 2


def signed_frequencies(n: int) -> np.ndarray:
    """Integer frequency of each DFT bin, e.g. n=4 -> [0, 1, -2, -1]."""
    return np.rint(np.fft.fftfreq(n, d=1.0 / n)).astype(np.int64)


def low_mask(height: int, width: int, k0: int, geometry: str = "square") -> np.ndarray:
    """Boolean mask over the unshifted spectrum selecting the low band."""
    u = np.abs(signed_frequencies(height))[:, None]
    v = np.abs(signed_frequencies(width))[None, :]
    if geometry == "square":
        return np.maximum(u, v) <= k0
    if geometry == "radial":
        return u * u + v * v <= k0 * k0
    raise ArgumentError(f"unknown band geometry {geometry!r}; expected one of {GEOMETRIES}")


def _check_k0(k0, height: int, width: int) -> int:
    kmax = max_frequency(height, width)
    if isinstance(k0, bool) or not isinstance(k0, (int, np.integer)) or not 0 <= k0 <= kmax:
        raise BoundsError(f"k0 must be an integer in [0, {kmax}] for a {height}x{width} image, got {k0}")
    return int(k0)


def _real_part(z: np.ndarray, scale: float, what: str) -> np.ndarray:
    resid = np.abs(z.imag).max() if z.size else 0.0
    if resid > IMAG_TOL * max(1.0, scale):
        raise NumericError(f"{what} band has imaginary residue {resid:.3g}")
    return np.ascontiguousarray(z.real)


def split_bands(image, k0: int, geometry: str = "square") -> BandPair:
    """Split ``image`` into low (``|freq| <= k0``) and high band images."""
    x = as_image(image)
    k0 = _check_k0(k0, *x.shape)
    mask = low_mask(*x.shape, k0, geometry)
    spec = np.fft.fft2(x)
    scale = float(np.abs(x).max())
    low = _real_part(np.fft.ifft2(np.where(mask, spec, 0)), scale, "low")
    high = _real_part(np.fft.ifft2(np.where(mask, 0, spec)), scale, "high")
    return BandPair(low, high, k0)


def split_batch(images: np.ndarray, k0: int, geometry: str = "square") -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`split_bands` over a stack of shape ``(N, H, W)``."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3:
        raise ArgumentError(f"expected an (N, H, W) stack, got shape {images.shape}")
    h, w = images.shape[1:]
    k0 = _check_k0(k0, h, w)
    mask = low_mask(h, w, k0, geometry)
    spec = np.fft.fft2(images, axes=(1, 2))
    low = np.fft.ifft2(np.where(mask, spec, 0), axes=(1, 2)).real
    high = np.fft.ifft2(np.where(mask, 0, spec), axes=(1, 2)).real
    return low, high


def band_energy(pair: BandPair) -> tuple[float, float]:
    """l2 norms of the low and high band images."""
    return float(np.linalg.norm(pair.low)), float(np.linalg.norm(pair.high))


def energy_sweep(image, k0s, geometry: str = "square") -> list[tuple[int, float, float, float]]:
    """``(k0, low_norm, high_norm, original_norm)`` for each threshold."""
    x = as_image(image)
    total = float(np.linalg.norm(x))
    rows = []
    for k0 in k0s:
        lo, hi = band_energy(split_bands(x, k0, geometry))
        rows.append((int(k0), lo, hi, total))
    return rows
