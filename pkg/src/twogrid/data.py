"""Synthetic seismograms, padding, image files and datasets.

Float image files (``.tgi``) are laid out as::

    offset  size  field
    0       4     magic b"TGIM"
    4       2     version (uint16 LE, currently 1)
    6       2     reserved, zero
    8       4     height (uint32 LE)
    12      4     width (uint32 LE)
    16      4*H*W pixels, float32 LE, row-major

Values round-trip bit-exactly when they are representable as float32.
8-bit binary portable graymaps (``P5``) are supported for viewing.
"""
from __future__ import annotations

import hashlib
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError, FormatError
from .grid import as_image

MAGIC = b"TGIM"
VERSION = 1
_HEADER = struct.Struct("<4sHHII")

DEFAULT_LAYERS = (4, 10)
DEFAULT_WAVELET_FREQ = (0.02, 0.045)     # cycles per pixel, layered envelope
DEFAULT_REFLECTOR_FREQ = (0.07, 0.12)    # cycles per pixel, sharp arrivals
DEFAULT_REFLECTORS = (3, 8)
DEFAULT_NOISE = 0.05
DEFAULT_DIP = 0.05                       # max |slope| of interfaces, rows per column


@dataclass
class Dataset:
    images: np.ndarray                  # (N, side, side) float64
    split_tag: str = "train"
    seed: int = 0
    degenerate: np.ndarray = field(default=None)  # per-image flag: all-zero scene, left unnormalized

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        if self.images.ndim != 3:
            raise ArgumentError(f"dataset images must be stacked as (N, H, W), got {self.images.shape}")
        if self.degenerate is None:
            self.degenerate = np.zeros(len(self.images), dtype=bool)

    def __len__(self) -> int:
        return len(self.images)

    @property
    def side(self) -> int:
        return self.images.shape[1]


def ricker(freq: float, length: int | None = None) -> np.ndarray:
    """Zero-phase Ricker wavelet with peak frequency ``freq`` (cycles/sample)."""
    if length is None:
        length = 2 * int(np.ceil(1.5 / freq)) + 1
    t = np.arange(length) - (length - 1) / 2.0
    a = (np.pi * freq * t) ** 2
    return (1.0 - 2.0 * a) * np.exp(-a)


def _convolve_columns(refl: np.ndarray, wavelet: np.ndarray) -> np.ndarray:
    n = refl.shape[0]
    size = n + len(wavelet) - 1
    spec = np.fft.rfft(refl, size, axis=0) * np.fft.rfft(wavelet, size)[:, None]
    full = np.fft.irfft(spec, size, axis=0)
    start = (len(wavelet) - 1) // 2
    return full[start:start + n]


def _add_interface(refl: np.ndarray, depth: np.ndarray, coeff: float, cols: np.ndarray) -> None:
    n = refl.shape[0]
    lo = np.floor(depth).astype(int)
    frac = depth - lo
    for row, w in ((lo, 1.0 - frac), (lo + 1, frac)):
        ok = (row >= 0) & (row < n)
        np.add.at(refl, (row[ok], cols[ok]), coeff * w[ok])


def _synthetic_image(side, rng, layer_count_range, wavelet_freq_range,
                     reflector_count_range, reflector_freq_range, noise_level, max_dip):
    x = np.arange(side, dtype=np.float64)
    layered = np.zeros((side, side))
    for _ in range(rng.integers(layer_count_range[0], layer_count_range[1] + 1)):
        z0 = rng.uniform(0.05, 0.95) * side
        slope = rng.uniform(-max_dip, max_dip)
        amp = rng.uniform(0.0, 0.03) * side
        wavelength = rng.uniform(0.6, 2.0) * side
        depth = z0 + slope * (x - side / 2) + amp * np.sin(2 * np.pi * x / wavelength + rng.uniform(0, 2 * np.pi))
        _add_interface(layered, depth, rng.normal(), np.arange(side))
    if layered.any():
        layered = _convolve_columns(layered, ricker(rng.uniform(*wavelet_freq_range)))

    sharp = np.zeros((side, side))
    for _ in range(rng.integers(reflector_count_range[0], reflector_count_range[1] + 1)):
        span = int(rng.uniform(0.6, 1.0) * side)
        start = rng.integers(0, side - span + 1)
        cols = np.arange(start, start + span)
        z0 = rng.uniform(0.05, 0.95) * side
        depth = z0 + rng.uniform(-max_dip, max_dip) * (cols - cols.mean())
        taper = np.sin(np.pi * (np.arange(span) + 0.5) / span) ** 0.5
        coeff = rng.choice((-1.0, 1.0)) * rng.uniform(0.5, 1.0)
        tmp = np.zeros((side, side))
        _add_interface(tmp, depth, coeff, cols)
        sharp += tmp * np.concatenate([np.zeros(start), taper, np.zeros(side - start - span)])[None, :]
    if sharp.any():
        sharp = _convolve_columns(sharp, ricker(rng.uniform(*reflector_freq_range)))

    # balance the two components before adding noise
    img = np.zeros((side, side))
    for part in (layered, sharp):
        s = part.std()
        if s > 0:
            img += part / s
    if noise_level > 0:
        img += noise_level * rng.standard_normal((side, side))
    return img


def _check_range(name, r, lo, integer):
    if len(r) != 2 or r[0] > r[1] or r[0] < lo or (integer and any(int(v) != v for v in r)):
        raise ArgumentError(f"{name} must be an ordered pair with values >= {lo}, got {r}")


def image_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for one image; depends only on ``(seed, index)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def generate_synthetic(count: int, side: int, seed: int,
                       layer_count_range=DEFAULT_LAYERS,
                       wavelet_freq_range=DEFAULT_WAVELET_FREQ,
                       noise_level: float = DEFAULT_NOISE,
                       reflector_count_range=DEFAULT_REFLECTORS,
                       reflector_freq_range=DEFAULT_REFLECTOR_FREQ,
                       max_dip: float = DEFAULT_DIP) -> Dataset:
    """Layered seismogram-like images, normalized to zero mean and unit variance.

    Each image sums a laterally smooth layered reflectivity convolved with a
    low-frequency Ricker wavelet, a few sparse sharp reflectors convolved
    with a high-frequency Ricker wavelet, and Gaussian noise. Frequencies are
    in cycles per pixel. Scenes with nothing in them stay all-zero and are
    flagged in ``Dataset.degenerate``.
    """
    if count < 1:
        raise ArgumentError(f"count must be >= 1, got {count}")
    if side < 32:
        raise ArgumentError(f"side must be >= 32, got {side}")
    if noise_level < 0:
        raise ArgumentError(f"noise_level must be non-negative, got {noise_level}")
    _check_range("layer_count_range", layer_count_range, 0, True)
    _check_range("reflector_count_range", reflector_count_range, 0, True)
    for name, r in (("wavelet_freq_range", wavelet_freq_range), ("reflector_freq_range", reflector_freq_range)):
        _check_range(name, r, 0, False)
        if r[0] <= 0 or r[1] > 0.5:
            raise ArgumentError(f"{name} must lie in (0, 0.5] cycles per pixel, got {r}")

    images = np.empty((count, side, side))
    degenerate = np.zeros(count, dtype=bool)
    for i in range(count):
        img = _synthetic_image(side, image_rng(seed, i), layer_count_range, wavelet_freq_range,
                               reflector_count_range, reflector_freq_range, noise_level, max_dip)
        std = img.std()
        if std == 0:
            degenerate[i] = True
            images[i] = img
        else:
            images[i] = (img - img.mean()) / std
    if degenerate.any():
        warnings.warn(f"{int(degenerate.sum())} synthetic image(s) are empty and were left unnormalized")
    return Dataset(images, "train", seed, degenerate)


def split_of(seed: int, index: int, test_fraction: float = 0.1) -> str:
    """Train/test assignment from a hash of ``(seed, index)``."""
    digest = hashlib.blake2b(f"{seed}:{index}".encode(), digest_size=8).digest()
    u = int.from_bytes(digest, "little") / 2.0 ** 64
    return "test" if u < test_fraction else "train"


def split_dataset(ds: Dataset, test_fraction: float = 0.1) -> tuple[Dataset, Dataset]:
    tags = np.array([split_of(ds.seed, i, test_fraction) for i in range(len(ds))])
    parts = []
    for tag in ("train", "test"):
        sel = tags == tag
        parts.append(Dataset(ds.images[sel], tag, ds.seed, ds.degenerate[sel]))
    return parts[0], parts[1]


def reflect_pad(image, target_side: int) -> np.ndarray:
    """Centre ``image`` on a ``target_side`` square, mirroring without repeating the edge."""
    x = as_image(image)
    h, w = x.shape
    if target_side < max(h, w):
        raise ArgumentError(f"target side {target_side} is smaller than the {h}x{w} input")
    dh, dw = target_side - h, target_side - w
    return np.pad(x, ((dh // 2, dh - dh // 2), (dw // 2, dw - dw // 2)), mode="reflect")


def write_image(path, image) -> None:
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        write_pgm(path, image)
        return
    x = as_image(image)
    h, w = x.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, 0, h, w))
        f.write(x.astype("<f4").tobytes())


def read_image(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:2] == b"P5":
        return read_pgm(path)
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header", offset=len(raw))
    magic, version, _, h, w = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}", offset=4)
    if h < 1 or w < 1:
        raise FormatError(f"{path}: invalid dimensions {h}x{w}", offset=8)
    need = _HEADER.size + 4 * h * w
    if len(raw) < need:
        raise FormatError(f"{path}: pixel data truncated, expected {need} bytes", offset=len(raw))
    if len(raw) > need:
        raise FormatError(f"{path}: {len(raw) - need} trailing bytes", offset=need)
    return np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(h, w).astype(np.float64)


def to_uint8(image, normalize: bool = True) -> np.ndarray:
    """Quantize to 0..255; with ``normalize`` the data range is stretched to [0, 1] first."""
    x = as_image(image)
    if normalize:
        lo, hi = x.min(), x.max()
        x = (x - lo) / (hi - lo) if hi > lo else np.zeros_like(x)
    return np.rint(np.clip(x, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm(path, image, normalize: bool = True) -> None:
    q = to_uint8(image, normalize)
    h, w = q.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(q.tobytes())


def read_pgm(path) -> np.ndarray:
    """8-bit binary graymap scaled to [0, 1]."""
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated graymap header", offset=pos)
        fields.append(raw[start:pos])
    pos += 1
    if fields[0] != b"P5":
        raise FormatError(f"{path}: not a binary graymap", offset=0)
    try:
        w, h, maxval = (int(v) for v in fields[1:])
    except ValueError:
        raise FormatError(f"{path}: malformed graymap header", offset=pos) from None
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit graymaps are supported (maxval {maxval})", offset=pos)
    if len(raw) < pos + w * h:
        raise FormatError(f"{path}: pixel data truncated", offset=len(raw))
    return np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=pos).reshape(h, w) / 255.0


def save_dataset(ds: Dataset, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(ds.images):
        p = directory / f"img_{i:06d}.tgi"
        write_image(p, img)
        paths.append(p)
    return paths


def load_dataset(directory, split_tag: str = "train", seed: int = 0) -> Dataset:
    paths = sorted(Path(directory).glob("*.tgi"))
    if not paths:
        raise ArgumentError(f"no .tgi images found in {directory}")
    images = [read_image(p) for p in paths]
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise ArgumentError(f"dataset images differ in shape: {sorted(shapes)}")
    return Dataset(np.stack(images), split_tag, seed)
