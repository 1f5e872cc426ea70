"""Patch tokenization of square images under several orderings.

A :class:`TokenLayout` captures everything about an ordering that does not
depend on pixel values: which square cell of the image each token covers and
the flat pixel index of every token entry. Tokenizing is a gather through
``index_map`` and detokenizing is the matching scatter, so every variant is
exactly invertible.

Two-grid (``fixed_tg`` / ``ran_tg``) layouts mix coarse cells with refined
subcells of half the side. All tokens share the coarse token length; the
entries a smaller subcell does not use are marked ``-1`` in ``index_map`` and
hold zeros in the token array.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ArgumentError, BoundsError, ShapeError
from .grid import as_image
from .hilbert import build_hilbert
from .spectral import BandPair

ORDER_TAGS = ("raster", "hilbert", "fixed_tg", "ran_tg", "twogrid_coarse", "twogrid_fine")


@dataclass(frozen=True)
class PatchGeometry:
    image_side: int
    patch_side: int

    def __post_init__(self):
        if self.image_side < 1 or self.patch_side < 1:
            raise ShapeError(f"sides must be positive, got {self.image_side} and {self.patch_side}")
        if self.image_side % self.patch_side:
            raise ShapeError(
                f"image side {self.image_side} is not divisible by patch side {self.patch_side}"
            )

    @property
    def grid_side(self) -> int:
        return self.image_side // self.patch_side

    @property
    def hilbert_order(self) -> int:
        g = self.grid_side
        if g < 2 or g & (g - 1):
            raise ShapeError(f"Hilbert ordering needs a power-of-two grid side >= 2, got grid_side={g}")
        return g.bit_length() - 1


@dataclass(frozen=True, eq=False)
class TokenLayout:
    geometry: PatchGeometry
    order_tag: str
    permutation: np.ndarray  # position -> row-major patch index at the cell's own resolution
    cells: np.ndarray        # (L, 3): top, left, side in pixels
    index_map: np.ndarray    # (L, D): flat pixel index per token entry, -1 = padding

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def token_dim(self) -> int:
        return self.index_map.shape[1]

    def gather(self, images: np.ndarray) -> np.ndarray:
        """Tokens for an image ``(H, W)`` or a stack ``(N, H, W)``."""
        images = np.asarray(images)
        side = self.geometry.image_side
        if images.shape[-2:] != (side, side):
            raise ShapeError(f"layout expects {side}x{side} images, got {images.shape[-2:]}")
        flat = images.reshape(*images.shape[:-2], side * side)
        padded = np.concatenate([flat, np.zeros_like(flat[..., :1])], axis=-1)
        return padded[..., self.index_map]

    def scatter(self, tokens: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`gather`."""
        tokens = np.asarray(tokens)
        if tokens.shape[-2:] != self.index_map.shape:
            raise ShapeError(f"expected tokens of shape {self.index_map.shape}, got {tokens.shape[-2:]}")
        side = self.geometry.image_side
        lead = tokens.shape[:-2]
        flat = tokens.reshape(lead + (-1,))
        return flat[..., self.pixel_source].reshape(lead + (side, side))

    @cached_property
    def pixel_source(self) -> np.ndarray:
        """For each row-major pixel, its position in the flattened token array."""
        idx = self.index_map.reshape(-1)
        valid = np.flatnonzero(idx >= 0)
        src = np.full(self.geometry.image_side ** 2, -1, dtype=np.int64)
        src[idx[valid]] = valid
        if (src < 0).any():
            raise ShapeError("layout does not cover every pixel")
        src.setflags(write=False)
        return src


@dataclass(frozen=True, eq=False)
class TokenSequence:
    layout: TokenLayout
    tokens: np.ndarray

    @property
    def geometry(self) -> PatchGeometry:
        return self.layout.geometry

    @property
    def order_tag(self) -> str:
        return self.layout.order_tag

    @property
    def permutation(self) -> np.ndarray:
        return self.layout.permutation

    def __len__(self) -> int:
        return len(self.tokens)


def _cell_indices(cells: np.ndarray, image_side: int, dim: int) -> np.ndarray:
    out = np.full((len(cells), dim), -1, dtype=np.int64)
    for k, (top, left, size) in enumerate(cells):
        rows = np.arange(top, top + size)[:, None]
        cols = np.arange(left, left + size)[None, :]
        out[k, : size * size] = (rows * image_side + cols).reshape(-1)
    return out


def _layout(geometry: PatchGeometry, tag: str, coords: np.ndarray, sizes: np.ndarray,
            perm: np.ndarray) -> TokenLayout:
    cells = np.column_stack([coords[:, 0] * sizes, coords[:, 1] * sizes, sizes]).astype(np.int64)
    index_map = _cell_indices(cells, geometry.image_side, geometry.patch_side ** 2)
    for arr in (perm, cells, index_map):
        arr.setflags(write=False)
    return TokenLayout(geometry, tag, perm, cells, index_map)


def _square_side(image: np.ndarray) -> int:
    h, w = image.shape
    if h != w:
        raise ShapeError(f"tokenizers need square images, got {h}x{w}; pad upstream")
    return h


def raster_layout(image_side: int, patch_side: int, tag: str = "raster") -> TokenLayout:
    geo = PatchGeometry(image_side, patch_side)
    g = geo.grid_side
    perm = np.arange(g * g, dtype=np.int64)
    coords = np.column_stack([perm // g, perm % g])
    return _layout(geo, tag, coords, np.full(g * g, patch_side), perm)


def hilbert_layout(image_side: int, patch_side: int, tag: str = "hilbert") -> TokenLayout:
    geo = PatchGeometry(image_side, patch_side)
    hmap = build_hilbert(geo.hilbert_order)
    coords = hmap.index_to_coord.astype(np.int64)
    return _layout(geo, tag, coords, np.full(len(coords), patch_side), hmap.rowmajor_order())


def _coarse_geometry(image_side: int, coarse_order: int) -> PatchGeometry:
    if not 1 <= coarse_order:
        raise BoundsError(f"coarse order must be >= 1, got {coarse_order}")
    fine = 1 << (coarse_order + 1)
    if image_side % fine:
        raise ShapeError(
            f"image side {image_side} must be divisible by 2^{coarse_order + 1} for two-grid refinement"
        )
    return PatchGeometry(image_side, image_side >> coarse_order)


def central_cells(coarse_order: int) -> list[int]:
    """Curve indices of the 2x2 block of cells at the centre of the coarse grid."""
    hmap = build_hilbert(coarse_order)
    mid = hmap.side // 2
    return sorted(int(hmap.coord_to_index[r, c]) for r in (mid - 1, mid) for c in (mid - 1, mid))


def tg_layout(image_side: int, coarse_order: int, refine_mask, tag: str = "fixed_tg") -> TokenLayout:
    """Coarse Hilbert traversal with masked cells split in place into four subcells.

    Subcells follow the next-order curve, so the sequence stays continuous
    through each refined block.
    """
    geo = _coarse_geometry(image_side, coarse_order)
    coarse = build_hilbert(coarse_order)
    fine = build_hilbert(coarse_order + 1)
    mask = set(int(i) for i in refine_mask)
    bad = [i for i in mask if not 0 <= i < coarse.size]
    if bad:
        raise BoundsError(f"refine mask indices {sorted(bad)} outside [0, {coarse.size})")
    p = geo.patch_side
    coords, sizes, perm = [], [], []
    for i in range(coarse.size):
        if i in mask:
            for j in range(4 * i, 4 * i + 4):
                r, c = fine.index_to_coord[j]
                coords.append((r, c))
                sizes.append(p // 2)
                perm.append(r * fine.side + c)
        else:
            r, c = coarse.index_to_coord[i]
            coords.append((r, c))
            sizes.append(p)
            perm.append(r * coarse.side + c)
    return _layout(geo, tag, np.array(coords, dtype=np.int64), np.array(sizes, dtype=np.int64),
                   np.array(perm, dtype=np.int64))


def sample_refine_mask(coarse_order: int, p: float, rng) -> list[int]:
    """Bernoulli(p) selection of coarse cells, one draw per cell."""
    if not 0.0 <= p <= 1.0:
        raise ArgumentError(f"refinement probability must lie in [0, 1], got {p}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    draws = rng.random(1 << (2 * coarse_order))
    return np.flatnonzero(draws < p).tolist()


def tokenize_raster(image, patch_side: int) -> TokenSequence:
    x = as_image(image)
    layout = raster_layout(_square_side(x), patch_side)
    return TokenSequence(layout, layout.gather(x))


def tokenize_hilbert(image, patch_side: int) -> TokenSequence:
    x = as_image(image)
    layout = hilbert_layout(_square_side(x), patch_side)
    return TokenSequence(layout, layout.gather(x))


def tokenize_fixed_tg(image, coarse_order: int, refine_mask=None) -> TokenSequence:
    x = as_image(image)
    if refine_mask is None:
        refine_mask = central_cells(coarse_order)
    layout = tg_layout(_square_side(x), coarse_order, refine_mask)
    return TokenSequence(layout, layout.gather(x))


def tokenize_ran_tg(image, coarse_order: int, p: float, seed: int) -> TokenSequence:
    x = as_image(image)
    mask = sample_refine_mask(coarse_order, p, np.random.default_rng(seed))
    layout = tg_layout(_square_side(x), coarse_order, mask, tag="ran_tg")
    return TokenSequence(layout, layout.gather(x))


def twogrid_layouts(image_side: int, coarse_order: int, fine_order: int,
                    low_ordering: str = "hilbert") -> tuple[TokenLayout, TokenLayout]:
    """Layouts for the low band (coarse grid) and the high band (fine grid).

    ``low_ordering="raster"`` keeps the coarse patches in plain row-major
    order while the high band still follows the fine Hilbert curve.
    """
    if coarse_order >= fine_order:
        raise ArgumentError(f"coarse order {coarse_order} must be below fine order {fine_order}")
    if coarse_order < 1:
        raise BoundsError(f"coarse order must be >= 1, got {coarse_order}")
    for n in (coarse_order, fine_order):
        if image_side % (1 << n):
            raise ShapeError(f"image side {image_side} is not divisible by 2^{n}")
    coarse_patch = image_side >> coarse_order
    if low_ordering == "hilbert":
        low = hilbert_layout(image_side, coarse_patch, tag="twogrid_coarse")
    elif low_ordering == "raster":
        low = raster_layout(image_side, coarse_patch, tag="twogrid_coarse")
    else:
        raise ArgumentError(f"unknown low-band ordering {low_ordering!r}")
    high = hilbert_layout(image_side, image_side >> fine_order, tag="twogrid_fine")
    return low, high


def tokenize_twogrid(bands: BandPair, coarse_order: int, fine_order: int) -> tuple[TokenSequence, TokenSequence]:
    low_img = as_image(bands.low, "low band")
    high_img = as_image(bands.high, "high band")
    if low_img.shape != high_img.shape:
        raise ShapeError(f"band shapes differ: {low_img.shape} vs {high_img.shape}")
    low, high = twogrid_layouts(_square_side(low_img), coarse_order, fine_order)
    return TokenSequence(low, low.gather(low_img)), TokenSequence(high, high.gather(high_img))


def detokenize(seq: TokenSequence) -> np.ndarray:
    return seq.layout.scatter(seq.tokens)


def mean_step_distance(layout: TokenLayout) -> float:
    """Mean Euclidean distance between centres of consecutive tokens."""
    c = layout.cells
    centres = c[:, :2] + c[:, 2:3] / 2.0
    return float(np.linalg.norm(np.diff(centres, axis=0), axis=1).mean())
