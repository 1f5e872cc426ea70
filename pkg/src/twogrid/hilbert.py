"""Hilbert curves over 2^n x 2^n grids as precomputed lookup tables.

Coordinates are ``(row, col)`` pairs. The order-1 curve is
``[(0, 0), (0, 1), (1, 1), (1, 0)]``: it starts at the top-left cell and
finishes at the bottom-left one. Higher orders are assembled from four
copies of the previous order placed in the quadrants visited by the
order-1 curve:

* top-left: previous curve transposed (ends at the top-right corner),
* top-right and bottom-right: previous curve unchanged,
* bottom-left: previous curve anti-transposed (starts bottom-right).

Every order therefore starts at ``(0, 0)`` and ends at ``(side - 1, 0)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import BoundsError, ShapeError

MAX_ORDER = 12

_BASE = np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=np.int32)


@dataclass(frozen=True, eq=False)
class HilbertMap:
    """Bijection between curve index and grid cell for one curve order."""

    order: int
    index_to_coord: np.ndarray  # (4**order, 2) int32, read-only
    coord_to_index: np.ndarray  # (side, side) int32, read-only

    @property
    def side(self) -> int:
        return 1 << self.order

    @property
    def size(self) -> int:
        return 1 << (2 * self.order)

    def rowmajor_order(self) -> np.ndarray:
        """Row-major cell index of each curve position."""
        rc = self.index_to_coord
        return rc[:, 0].astype(np.int64) * self.side + rc[:, 1]


def _expand(table: np.ndarray, side: int) -> np.ndarray:
    rows, cols = table[:, 0], table[:, 1]
    last = side - 1
    q0 = np.stack([cols, rows], axis=1)
    q1 = np.stack([rows, cols + side], axis=1)
    q2 = np.stack([rows + side, cols + side], axis=1)
    q3 = np.stack([last - cols + side, last - rows], axis=1)
    return np.concatenate([q0, q1, q2, q3]).astype(np.int32)


@lru_cache(maxsize=None)
def build_hilbert(order: int) -> HilbertMap:
    """Return the order-``order`` Hilbert map (cached, immutable)."""
    if not isinstance(order, (int, np.integer)) or not 1 <= order <= MAX_ORDER:
        raise BoundsError(f"Hilbert order must be in [1, {MAX_ORDER}], got {order!r}")
    order = int(order)
    table = _BASE
    for k in range(1, order):
        table = _expand(table, 1 << k)
    side = 1 << order
    inverse = np.empty((side, side), dtype=np.int32)
    inverse[table[:, 0], table[:, 1]] = np.arange(len(table), dtype=np.int32)
    table.setflags(write=False)
    inverse.setflags(write=False)
    return HilbertMap(order, table, inverse)


def curve_coord(hmap: HilbertMap, index: int) -> tuple[int, int]:
    if not 0 <= index < hmap.size:
        raise BoundsError(f"curve index {index} outside [0, {hmap.size})")
    r, c = hmap.index_to_coord[index]
    return int(r), int(c)


def curve_index(hmap: HilbertMap, row: int, col: int) -> int:
    side = hmap.side
    if not (0 <= row < side and 0 <= col < side):
        raise BoundsError(f"cell ({row}, {col}) outside the {side}x{side} grid")
    return int(hmap.coord_to_index[row, col])


def permute_grid(hmap: HilbertMap, cells):
    """Reorder a row-major sequence of cells into curve order.

    Numpy arrays are permuted along their first axis and returned as arrays;
    any other sequence comes back as a list.
    """
    order = _check_length(hmap, cells)
    if isinstance(cells, np.ndarray):
        return cells[order]
    return [cells[i] for i in order]


def unpermute_grid(hmap: HilbertMap, seq):
    """Inverse of :func:`permute_grid`: curve order back to row-major."""
    order = _check_length(hmap, seq)
    if isinstance(seq, np.ndarray):
        out = np.empty_like(seq)
        out[order] = seq
        return out
    out = [None] * len(seq)
    for pos, i in enumerate(order):
        out[i] = seq[pos]
    return out


def _check_length(hmap: HilbertMap, seq) -> np.ndarray:
    if len(seq) != hmap.size:
        raise ShapeError(
            f"expected {hmap.size} cells for a order-{hmap.order} curve, got {len(seq)}"
        )
    return hmap.rowmajor_order()


def dump_csv(hmap: HilbertMap, stream) -> None:
    """Write ``index,row,col`` lines for every curve position."""
    stream.write("index,row,col\n")
    for i, (r, c) in enumerate(hmap.index_to_coord.tolist()):
        stream.write(f"{i},{r},{c}\n")
