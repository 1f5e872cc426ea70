import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twogrid.errors import ArgumentError, BoundsError, ShapeError
from twogrid.hilbert import build_hilbert
from twogrid.spectral import split_bands
from twogrid.tokenizer import (central_cells, detokenize, hilbert_layout, mean_step_distance, raster_layout,
                               sample_refine_mask, tg_layout, tokenize_fixed_tg, tokenize_hilbert,
                               tokenize_ran_tg, tokenize_raster, tokenize_twogrid)


def rand(side, seed=0):
    return np.random.default_rng(seed).standard_normal((side, side))


def test_raster_4x4():
    x = np.arange(16.0).reshape(4, 4)
    seq = tokenize_raster(x, 2)
    assert len(seq) == 4
    assert seq.tokens[0].tolist() == [0, 1, 4, 5]
    assert np.array_equal(seq.permutation, np.arange(4))
    assert seq.order_tag == "raster"


def test_raster_round_trip_and_paper_shape():
    x = rand(32)
    assert np.array_equal(detokenize(tokenize_raster(x, 4)), x)
    seq = tokenize_raster(rand(256), 16)
    assert seq.tokens.shape == (256, 256)


def test_indivisible_image():
    with pytest.raises(ShapeError):
        tokenize_raster(rand(10), 3)


def test_hilbert_visits_order_one_cells():
    x = np.arange(16.0).reshape(4, 4)
    seq = tokenize_hilbert(x, 2)
    tops = [(t // 4 // 2, t % 4 // 2) for t in seq.tokens[:, 0].astype(int)]
    assert tops == [(0, 0), (0, 1), (1, 1), (1, 0)]


def test_hilbert_non_power_of_two_grid():
    with pytest.raises(ShapeError, match="grid_side=3"):
        tokenize_hilbert(rand(12), 4)


def test_hilbert_round_trip_and_order4():
    x = rand(64)
    assert np.array_equal(detokenize(tokenize_hilbert(x, 8)), x)
    seq = tokenize_hilbert(rand(256), 16)
    assert len(seq) == 256
    assert np.array_equal(seq.permutation, build_hilbert(4).rowmajor_order())


def test_permutations_are_bijections():
    for lay in (raster_layout(32, 4), hilbert_layout(32, 4)):
        assert sorted(lay.permutation.tolist()) == list(range(64))


def test_twogrid_paper_shapes():
    pair = split_bands(rand(256), 16)
    low, high = tokenize_twogrid(pair, 3, 4)
    assert low.tokens.shape == (64, 32 * 32)
    assert high.tokens.shape == (256, 16 * 16)
    assert (low.order_tag, high.order_tag) == ("twogrid_coarse", "twogrid_fine")


def test_twogrid_recomposes_image():
    x = rand(64)
    low, high = tokenize_twogrid(split_bands(x, 6), 2, 3)
    assert np.abs(detokenize(low) + detokenize(high) - x).max() < 1e-6


def test_twogrid_zero_high_band():
    x = rand(32)
    _, high = tokenize_twogrid(split_bands(x, 16), 1, 2)
    assert np.abs(high.tokens).max() < 1e-12


def test_twogrid_argument_errors():
    pair = split_bands(rand(32), 4)
    with pytest.raises(ArgumentError):
        tokenize_twogrid(pair, 3, 3)
    with pytest.raises(ShapeError):
        tokenize_twogrid(split_bands(rand(24), 4), 2, 4)


def test_fixed_tg_empty_mask_equals_hilbert():
    x = rand(32)
    a, b = tokenize_fixed_tg(x, 2, []), tokenize_hilbert(x, 8)
    assert np.array_equal(a.tokens, b.tokens)


def test_fixed_tg_full_mask_length():
    seq = tokenize_fixed_tg(rand(32), 2, range(16))
    assert len(seq) == 4 ** 3
    assert np.array_equal(detokenize(seq), rand(32))


def test_fixed_tg_single_refined_cell_by_hand():
    x = np.arange(16.0).reshape(4, 4)
    seq = tokenize_fixed_tg(x, 1, {0})
    assert len(seq) == 7
    # cell 0 is the top-left 2x2 block; its subcells in the next-order curve
    assert seq.tokens[:4, 0].tolist() == [x[0, 0], x[1, 0], x[1, 1], x[0, 1]]
    assert (seq.tokens[:4, 1:] == 0).all()          # padding past the one real pixel
    assert seq.tokens[4].tolist() == [2, 3, 6, 7]     # next coarse cell, untouched


def test_fixed_tg_length_formula():
    for mask in ([], [1], [0, 5, 9], central_cells(2)):
        assert len(tokenize_fixed_tg(rand(32), 2, mask)) == 16 + 3 * len(mask)


def test_central_cells_default():
    mask = central_cells(2)
    h = build_hilbert(2)
    assert sorted(tuple(h.index_to_coord[i]) for i in mask) == [(1, 1), (1, 2), (2, 1), (2, 2)]
    assert len(tokenize_fixed_tg(rand(32), 2)) == 16 + 12


def test_fixed_tg_mask_out_of_range():
    with pytest.raises(BoundsError):
        tokenize_fixed_tg(rand(32), 2, [16])


def test_tg_cells_cover_image_once():
    lay = tg_layout(32, 2, [0, 3, 7])
    cover = np.zeros((32, 32), int)
    for top, left, size in lay.cells:
        cover[top:top + size, left:left + size] += 1
    assert (cover == 1).all()


def test_tg_sequence_stays_continuous():
    lay = tg_layout(64, 2, [2, 6])
    centres = lay.cells[:, :2] + lay.cells[:, 2:3] / 2
    # adjacent tokens touch: centre distance never exceeds the sum of half-sides
    half = lay.cells[:, 2] / 2
    step = np.abs(np.diff(centres, axis=0)).max(axis=1)
    assert (step <= half[1:] + half[:-1] + 1e-9).all()


def test_ran_tg_extremes():
    x = rand(32)
    assert np.array_equal(tokenize_ran_tg(x, 2, 0.0, 3).tokens, tokenize_hilbert(x, 8).tokens)
    assert np.array_equal(tokenize_ran_tg(x, 2, 1.0, 3).tokens, tokenize_fixed_tg(x, 2, range(16)).tokens)


def test_ran_tg_deterministic_by_seed():
    x = rand(64)
    a, b = tokenize_ran_tg(x, 3, 0.3, 11), tokenize_ran_tg(x, 3, 0.3, 11)
    assert np.array_equal(a.tokens, b.tokens)


@pytest.mark.parametrize("p", [-0.1, 1.5])
def test_ran_tg_bad_probability(p):
    with pytest.raises(ArgumentError):
        tokenize_ran_tg(rand(32), 2, p, 0)


def test_ran_tg_refined_fraction_monte_carlo():
    frac = np.mean([len(sample_refine_mask(4, 0.05, s)) / 256 for s in range(10_000)])
    assert abs(frac - 0.05) <= 0.01


@pytest.mark.parametrize("order", [2, 3, 4, 5])
def test_hilbert_locality_beats_raster(order):
    side = 1 << order
    assert mean_step_distance(hilbert_layout(side, 1)) < mean_step_distance(raster_layout(side, 1))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1, 2, 3]), st.floats(0, 1))
def test_every_variant_round_trips(seed, order, p):
    x = rand(32, seed)
    for seq in (tokenize_raster(x, 32 >> order), tokenize_hilbert(x, 32 >> order),
                tokenize_ran_tg(x, order, p, seed)):
        assert np.array_equal(detokenize(seq), x)
