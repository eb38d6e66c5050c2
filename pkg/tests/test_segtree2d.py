import math
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmap import InvalidParameterError, PixelRect, RangeAggregate, SegTree2D
from dmap.segtree2d import brute_force


def _image(rng, h, w, empty=0.3):
    img = rng.uniform(0.1, 50.0, size=(h, w))
    img[rng.random((h, w)) < empty] = np.inf
    return img


def test_empty_image_root():
    t = SegTree2D.build(np.full((4, 5), np.inf))
    assert t.root() == RangeAggregate.empty()


def test_single_pixel_root():
    assert SegTree2D.build(np.array([[4.2]])).root() == RangeAggregate(4.2, 4.2, 1)


def test_row_example():
    row = np.array([[9, 3, 5, 1, 8, 12, 2, 6]], dtype=float)
    t = SegTree2D.build(row)
    assert t.root() == RangeAggregate(1, 12, 8)
    # columns 2..7 (1-based) are indices 1..6
    assert t.query(PixelRect(1, 6, 0, 0)).dMin == 1


def test_zero_size_rejected():
    with pytest.raises(InvalidParameterError):
        SegTree2D.build(np.zeros((0, 3)))


def test_exhaustive_8x8(rng):
    for _ in range(3):
        img = _image(rng, 8, 8)
        t = SegTree2D.build(img, panoramic=False)
        for xl, xr in itertools.combinations_with_replacement(range(8), 2):
            for yl, yr in itertools.combinations_with_replacement(range(8), 2):
                r = PixelRect(xl, xr, yl, yr)
                assert t.query(r) == brute_force(img, r)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_random_rects_match_brute_force(h, w, seed):
    g = np.random.default_rng(seed)
    img = _image(g, h, w)
    t = SegTree2D.build(img, panoramic=False)
    for _ in range(30):
        xl, xr = sorted(g.integers(0, w, 2))
        yl, yr = sorted(g.integers(0, h, 2))
        r = PixelRect(int(xl), int(xr), int(yl), int(yr))
        assert t.query(r) == brute_force(img, r)


def test_out_of_bounds_rows_empty(rng):
    t = SegTree2D.build(_image(rng, 6, 6), panoramic=False)
    assert t.query(PixelRect(0, 5, 7, 9)).dSum == 0
    assert t.query(PixelRect(-5, -1, 0, 5)).dSum == 0


def test_partial_clip_matches_clipped(rng):
    img = _image(rng, 6, 9)
    t = SegTree2D.build(img, panoramic=False)
    assert t.query(PixelRect(-3, 4, -2, 3)) == brute_force(img, PixelRect(0, 4, 0, 3))


def test_panoramic_wrap_is_union(rng):
    img = _image(rng, 5, 12)
    t = SegTree2D.build(img, panoramic=True)
    got = t.query(PixelRect(-3, 2, 1, 3))
    want = brute_force(img, PixelRect(9, 11, 1, 3)).merge(brute_force(img, PixelRect(0, 2, 1, 3)))
    assert got == want
    got = t.query(PixelRect(10, 13, 0, 4))
    want = brute_force(img, PixelRect(10, 11, 0, 4)).merge(brute_force(img, PixelRect(0, 1, 0, 4)))
    assert got == want


def test_merge_of_adjacent_rects(rng):
    img = _image(rng, 16, 16)
    t = SegTree2D.build(img, panoramic=False)
    a, b = PixelRect(2, 6, 3, 9), PixelRect(7, 12, 3, 9)
    assert t.query(PixelRect(2, 12, 3, 9)) == t.query(a).merge(t.query(b))


def test_visit_count_bound(rng):
    for h, w in [(16, 16), (64, 33), (100, 7), (128, 256)]:
        t = SegTree2D.build(_image(rng, h, w), panoramic=False)
        bound = 4 * (math.log2(w) + 1) * (math.log2(h) + 1)
        for _ in range(200):
            xl, xr = sorted(rng.integers(0, w, 2))
            yl, yr = sorted(rng.integers(0, h, 2))
            t.query(PixelRect(int(xl), int(xr), int(yl), int(yr)))
            assert t.last_visited <= bound
