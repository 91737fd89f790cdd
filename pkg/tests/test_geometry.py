"""Binning, tokenization and rectangle geometry."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from layoutpref.geometry import (
    BBox,
    Canvas,
    Element,
    ElementKind,
    Layout,
    TokenizedLayout,
    bin_coord,
    detokenize_layout,
    intersection_area,
    iou,
    tokenize_layout,
    unbin_coord,
)

from conftest import make_element, make_layout


def grid_intersection_oracle(a: BBox, b: BBox, span=(-8.0, 8.0), n=1600) -> float:
    """Independent rasterized-grid area estimate of the intersection."""
    lo, hi = span
    cell = (hi - lo) / n
    centers = lo + (np.arange(n) + 0.5) * cell
    xs = centers[None, :]
    ys = centers[:, None]
    inside_a = (xs >= a.left) & (xs <= a.right) & (ys >= a.top) & (ys <= a.bottom)
    inside_b = (xs >= b.left) & (xs <= b.right) & (ys >= b.top) & (ys <= b.bottom)
    return float(np.count_nonzero(inside_a & inside_b)) * cell * cell


class TestBinning:
    def test_zero(self):
        assert bin_coord(0, 224, 224) == 0

    def test_exact_integral(self):
        assert bin_coord(112, 224, 224) == 112

    def test_edge_token_permitted(self):
        assert bin_coord(224, 224, 224) == 224

    def test_out_of_range_clamped(self):
        assert bin_coord(-5, 224, 224) == 0
        assert bin_coord(500, 224, 224) == 224

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            bin_coord(1.0, 0.0, 224)
        with pytest.raises(ValueError):
            bin_coord(1.0, -3.0, 224)
        with pytest.raises(ValueError):
            bin_coord(1.0, 224.0, 0)

    @given(
        st.floats(0, 1000, allow_nan=False),
        st.floats(0, 1000, allow_nan=False),
        st.floats(1e-3, 1000),
        st.integers(1, 512),
    )
    def test_monotone(self, a1, a2, d, k):
        lo, hi = sorted((a1, a2))
        assert bin_coord(lo, d, k) <= bin_coord(hi, d, k)


class TestUnbinning:
    def test_bin_center(self):
        assert unbin_coord(0, 224, 224) == pytest.approx(0.5)

    def test_clamped_at_canvas_edge(self):
        assert unbin_coord(224, 224, 224) == 224.0

    def test_invalid_token(self):
        with pytest.raises(ValueError):
            unbin_coord(225, 224, 224)
        with pytest.raises(ValueError):
            unbin_coord(-1, 224, 224)

    def test_roundtrip_error_bound_grid_sweep(self):
        # exhaustive fine-grid sweep: |a - unbin(bin(a))| <= D/(2K) on [0, D)
        for d in (224.0, 448.0, 100.0, 7.3):
            for k in (1, 7, 224):
                grid = np.linspace(0.0, d, 5001, endpoint=False)
                for a in grid:
                    t = bin_coord(float(a), d, k)
                    err = abs(float(a) - unbin_coord(t, d, k))
                    assert err <= d / (2 * k) + 1e-12


class TestTokenize:
    def test_centered_element(self):
        layout = make_layout([(112, 112, 112, 112)], canvas=(224, 224))
        assert tokenize_layout(layout, 224).tokens == (112, 112, 112, 112)

    def test_empty(self):
        layout = Layout(Canvas(224, 224), [])
        assert tokenize_layout(layout, 224).tokens == ()

    def test_mixed_canvas_bins_x_by_width(self):
        layout = make_layout([(224, 112, 10, 10)], canvas=(448, 224))
        tokens = tokenize_layout(layout, 224)
        assert tokens.tokens[0] == 112

    def test_background_excluded(self):
        bg = Element(id="bg", kind=ElementKind.BACKGROUND)
        fg = make_element(1)
        layout = Layout(
            Canvas(224, 224),
            [(bg, BBox(112, 112, 224, 224)), (fg, BBox(112, 112, 112, 112))],
        )
        assert len(tokenize_layout(layout, 224)) == 4

    @given(st.lists(st.tuples(*[st.floats(0, 224)] * 4), min_size=0, max_size=6))
    def test_tokens_always_in_alphabet(self, boxes):
        layout = make_layout([(x, y, w, h) for x, y, w, h in boxes], canvas=(224, 224))
        tokens = tokenize_layout(layout, 224)
        assert all(0 <= t <= 224 for t in tokens.tokens)


class TestDetokenize:
    def test_roundtrip_within_half_bin(self):
        rng = np.random.default_rng(7)
        k = 224
        for _ in range(50):
            canvas = Canvas(float(rng.uniform(64, 1024)), float(rng.uniform(64, 1024)))
            n = int(rng.integers(1, 6))
            boxes = [
                (
                    rng.uniform(0, canvas.width),
                    rng.uniform(0, canvas.height),
                    rng.uniform(0, canvas.width),
                    rng.uniform(0, canvas.height),
                )
                for _ in range(n)
            ]
            layout = make_layout(boxes, canvas=(canvas.width, canvas.height))
            tokens = tokenize_layout(layout, k)
            rebuilt = detokenize_layout(tokens, [e for e, _ in layout.placements], canvas)
            for (_, orig), (_, back) in zip(layout.placements, rebuilt.placements):
                assert abs(orig.x - back.x) <= canvas.width / (2 * k) + 1e-9
                assert abs(orig.y - back.y) <= canvas.height / (2 * k) + 1e-9
                assert abs(orig.w - back.w) <= canvas.width / (2 * k) + 1e-9
                assert abs(orig.h - back.h) <= canvas.height / (2 * k) + 1e-9

    def test_empty(self):
        layout = detokenize_layout(TokenizedLayout([], 224), [], Canvas(10, 10))
        assert len(layout) == 0

    def test_length_rule(self):
        with pytest.raises(ValueError):
            TokenizedLayout([1, 2, 3, 4, 5], 224)
        with pytest.raises(ValueError):
            detokenize_layout(TokenizedLayout([0] * 8, 224), [make_element(0)], Canvas(10, 10))


class TestIntersectionArea:
    def test_identical(self):
        a = BBox(0, 0, 2, 2)
        assert intersection_area(a, a) == 4.0

    def test_touching_edges(self):
        assert intersection_area(BBox(0, 0, 2, 2), BBox(2, 0, 2, 2)) == 0.0

    def test_offset_boxes_match_grid_oracle(self):
        # both readings of a 4x2 box against a 2x2 neighbour, frozen from the oracle
        wide, tall = BBox(0, 0, 4, 2), BBox(0, 0, 2, 4)
        other = BBox(1, 0, 2, 2)
        for a, expected in ((wide, 4.0), (tall, 2.0)):
            got = intersection_area(a, other)
            assert got == pytest.approx(expected)
            assert grid_intersection_oracle(a, other) == pytest.approx(expected, abs=0.05)

    @given(st.tuples(*[st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 5), st.floats(0, 5)] * 2))
    def test_bounded_by_min_area(self, vals):
        a = BBox(*vals[:4])
        b = BBox(*vals[4:])
        assert intersection_area(a, b) <= min(a.area, b.area) + 1e-12


class TestIoU:
    def test_identical(self):
        assert iou(BBox(3, 4, 2, 2), BBox(3, 4, 2, 2)) == 1.0

    def test_disjoint(self):
        assert iou(BBox(0, 0, 1, 1), BBox(5, 5, 1, 1)) == 0.0

    def test_half_offset_unit_squares(self):
        a = BBox(0, 0, 1, 1)
        b = BBox(0.5, 0, 1, 1)
        # inter 0.5, union 1.5 -> 1/3; confirmed by the rasterized-grid oracle
        inter = grid_intersection_oracle(a, b)
        union = a.area + b.area - inter
        assert inter / union == pytest.approx(1 / 3, abs=0.01)
        assert iou(a, b) == pytest.approx(1 / 3)

    def test_zero_union(self):
        assert iou(BBox(0, 0, 0, 0), BBox(0, 0, 0, 0)) == 0.0

    @given(st.tuples(*[st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 5), st.floats(0, 5)] * 2))
    def test_symmetric_and_bounded(self, vals):
        a = BBox(*vals[:4])
        b = BBox(*vals[4:])
        assert iou(a, b) == iou(b, a)
        assert 0.0 <= iou(a, b) <= 1.0 + 1e-12


class TestDomainTypes:
    def test_canvas_invariants(self):
        with pytest.raises(ValueError):
            Canvas(0, 100)
        with pytest.raises(ValueError):
            Canvas(100, -1)

    def test_element_text_invariants(self):
        with pytest.raises(ValueError):
            Element(id="x", kind=ElementKind.TEXT)
        with pytest.raises(ValueError):
            Element(id="x", kind=ElementKind.IMAGE, text="nope")

    def test_bbox_nonnegative_sides(self):
        with pytest.raises(ValueError):
            BBox(0, 0, -1, 1)

    def test_layout_unique_ids(self):
        e = make_element(0)
        with pytest.raises(ValueError):
            Layout(Canvas(10, 10), [(e, BBox(1, 1, 1, 1)), (e, BBox(2, 2, 1, 1))])

    def test_tokenized_layout_alphabet(self):
        with pytest.raises(ValueError):
            TokenizedLayout([0, 1, 2, 300], 224)
        with pytest.raises(ValueError):
            TokenizedLayout([0, 1, 2, -1], 224)

    def test_corner_conversion_exact(self):
        b = BBox(10, 20, 4, 6)
        assert (b.left, b.top, b.right, b.bottom) == (8, 17, 12, 23)
