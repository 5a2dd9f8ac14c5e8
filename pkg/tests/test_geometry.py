import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sstrack.geometry import (
    BoundingBox,
    ciou_grad,
    ciou_loss,
    eiou,
    eiou_matrix,
    expand,
    expand_boxes,
    ha_eiou,
    ha_eiou_matrix,
    hiou,
    hiou_matrix,
    iou,
    iou_matrix,
)

from oracles import grid_eiou, grid_iou, interval_hiou, naive_ciou

coord = st.floats(-50, 50, allow_nan=False)
size = st.floats(0.0, 40, allow_nan=False)
boxes_st = st.tuples(coord, coord, size, size)
# translation tests add offsets to coordinates; dyadic-grid values keep the
# shifted arithmetic exact, so the invariance is not polluted by absorption
grid_coord = st.integers(-3200, 3200).map(lambda v: v / 64.0)
grid_size = st.integers(0, 2560).map(lambda v: v / 64.0)
grid_boxes_st = st.tuples(grid_coord, grid_coord, grid_size, grid_size)


def random_int_boxes(rng, n):
    x = rng.integers(0, 40, n)
    y = rng.integers(0, 40, n)
    w = rng.integers(1, 25, n)
    h = rng.integers(1, 25, n)
    return np.stack([x, y, w, h], axis=1).astype(np.float64)


class TestIoU:
    def test_identical(self):
        assert iou((0, 0, 10, 10), (0, 0, 10, 10)) == 1.0

    def test_half_overlap_case(self):
        assert iou((0, 0, 10, 10), (5, 0, 10, 10)) == pytest.approx(50 / 150)

    def test_disjoint(self):
        assert iou((0, 0, 10, 10), (20, 20, 5, 5)) == 0.0

    def test_degenerate_zero_area(self):
        assert iou((0, 0, 0, 10), (0, 0, 10, 10)) == 0.0
        assert iou((0, 0, 0, 0), (0, 0, 0, 0)) == 0.0

    def test_grid_oracle(self):
        rng = np.random.default_rng(11)
        a = random_int_boxes(rng, 300)
        b = random_int_boxes(rng, 300)
        for i in range(300):
            assert iou(a[i], b[i]) == pytest.approx(grid_iou(a[i], b[i]), abs=1e-3)

    def test_bounding_box_inputs(self):
        bb = BoundingBox(0, 0, 10, 10)
        assert iou(bb, BoundingBox(5, 0, 10, 10)) == pytest.approx(50 / 150)


class TestExpand:
    def test_zero_buffer_identity(self):
        assert expand(BoundingBox(0, 0, 10, 10), 0.0) == BoundingBox(0, 0, 10, 10)

    def test_known_values(self):
        assert expand(BoundingBox(0, 0, 10, 10), 0.4) == BoundingBox(-2, -2, 14, 14)
        assert expand(BoundingBox(5, 5, 2, 4), 0.5) == BoundingBox(4.5, 4, 3, 6)

    def test_center_preserved(self):
        b = BoundingBox(3, 7, 4, 9)
        e = expand(b, 0.35)
        assert e.center == pytest.approx(b.center)
        assert e.w == pytest.approx(b.w * 1.35)

    def test_negative_buffer_rejected(self):
        with pytest.raises(ValueError):
            expand((0, 0, 1, 1), -0.1)

    def test_array_form_matches_scalar(self):
        boxes = np.array([[0, 0, 10, 10], [5, 5, 2, 4]], dtype=float)
        out = expand_boxes(boxes, 0.5)
        for row, src in zip(out, boxes):
            assert np.allclose(row, expand(src, 0.5))


class TestEIoU:
    def test_known_value(self):
        assert eiou((0, 0, 10, 10), (5, 0, 10, 10), 0.4) == pytest.approx(126 / 266)

    def test_zero_buffer_equals_iou_bitwise(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            a = rng.uniform(0, 40, 4)
            b = rng.uniform(0, 40, 4)
            assert eiou(a, b, 0.0) == iou(a, b)

    def test_grid_oracle_buffered(self):
        # scale 5 makes 0.4-expanded integer boxes land exactly on grid cells
        rng = np.random.default_rng(12)
        a = random_int_boxes(rng, 150)
        b = random_int_boxes(rng, 150)
        for i in range(150):
            assert eiou(a[i], b[i], 0.4) == pytest.approx(
                grid_eiou(a[i], b[i], 0.4, scale=5), abs=1e-3
            )

    def test_disjoint_becomes_positive(self):
        a, b = (0, 0, 10, 10), (11, 0, 10, 10)
        assert iou(a, b) == 0.0
        assert eiou(a, b, 0.4) > 0.0


class TestHIoU:
    def test_identical(self):
        assert hiou((0, 0, 10, 10), (3, 0, 7, 10)) == 1.0

    def test_known_value(self):
        assert hiou((0, 0, 5, 10), (9, 4, 5, 10)) == pytest.approx(6 / 14)

    def test_disjoint_clamped(self):
        assert hiou((0, 0, 5, 10), (0, 20, 5, 10)) == 0.0

    def test_absolute_variant_keeps_magnitude(self):
        a, b = (0, 0, 5, 10), (0, 20, 5, 10)
        # extents [0,10] vs [20,30]: overlap -10, span 30
        assert hiou(a, b, absolute=True) == pytest.approx(10 / 30)

    def test_degenerate_same_line(self):
        assert hiou((0, 5, 3, 0), (8, 5, 2, 0)) == 1.0

    def test_interval_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(300):
            a = rng.uniform(0, 40, 4)
            b = rng.uniform(0, 40, 4)
            assert hiou(a, b) == pytest.approx(interval_hiou(a, b), abs=1e-12)


class TestHaEIoU:
    def test_identical(self):
        assert ha_eiou((2, 3, 4, 5), (2, 3, 4, 5), 0.3) == pytest.approx(1.0, abs=1e-12)

    def test_vertically_disjoint_is_zero(self):
        assert ha_eiou((0, 0, 10, 10), (0, 50, 10, 10), 0.4) == 0.0

    def test_known_product(self):
        got = ha_eiou((0, 0, 10, 10), (0, 4, 10, 10), 0.0)
        assert got == pytest.approx((6 / 14) * (6 / 14))

    def test_factorization_bit_exact(self):
        rng = np.random.default_rng(14)
        for _ in range(300):
            a = rng.uniform(0, 40, 4)
            b = rng.uniform(0, 40, 4)
            assert ha_eiou(a, b, 0.4) == hiou(a, b) * eiou(a, b, 0.4)

    def test_expanded_height_flag(self):
        a, b = (0, 0, 10, 10), (0, 11, 10, 10)
        assert ha_eiou(a, b, 0.4) == 0.0  # originals vertically disjoint
        assert ha_eiou(a, b, 0.4, expanded_height=True) > 0.0


@given(boxes_st, boxes_st)
@settings(max_examples=300, deadline=None)
def test_symmetry(a, b):
    assert iou(a, b) == pytest.approx(iou(b, a), abs=1e-12)
    assert eiou(a, b, 0.4) == pytest.approx(eiou(b, a, 0.4), abs=1e-12)
    assert hiou(a, b) == pytest.approx(hiou(b, a), abs=1e-12)
    assert ha_eiou(a, b, 0.4) == pytest.approx(ha_eiou(b, a, 0.4), abs=1e-12)


@given(boxes_st, boxes_st)
@settings(max_examples=300, deadline=None)
def test_ranges(a, b):
    for val in (iou(a, b), eiou(a, b, 0.4), hiou(a, b), ha_eiou(a, b, 0.4)):
        assert 0.0 <= val <= 1.0 + 1e-12


@given(grid_boxes_st, grid_boxes_st, grid_coord, grid_coord)
@settings(max_examples=200, deadline=None)
def test_translation_invariance(a, b, dx, dy):
    a2 = (a[0] + dx, a[1] + dy, a[2], a[3])
    b2 = (b[0] + dx, b[1] + dy, b[2], b[3])
    assert iou(a2, b2) == pytest.approx(iou(a, b), abs=1e-9)
    assert eiou(a2, b2, 0.4) == pytest.approx(eiou(a, b, 0.4), abs=1e-9)
    assert hiou(a2, b2) == pytest.approx(hiou(a, b), abs=1e-9)


def test_matrix_forms_match_scalar():
    rng = np.random.default_rng(15)
    a = rng.uniform(0, 40, (8, 4))
    b = rng.uniform(0, 40, (6, 4))
    im = iou_matrix(a, b)
    em = eiou_matrix(a, b, 0.4)
    hm = hiou_matrix(a, b)
    ham = ha_eiou_matrix(a, b, 0.4)
    for i in range(8):
        for j in range(6):
            assert im[i, j] == pytest.approx(iou(a[i], b[j]), abs=1e-12)
            assert em[i, j] == pytest.approx(eiou(a[i], b[j], 0.4), abs=1e-12)
            assert hm[i, j] == pytest.approx(hiou(a[i], b[j]), abs=1e-12)
            assert ham[i, j] == pytest.approx(ha_eiou(a[i], b[j], 0.4), abs=1e-12)


def test_matrix_empty_shapes():
    a = np.zeros((0, 4))
    b = np.ones((3, 4))
    assert iou_matrix(a, b).shape == (0, 3)
    assert ha_eiou_matrix(b, a, 0.3).shape == (3, 0)


class TestCIoU:
    def test_perfect_is_zero(self):
        assert ciou_loss((1, 2, 3, 4), (1, 2, 3, 4)) == pytest.approx(0.0, abs=1e-12)

    def test_disjoint_exceeds_one(self):
        assert ciou_loss((0, 0, 10, 10), (10, 0, 10, 10)) > 1.0

    def test_matches_independent_formula(self):
        rng = np.random.default_rng(16)
        for _ in range(300):
            p = rng.uniform(0, 30, 4) + [0, 0, 1, 1]
            g = rng.uniform(0, 30, 4) + [0, 0, 1, 1]
            assert ciou_loss(p, g) == pytest.approx(naive_ciou(p, g), abs=1e-9)

    def test_non_negative(self):
        rng = np.random.default_rng(17)
        for _ in range(500):
            p = rng.uniform(0, 30, 4) + [0, 0, 0.01, 0.01]
            g = rng.uniform(0, 30, 4) + [0, 0, 0.5, 0.5]
            assert ciou_loss(p, g) >= 0.0

    def test_zero_size_pred_handled(self):
        val = ciou_loss((5, 5, 0, 0), (0, 0, 10, 10))
        assert math.isfinite(val) and val > 0

    def test_batched_matches_scalar(self):
        rng = np.random.default_rng(18)
        p = rng.uniform(0, 30, (20, 4)) + [0, 0, 1, 1]
        g = rng.uniform(0, 30, (20, 4)) + [0, 0, 1, 1]
        batch = ciou_loss(p, g)
        assert batch.shape == (20,)
        for i in range(20):
            assert batch[i] == pytest.approx(ciou_loss(p[i], g[i]), abs=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(19)
        eps = 1e-6
        for _ in range(60):
            p = rng.uniform(1, 30, 4)
            g = rng.uniform(1, 30, 4)
            an = ciou_grad(p, g)
            for k in range(4):
                pp = p.copy(); pp[k] += eps
                pm = p.copy(); pm[k] -= eps
                fd = (ciou_loss(pp, g) - ciou_loss(pm, g)) / (2 * eps)
                assert an[k] == pytest.approx(fd, rel=1e-4, abs=1e-6)

    def test_gradient_zero_iou_branch(self):
        # disjoint boxes: IoU term flat, distance term still pulls
        p = np.array([0.0, 0.0, 5.0, 5.0])
        g = np.array([50.0, 50.0, 5.0, 5.0])
        an = ciou_grad(p, g)
        eps = 1e-6
        for k in range(4):
            pp = p.copy(); pp[k] += eps
            pm = p.copy(); pm[k] -= eps
            fd = (ciou_loss(pp, g) - ciou_loss(pm, g)) / (2 * eps)
            assert an[k] == pytest.approx(fd, rel=1e-4, abs=1e-6)

    def test_requires_positive_gt_area(self):
        with pytest.raises(ValueError):
            ciou_loss((0, 0, 5, 5), (0, 0, 0, 5))
