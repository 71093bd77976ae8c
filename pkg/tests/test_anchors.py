import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mosqseg.anchors import (
    IGNORE,
    NEGATIVE,
    Anchor,
    AnchorConfig,
    MatchLabel,
    RegressionTarget,
    decode_box,
    encode_box,
    fg_bg_ratio,
    generate_anchors,
    match_anchors,
    nms,
)
from mosqseg.geometry import BitMask, BoundingBox, GeometryError, GridDims, box_iou

from helpers import exact_box_iou


def single(stride=16, scales=(32,), ratios=(1.0,), clip=False):
    return AnchorConfig(strides=(stride,), scales=(tuple(scales),), ratios=ratios, clip=clip)


class TestGenerate:
    def test_count_single_level(self):
        anchors = generate_anchors(single(), GridDims(64, 64))
        assert len(anchors) == 16

    def test_two_ratios_double(self):
        assert len(generate_anchors(single(ratios=(0.5, 2.0)), GridDims(64, 64))) == 32

    def test_ratio_shape(self):
        a = generate_anchors(single(ratios=(2.0,)), GridDims(16, 16))[0].box
        assert a.w / a.h == pytest.approx(2.0)
        assert a.w * a.h == pytest.approx(32 * 32)

    def test_centres_on_cells(self):
        anchors = generate_anchors(single(), GridDims(64, 32))
        centres = [(a.box.x + a.box.w / 2, a.box.y + a.box.h / 2) for a in anchors]
        assert centres[:5] == [(8, 8), (24, 8), (40, 8), (56, 8), (8, 24)]

    def test_partial_cells_counted(self):
        assert len(generate_anchors(single(), GridDims(65, 64))) == 20

    def test_multi_level_counts(self):
        cfg = AnchorConfig(strides=(8, 16), scales=(16, 32), ratios=(0.5, 1, 2))
        # flat scales apply at every level: 2 scales x 3 ratios per cell
        assert len(generate_anchors(cfg, GridDims(64, 64))) == (64 + 16) * 6
        assert {a.level for a in generate_anchors(cfg, GridDims(64, 64))} == {0, 1}

    def test_default_config(self):
        n = len(generate_anchors(AnchorConfig(), GridDims(128, 128)))
        assert n == 3 * (32**2 + 16**2 + 8**2 + 4**2 + 2**2)

    def test_clip_keeps_anchors_inside(self):
        g = GridDims(64, 48)
        for a in generate_anchors(single(scales=(48,), clip=True), g):
            assert a.box.x >= 0 and a.box.y >= 0 and a.box.x2 <= 64 and a.box.y2 <= 48

    def test_rejects_bad_config(self):
        with pytest.raises(ValueError):
            AnchorConfig(strides=(8, 16), scales=((8,),))
        with pytest.raises(ValueError):
            AnchorConfig(ratios=())


class TestEncodeDecode:
    def test_hand_example(self):
        t = encode_box(Anchor(BoundingBox(0, 0, 10, 10)), BoundingBox(5, 5, 20, 20))
        assert t == pytest.approx((0.5, 0.5, math.log(2), math.log(2)), abs=1e-12)

    def test_offset_example(self):
        t = encode_box(Anchor(BoundingBox(10, 10, 20, 20)), BoundingBox(15, 12, 40, 10))
        assert t == pytest.approx((0.25, 0.1, math.log(2), -math.log(2)), abs=1e-12)

    def test_identity(self):
        a = Anchor(BoundingBox(3, 4, 7, 9))
        assert encode_box(a, a.box) == (0.0, 0.0, 0.0, 0.0)

    def test_decode_hand_example(self):
        b = decode_box(Anchor(BoundingBox(0, 0, 10, 10)), RegressionTarget(0.5, 0.5, math.log(2), math.log(2)))
        assert b.as_list() == pytest.approx([5, 5, 20, 20], abs=1e-12)

    def test_random_roundtrip(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            a = Anchor(BoundingBox(*rng.uniform(-100, 1000, 2), *rng.uniform(1, 500, 2)))
            b = BoundingBox(*rng.uniform(-100, 1000, 2), *rng.uniform(1, 500, 2))
            back = decode_box(a, encode_box(a, b))
            assert back.as_list() == pytest.approx(b.as_list(), rel=1e-9, abs=1e-9)

    @given(st.floats(-50, 50), st.floats(-50, 50))
    def test_translation_equivariance(self, dx, dy):
        a = BoundingBox(10, 20, 30, 40)
        b = BoundingBox(15, 12, 22, 50)
        t0 = encode_box(Anchor(a), b)
        t1 = encode_box(Anchor(BoundingBox(a.x + dx, a.y + dy, a.w, a.h)), BoundingBox(b.x + dx, b.y + dy, b.w, b.h))
        assert t1 == pytest.approx(t0, abs=1e-9)

    @given(st.floats(0.1, 10))
    def test_scale_equivariance(self, s):
        a = BoundingBox(10, 20, 30, 40)
        b = BoundingBox(15, 12, 22, 50)
        t0 = encode_box(Anchor(a), b)
        t1 = encode_box(Anchor(BoundingBox(a.x * s, a.y * s, a.w * s, a.h * s)), BoundingBox(b.x * s, b.y * s, b.w * s, b.h * s))
        assert t1 == pytest.approx(t0, abs=1e-9)


class TestMatch:
    def test_no_gt_all_negative(self):
        anchors = generate_anchors(single(), GridDims(64, 64))
        assert match_anchors(anchors, []) == [NEGATIVE] * 16

    def test_identical_is_positive(self):
        box = BoundingBox(0, 0, 32, 32)
        assert match_anchors([Anchor(box)], [box]) == [MatchLabel.positive(0)]

    def test_middle_band_ignored(self):
        # anchor 0 is the forced best match; anchor 1 overlaps at IoU 0.4
        gt = BoundingBox(0, 0, 10, 10)
        a_ign = Anchor(BoundingBox(0, 0, 10, 4))
        assert box_iou(a_ign.box, gt) == pytest.approx(0.4)
        labels = match_anchors([Anchor(gt), a_ign, Anchor(BoundingBox(50, 50, 5, 5))], [gt])
        assert labels == [MatchLabel.positive(0), IGNORE, NEGATIVE]

    def test_forced_best_anchor(self):
        # best IoU below the negative threshold is still forced positive
        gt = BoundingBox(0, 0, 10, 10)
        anchors = [Anchor(BoundingBox(8, 8, 10, 10)), Anchor(BoundingBox(40, 40, 10, 10))]
        assert match_anchors(anchors, [gt]) == [MatchLabel.positive(0), NEGATIVE]

    def test_shared_best_anchor_goes_to_lower_gt(self):
        anchors = [Anchor(BoundingBox(0, 0, 10, 10)), Anchor(BoundingBox(100, 100, 10, 10))]
        gts = [BoundingBox(1, 0, 10, 10), BoundingBox(0, 1, 10, 10)]
        assert match_anchors(anchors, gts)[0] == MatchLabel.positive(0)

    def test_every_gt_has_a_positive(self):
        rng = np.random.default_rng(4)
        anchors = generate_anchors(AnchorConfig(strides=(16, 32), scales=(32,)), GridDims(128, 128))
        for _ in range(50):
            gts = [BoundingBox(*rng.uniform(0, 100, 2), *rng.uniform(2, 60, 2)) for _ in range(int(rng.integers(1, 6)))]
            labels = match_anchors(anchors, gts)
            owners = {lab.gt_index for lab in labels if lab.is_positive}
            iou = np.array([[box_iou(a.box, g) for g in gts] for a in anchors])
            for g in range(len(gts)):
                best = int(iou[:, g].argmax())
                assert labels[best].is_positive
            assert 0 in owners

    def test_thresholds_respected(self):
        anchors = generate_anchors(single(stride=8, scales=(24,)), GridDims(64, 64))
        gts = [BoundingBox(10, 10, 20, 30), BoundingBox(35, 5, 25, 20)]
        labels = match_anchors(anchors, gts)
        iou = np.array([[box_iou(a.box, g) for g in gts] for a in anchors])
        forced = {int(iou[:, g].argmax()) for g in range(2)}
        for i, lab in enumerate(labels):
            best = iou[i].max()
            if i in forced:
                assert lab.is_positive
            elif best >= 0.5:
                assert lab == MatchLabel.positive(int(iou[i].argmax()))
            elif best < 0.3:
                assert lab == NEGATIVE
            else:
                assert lab == IGNORE

    def test_rejects_inverted_thresholds(self):
        with pytest.raises(ValueError):
            match_anchors([], [], pos_thr=0.3, neg_thr=0.5)


class TestNms:
    def test_empty(self):
        assert nms([]) == []

    def test_duplicate_suppressed(self):
        b = BoundingBox(0, 0, 10, 10)
        assert nms([(b, 0.8), (b, 0.9)]) == [1]

    def test_below_threshold_kept(self):
        a, b = BoundingBox(0, 0, 10, 10), BoundingBox(5, 0, 10, 10)
        assert nms([(a, 0.9), (b, 0.8)]) == [0, 1]

    def test_tie_prefers_lower_index(self):
        b = BoundingBox(0, 0, 10, 10)
        assert nms([(b, 0.5), (b, 0.5)]) == [0]

    def test_exact_threshold_suppresses(self):
        a, b = BoundingBox(0, 0, 10, 10), BoundingBox(0, 0, 10, 7)
        assert nms([(a, 0.9), (b, 0.8)], thr=0.7) == [0]

    @settings(max_examples=100)
    @given(st.lists(st.tuples(st.integers(0, 40), st.integers(0, 40), st.integers(1, 20), st.integers(1, 20),
                              st.floats(0, 1)), max_size=15))
    def test_properties(self, raw):
        boxes = [(BoundingBox(x, y, w, h), s) for x, y, w, h, s in raw]
        kept = nms(boxes)
        assert kept == nms(boxes)
        for i in kept:
            for j in kept:
                if i != j:
                    assert exact_box_iou(boxes[i][0].as_list(), boxes[j][0].as_list()) < 0.7
        # every suppressed box overlaps a kept box that outscores or ties it
        for i in set(range(len(boxes))) - set(kept):
            assert any(box_iou(boxes[i][0], boxes[k][0]) >= 0.7 and boxes[k][1] >= boxes[i][1] for k in kept)
        if boxes:
            top = max(range(len(boxes)), key=lambda i: (boxes[i][1], -i))
            assert kept[0] == top


class TestFgBg:
    def test_all_foreground(self):
        mask = BitMask(np.ones((32, 32)))
        assert fg_bg_ratio(Anchor(BoundingBox(4, 4, 10, 10)), mask) == (100, 0)

    def test_all_background(self):
        mask = BitMask(np.zeros((32, 32)))
        assert fg_bg_ratio(Anchor(BoundingBox(4, 4, 10, 10)), mask) == (0, 100)

    def test_leg_stripe(self):
        bits = np.zeros((64, 64), dtype=bool)
        bits[10:30, 19:21] = True
        assert fg_bg_ratio(Anchor(BoundingBox(10, 10, 20, 20)), BitMask(bits)) == (40, 360)

    def test_clipped_to_grid(self):
        mask = BitMask(np.ones((16, 16)))
        assert fg_bg_ratio(Anchor(BoundingBox(-4, -4, 8, 8)), mask) == (16, 0)

    def test_outside_errors(self):
        with pytest.raises(GeometryError):
            fg_bg_ratio(Anchor(BoundingBox(20, 20, 5, 5)), BitMask(np.ones((16, 16))))

    def test_counts_sum_to_clipped_area(self):
        rng = np.random.default_rng(6)
        mask = BitMask(rng.random((40, 50)) < 0.3)
        for _ in range(100):
            x, y = rng.integers(-10, 45, 2)
            w, h = rng.integers(1, 30, 2)
            box = BoundingBox(int(x), int(y), int(w), int(h))
            try:
                fg, bg = fg_bg_ratio(Anchor(box), mask)
            except GeometryError:
                continue
            area = (min(50, x + w) - max(0, x)) * (min(40, y + h) - max(0, y))
            assert fg + bg == area
