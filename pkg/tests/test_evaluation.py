import math

import numpy as np
import pytest

from clickseg.click_oracle import ClickRegime
from clickseg.evaluation import (
    DIStats,
    EvalRecord,
    decidability_index,
    di_from_populations,
    iou,
    iou_curve,
    mean_clicks_to_iou,
)
from clickseg.interactions import Click, ClickSet, NEGATIVE, POSITIVE


def square_mask(h, w, r0, c0, r1, c1):
    m = np.zeros((h, w), dtype=bool)
    m[r0:r1, c0:c1] = True
    return m


class TestIoU:
    def test_identical_nonempty(self):
        m = square_mask(8, 8, 1, 1, 5, 5)
        assert iou(m, m) == 1.0

    def test_disjoint(self):
        a = square_mask(8, 8, 0, 0, 2, 2)
        b = square_mask(8, 8, 5, 5, 8, 8)
        assert iou(a, b) == 0.0

    def test_partial_overlap(self):
        a = square_mask(4, 4, 0, 0, 2, 2)   # 4 pixels
        b = square_mask(4, 4, 1, 0, 3, 2)   # 4 pixels, overlap 2
        assert iou(a, b) == pytest.approx(1 / 3)

    def test_both_empty(self):
        z = np.zeros((5, 5), dtype=bool)
        assert iou(z, z) == 1.0

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            a = rng.random((10, 10)) > 0.5
            b = rng.random((10, 10)) > 0.5
            v = iou(a, b)
            assert v == iou(b, a)
            assert 0.0 <= v <= 1.0
            assert iou(a, a) == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            iou(np.zeros((3, 3), bool), np.zeros((4, 3), bool))

    def test_void_excluded(self):
        a = square_mask(4, 4, 0, 0, 2, 4)
        b = square_mask(4, 4, 0, 0, 4, 4)
        void = square_mask(4, 4, 2, 0, 4, 4)
        assert iou(a, b, void=void) == 1.0


class TestClickEffort:
    def test_all_reach_at_first_click(self):
        recs = [EvalRecord(str(i), (0.9, 0.95), "free_choice") for i in range(4)]
        assert mean_clicks_to_iou(recs, 0.85) == 1.0

    def test_never_reached_caps_at_20(self):
        recs = [EvalRecord("a", tuple([0.1] * 20), "free_choice")]
        assert mean_clicks_to_iou(recs, 0.85) == 20.0

    def test_mean_of_two(self):
        r1 = EvalRecord("a", (0.1, 0.2, 0.9), "free_choice")
        r2 = EvalRecord("b", tuple([0.1] * 6 + [0.95]), "free_choice")
        assert mean_clicks_to_iou([r1, r2], 0.85) == 5.0

    def test_monotone_in_target(self):
        rng = np.random.default_rng(1)
        recs = []
        for i in range(20):
            ious = np.clip(np.sort(rng.random(20)), 0, 1)
            recs.append(EvalRecord(str(i), tuple(ious), "free_choice"))
        values = [mean_clicks_to_iou(recs, t) for t in (0.95, 0.9, 0.8, 0.5, 0.1)]
        assert all(values[i] >= values[i + 1] for i in range(len(values) - 1))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mean_clicks_to_iou([], 0.85)
        with pytest.raises(ValueError):
            iou_curve([])

    def test_flat_curve_from_constant_record(self):
        rec = EvalRecord("a", (0.8,), "free_choice")
        np.testing.assert_allclose(iou_curve([rec]), np.full(20, 0.8))

    def test_curve_is_mean(self):
        r1 = EvalRecord("a", tuple([0.2] * 20), "free_choice")
        r2 = EvalRecord("b", tuple([0.6] * 20), "free_choice")
        np.testing.assert_allclose(iou_curve([r1, r2]), np.full(20, 0.4))

    def test_monotone_records_give_monotone_curve(self):
        rng = np.random.default_rng(2)
        recs = []
        for i in range(15):
            n = int(rng.integers(1, 21))
            recs.append(EvalRecord(str(i), tuple(np.sort(rng.random(n))), "free_choice"))
        curve = iou_curve(recs)
        assert np.all(np.diff(curve) >= -1e-12)

    def test_record_validation(self):
        with pytest.raises(ValueError):
            EvalRecord("a", (1.5,), "free_choice")
        with pytest.raises(ValueError):
            EvalRecord("a", tuple([0.5] * 21), "free_choice")
        with pytest.raises(ValueError):
            EvalRecord("a", (0.5,), "free_choice", {0.85: 0})


class TestDecidability:
    def test_equal_means_zero(self):
        s = di_from_populations(np.array([0.4, 0.6]), np.array([0.3, 0.7]))
        assert s.defined and s.di == 0.0

    def test_closed_form_sqrt2(self):
        # means 1 and 0, variances 0.5 each
        pos = np.array([1 + math.sqrt(0.5), 1 - math.sqrt(0.5)])
        neg = np.array([math.sqrt(0.5), -math.sqrt(0.5)])
        s = di_from_populations(pos, neg)
        assert s.mu_p == pytest.approx(1.0, abs=1e-12)
        assert s.sigma_p == pytest.approx(0.5, abs=1e-12)
        assert s.di == pytest.approx(math.sqrt(2), abs=1e-9)

    def test_degenerate_flagged(self):
        s = di_from_populations(np.array([0.5, 0.5]), np.array([0.5, 0.5]))
        assert not s.defined and math.isnan(s.di)
        s2 = di_from_populations(np.array([1.0]), np.array([0.0]))
        assert s2.defined and math.isinf(s2.di)

    def test_shift_invariance_and_variance_scaling(self):
        rng = np.random.default_rng(3)
        pos, neg = rng.random(200) + 0.5, rng.random(300)
        base = di_from_populations(pos, neg)
        shifted = di_from_populations(pos + 3.7, neg + 3.7)
        assert shifted.di == pytest.approx(base.di, rel=1e-9)
        for k in (4.0, 9.0, 0.25):
            scaled = di_from_populations(
                pos.mean() + (pos - pos.mean()) * math.sqrt(k),
                neg.mean() + (neg - neg.mean()) * math.sqrt(k))
            assert scaled.di == pytest.approx(base.di / math.sqrt(k), rel=1e-9)

    def test_disk_populations_match_per_pixel_scan(self):
        rng = np.random.default_rng(4)
        h = w = 64
        prob = np.full((h, w), 0.5)
        gt = np.zeros((h, w), dtype=bool)
        gt[10:40, 10:40] = True
        clicks = ClickSet.of(Click(20, 20, POSITIVE), Click(25, 30, POSITIVE),
                             Click(50, 50, NEGATIVE), Click(55, 12, NEGATIVE))
        radius = 10
        for c in clicks:
            for r in range(h):
                for cc in range(w):
                    if (r - c.row) ** 2 + (cc - c.col) ** 2 <= radius ** 2:
                        prob[r, cc] = 0.9 if c.is_positive else 0.1
        prob += rng.normal(0, 0.01, size=prob.shape)

        pos_vals, neg_vals = [], []
        for r in range(h):
            for cc in range(w):
                in_pos = any((r - c.row) ** 2 + (cc - c.col) ** 2 <= radius ** 2
                             for c in clicks.positive())
                in_neg = any((r - c.row) ** 2 + (cc - c.col) ** 2 <= radius ** 2
                             for c in clicks.negative())
                if in_pos:
                    pos_vals.append(prob[r, cc])
                if in_neg:
                    neg_vals.append(prob[r, cc])
        expected = di_from_populations(np.array(pos_vals), np.array(neg_vals))
        got = decidability_index(prob, clicks, gt, radius=radius)
        assert got.di == pytest.approx(expected.di, abs=1e-9)
        assert got.mu_p == pytest.approx(expected.mu_p, abs=1e-12)

    def test_no_negative_fallback_uses_background(self):
        prob = np.linspace(0, 1, 36).reshape(6, 6)
        gt = square_mask(6, 6, 0, 0, 3, 6)
        clicks = ClickSet.of(Click(1, 1, POSITIVE))
        got = decidability_index(prob, clicks, gt, radius=1)
        disk = [(0, 1), (1, 0), (1, 1), (1, 2), (2, 1)]
        pos_vals = [prob[r, c] for r, c in disk]
        expected = di_from_populations(np.array(pos_vals), prob[~gt])
        assert got.di == pytest.approx(expected.di, abs=1e-12)

    def test_single_positive_uses_whole_foreground(self):
        prob = np.linspace(0, 1, 64).reshape(8, 8)
        gt = square_mask(8, 8, 0, 0, 4, 8)
        clicks = ClickSet.of(Click(1, 1, POSITIVE), Click(6, 6, NEGATIVE))
        got = decidability_index(prob, clicks, gt, radius=1,
                                 regime=ClickRegime.SINGLE_POSITIVE)
        disk = [(5, 6), (6, 5), (6, 6), (6, 7), (7, 6)]
        neg_vals = [prob[r, c] for r, c in disk]
        expected = di_from_populations(prob[gt], np.array(neg_vals))
        assert got.di == pytest.approx(expected.di, abs=1e-12)

    def test_single_positive_refused_without_negatives(self):
        prob = np.full((5, 5), 0.5)
        gt = square_mask(5, 5, 0, 0, 2, 5)
        with pytest.raises(ValueError):
            decidability_index(prob, ClickSet.of(Click(0, 0, POSITIVE)), gt,
                               regime=ClickRegime.SINGLE_POSITIVE)

    def test_requires_click_and_valid_radius(self):
        prob = np.full((5, 5), 0.5)
        gt = np.zeros((5, 5), bool)
        with pytest.raises(ValueError):
            decidability_index(prob, ClickSet(), gt)
        with pytest.raises(ValueError):
            decidability_index(prob, ClickSet.of(Click(0, 0, POSITIVE)), gt, radius=0)
