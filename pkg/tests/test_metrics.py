"""Endpoint error, SSIM, multi-scale L1 loss, and boxplot statistics."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowdistill.flowcore import FlowField, ImageFrame
from flowdistill.metrics import (
    SSIM_C1,
    BoxplotStats,
    MultiScaleFlow,
    boxplot_stats,
    downsample_area,
    epe_map,
    epe_mean,
    multiscale_l1_loss,
    ssim,
    write_metrics_csv,
    write_summary,
)


class TestEPE:
    def test_identical_flows_zero(self):
        rng = np.random.default_rng(0)
        f = FlowField(rng.normal(size=(4, 4)), rng.normal(size=(4, 4)))
        assert np.all(epe_map(f, f) == 0.0)
        assert epe_mean(f, f) == 0.0

    def test_3_4_5_triangle_exact(self):
        pred = FlowField(np.array([[3.0]]), np.array([[4.0]]))
        ref = FlowField.zeros(1, 1)
        assert epe_map(pred, ref)[0, 0] == 5.0
        assert epe_mean(pred, ref) == 5.0

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a = FlowField(rng.normal(size=(5, 5)), rng.normal(size=(5, 5)))
        b = FlowField(rng.normal(size=(5, 5)), rng.normal(size=(5, 5)))
        assert epe_mean(a, b) == epe_mean(b, a)

    def test_border_exclusion(self):
        u = np.zeros((5, 5))
        u[0, 0] = 100.0  # only at the border
        pred = FlowField(u, np.zeros((5, 5)))
        ref = FlowField.zeros(5, 5)
        assert epe_mean(pred, ref, border=1) == 0.0
        assert epe_mean(pred, ref) > 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            epe_mean(FlowField.zeros(3, 3), FlowField.zeros(3, 4))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_nonnegative_and_zero_iff_equal(self, seed):
        rng = np.random.default_rng(seed)
        a = FlowField(rng.normal(size=(4, 4)), rng.normal(size=(4, 4)))
        b = FlowField(rng.normal(size=(4, 4)), rng.normal(size=(4, 4)))
        m = epe_mean(a, b)
        assert m >= 0.0
        assert (m == 0.0) == bool(
            np.array_equal(a.u, b.u) and np.array_equal(a.v, b.v)
        )


class TestSSIM:
    def test_self_similarity_exactly_one(self):
        rng = np.random.default_rng(2)
        x = ImageFrame(rng.random((24, 24, 1)))
        assert ssim(x, x) == 1.0

    def test_constant_patch_closed_form(self):
        a = ImageFrame(np.full((16, 16, 1), 0.2))
        b = ImageFrame(np.full((16, 16, 1), 0.8))
        # constant patches: variances vanish, contrast/structure term -> 1
        expected = (2 * 0.2 * 0.8 + SSIM_C1) / (0.2**2 + 0.8**2 + SSIM_C1)
        assert abs(ssim(a, b) - expected) < 1e-9

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        a = ImageFrame(rng.random((20, 20, 1)))
        b = ImageFrame(rng.random((20, 20, 1)))
        assert ssim(a, b) == ssim(b, a)

    def test_rgb_converted_to_luma(self):
        rng = np.random.default_rng(4)
        a = ImageFrame(rng.random((16, 16, 3)))
        assert ssim(a, a) == 1.0

    def test_too_small_input_rejected(self):
        a = ImageFrame(np.zeros((8, 8, 1)))
        with pytest.raises(ValueError):
            ssim(a, a)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_result_in_range(self, seed):
        rng = np.random.default_rng(seed)
        a = ImageFrame(rng.random((12, 12, 1)))
        b = ImageFrame(rng.random((12, 12, 1)))
        assert -1.0 <= ssim(a, b) <= 1.0


class TestMultiScaleLoss:
    def test_matching_pyramid_gives_zero(self):
        rng = np.random.default_rng(5)
        gold = FlowField(rng.normal(size=(8, 8)), rng.normal(size=(8, 8)))
        levels = []
        for factor in (4, 2, 1):
            levels.append(FlowField(downsample_area(gold.u, factor),
                                    downsample_area(gold.v, factor)))
        loss = multiscale_l1_loss(MultiScaleFlow(levels), gold, [1.0] * 3)
        assert loss == 0.0

    def test_single_scale_constant_offset(self):
        gold = FlowField.zeros(4, 4)
        pred = MultiScaleFlow([FlowField(np.ones((4, 4)), np.ones((4, 4)))])
        assert multiscale_l1_loss(pred, gold, [1.0]) == 2.0

    def test_coarse_level_in_local_units(self):
        # constant error of 2 finest-px at the half-res level counts as
        # 2/2 = 1 local px per component
        gold = FlowField.zeros(4, 4)
        coarse = FlowField(np.full((2, 2), 2.0), np.zeros((2, 2)))
        fine = FlowField.zeros(4, 4)
        loss = multiscale_l1_loss(MultiScaleFlow([coarse, fine]), gold, [1.0, 0.0])
        assert loss == 1.0

    def test_weights_scale_linearly(self):
        gold = FlowField.zeros(4, 4)
        pred = MultiScaleFlow([FlowField(np.ones((4, 4)), np.zeros((4, 4)))])
        assert multiscale_l1_loss(pred, gold, [3.0]) == pytest.approx(3.0)

    def test_weight_count_mismatch(self):
        gold = FlowField.zeros(4, 4)
        pred = MultiScaleFlow([FlowField.zeros(4, 4)])
        with pytest.raises(ValueError):
            multiscale_l1_loss(pred, gold, [1.0, 1.0])

    def test_broken_scale_chain_rejected(self):
        with pytest.raises(ValueError):
            MultiScaleFlow([FlowField.zeros(4, 4), FlowField.zeros(6, 6)])

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        gold = FlowField(rng.normal(size=(8, 8)), rng.normal(size=(8, 8)))
        levels = [
            FlowField(rng.normal(size=(4, 4)), rng.normal(size=(4, 4))),
            FlowField(rng.normal(size=(8, 8)), rng.normal(size=(8, 8))),
        ]
        assert multiscale_l1_loss(MultiScaleFlow(levels), gold, [0.5, 1.0]) >= 0.0


def _ref_boxplot(samples):
    """Independent sorted-list reference (inclusive median-of-halves)."""
    xs = sorted(samples)
    n = len(xs)

    def med(lst):
        m = len(lst)
        return lst[m // 2] if m % 2 else (lst[m // 2 - 1] + lst[m // 2]) / 2.0

    median = med(xs)
    q1 = med(xs[: (n + 1) // 2])
    q3 = med(xs[n // 2:])
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = [x for x in xs if lo <= x <= hi]
    return {
        "median": median,
        "lower_quartile": q1,
        "upper_quartile": q3,
        "whisker_low": inside[0] if inside else q1,
        "whisker_high": inside[-1] if inside else q3,
        "outliers": [x for x in xs if x < lo or x > hi],
        "n": n,
    }


class TestBoxplot:
    def test_singleton(self):
        s = boxplot_stats([5.0])
        assert (s.median, s.lower_quartile, s.upper_quartile) == (5, 5, 5)
        assert (s.whisker_low, s.whisker_high) == (5, 5)
        assert s.outliers == []

    def test_1234(self):
        s = boxplot_stats([1.0, 2.0, 3.0, 4.0])
        assert s.median == 2.5
        assert s.lower_quartile == 1.5
        assert s.upper_quartile == 3.5

    def test_iqr_zero_outlier(self):
        s = boxplot_stats([1.0, 1.0, 1.0, 1.0, 100.0])
        assert s.outliers == [100.0]
        assert s.whisker_high == 1.0

    def test_invariant_ordering(self):
        rng = np.random.default_rng(6)
        s = boxplot_stats(rng.normal(size=200))
        assert (s.whisker_low <= s.lower_quartile <= s.median
                <= s.upper_quartile <= s.whisker_high)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            boxplot_stats([])

    def test_agrees_with_reference_on_1000_multisets(self):
        rng = np.random.default_rng(7)
        for trial in range(1000):
            n = int(rng.integers(1, 40))
            # mix of continuous values and repeats so ties are exercised
            vals = rng.integers(0, 8, size=n) + rng.random(n) * (trial % 2)
            got = boxplot_stats(vals.tolist()).as_dict()
            want = _ref_boxplot(vals.tolist())
            for key in want:
                assert got[key] == pytest.approx(want[key]), (trial, key)


class TestExports:
    def test_metrics_csv(self, tmp_path):
        rows = [{"pair": 0, "epe": "1.0"}, {"pair": 1, "epe": "2.0"}]
        p = tmp_path / "m.csv"
        write_metrics_csv(rows, p)
        lines = p.read_text().splitlines()
        assert lines[0] == "pair,epe"
        assert len(lines) == 3

    def test_summary_fields(self, tmp_path):
        import json

        p = tmp_path / "s.json"
        out = write_summary([1.0, 2.0, 3.0], p, extra={"tag": "x"})
        loaded = json.loads(p.read_text())
        assert loaded == out
        assert loaded["mean"] == 2.0
        assert loaded["median"] == 2.0
        assert loaded["n"] == 3
        assert loaded["tag"] == "x"

    def test_boxplot_stats_roundtrip_dict(self):
        s = boxplot_stats([1.0, 2.0, 3.0])
        assert isinstance(s, BoxplotStats)
        d = s.as_dict()
        assert d["n"] == 3 and d["median"] == 2.0
