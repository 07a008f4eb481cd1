"""Overlap metrics and the 95th-percentile surface distance.

The distance-transform implementation is cross-checked here against a
brute-force all-pairs oracle over explicit surface point sets.
"""

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from voxmix.core import BinaryMask, SegLabel, region_mask
from voxmix.errors import DataError
from voxmix.metrics import (
    FLAG_DICE_BOTH_EMPTY,
    FLAG_EMPTY_GT,
    FLAG_EMPTY_PRED,
    FLAG_HD95_UNDEFINED,
    FLAG_SENS_UNDEFINED,
    FLAG_SPEC_UNDEFINED,
    MetricsReport,
    RegionMetrics,
    aggregate_reports,
    boundary_voxels,
    dice,
    evaluate_case,
    hausdorff95,
    hausdorff_percentile,
    sensitivity,
    specificity,
    surface_points,
)

from conftest import SCHEME, random_seg


def mask_from(coords, shape=(8, 8, 8)) -> BinaryMask:
    data = np.zeros(shape, dtype=bool)
    for c in coords:
        data[c] = True
    return BinaryMask(data)


def brute_force_hd(p: BinaryMask, t: BinaryMask, spacing=(1.0, 1.0, 1.0), q=0.95):
    """All-pairs nearest-rank percentile of both directed surface distances."""
    a = surface_points(p, spacing).points
    b = surface_points(t, spacing).points
    d = cdist(a, b)
    fwd = np.sort(d.min(axis=1))
    bwd = np.sort(d.min(axis=0))
    idx_f = int(np.ceil(q * fwd.size)) - 1
    idx_b = int(np.ceil(q * bwd.size)) - 1
    return max(fwd[idx_f], bwd[idx_b])


class TestCountingMetrics:
    """Hand-counted confusion-matrix cases on a 2x2x2 grid (8 voxels)."""

    # gt has 4 positives; pred overlaps 3 of them and adds 2 false positives.
    GT = [(0, 0, 0), (0, 0, 1), (0, 1, 0), (0, 1, 1)]
    PRED = [(0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0), (1, 0, 1)]

    def setup_method(self):
        self.p = mask_from(self.PRED, (2, 2, 2))
        self.t = mask_from(self.GT, (2, 2, 2))

    def test_dice(self):
        # 2*3 / (5 + 4)
        assert dice(self.p, self.t) == pytest.approx(6 / 9, abs=1e-12)

    def test_sensitivity(self):
        # TP / |gt| = 3 / 4
        assert sensitivity(self.p, self.t) == pytest.approx(0.75, abs=1e-12)

    def test_specificity(self):
        # TN / (TN + FP) = 2 / 4
        assert specificity(self.p, self.t) == pytest.approx(0.5, abs=1e-12)

    def test_round_numbers(self):
        """A second hand-built case hitting 0.6 / 0.5 / 0.9 exactly."""
        shape = (4, 4, 1)  # 16 voxels
        gt = mask_from([(0, 0, 0), (1, 0, 0), (2, 0, 0), (3, 0, 0),
                        (0, 1, 0), (1, 1, 0)], shape)
        pred = mask_from([(0, 0, 0), (1, 0, 0), (2, 0, 0), (0, 2, 0)], shape)
        # TP=3, FP=1, FN=3, TN=9: dice=6/10, sens=3/6, spec=9/10
        assert dice(pred, gt) == pytest.approx(0.6, abs=1e-12)
        assert sensitivity(pred, gt) == pytest.approx(0.5, abs=1e-12)
        assert specificity(pred, gt) == pytest.approx(0.9, abs=1e-12)

    def test_dice_from_precision_and_recall(self):
        """dice == harmonic mean of precision and sensitivity."""
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = BinaryMask(rng.random((6, 6, 6)) < 0.4)
            t = BinaryMask(rng.random((6, 6, 6)) < 0.4)
            tp = np.logical_and(p.data, t.data).sum()
            if tp == 0 or p.data.sum() == 0 or t.data.sum() == 0:
                continue
            prec = tp / p.data.sum()
            sens = sensitivity(p, t)
            assert dice(p, t) == pytest.approx(
                2 * prec * sens / (prec + sens), abs=1e-12
            )


class TestEmptyConventions:
    def test_both_empty_dice_is_one(self):
        e = mask_from([])
        assert dice(e, e) == 1.0

    def test_one_empty_dice_is_zero(self):
        e = mask_from([])
        f = mask_from([(1, 1, 1)])
        assert dice(e, f) == 0.0
        assert dice(f, e) == 0.0

    def test_sensitivity_none_when_gt_empty(self):
        assert sensitivity(mask_from([(0, 0, 0)]), mask_from([])) is None

    def test_specificity_none_when_gt_full(self):
        full = BinaryMask(np.ones((3, 3, 3), dtype=bool))
        assert specificity(full, full) is None

    def test_hd95_none_when_either_empty(self):
        e = mask_from([])
        f = mask_from([(2, 2, 2)])
        assert hausdorff95(e, f) is None
        assert hausdorff95(f, e) is None
        assert hausdorff95(e, e) is None

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DataError):
            dice(mask_from([], (2, 2, 2)), mask_from([], (3, 3, 3)))


class TestSurface:
    def test_single_voxel_is_its_own_boundary(self):
        m = np.zeros((5, 5, 5), dtype=bool)
        m[2, 2, 2] = True
        b = boundary_voxels(m)
        assert b.sum() == 1 and b[2, 2, 2]

    def test_cube_interior_removed(self):
        """A 3x3x3 solid cube has 26 boundary voxels."""
        m = np.zeros((7, 7, 7), dtype=bool)
        m[2:5, 2:5, 2:5] = True
        b = boundary_voxels(m)
        assert b.sum() == 26
        assert not b[3, 3, 3]

    def test_volume_border_counts_as_outside(self):
        """A full mask keeps its outermost shell as boundary."""
        m = np.ones((4, 4, 4), dtype=bool)
        b = boundary_voxels(m)
        assert b.sum() == 4 ** 3 - 2 ** 3
        assert not b[1:3, 1:3, 1:3].any()

    def test_points_scaled_by_spacing(self):
        m = mask_from([(1, 2, 3)], (4, 4, 4))
        pts = surface_points(m, spacing=(0.5, 1.0, 2.0)).points
        np.testing.assert_allclose(pts, [[0.5, 2.0, 6.0]])


class TestHausdorff:
    def test_two_single_points(self):
        """Points 3 voxels apart on one axis: hd95 is exactly 3.0 mm."""
        p = mask_from([(1, 1, 1)])
        t = mask_from([(4, 1, 1)])
        assert hausdorff95(p, t) == pytest.approx(3.0, abs=1e-12)

    def test_directed_percentile_uses_nearest_rank(self):
        """Directed distances {0, 4}: the 95th percentile picks 4.0."""
        p = mask_from([(0, 0, 0), (4, 0, 0)], (8, 1, 1))
        t = mask_from([(0, 0, 0)], (8, 1, 1))
        # Forward distances from p are {0, 4}; ceil(0.95 * 2) - 1 = 1 -> 4.0.
        assert hausdorff95(p, t) == pytest.approx(4.0, abs=1e-12)

    def test_identical_masks_zero(self):
        m = mask_from([(i, j, 2) for i in range(2, 5) for j in range(3, 6)])
        assert hausdorff95(m, m) == 0.0

    def test_anisotropic_spacing(self):
        p = mask_from([(1, 1, 1)])
        t = mask_from([(1, 1, 3)])
        assert hausdorff95(p, t, spacing=(1.0, 1.0, 2.5)) == pytest.approx(
            5.0, abs=1e-12
        )

    def test_matches_brute_force_on_random_masks(self):
        """EDT route equals the all-pairs oracle to 1e-9 over 50 cases."""
        rng = np.random.default_rng(1)
        spacings = [(1.0, 1.0, 1.0), (0.7, 1.0, 1.3), (2.0, 0.5, 1.0)]
        checked = 0
        while checked < 50:
            p = BinaryMask(rng.random((12, 12, 12)) < 0.15)
            t = BinaryMask(rng.random((12, 12, 12)) < 0.15)
            if not p.data.any() or not t.data.any():
                continue
            spacing = spacings[checked % len(spacings)]
            got = hausdorff95(p, t, spacing)
            want = brute_force_hd(p, t, spacing)
            assert got == pytest.approx(want, abs=1e-9)
            checked += 1

    def test_hd95_not_above_hd100(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            p = BinaryMask(rng.random((10, 10, 10)) < 0.2)
            t = BinaryMask(rng.random((10, 10, 10)) < 0.2)
            if not p.data.any() or not t.data.any():
                continue
            h95 = hausdorff_percentile(p, t, q=0.95)
            h100 = hausdorff_percentile(p, t, q=1.0)
            assert h95 <= h100 + 1e-12

    def test_symmetric(self):
        rng = np.random.default_rng(3)
        p = BinaryMask(rng.random((9, 9, 9)) < 0.2)
        t = BinaryMask(rng.random((9, 9, 9)) < 0.2)
        assert hausdorff95(p, t) == pytest.approx(hausdorff95(t, p), abs=1e-12)

    def test_flip_invariant_under_isotropic_spacing(self):
        rng = np.random.default_rng(4)
        p = rng.random((8, 8, 8)) < 0.25
        t = rng.random((8, 8, 8)) < 0.25
        direct = hausdorff95(BinaryMask(p), BinaryMask(t))
        flipped = hausdorff95(
            BinaryMask(np.flip(p, axis=0).copy()),
            BinaryMask(np.flip(t, axis=0).copy()),
        )
        assert direct == pytest.approx(flipped, abs=1e-12)


class TestEvaluateCase:
    def test_perfect_prediction(self):
        seg = random_seg(np.random.default_rng(5), (10, 10, 10), fg_prob=0.3)
        report = evaluate_case(seg, seg, case_id="self")
        assert report.case_id == "self"
        assert list(report.regions) == ["WT", "TC", "ET"]
        for region, rm in report.regions.items():
            assert rm.dice == 1.0
            assert rm.hd95_mm == 0.0
            assert rm.sensitivity == 1.0

    def test_region_masks_drive_the_numbers(self):
        rng = np.random.default_rng(6)
        pred = random_seg(rng, (9, 9, 9), fg_prob=0.3)
        gt = random_seg(rng, (9, 9, 9), fg_prob=0.3)
        report = evaluate_case(pred, gt)
        for region in ("WT", "TC", "ET"):
            pm = region_mask(pred, region)
            tm = region_mask(gt, region)
            assert report.regions[region].dice == pytest.approx(
                dice(pm, tm), abs=1e-12
            )

    def test_all_background_flags(self):
        empty = SegLabel(np.zeros((6, 6, 6), dtype=np.uint8), SCHEME)
        report = evaluate_case(empty, empty)
        for rm in report.regions.values():
            assert rm.dice == 1.0
            assert rm.sensitivity is None
            assert rm.hd95_mm is None
            assert FLAG_DICE_BOTH_EMPTY in rm.flags
            assert FLAG_SENS_UNDEFINED in rm.flags
            assert FLAG_HD95_UNDEFINED in rm.flags
            assert FLAG_EMPTY_PRED in rm.flags
            assert FLAG_EMPTY_GT in rm.flags

    def test_empty_prediction_only(self):
        shape = (6, 6, 6)
        gt = np.zeros(shape, dtype=np.uint8)
        gt[2:4, 2:4, 2:4] = 4
        report = evaluate_case(
            SegLabel(np.zeros(shape, dtype=np.uint8), SCHEME),
            SegLabel(gt, SCHEME),
        )
        et = report.regions["ET"]
        assert et.dice == 0.0
        assert et.sensitivity == 0.0
        assert et.hd95_mm is None
        assert FLAG_EMPTY_PRED in et.flags
        assert FLAG_EMPTY_GT not in et.flags

    def test_full_gt_specificity_flag(self):
        shape = (4, 4, 4)
        full = SegLabel(np.full(shape, 2, dtype=np.uint8), SCHEME)
        report = evaluate_case(full, full)
        wt = report.regions["WT"]
        assert wt.specificity is None
        assert FLAG_SPEC_UNDEFINED in wt.flags

    def test_spacing_feeds_hd95(self):
        shape = (8, 8, 8)
        pred = np.zeros(shape, dtype=np.uint8)
        gt = np.zeros(shape, dtype=np.uint8)
        pred[1, 1, 1] = 2
        gt[1, 1, 5] = 2
        report = evaluate_case(
            SegLabel(pred, SCHEME), SegLabel(gt, SCHEME), spacing=(1.0, 1.0, 0.5)
        )
        assert report.regions["WT"].hd95_mm == pytest.approx(2.0, abs=1e-12)

    def test_scheme_mismatch_rejected(self):
        from voxmix.core import LabelScheme

        other = LabelScheme(
            class_codes=(0, 1), class_names=("background", "fg"),
            region_defs={"FG": (1,)},
        )
        a = SegLabel(np.zeros((3, 3, 3), dtype=np.uint8), SCHEME)
        b = SegLabel(np.zeros((3, 3, 3), dtype=np.uint8), other)
        with pytest.raises(DataError):
            evaluate_case(a, b)


class TestAggregate:
    @staticmethod
    def report(case_id, dice_val, hd=1.0):
        regions = {
            r: RegionMetrics(dice=dice_val, sensitivity=0.9, specificity=0.99,
                             hd95_mm=hd)
            for r in ("WT", "TC", "ET")
        }
        return MetricsReport(case_id=case_id, regions=regions)

    def test_single_report(self):
        out = aggregate_reports([self.report("a", 0.8)])
        assert out["n_cases"] == 1
        stats = out["regions"]["WT"]["dice"]
        assert stats == {"n": 1, "n_undefined": 0, "mean": 0.8, "median": 0.8,
                         "q1": 0.8, "q3": 0.8}

    def test_mean_over_cases(self):
        reports = [self.report("a", 0.8), self.report("b", 0.9)]
        out = aggregate_reports(reports)
        assert out["regions"]["TC"]["dice"]["mean"] == pytest.approx(0.85)
        assert out["regions"]["TC"]["dice"]["n"] == 2

    def test_undefined_values_excluded(self):
        defined = self.report("a", 0.8)
        partial = MetricsReport(
            case_id="b",
            regions={
                r: RegionMetrics(dice=0.6, sensitivity=None, specificity=0.9,
                                 hd95_mm=None, flags=(FLAG_HD95_UNDEFINED,))
                for r in ("WT", "TC", "ET")
            },
        )
        out = aggregate_reports([defined, partial])
        hd = out["regions"]["ET"]["hd95_mm"]
        assert hd["n"] == 1 and hd["n_undefined"] == 1
        assert hd["mean"] == 1.0

    def test_all_undefined_keeps_counts_only(self):
        rep = MetricsReport(
            case_id="x",
            regions={
                r: RegionMetrics(dice=1.0, sensitivity=None, specificity=None,
                                 hd95_mm=None)
                for r in ("WT", "TC", "ET")
            },
        )
        out = aggregate_reports([rep])
        hd = out["regions"]["WT"]["hd95_mm"]
        assert hd == {"n": 0, "n_undefined": 1}

    def test_zero_reports_rejected(self):
        with pytest.raises(DataError):
            aggregate_reports([])
