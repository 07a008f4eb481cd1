"""Core types: canonical vectorization, validation, encodings, z-scoring."""

import numpy as np
import pytest

from voxmix.core import (
    BinaryMask,
    CaseBundle,
    DegenerateVolumeWarning,
    LabelScheme,
    OneHotMatrix,
    SegLabel,
    Volume,
    decode_argmax,
    encode_one_hot,
    region_mask,
    unvectorize,
    vectorize,
    zscore_normalize,
)
from voxmix.errors import DataError

from conftest import SCHEME, random_seg


class TestVectorization:
    def test_x_fastest_order(self):
        """Flat index = x + dx*y + dx*dy*z: x varies fastest, z slowest."""
        data = np.arange(2 * 3 * 4).reshape(2, 3, 4)
        flat = vectorize(data)
        dx, dy = 2, 3
        for x in range(2):
            for y in range(3):
                for z in range(4):
                    assert flat[x + dx * y + dx * dy * z] == data[x, y, z]

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        data = rng.normal(size=(5, 4, 3)).astype(np.float32)
        assert np.array_equal(unvectorize(vectorize(data), (5, 4, 3)), data)

    def test_matches_storage_order(self):
        """The flat view equals a Fortran-order ravel (what raw files hold)."""
        data = np.arange(24).reshape(2, 3, 4)
        assert np.array_equal(vectorize(data), data.ravel(order="F"))


class TestVolume:
    def test_immutably_wraps_float32(self):
        vol = Volume(np.ones((2, 2, 2)))
        assert vol.data.dtype == np.float32
        with pytest.raises(ValueError):
            vol.data[0, 0, 0] = 5.0

    def test_rejects_non_3d(self):
        with pytest.raises(DataError):
            Volume(np.zeros((4, 4)))

    def test_rejects_non_finite(self):
        bad = np.ones((2, 2, 2))
        bad[1, 1, 1] = np.nan
        with pytest.raises(DataError):
            Volume(bad)

    def test_rejects_bad_spacing(self):
        with pytest.raises(DataError):
            Volume(np.ones((2, 2, 2)), spacing=(1.0, 0.0, 1.0))


class TestLabelScheme:
    def test_default_brats_layout(self):
        assert SCHEME.class_codes == (0, 1, 2, 4)
        assert SCHEME.k == 4
        assert SCHEME.background_code == 0
        assert SCHEME.region_defs["WT"] == frozenset({1, 2, 4})
        assert SCHEME.region_defs["TC"] == frozenset({1, 4})
        assert SCHEME.region_defs["ET"] == frozenset({4})

    def test_regions_are_nested(self):
        assert SCHEME.region_defs["ET"] <= SCHEME.region_defs["TC"]
        assert SCHEME.region_defs["TC"] <= SCHEME.region_defs["WT"]

    def test_rejects_duplicate_codes(self):
        with pytest.raises(DataError):
            LabelScheme(class_codes=(0, 1, 1), class_names=("a", "b", "c"),
                        region_defs={})

    def test_rejects_region_outside_codes(self):
        with pytest.raises(DataError):
            LabelScheme(class_codes=(0, 1), class_names=("bg", "fg"),
                        region_defs={"R": frozenset({9})})

    def test_rejects_background_in_region(self):
        with pytest.raises(DataError):
            LabelScheme(class_codes=(0, 1), class_names=("bg", "fg"),
                        region_defs={"R": frozenset({0, 1})})

    def test_dict_round_trip_keeps_region_order(self):
        back = LabelScheme.from_dict(SCHEME.to_dict())
        assert back == SCHEME
        assert list(back.region_defs) == ["WT", "TC", "ET"]


class TestSegLabel:
    def test_valid_codes_accepted(self):
        rng = np.random.default_rng(1)
        seg = random_seg(rng, (6, 5, 4))
        assert seg.data.dtype == np.uint8

    def test_invalid_code_names_voxel(self):
        data = np.zeros((3, 3, 3), dtype=np.uint8)
        data[1, 0, 0] = 3  # flat index 1 in canonical order
        with pytest.raises(DataError, match="voxel 1 has code 3"):
            SegLabel(data, SCHEME)


class TestOneHotMatrix:
    def test_row_count_must_match_grid(self):
        with pytest.raises(DataError):
            OneHotMatrix(np.ones((7, 4), dtype=np.float32) / 4, (2, 2, 2))

    def test_rows_must_be_stochastic(self):
        data = np.zeros((8, 4), dtype=np.float32)
        data[:, 0] = 0.5
        with pytest.raises(DataError, match="sums to"):
            OneHotMatrix(data, (2, 2, 2))

    def test_entries_must_be_probabilities(self):
        data = np.zeros((8, 4), dtype=np.float32)
        data[:, 0] = 1.5
        data[:, 1] = -0.5
        with pytest.raises(DataError, match=r"\[0, 1\]"):
            OneHotMatrix(data, (2, 2, 2))


class TestOneHotCodec:
    def test_encode_rows_follow_canonical_order(self):
        rng = np.random.default_rng(2)
        seg = random_seg(rng, (4, 3, 5), fg_prob=0.5)
        onehot = encode_one_hot(seg)
        flat_codes = vectorize(seg.data)
        lut = SCHEME.code_lookup()
        for i in range(flat_codes.size):
            expected = np.zeros(4, dtype=np.float32)
            expected[lut[flat_codes[i]]] = 1.0
            assert np.array_equal(onehot.data[i], expected)

    def test_hard_round_trip(self):
        rng = np.random.default_rng(3)
        seg = random_seg(rng, (6, 6, 6), fg_prob=0.4)
        back = decode_argmax(encode_one_hot(seg), SCHEME)
        assert np.array_equal(back.data, seg.data)

    def test_argmax_tie_breaks_to_lowest_scheme_index(self):
        data = np.full((1, 4), 0.25, dtype=np.float32)
        back = decode_argmax(OneHotMatrix(data, (1, 1, 1)), SCHEME)
        assert back.data[0, 0, 0] == SCHEME.class_codes[0]

    def test_column_count_must_match_scheme(self):
        onehot = OneHotMatrix(np.ones((4, 2), dtype=np.float32) / 2, (4, 1, 1))
        with pytest.raises(DataError):
            decode_argmax(onehot, SCHEME)


class TestRegionMask:
    def test_masks_follow_region_defs(self):
        rng = np.random.default_rng(4)
        seg = random_seg(rng, (8, 8, 8), fg_prob=0.5)
        for region, members in SCHEME.region_defs.items():
            mask = region_mask(seg, region)
            expected = np.isin(seg.data, sorted(members))
            assert np.array_equal(mask.data, expected)

    def test_unknown_region_rejected(self):
        rng = np.random.default_rng(5)
        with pytest.raises(DataError, match="unknown region"):
            region_mask(random_seg(rng, (4, 4, 4)), "XX")


class TestZScore:
    def test_zero_mean_unit_std(self):
        rng = np.random.default_rng(6)
        vol = Volume(rng.normal(5.0, 3.0, size=(16, 16, 16)).astype(np.float32))
        out = zscore_normalize(vol)
        assert abs(float(out.data.mean())) < 1e-5
        assert abs(float(out.data.std()) - 1.0) < 1e-5

    def test_affine_invariance(self):
        """zscore(a*x + b) == zscore(x) for a > 0: the output forgets scale."""
        rng = np.random.default_rng(7)
        x = rng.normal(size=(12, 12, 12)).astype(np.float32)
        base = zscore_normalize(Volume(x))
        shifted = zscore_normalize(Volume(np.float32(2.5) * x + np.float32(-7.0)))
        np.testing.assert_allclose(shifted.data, base.data, atol=1e-5)

    def test_constant_volume_degrades_to_zeros(self):
        vol = Volume(np.full((4, 4, 4), 3.14, dtype=np.float32))
        with pytest.warns(DegenerateVolumeWarning):
            out = zscore_normalize(vol)
        assert np.array_equal(out.data, np.zeros((4, 4, 4), dtype=np.float32))


class TestCaseBundle:
    def test_rejects_shape_mismatch(self):
        rng = np.random.default_rng(8)
        with pytest.raises(DataError, match="mixes shapes"):
            CaseBundle(
                "c",
                {"t1": Volume(np.zeros((4, 4, 4))),
                 "t2": Volume(np.zeros((4, 4, 5)))},
                random_seg(rng, (4, 4, 4)),
            )

    def test_rejects_missing_modalities(self):
        rng = np.random.default_rng(9)
        with pytest.raises(DataError):
            CaseBundle("c", {}, random_seg(rng, (4, 4, 4)))
