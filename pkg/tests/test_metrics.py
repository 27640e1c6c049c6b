import math

import numpy as np
import pytest

from s2sdespeckle import (
    Region,
    apply_speckle,
    enl,
    epd_roa,
    evaluate_reference,
    evaluate_regions,
    mor,
    psnr,
    read_regions,
    report_to_text,
    sample_speckle_field,
    ssim,
    tcr_deviation,
    write_regions,
)

# frozen cross-implementation oracle (scikit-image structural_similarity,
# gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=1)
SSIM_FIXTURE_EXPECTED = 0.9292137502016649


def ssim_fixture_pair():
    rng = np.random.default_rng(2024)
    ref = rng.random((16, 16))
    test = np.clip(ref + 0.1 * rng.standard_normal((16, 16)), 0, 1)
    return ref, test


class TestPsnr:
    def test_mse_fixture(self):
        value = psnr(np.zeros((10, 10)), np.full((10, 10), 0.1))
        assert value.value == pytest.approx(20.0, rel=1e-9)
        assert not value.saturated

    def test_identical_saturates(self):
        img = np.random.default_rng(0).random((8, 8))
        value = psnr(img, img.copy())
        assert value.saturated and value.value == 99.0

    def test_unit_error_is_zero_db(self):
        value = psnr(np.zeros((4, 4)), np.ones((4, 4)))
        assert value.value == pytest.approx(0.0, abs=1e-12)

    def test_monotone_in_noise_amplitude(self, rng):
        ref = rng.random((32, 32))
        noise = rng.standard_normal((32, 32))
        values = [psnr(ref, ref + amp * noise).value for amp in (0.01, 0.05, 0.2)]
        assert values[0] > values[1] > values[2]

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((2, 2)), np.zeros((2, 3)))


class TestSsim:
    def test_identical_is_one(self, rng):
        img = rng.random((16, 16))
        assert ssim(img, img.copy()) == pytest.approx(1.0, abs=1e-12)

    def test_luminance_shift_decreases(self, rng):
        ref = rng.random((16, 16)) * 0.5 + 0.25
        v1 = ssim(ref, np.clip(ref + 0.02, 0, 1))
        v2 = ssim(ref, np.clip(ref + 0.08, 0, 1))
        assert 1.0 > v1 > v2

    def test_cross_implementation_fixture(self):
        ref, test = ssim_fixture_pair()
        assert ssim(ref, test) == pytest.approx(SSIM_FIXTURE_EXPECTED, abs=1e-4)

    def test_cross_implementation_live(self):
        skimage_metrics = pytest.importorskip("skimage.metrics")
        ref, test = ssim_fixture_pair()
        expected = skimage_metrics.structural_similarity(
            ref, test, gaussian_weights=True, sigma=1.5,
            use_sample_covariance=False, data_range=1.0,
        )
        assert ssim(ref, test) == pytest.approx(expected, abs=1e-4)

    def test_symmetric(self):
        ref, test = ssim_fixture_pair()
        assert ssim(ref, test) == pytest.approx(ssim(test, ref), abs=1e-12)

    def test_too_small_rejected(self):
        with pytest.raises(ValueError, match="window"):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))


class TestEnl:
    def test_pure_speckle_estimates_looks(self):
        region = Region("R1", "homogeneous", 0, 0, 256, 256)
        field = sample_speckle_field(256, 256, looks=4, seed=17)
        img = apply_speckle(np.full((256, 256), 0.7, np.float32), field)
        value = enl(img, region)
        assert 3.6 <= value.value <= 4.4

    def test_constant_region_saturates(self):
        region = Region("R1", "homogeneous", 0, 0, 8, 8)
        value = enl(np.full((8, 8), 0.5), region)
        assert value.saturated

    def test_requires_homogeneous_kind(self):
        region = Region("R3", "edge", 0, 0, 8, 8, direction="horizontal")
        with pytest.raises(ValueError, match="homogeneous"):
            enl(np.ones((8, 8)), region)

    def test_region_must_fit(self):
        region = Region("R1", "homogeneous", 4, 4, 8, 8)
        with pytest.raises(ValueError, match="fit"):
            enl(np.ones((8, 8)), region)


class TestEpdRoa:
    def test_identity_is_one(self, rng):
        img = rng.random((8, 8)) + 0.5
        region = Region("R3", "edge", 0, 0, 8, 8, direction="horizontal")
        assert epd_roa(img, img.copy(), region).value == pytest.approx(1.0, rel=1e-12)

    def test_scale_invariant(self, rng):
        img = rng.random((8, 8)) + 0.5
        region = Region("R3", "edge", 0, 0, 8, 8, direction="vertical")
        assert epd_roa(img, 3.7 * img, region).value == pytest.approx(1.0, rel=1e-9)

    def test_hand_fixture(self):
        original = np.tile([1.0, 2.0, 4.0, 8.0], (2, 1))
        despeckled = np.ones((2, 4))
        region = Region("R3", "edge", 0, 0, 4, 2, direction="horizontal")
        value = epd_roa(original, despeckled, region)
        assert value.value == pytest.approx(2.0, rel=1e-12)
        assert value.skipped_fraction == 0.0

    def test_vertical_direction(self):
        original = np.tile([[1.0], [2.0], [4.0], [8.0]], (1, 2))
        despeckled = np.ones((4, 2))
        region = Region("R4", "edge", 0, 0, 2, 4, direction="vertical")
        assert epd_roa(original, despeckled, region).value == pytest.approx(2.0, rel=1e-12)

    def test_zero_denominators_skipped_and_counted(self):
        original = np.tile([1.0, 0.0, 2.0, 4.0], (2, 1))
        despeckled = np.ones((2, 4))
        region = Region("R3", "edge", 0, 0, 4, 2, direction="horizontal")
        value = epd_roa(original, despeckled, region)
        # per row: original pairs (1/0 skipped, 0/2 = 0, 2/4 = 0.5) -> 0.5; despeckled 3
        assert value.value == pytest.approx(6.0 / 1.0, rel=1e-12)
        assert value.skipped_fraction == pytest.approx(2 / 12)

    def test_direction_required(self):
        region = Region("R3", "edge", 0, 0, 4, 4)
        with pytest.raises(ValueError, match="direction"):
            epd_roa(np.ones((4, 4)), np.ones((4, 4)), region)


class TestTcrDeviation:
    @staticmethod
    def build(target_peak, clutter_level=0.1):
        img = np.full((16, 16), clutter_level)
        img[2, 2] = target_peak
        return img

    def test_identity_is_zero(self):
        img = self.build(1.0)
        target = Region("R5", "point-target", 0, 0, 5, 5)
        clutter = Region("R1", "homogeneous", 8, 8, 6, 6)
        assert tcr_deviation(img, img.copy(), target, clutter).value == pytest.approx(0.0, abs=1e-12)

    def test_scale_invariant(self):
        img = self.build(1.0)
        target = Region("R5", "point-target", 0, 0, 5, 5)
        clutter = Region("R1", "homogeneous", 8, 8, 6, 6)
        assert tcr_deviation(img, 5.0 * img, target, clutter).value == pytest.approx(0.0, abs=1e-9)

    def test_hand_fixture(self):
        original = self.build(1.0)  # TCR = 20 dB
        despeckled = self.build(0.5)  # TCR = 13.979 dB
        target = Region("R5", "point-target", 0, 0, 5, 5)
        clutter = Region("R1", "homogeneous", 8, 8, 6, 6)
        value = tcr_deviation(original, despeckled, target, clutter)
        assert value.value == pytest.approx(20.0 * math.log10(2.0), rel=1e-9)  # ~6.0206 dB

    def test_regions_must_be_disjoint(self):
        img = self.build(1.0)
        target = Region("R5", "point-target", 0, 0, 6, 6)
        clutter = Region("R1", "homogeneous", 4, 4, 6, 6)
        with pytest.raises(ValueError, match="disjoint"):
            tcr_deviation(img, img, target, clutter)

    def test_zero_clutter_rejected(self):
        original = np.zeros((16, 16))
        original[2, 2] = 1.0
        target = Region("R5", "point-target", 0, 0, 5, 5)
        clutter = Region("R1", "homogeneous", 8, 8, 6, 6)
        with pytest.raises(ValueError, match="clutter"):
            tcr_deviation(original, original, target, clutter)


class TestMor:
    def test_identity_is_one(self, rng):
        img = rng.random((8, 8)) + 0.5
        region = Region("R1", "homogeneous", 0, 0, 8, 8)
        assert mor(img, img.copy(), region).value == pytest.approx(1.0, rel=1e-12)

    def test_halved_despeckled_is_two(self, rng):
        img = rng.random((8, 8)) + 0.5
        region = Region("R1", "homogeneous", 0, 0, 8, 8)
        assert mor(img, img / 2.0, region).value == pytest.approx(2.0, rel=1e-12)

    def test_radiometric_preservation_monte_carlo(self):
        region = Region("R1", "homogeneous", 0, 0, 256, 256)
        field = sample_speckle_field(256, 256, looks=16, seed=23)
        original = apply_speckle(np.full((256, 256), 0.5, np.float32), field)
        despeckled = np.full((256, 256), 0.5)
        assert abs(mor(original, despeckled, region).value - 1.0) < 0.01

    def test_nonpositive_pixels_skipped(self):
        original = np.ones((4, 4))
        despeckled = np.ones((4, 4))
        despeckled[0, 0] = 0.0
        region = Region("R1", "homogeneous", 0, 0, 4, 4)
        value = mor(original, despeckled, region)
        assert value.value == pytest.approx(1.0)
        assert value.skipped_fraction == pytest.approx(1 / 16)

    def test_all_skipped_rejected(self):
        region = Region("R1", "homogeneous", 0, 0, 4, 4)
        with pytest.raises(ValueError, match="positive"):
            mor(np.ones((4, 4)), np.zeros((4, 4)), region)


class TestRegionFile:
    def test_round_trip(self, tmp_path):
        regions = [
            Region("R1", "homogeneous", 4, 8, 32, 32),
            Region("R3", "edge", 40, 8, 16, 32, direction="horizontal"),
            Region("R5", "point-target", 70, 10, 9, 9),
        ]
        path = tmp_path / "regions.txt"
        write_regions(regions, path)
        assert read_regions(path) == regions

    def test_bad_lines_rejected(self, tmp_path):
        path = tmp_path / "regions.txt"
        path.write_text("R1 homogeneous 0 0\n")
        with pytest.raises(ValueError, match="fields"):
            read_regions(path)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="kind"):
            Region("R9", "texture", 0, 0, 4, 4)


class TestReports:
    def test_evaluate_reference_block(self, rng):
        ref = rng.random((16, 16))
        entries = evaluate_reference(ref, ref.copy())
        by_metric = {e["metric"]: e for e in entries}
        assert by_metric["psnr_db"]["saturated"] is True
        assert by_metric["ssim"]["value"] == pytest.approx(1.0)

    def test_evaluate_regions_block(self, rng):
        regions = [
            Region("R1", "homogeneous", 0, 0, 16, 16),
            Region("R3", "edge", 16, 0, 8, 8, direction="horizontal"),
            Region("R5", "point-target", 24, 24, 4, 4),
        ]
        original = rng.random((32, 32)) + 0.5
        original[25, 25] = 5.0
        entries = evaluate_regions(original, original * 0.9, regions)
        metrics = sorted({e["metric"] for e in entries})
        assert metrics == ["enl_despeckled", "enl_original", "epd_roa", "mor", "tcr_deviation_db"]

    def test_report_serialization_deterministic(self):
        report = {"b": [1, 2], "a": {"y": 2.5, "x": 1.0}}
        assert report_to_text(report) == report_to_text(dict(reversed(report.items())))
        assert report_to_text(report).startswith("{\n")
