import math

import numpy as np
import pytest

from srim import generator, metrics, resample
from srim.metrics import (
    EvalReport,
    SSIM_K1,
    SSIM_K2,
    SSIM_L,
    SSIM_SIGMA,
    SSIM_WINDOW,
    evaluate,
    luminance,
    psnr,
    report_csv,
    ssim,
)

from conftest import make_rgb, tiny_gen_config


def gray(value, h=16, w=16):
    return np.full((h, w, 3), value, dtype=np.uint8)


class TestLuminance:
    def test_white(self):
        np.testing.assert_allclose(luminance(gray(255)), 255.0, rtol=1e-12)

    def test_pure_red(self):
        img = np.zeros((2, 2, 3), dtype=np.uint8)
        img[..., 0] = 255
        np.testing.assert_allclose(luminance(img), 0.299 * 255, rtol=1e-12)

    def test_gray_passthrough(self):
        # the weights sum to 1 (to within an ulp), so gray maps to itself
        np.testing.assert_allclose(luminance(gray(119)), 119.0, rtol=1e-12)

    def test_loop_oracle(self):
        img = make_rgb(4, 5, seed=0)
        got = luminance(img)
        for i in range(4):
            for j in range(5):
                r, g, b = img[i, j].astype(float)
                assert abs(got[i, j] - (0.299 * r + 0.587 * g + 0.114 * b)) < 1e-9

    def test_rejects_float(self):
        with pytest.raises(ValueError):
            luminance(np.zeros((4, 4, 3)))


class TestPsnr:
    def test_identical_is_inf(self):
        img = make_rgb(8, 8, seed=1)
        assert psnr(img, img) == math.inf

    def test_unit_mse_value(self):
        # gray 0 vs gray 1: luminance differs by 1, so PSNR is
        # 10 log10(255^2) = 48.1308 dB
        assert abs(psnr(gray(0), gray(1)) - 48.1308) < 1e-3

    def test_matches_loop_oracle(self):
        a, b = make_rgb(6, 6, seed=2), make_rgb(6, 6, seed=3)
        la, lb = luminance(a), luminance(b)
        total = 0.0
        for i in range(6):
            for j in range(6):
                total += (la[i, j] - lb[i, j]) ** 2
        want = 10.0 * math.log10(255.0**2 / (total / 36.0))
        assert abs(psnr(a, b) - want) < 1e-9

    def test_symmetry(self):
        a, b = make_rgb(8, 8, seed=4), make_rgb(8, 8, seed=5)
        assert psnr(a, b) == psnr(b, a)

    def test_monotone_in_noise(self):
        base = gray(128, 32, 32)
        rng = np.random.default_rng(6)
        small = np.clip(
            base.astype(int) + rng.integers(-2, 3, base.shape), 0, 255
        ).astype(np.uint8)
        large = np.clip(
            base.astype(int) + rng.integers(-40, 41, base.shape), 0, 255
        ).astype(np.uint8)
        assert psnr(base, small) > psnr(base, large)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            psnr(gray(0, 8, 8), gray(0, 8, 9))


def ref_ssim(a, b):
    """Loop oracle: per valid window, Gaussian-weighted moments and the
    SSIM formula, averaged."""
    la, lb = luminance(a), luminance(b)
    half = (SSIM_WINDOW - 1) / 2.0
    t = np.arange(SSIM_WINDOW) - half
    g1 = np.exp(-(t * t) / (2.0 * SSIM_SIGMA**2))
    g1 /= g1.sum()
    w2 = np.outer(g1, g1)
    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2
    h, w = la.shape
    vals = []
    for i in range(h - SSIM_WINDOW + 1):
        for j in range(w - SSIM_WINDOW + 1):
            pa = la[i:i + SSIM_WINDOW, j:j + SSIM_WINDOW]
            pb = lb[i:i + SSIM_WINDOW, j:j + SSIM_WINDOW]
            mu_a = (w2 * pa).sum()
            mu_b = (w2 * pb).sum()
            var_a = (w2 * pa * pa).sum() - mu_a**2
            var_b = (w2 * pb * pb).sum() - mu_b**2
            cov = (w2 * pa * pb).sum() - mu_a * mu_b
            vals.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
            )
    return float(np.mean(vals))


class TestSsim:
    def test_identical_is_exactly_one(self):
        img = make_rgb(16, 16, seed=7)
        assert ssim(img, img) == 1.0

    def test_symmetry_is_bitwise(self):
        a, b = make_rgb(16, 16, seed=8), make_rgb(16, 16, seed=9)
        assert ssim(a, b) == ssim(b, a)

    def test_matches_loop_oracle(self):
        a, b = make_rgb(14, 16, seed=10), make_rgb(14, 16, seed=11)
        assert abs(ssim(a, b) - ref_ssim(a, b)) < 1e-6

    def test_matches_loop_oracle_correlated(self):
        a = make_rgb(16, 14, seed=12)
        noisy = np.clip(
            a.astype(int) + np.random.default_rng(13).integers(-9, 10, a.shape),
            0, 255,
        ).astype(np.uint8)
        assert abs(ssim(a, noisy) - ref_ssim(a, noisy)) < 1e-6

    def test_bounds_and_degradation(self):
        base = gray(100, 16, 16)
        noisy = np.clip(
            base.astype(int)
            + np.random.default_rng(14).integers(-30, 31, base.shape),
            0, 255,
        ).astype(np.uint8)
        value = ssim(base, noisy)
        assert -1.0 <= value < 1.0

    def test_too_small_rejected(self):
        with pytest.raises(ValueError, match="at least"):
            ssim(gray(0, 8, 16), gray(0, 8, 16))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            ssim(gray(0, 16, 16), gray(0, 16, 17))


class TestEvalReport:
    def test_inf_excluded_from_mean(self):
        rep = EvalReport(
            "srim", ["a", "b", "c"],
            np.array([math.inf, 30.0, 20.0]), np.array([1.0, 0.5, 0.25]),
        )
        assert rep.mean_psnr == 25.0
        assert abs(rep.mean_ssim - (1.75 / 3.0)) < 1e-12

    def test_all_identical_mean_is_inf(self):
        rep = EvalReport(
            "srim", ["a"], np.array([math.inf]), np.array([1.0])
        )
        assert rep.mean_psnr == math.inf


class TestEvaluate:
    def _setup(self):
        gp = generator.init_params(tiny_gen_config(), seed=0)
        pairs = []
        for i in range(2):
            hr = make_rgb(16, 16, seed=20 + i)
            pairs.append((resample.downsample(hr, 4), hr))
        return gp, pairs

    def test_structure_and_determinism(self):
        gp, pairs = self._setup()
        reports = evaluate(gp, pairs, seed=3)
        assert [r.method for r in reports] == ["srim", "bicubic"]
        for rep in reports:
            assert len(rep.names) == 2
            assert rep.psnr_values.shape == (2,)
            assert rep.ssim_values.shape == (2,)
        again = evaluate(gp, pairs, seed=3)
        np.testing.assert_array_equal(
            reports[0].psnr_values, again[0].psnr_values
        )
        np.testing.assert_array_equal(
            reports[0].ssim_values, again[0].ssim_values
        )

    def test_seed_changes_model_scores_only(self):
        gp, pairs = self._setup()
        a = evaluate(gp, pairs, seed=3)
        b = evaluate(gp, pairs, seed=4)
        # bicubic is deterministic; the stochastic model resamples
        np.testing.assert_array_equal(a[1].psnr_values, b[1].psnr_values)
        assert not np.array_equal(a[0].psnr_values, b[0].psnr_values)

    def test_bicubic_report_matches_direct_computation(self):
        gp, pairs = self._setup()
        rep = evaluate(gp, pairs, seed=3)[1]
        for k, (lr, hr) in enumerate(pairs):
            up = resample.bicubic_upscale(lr, 4)
            assert rep.psnr_values[k] == psnr(up, hr)
            assert rep.ssim_values[k] == ssim(up, hr)

    def test_empty_set(self):
        gp, _ = self._setup()
        with pytest.raises(ValueError, match="empty"):
            evaluate(gp, [], seed=0)


class TestReportCsv:
    def test_row_count_and_serialization(self):
        reports = [
            EvalReport("srim", ["a", "b"], np.array([math.inf, 30.0]),
                       np.array([1.0, 0.5])),
            EvalReport("bicubic", ["a", "b"], np.array([25.0, 24.0]),
                       np.array([0.7, 0.6])),
        ]
        text = report_csv(reports)
        lines = text.strip().split("\n")
        # header + one row per (image, method) + one mean row per method
        assert len(lines) == 1 + 2 * 2 + 2
        assert lines[0] == "image,method,psnr_db,ssim"
        assert lines[1] == "a,srim,inf,1.0"
        assert lines[-2] == "mean,srim,30.0,0.75"
        fields = lines[-1].split(",")
        assert fields[:2] == ["mean", "bicubic"]
        assert abs(float(fields[2]) - 24.5) < 1e-12
