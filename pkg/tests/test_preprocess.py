"""Spectral transforms: boundary arithmetic, invariances, hue geometry."""

import logging

import numpy as np
import pytest

from spectraflake.cube import HSCube
from spectraflake.preprocess import (
    Preproc,
    apply,
    first_derivative_data,
    helmert_basis,
    hyper_hsv_data,
    hyper_hsv_inverse_data,
    hyper_hue_data,
    log_derivative_data,
    output_channels,
    second_derivative_data,
    spectral_norm_data,
)


def spectra(seed, n=64, c=12, positive=True):
    rng = np.random.default_rng(seed)
    base = rng.random((n, c)) + (0.05 if positive else -0.5)
    return base  # float64 rows


class TestDerivatives:
    def test_first_constant_is_zero(self):
        out = first_derivative_data(np.array([[5.0, 5.0, 5.0, 5.0]]))
        assert out.tolist() == [[0.0, 0.0, 0.0]]

    def test_first_direct_differencing(self):
        out = first_derivative_data(np.array([[1.0, 2.0, 4.0, 8.0]]))
        assert out.tolist() == [[1.0, 2.0, 4.0]]

    def test_second_of_linear_ramp_is_zero(self):
        out = second_derivative_data(np.array([[0.0, 1.0, 2.0, 3.0]]))
        assert out.tolist() == [[0.0, 0.0]]

    def test_second_direct(self):
        out = second_derivative_data(np.array([[1.0, 2.0, 4.0, 8.0]]))
        assert out.tolist() == [[1.0, 2.0]]

    @pytest.mark.parametrize("seed", range(5))
    def test_second_equals_composed_first(self, seed):
        v = spectra(seed)
        composed = first_derivative_data(first_derivative_data(v))
        assert np.allclose(second_derivative_data(v), composed, atol=1e-6)

    @pytest.mark.parametrize("seed", range(5))
    def test_offset_invariance(self, seed):
        v = spectra(seed)
        k = 0.25 + seed
        assert np.allclose(first_derivative_data(v + k), first_derivative_data(v), atol=1e-6)
        assert np.allclose(second_derivative_data(v + k), second_derivative_data(v), atol=1e-6)

    def test_not_scale_invariant(self):
        v = spectra(1)
        scaled = first_derivative_data(3.0 * v)
        assert np.allclose(scaled, 3.0 * first_derivative_data(v), atol=1e-5)
        assert not np.allclose(scaled, first_derivative_data(v), atol=1e-3)

    def test_channel_preconditions(self):
        with pytest.raises(ValueError):
            first_derivative_data(np.ones((2, 1)))
        with pytest.raises(ValueError):
            second_derivative_data(np.ones((2, 2)))


class TestLogDerivative:
    def test_geometric_spectrum(self):
        v = np.array([[1.0, 2.0, 4.0, 8.0, 16.0]])
        out, guarded = log_derivative_data(v)
        assert guarded == 0
        assert np.allclose(out, 1.0, atol=1e-7)

    def test_constant_spectrum_is_zero(self):
        out, _ = log_derivative_data(np.full((3, 6), 0.7))
        assert np.allclose(out, 0.0, atol=1e-7)

    @pytest.mark.parametrize("seed", range(5))
    def test_scale_invariance(self, seed):
        v = spectra(seed)
        c = 0.3 + 2.0 * seed
        a, _ = log_derivative_data(c * v)
        b, _ = log_derivative_data(v)
        assert np.abs(a - b).max() <= 1e-6

    def test_not_offset_invariant(self):
        v = spectra(2)
        a, _ = log_derivative_data(v + 1.0)
        b, _ = log_derivative_data(v)
        assert np.abs(a - b).max() > 1e-3

    def test_guard_counts_and_stays_finite(self):
        v = np.array([[0.0, 1.0, 0.0, 2.0], [1.0, 1.0, 1.0, 1.0]])
        out, guarded = log_derivative_data(v)
        assert guarded == 2  # two near-zero denominators in row 0
        assert np.isfinite(out).all()

    def test_guard_keeps_denominator_sign(self):
        out, guarded = log_derivative_data(np.array([[-1e-12, 5.0]]), eps=1e-8)
        assert guarded == 1
        assert out[0, 0] < 0  # 5 / (-eps) - 1

    def test_cube_level_logs_guard_count(self, caplog):
        cube = HSCube(np.zeros((1, 1, 3), np.float32))
        with caplog.at_level(logging.WARNING, logger="spectraflake.preprocess"):
            apply(Preproc.LOG_DERIV, cube)
        assert "2" in caplog.text


class TestSpectralNorm:
    def test_three_four_five(self):
        out = spectral_norm_data(np.array([[3.0, 4.0]]))
        assert np.allclose(out, [[0.6, 0.8]], atol=1e-7)

    def test_zero_pixel_maps_to_zero(self):
        out = spectral_norm_data(np.zeros((2, 3)))
        assert np.all(out == 0.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_scale_invariance(self, seed):
        v = spectra(seed)
        c = 0.2 + seed
        assert np.abs(spectral_norm_data(c * v) - spectral_norm_data(v)).max() <= 1e-6

    def test_exact_invariance_for_float_multiples(self):
        # Exact float32 multiples normalize to bitwise-identical output.
        v = (spectra(9) * 0.25).astype(np.float32)
        assert np.array_equal(spectral_norm_data(4.0 * v), spectral_norm_data(v))

    @pytest.mark.parametrize("seed", range(5))
    def test_unit_norm(self, seed):
        v = spectra(seed, positive=False)
        norms = np.linalg.norm(spectral_norm_data(v).astype(np.float64), axis=-1)
        assert np.abs(norms - 1.0).max() <= 1e-6

    def test_not_offset_invariant(self):
        v = spectra(3)
        assert np.abs(spectral_norm_data(v + 1.0) - spectral_norm_data(v)).max() > 1e-3


class TestHelmertBasis:
    @pytest.mark.parametrize("c", [3, 5, 12, 224])
    def test_orthonormal_and_kills_diagonal(self, c):
        u = helmert_basis(c)
        assert u.shape == (c - 1, c)
        assert np.abs(u @ u.T - np.eye(c - 1)).max() <= 1e-10
        assert np.abs(u @ np.ones(c)).max() <= 1e-10


class TestHyperHue:
    def test_gray_pixel_degenerates(self):
        for value in (0.3, 1.0):
            out = hyper_hsv_data(np.full((1, 5), value))
            assert np.allclose(out[0, :3], 0.0)          # hue angles
            assert out[0, 3] == pytest.approx(0.0, abs=1e-7)   # saturation
            assert out[0, 4] == pytest.approx(value, abs=1e-7)  # intensity

    @pytest.mark.parametrize("seed", range(5))
    def test_scale_and_offset_invariance(self, seed):
        v = spectra(seed)
        c = 0.4 + seed
        k = 2.0 * seed - 3.0
        assert np.abs(hyper_hue_data(c * v) - hyper_hue_data(v)).max() <= 1e-6
        assert np.abs(hyper_hue_data(v + k) - hyper_hue_data(v)).max() <= 1e-6

    @pytest.mark.parametrize("seed", range(8))
    def test_roundtrip_through_inverse(self, seed):
        v = spectra(seed, n=128, c=9, positive=False)
        rec = hyper_hsv_inverse_data(hyper_hsv_data(v))
        assert np.abs(rec - v).max() <= 1e-5

    def test_channel_counts(self):
        v = spectra(0, c=10)
        assert hyper_hue_data(v).shape == (64, 8)
        assert hyper_hsv_data(v).shape == (64, 10)

    def test_needs_three_channels(self):
        with pytest.raises(ValueError):
            hyper_hue_data(np.ones((2, 2)))


class TestApplyDispatcher:
    def test_none_is_identity_object(self):
        cube = HSCube(np.ones((2, 2, 4), np.float32))
        assert apply(Preproc.NONE, cube) is cube

    def test_spectral_norm_keeps_channels(self):
        cube = HSCube(np.ones((2, 2, 7), np.float32))
        assert apply(Preproc.SPECTRAL_NORM, cube).channels == 7

    def test_hyper_hue_on_224_gives_222(self):
        rng = np.random.default_rng(0)
        cube = HSCube(rng.random((2, 2, 224), dtype=np.float32))
        assert apply(Preproc.HYPER_HUE, cube).channels == 222

    def test_output_channels_table(self):
        assert output_channels(Preproc.NONE, 224) == 224
        assert output_channels(Preproc.FIRST_DERIV, 224) == 223
        assert output_channels(Preproc.SECOND_DERIV, 224) == 222
        assert output_channels(Preproc.LOG_DERIV, 224) == 223
        assert output_channels(Preproc.SPECTRAL_NORM, 224) == 224
        assert output_channels(Preproc.HYPER_HUE, 224) == 222
        assert output_channels(Preproc.HYPER_HSV, 224) == 224

    def test_wavelength_propagation(self):
        wl = np.array([900.0, 910.0, 920.0, 930.0])
        cube = HSCube(np.ones((1, 1, 4), np.float32) * [[[1, 2, 4, 8]]], wl)
        assert np.array_equal(apply(Preproc.FIRST_DERIV, cube).wavelengths, wl[1:])
        assert np.array_equal(apply(Preproc.SECOND_DERIV, cube).wavelengths, wl[2:])
        assert apply(Preproc.HYPER_HSV, cube).wavelengths is None

    def test_too_few_channels_error(self):
        cube = HSCube(np.ones((1, 1, 2), np.float32))
        with pytest.raises(ValueError, match="channels"):
            apply(Preproc.HYPER_HUE, cube)
