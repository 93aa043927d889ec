import numpy as np
import pytest

from mrfp.spectral import BandEnergyReport, band_delta, band_energy, band_index, power_spectrum


def test_constant_is_all_dc():
    r = band_energy(np.full((2, 3, 8, 8), 4.0))
    np.testing.assert_allclose(r.energies, [1, 0, 0], atol=1e-12)
    assert r.sample_count == 2


def test_checkerboard_is_all_high():
    y, x = np.mgrid[0:8, 0:8]
    board = (-1.0) ** (x + y)
    np.testing.assert_allclose(band_energy(board).energies, [0, 0, 1], atol=1e-12)


def test_white_noise_matches_annulus_counts():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(100, 1, 64, 64))
    counts = np.bincount(band_index(64, 64).ravel(), minlength=3)
    expected = counts / counts.sum()
    r = band_energy(x)
    np.testing.assert_allclose(r.energies, expected, rtol=0.05)


def test_all_zero_rejected():
    with pytest.raises(ValueError):
        band_energy(np.zeros((1, 1, 4, 4)))
    with pytest.raises(ValueError):
        band_energy(np.ones((1, 1, 1, 4)))


def test_dead_channels_are_skipped():
    x = np.zeros((1, 2, 8, 8))
    x[0, 0] = 1.0
    np.testing.assert_allclose(band_energy(x).energies, [1, 0, 0])


def test_parseval():
    x = np.random.default_rng(2).normal(size=(3, 2, 10, 12))
    spectral_total = power_spectrum(x).sum() / (10 * 12)
    assert spectral_total == pytest.approx((x**2).sum(), rel=1e-6)


def test_translation_invariance():
    x = np.random.default_rng(5).normal(size=(2, 3, 16, 16))
    shifted = np.roll(x, (3, -5), axis=(2, 3))
    np.testing.assert_allclose(band_energy(shifted).energies, band_energy(x).energies, atol=1e-9)


def test_sums_to_one():
    r = band_energy(np.random.default_rng(8).uniform(size=(4, 5, 9, 13)))
    assert r.energies.sum() == pytest.approx(1.0, abs=1e-9)
    assert len(r.energies) == 3


def test_band_delta():
    a = BandEnergyReport(np.array([1.0, 0, 0]), 1)
    b = BandEnergyReport(np.array([0.0, 0, 1]), 1)
    np.testing.assert_array_equal(band_delta(a, a), [0, 0, 0])
    np.testing.assert_array_equal(band_delta(a, b), [-1, 0, 1])
    with pytest.raises(ValueError):
        band_delta(a, BandEnergyReport(np.array([0.5, 0.5]), 1, (0, 0.5, 1)))


def test_report_file_round_trip(tmp_path):
    r = band_energy(np.random.default_rng(1).normal(size=(2, 2, 6, 6)))
    r.save(tmp_path / "band.json")
    back = BandEnergyReport.load(tmp_path / "band.json")
    np.testing.assert_array_equal(back.energies, r.energies)
    assert back.band_edges == r.band_edges and back.sample_count == 2
