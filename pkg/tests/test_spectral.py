import math

import numpy as np
import pytest

from photonloc.spectral import (
    FrequencyAmplitude,
    GridSpec,
    ResolutionError,
    SpectralAmplitude,
    TransverseAmplitude,
    UnsupportedFamilyError,
    evaluate_amplitude,
    fourier_pair,
    numeric_ft_oracle,
)

from conftest import make_psi


def unit_psi(sigma_omega=1.0, sigma_k=(1.0, 1.0), center_omega=0.0):
    return SpectralAmplitude(FrequencyAmplitude(center_omega, sigma_omega),
                             TransverseAmplitude((0.0, 0.0), sigma_k))


def test_peak_at_center(psi):
    w0, k0 = psi.freq.center_omega, psi.trans.center_k
    peak = abs(evaluate_amplitude(psi, w0, k0))
    offsets = np.linspace(-3, 3, 13)
    for dw in offsets:
        for dk in offsets:
            val = abs(evaluate_amplitude(psi, w0 + dw * 1e13, (k0[0] + dk * 1e4, k0[1])))
            assert val <= peak * (1 + 1e-15)


def test_one_density_sigma_in_omega_gives_quarter_power_drop(psi):
    w0, k0 = psi.freq.center_omega, psi.trans.center_k
    peak = abs(evaluate_amplitude(psi, w0, k0))
    off = abs(evaluate_amplitude(psi, w0 + psi.freq.density_sigma, k0))
    assert off / peak == pytest.approx(math.exp(-0.25), rel=1e-12)


def test_one_amplitude_width_gives_half_power_drop(psi):
    w0, k0 = psi.freq.center_omega, psi.trans.center_k
    peak = abs(evaluate_amplitude(psi, w0, k0))
    off = abs(evaluate_amplitude(psi, w0 + psi.freq.sigma_omega, k0))
    assert off / peak == pytest.approx(math.exp(-0.5), rel=1e-12)


def test_amplitude_factor_matches_grid_oracle():
    a = unit_psi()
    pair = numeric_ft_oracle(a)
    grid, vals = pair.t.direct_grid, np.abs(pair.t.direct_values)
    target = a.freq.density_sigma
    interp = np.interp(target, grid, vals) / vals.max()
    assert interp == pytest.approx(math.exp(-0.25), rel=1e-3)


def test_even_symmetry(psi, rng):
    w0, k0 = psi.freq.center_omega, psi.trans.center_k
    for _ in range(20):
        dw, dkx, dky = rng.normal(size=3) * (1e13, 1e4, 1e4)
        a = evaluate_amplitude(psi, w0 + dw, (k0[0] + dkx, k0[1] + dky))
        b = evaluate_amplitude(psi, w0 - dw, (k0[0] - dkx, k0[1] - dky))
        assert abs(a) == pytest.approx(abs(b), rel=1e-12)


def test_unit_sigma_convention():
    pair = fourier_pair(unit_psi())
    assert pair.time_width == 1.0
    assert pair.time_density_sigma == pytest.approx(1 / math.sqrt(2), rel=1e-15)


def test_doubling_bandwidth_halves_duration(psi):
    base = fourier_pair(psi)
    doubled = fourier_pair(psi.scaled(2.0))
    assert doubled.time_width == pytest.approx(base.time_width / 2, rel=1e-15)
    np.testing.assert_allclose(doubled.position_widths, np.array(base.position_widths) / 2, rtol=1e-15)


def test_isotropic_momentum_gives_isotropic_position():
    pair = fourier_pair(make_psi(sigma_k=(3.0e4, 3.0e4)))
    sx, sy = pair.position_density_sigma
    assert sx == sy


def test_width_product_is_fixed(rng):
    for _ in range(20):
        s_w, s_k = 10 ** rng.uniform(11, 14), 10 ** rng.uniform(2, 6)
        pair = fourier_pair(make_psi(sigma_omega=s_w, sigma_k=(s_k, 2 * s_k)))
        assert pair.time_width * s_w == pytest.approx(1.0, rel=1e-14)
        assert pair.position_widths[1] * 2 * s_k == pytest.approx(1.0, rel=1e-14)


def test_unsupported_family():
    a = SpectralAmplitude(FrequencyAmplitude(0.0, 1.0, kind="sech"))
    with pytest.raises(UnsupportedFamilyError, match="sech"):
        fourier_pair(a)
    with pytest.raises(UnsupportedFamilyError):
        numeric_ft_oracle(a)


def test_resolution_error_names_minimum():
    with pytest.raises(ResolutionError, match="256"):
        numeric_ft_oracle(unit_psi(), GridSpec(n_points=64))
    with pytest.raises(ResolutionError, match="extent"):
        numeric_ft_oracle(unit_psi(), GridSpec(extent_sigmas=3.0))


def test_grid_variance_matches_closed_form():
    pair = numeric_ft_oracle(unit_psi())
    assert pair.t.density_variance() == pytest.approx(0.5, rel=1e-3)


def test_parseval_random_parameters(rng):
    for _ in range(20):
        a = make_psi(sigma_omega=10 ** rng.uniform(11, 14),
                     sigma_k=tuple(10 ** rng.uniform(2, 6, 2)),
                     center_omega=10 ** rng.uniform(14, 16))
        num = numeric_ft_oracle(a)
        assert num.direct_norm() == pytest.approx(1.0, rel=1e-6)
        assert num.conj_norm() / (2 * math.pi) ** 3 == pytest.approx(1.0, rel=1e-6)
        np.testing.assert_allclose(np.sqrt(num.density_variances()), fourier_pair(a).density_sigmas,
                                   rtol=1e-3)


def test_closed_form_transform_matches_quadrature(rng):
    a = make_psi(sigma_omega=2.0e13, sigma_k=(5e3, 2e4))
    num = numeric_ft_oracle(a)
    closed = a.freq.transform(num.t.conj_grid)
    np.testing.assert_allclose(np.abs(num.t.conj_values), np.abs(closed), atol=1e-9 * np.abs(closed).max())


def test_center_shift_is_pure_phase():
    a = unit_psi(center_omega=0.0)
    b = unit_psi(center_omega=37.0)
    t = np.linspace(-5, 5, 101)
    np.testing.assert_allclose(np.abs(a.transform(t, 0 * t, 0 * t)), np.abs(b.transform(t, 0 * t, 0 * t)),
                               rtol=1e-13)
    na, nb = numeric_ft_oracle(a), numeric_ft_oracle(b)
    np.testing.assert_allclose(na.t.density, nb.t.density, rtol=1e-6, atol=1e-10)


def test_invalid_widths_rejected():
    with pytest.raises(ValueError):
        FrequencyAmplitude(1.0, 0.0)
    with pytest.raises(ValueError):
        TransverseAmplitude((0.0, 0.0), (1.0, -1.0))
