import mpmath
import numpy as np
import pytest

from dscmplan.analytics import (
    LinkProfile,
    analyze,
    capacity,
    capacity_curve,
    clipping_attenuation,
    clipping_noise_power,
    db_to_eta,
    effective_snr,
    effective_snrs,
    eta_to_db,
    matching_coefficient,
    optimal_clipping_ratio,
)
from dscmplan.errors import InvalidIndexError, InvalidParameterError

mpmath.mp.dps = 40


def moment_oracle(eta, power=1.0):
    """Bussgang gain and distortion power of a clipped Gaussian, by quadrature."""
    P = mpmath.mpf(power)
    A = mpmath.mpf(eta) * mpmath.sqrt(P)
    pdf = lambda x: mpmath.exp(-x * x / (2 * P)) / mpmath.sqrt(2 * mpmath.pi * P)
    clip = lambda x: max(-A, min(A, x))
    cuts = [-mpmath.inf, -A, 0, A, mpmath.inf]
    alpha = mpmath.quad(lambda x: x * clip(x) * pdf(x), cuts) / P
    noise = mpmath.quad(lambda x: (clip(x) - alpha * x) ** 2 * pdf(x), cuts)
    return float(alpha), float(noise)


@pytest.mark.parametrize("eta", np.linspace(0.1, 5.0, 20))
def test_closed_forms_match_moment_integrals(eta):
    alpha, noise = moment_oracle(eta)
    assert clipping_attenuation(eta) == pytest.approx(alpha, rel=1e-8)
    assert clipping_noise_power(eta) == pytest.approx(noise, rel=1e-8)


def test_noise_power_scales_with_signal_power():
    assert clipping_noise_power(1.3, 2.5) == pytest.approx(2.5 * clipping_noise_power(1.3), rel=1e-14)
    _, oracle = moment_oracle(1.3, 2.5)
    assert clipping_noise_power(1.3, 2.5) == pytest.approx(oracle, rel=1e-8)


def test_clipping_limits():
    assert clipping_attenuation(0.0) == 0.0
    assert clipping_attenuation(40.0) == 1.0
    assert clipping_noise_power(0.0) == 0.0
    assert clipping_noise_power(40.0) == 0.0
    with pytest.raises(InvalidParameterError):
        clipping_attenuation(-1.0)
    with pytest.raises(InvalidParameterError):
        clipping_noise_power(1.0, 0.0)


def test_db_round_trip():
    assert eta_to_db(db_to_eta(7.25)) == pytest.approx(7.25, abs=1e-12)


def test_link_profile_validation():
    with pytest.raises(InvalidParameterError):
        LinkProfile(losses=(), noise_variance=0.01, peak_amplitude=1.0)
    with pytest.raises(InvalidParameterError):
        LinkProfile(losses=(0.5,), noise_variance=0.01, peak_amplitude=1.0)
    with pytest.raises(InvalidParameterError):
        LinkProfile(losses=(1.0,), noise_variance=-1.0, peak_amplitude=1.0)


def test_esnr_formula_by_hand(profile):
    eta = 2.0
    a = clipping_attenuation(eta)
    pc = clipping_noise_power(eta)
    b2 = (profile.peak_amplitude / eta) ** 2
    loss = profile.losses[3]
    expect = a * a * b2 / (b2 * pc + 8 * loss * profile.noise_variance / profile.noise_samples_per_symbol)
    assert effective_snr(eta, profile, 3) == pytest.approx(expect, rel=1e-14)
    assert matching_coefficient(eta, profile) == pytest.approx(profile.peak_amplitude / eta)


def test_esnr_decreases_with_loss(profile):
    e = effective_snrs(2.3, profile)
    assert np.all(np.diff(e) < 0)


def test_esnr_is_invariant_to_signal_power(profile):
    a = effective_snrs(2.3, profile)
    b = effective_snrs(2.3, profile.replace(dscm_power=7.0))
    np.testing.assert_allclose(a, b, rtol=1e-13)


def test_effective_snr_index_errors(profile):
    with pytest.raises(InvalidIndexError):
        effective_snr(2.0, profile, 8)
    with pytest.raises(InvalidIndexError):
        effective_snr(2.0, profile, -1)
    with pytest.raises(InvalidParameterError):
        effective_snrs(0.0, profile)


def test_capacity_curve_matches_scalar(profile):
    ratios = [4.0, 7.0, 13.0]
    curve = capacity_curve(ratios, profile)
    for r, c in zip(ratios, curve):
        assert c == pytest.approx(capacity(float(db_to_eta(r)), profile), rel=1e-13)


def test_optimum_location_and_gain(profile):
    r, res = optimal_clipping_ratio(profile)
    assert 6.0 <= r <= 8.0
    c13 = capacity(float(db_to_eta(13.0)), profile)
    assert 1.25 <= res.capacity_bps / c13 <= 1.50
    grid = np.linspace(r - 0.5, r + 0.5, 101)
    assert res.capacity_bps >= capacity_curve(grid, profile).max() * (1 - 1e-12)


def test_capacity_unimodal_on_window(profile):
    r, _ = optimal_clipping_ratio(profile)
    grid = np.arange(3.0, 13.0001, 0.05)
    caps = capacity_curve(grid, profile)
    d = np.diff(caps)
    assert np.all(d[grid[1:] <= r] > 0)
    assert np.all(d[grid[:-1] >= r] < 0)


def test_optimizer_arguments(profile):
    with pytest.raises(InvalidParameterError):
        optimal_clipping_ratio(profile, step_db=0.0)
    with pytest.raises(InvalidParameterError):
        optimal_clipping_ratio(profile, 5.0, 5.0)


def test_optimum_at_window_edge(profile):
    r, _ = optimal_clipping_ratio(profile, 9.0, 12.0)
    assert r == pytest.approx(9.0, abs=1e-9)


def test_analyze_fields(profile):
    res = analyze(7.0, profile)
    assert res.eta == pytest.approx(10 ** 0.35)
    assert res.clip_amplitude == pytest.approx(res.eta)
    assert len(res.esnr_db) == 8
