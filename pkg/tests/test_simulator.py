import math
import struct

import numpy as np
import pytest

from dscmplan.analytics import clipping_attenuation, clipping_noise_power, db_to_eta, effective_snrs
from dscmplan.errors import ConfigurationError, InvalidIndexError
from dscmplan.shaping import AMPLITUDES
from dscmplan.simulator import (
    WaveformConfig,
    apply_channel_and_receive,
    clip_level,
    clip_waveform,
    excess_kurtosis,
    extract_clipping_noise,
    generate_dscm,
    measure_esnr_sweep,
    papr_db,
    read_waveform,
    simulate,
    write_waveform,
)

from conftest import REFERENCE_SES


def test_waveform_config_validation():
    with pytest.raises(ConfigurationError):
        WaveformConfig(rrc_rolloff=1.5)
    with pytest.raises(ConfigurationError):
        WaveformConfig(symbols_per_block=8)
    with pytest.raises(ConfigurationError):
        WaveformConfig(oversampling=0)
    with pytest.raises(ConfigurationError):
        WaveformConfig(rrc_rolloff=0.1, symbols_per_block=1024)


def test_waveform_power_and_gaussianity(profile, small_wf):
    x, syms = generate_dscm(profile, REFERENCE_SES, small_wf)
    assert x.size == small_wf.samples_per_block(8)
    assert len(syms) == 8 and syms[0].size == small_wf.symbols_per_block
    assert np.mean(x.real**2) == pytest.approx(profile.dscm_power, rel=0.05)
    assert np.mean(x.imag**2) == pytest.approx(profile.dscm_power, rel=0.05)
    assert abs(excess_kurtosis(x.real)) < 0.15
    assert papr_db(x) > 8.0


def test_clipping_statistics_follow_closed_form(profile):
    wf = WaveformConfig(symbols_per_block=4096, blocks=1, seed=3)
    x, _ = generate_dscm(profile, REFERENCE_SES, wf)
    eta = 1.5
    y = clip_waveform(x, eta)
    a = clip_level(eta, 1.0)
    assert np.max(np.abs(y.real)) <= a and np.max(np.abs(y.imag)) <= a
    p = np.mean(x.real**2)
    alpha = np.mean(y.real * x.real) / p
    assert alpha == pytest.approx(clipping_attenuation(eta / math.sqrt(p)), abs=0.01)
    dist = np.mean((y.real - alpha * x.real) ** 2)
    assert dist == pytest.approx(clipping_noise_power(eta / math.sqrt(p), p), rel=0.1)


def test_noiseless_unclipped_chain_is_error_free(profile, small_wf):
    res = simulate(profile, REFERENCE_SES, small_wf, None, add_noise=False)
    assert np.all(res.ber == 0.0)
    assert np.all(res.esnr_db > 120.0)
    assert res.clip_ratio_db is None


def test_simulation_reproducible(profile, small_wf):
    a = simulate(profile, REFERENCE_SES, small_wf, 7.0)
    b = simulate(profile, REFERENCE_SES, small_wf, 7.0)
    assert a == b
    c = simulate(profile, REFERENCE_SES, WaveformConfig(symbols_per_block=1024, blocks=2, seed=12), 7.0)
    assert not np.array_equal(a.ber, c.ber)


def test_simulated_esnr_tracks_theory(profile):
    wf = WaveformConfig(symbols_per_block=4096, blocks=4, seed=1)
    ratios = [6.0, 10.0]
    sim = measure_esnr_sweep(profile, REFERENCE_SES, wf, ratios)
    for row, r in zip(sim, ratios):
        theory = effective_snrs(float(db_to_eta(r)), profile)
        assert np.max(np.abs(10 * np.log10(row / theory))) < 0.35


def test_simulate_argument_checks(profile, small_wf):
    with pytest.raises(ConfigurationError):
        simulate(profile, REFERENCE_SES[:3], small_wf, 7.0)
    x, _ = generate_dscm(profile, REFERENCE_SES, small_wf)
    with pytest.raises(InvalidIndexError):
        apply_channel_and_receive(x, profile, small_wf, 8)


def test_clipping_noise_samples(profile, small_wf):
    cs = extract_clipping_noise(profile, REFERENCE_SES, small_wf, 7.0)
    assert set(cs.samples) == {int(k) for k in AMPLITUDES}
    total = sum(v.size for v in cs.samples.values())
    assert total == 2 * 8 * small_wf.total_symbols
    assert cs.pooled().size == total
    # inner points are pushed outwards less than outer ones are pulled in
    assert np.mean(cs.samples[7]) < np.mean(cs.samples[1])
    assert abs(np.mean(cs.samples[1]) + np.mean(cs.samples[-1])) < 0.01


def test_waveform_dump_round_trip(tmp_path, profile, small_wf):
    x, _ = generate_dscm(profile, REFERENCE_SES, small_wf)
    path = tmp_path / "w.dscm"
    write_waveform(path, x, 8, 1)
    raw = path.read_bytes()
    assert raw[:4] == b"DSCM"
    assert len(raw) == 64 + 16 * x.size
    magic, version, n, os_, count = struct.unpack_from("<4sIIIQ", raw)
    assert (version, n, os_, count) == (1, 8, 1, x.size)
    assert np.frombuffer(raw[64:72], "<f8")[0] == x[0].real
    y, n2, os2 = read_waveform(path)
    assert np.array_equal(x, y) and (n2, os2) == (8, 1)


def test_waveform_dump_rejects_garbage(tmp_path):
    path = tmp_path / "bad.dscm"
    path.write_bytes(b"XXXX" + bytes(60))
    with pytest.raises(ConfigurationError):
        read_waveform(path)
    path.write_bytes(b"DSCM")
    with pytest.raises(ConfigurationError):
        read_waveform(path)
