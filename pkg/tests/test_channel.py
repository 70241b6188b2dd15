"""Fiber link: dispersion, noise loading, mux/demux, split-step, fluctuations."""

import numpy as np
import pytest

from combclone.channel import (
    ComplexWaveform,
    LinkConfig,
    add_noise,
    apply_dispersion,
    compensate_dispersion,
    demultiplex,
    multiplex,
    split_step_propagate,
    synth_fiber_fluct,
    walkoff_delay,
)
from combclone.comb import stream_rng


def _random_waveform(n, rate, seed=0, offset=0.0):
    rng = np.random.default_rng(seed)
    return ComplexWaveform(
        rng.standard_normal(n) + 1j * rng.standard_normal(n), rate, offset
    )


def test_link_config_derived_quantities():
    cfg = LinkConfig()
    assert cfg.loss_db == pytest.approx(10.0)  # 0.2 dB/km * 50 km
    # field decays as exp(-alpha/2 z); power loss over L must equal loss_db
    power_db = 10.0 * cfg.alpha_per_m * cfg.length / np.log(10.0)
    assert power_db == pytest.approx(cfg.loss_db)


def test_walkoff_delay_formula():
    cfg = LinkConfig(beta2=-21.7e-27, length=50e3)
    # group-delay difference: beta2 * L * 2*pi*df
    expected = -21.7e-27 * 50e3 * 2.0 * np.pi * 100e9
    assert walkoff_delay(cfg, 1, 100e9) == pytest.approx(expected)
    assert walkoff_delay(cfg, -3, 100e9) == pytest.approx(-3 * expected)


def test_dispersion_round_trip_is_lossless():
    cfg = LinkConfig()
    w = _random_waveform(2**12, 50e9)
    out = compensate_dispersion(apply_dispersion(w, cfg, 1e11), cfg, 1e11)
    assert np.allclose(out.samples, w.samples, atol=1e-10)
    # all-pass: power preserved by dispersion alone
    assert apply_dispersion(w, cfg).power == pytest.approx(w.power, rel=1e-12)


def test_dispersion_round_trip_evm_penalty_small():
    # acceptance-level bound, small grid: residual error below 0.5% EVM
    cfg = LinkConfig()
    w = _random_waveform(2**14, 100e9, seed=3)
    out = compensate_dispersion(apply_dispersion(w, cfg, 2e11), cfg, 2e11)
    evm = np.sqrt(np.mean(np.abs(out.samples - w.samples) ** 2) / w.power)
    assert evm < 0.005


def test_add_noise_hits_target_snr():
    w = _random_waveform(200_000, 10e9, seed=1)
    noisy = add_noise(w, snr_db=15.0, seed=2)
    noise_power = np.mean(np.abs(noisy.samples - w.samples) ** 2)
    measured = 10.0 * np.log10(w.power / noise_power)
    assert measured == pytest.approx(15.0, abs=0.1)


def test_add_noise_osnr_reference_bandwidth():
    w = _random_waveform(200_000, 10e9, seed=1)
    # same target in a 10x smaller reference bandwidth = 10x more total noise
    a = add_noise(w, osnr_db=20.0, ref_bandwidth=10e9, seed=2)
    b = add_noise(w, osnr_db=20.0, ref_bandwidth=1e9, seed=2)
    pa = np.mean(np.abs(a.samples - w.samples) ** 2)
    pb = np.mean(np.abs(b.samples - w.samples) ** 2)
    assert pb / pa == pytest.approx(10.0, rel=0.05)


def test_add_noise_argument_validation():
    w = _random_waveform(64, 1e9)
    with pytest.raises(ValueError):
        add_noise(w)
    with pytest.raises(ValueError):
        add_noise(w, snr_db=10.0, osnr_db=10.0)
    clean = add_noise(w, snr_db=np.inf)
    assert np.array_equal(clean.samples, w.samples)


def test_mux_demux_round_trip():
    rate = 400e9
    n = 2**12
    offsets = [-100e9, 0.0, 100e9]
    chans = [_random_waveform(n, rate, seed=k, offset=f) for k, f in enumerate(offsets)]
    # band-limit each channel so brick-wall extraction is exact
    limited = []
    for ch in chans:
        spec = np.fft.fft(ch.samples)
        freqs = np.fft.fftfreq(n, 1 / rate)
        spec[np.abs(freqs) > 20e9] = 0.0
        limited.append(ComplexWaveform(np.fft.ifft(spec), rate, ch.center_offset))
    total = multiplex(limited)
    back = demultiplex(total, offsets, 50e9)
    for orig, rec in zip(limited, back):
        assert np.allclose(rec.samples, orig.samples, atol=1e-10)


def test_split_step_linear_limit_matches_analytic_dispersion():
    cfg = LinkConfig(gamma=0.0, alpha_db_per_km=0.0)
    rate = 400e9
    n = 2**12
    ch = _random_waveform(n, rate, seed=5, offset=0.0)
    spec = np.fft.fft(ch.samples)
    freqs = np.fft.fftfreq(n, 1 / rate)
    spec[np.abs(freqs) > 15e9] = 0.0
    ch = ComplexWaveform(np.fft.ifft(spec), rate, 0.0)
    out = split_step_propagate([ch], cfg, n_steps=10, demux_bandwidth=40e9)[0]
    ref = apply_dispersion(ch, cfg, 0.0)
    assert np.allclose(out.samples, ref.samples, atol=1e-8)


def test_split_step_energy_conservation_without_loss():
    cfg = LinkConfig(alpha_db_per_km=0.0)
    ch = _random_waveform(2**11, 400e9, seed=2)
    spec = np.fft.fft(ch.samples)
    freqs = np.fft.fftfreq(len(ch), 1 / 400e9)
    spec[np.abs(freqs) > 15e9] = 0.0
    # keep the nonlinear phase small so SPM broadening stays inside the
    # extraction bandwidth; the split-step itself must then conserve energy
    ch = ComplexWaveform(0.03 * np.fft.ifft(spec), 400e9, 0.0)
    out = split_step_propagate([ch], cfg, n_steps=20, demux_bandwidth=300e9)[0]
    assert out.power == pytest.approx(ch.power, rel=1e-6)


def test_split_step_cw_self_phase_modulation():
    # lossless, dispersionless CW: output phase = gamma * P * L exactly
    cfg = LinkConfig(beta2=0.0, alpha_db_per_km=0.0, gamma=1.3e-3, length=50e3)
    p = 1e-3
    cw = ComplexWaveform(np.full(2**10, np.sqrt(p), complex), 100e9, 0.0)
    out = split_step_propagate([cw], cfg, n_steps=5, demux_bandwidth=50e9)[0]
    phase = np.angle(out.samples / cw.samples)
    assert np.allclose(phase, cfg.gamma * p * cfg.length, atol=1e-9)


def test_split_step_rejects_channels_near_nyquist():
    ch = _random_waveform(2**10, 100e9, offset=45e9)
    with pytest.raises(ValueError):
        split_step_propagate([ch], LinkConfig(), demux_bandwidth=20e9)


def test_fiber_fluct_common_mode_at_pump():
    cfg = LinkConfig()
    a = synth_fiber_fluct(0, cfg, 100e9, 50_000, 1e6, seed=4)
    rms = cfg.fluct.fiber_fluct_rms
    assert np.std(a.samples) == pytest.approx(rms, rel=0.5)
    # repeated call is bit-identical
    b = synth_fiber_fluct(0, cfg, 100e9, 50_000, 1e6, seed=4)
    assert np.array_equal(a.samples, b.samples)


def test_fiber_fluct_decorrelates_with_walkoff():
    cfg = LinkConfig()
    n, rate = 200_000, 1e6
    pump = synth_fiber_fluct(0, cfg, 100e9, n, rate, seed=4).samples
    near = synth_fiber_fluct(1, cfg, 100e9, n, rate, seed=4).samples
    far = synth_fiber_fluct(11, cfg, 100e9, n, rate, seed=4).samples
    c_near = np.corrcoef(pump, near)[0, 1]
    c_far = np.corrcoef(pump, far)[0, 1]
    assert c_near > 0.9
    assert c_far < c_near
    # zero dispersion: all lines identical to the pump process
    flat = LinkConfig(beta2=0.0)
    same = synth_fiber_fluct(11, flat, 100e9, n, rate, seed=4).samples
    pump_flat = synth_fiber_fluct(0, flat, 100e9, n, rate, seed=4).samples
    assert np.array_equal(same, pump_flat)


def test_power_dbm():
    w = ComplexWaveform(np.full(100, np.sqrt(1e-3), complex), 1e9)
    assert w.power_dbm == pytest.approx(0.0, abs=1e-9)
