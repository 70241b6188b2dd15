"""BER/EVM identities, PSD/linewidth reads, Allan deviation, CPE-op accounting."""

import numpy as np
import pytest

from combclone.channel import ComplexWaveform, add_noise
from combclone.comb import stream_rng, synth_wiener_phase
from combclone.dsp import DspConfig
from combclone.metrics import (
    allan_deviation,
    ber,
    cpe_op_count,
    evm_percent,
    fwhm,
    plateau_level,
    psd_welch,
    qam16_ber_theory,
    snr_from_evm,
)
from combclone.txrx import qam16_demap, random_frame


def test_ber_identities():
    tx = np.zeros(10_000, dtype=np.uint8)
    rx = tx.copy()
    rx[:38] = 1
    rate, errors, count = ber(tx, rx)
    assert (rate, errors, count) == (3.8e-3, 38, 10_000)
    assert ber(tx, tx)[0] == 0.0
    with pytest.raises(ValueError):
        ber(tx, tx[:-1])


def test_qam16_theory_matches_monte_carlo():
    snr_db = 12.0
    frame = random_frame(400_000, seed=0)
    w = ComplexWaveform(frame.symbols, 1e9)
    noisy = add_noise(w, snr_db=snr_db, seed=1)
    measured = ber(frame.bits, qam16_demap(noisy.samples))[0]
    assert measured == pytest.approx(qam16_ber_theory(snr_db), rel=0.1)


def test_qam16_theory_limits():
    assert qam16_ber_theory(60.0) < 1e-12
    assert 0.3 < qam16_ber_theory(-20.0) < 0.5


def test_evm_snr_consistency():
    rng = np.random.default_rng(2)
    ref = (rng.standard_normal(100_000) + 1j * rng.standard_normal(100_000)) / np.sqrt(2)
    noise = (rng.standard_normal(100_000) + 1j * rng.standard_normal(100_000)) / np.sqrt(2)
    snr = 100.0  # linear
    rx = ref + noise / np.sqrt(snr)
    evm = evm_percent(rx, ref)
    assert evm == pytest.approx(100.0 / np.sqrt(snr), rel=0.02)
    assert snr_from_evm(evm) == pytest.approx(10 * np.log10(snr), abs=0.1)


def test_psd_welch_parseval():
    rng = np.random.default_rng(3)
    n = 2**16
    w = ComplexWaveform(rng.standard_normal(n) + 1j * rng.standard_normal(n), 1e6)
    freqs, psd = psd_welch(w, rbw=100.0)
    df = np.mean(np.diff(freqs))
    assert np.sum(psd) * df == pytest.approx(w.power, rel=0.01)
    with pytest.raises(ValueError):
        psd_welch(w, rbw=1e-3)


def test_fwhm_pure_tone_is_resolution_limited():
    rate, n = 1e6, 2**18
    t = np.arange(n) / rate
    w = ComplexWaveform(np.exp(2j * np.pi * 1e4 * t), rate)
    freqs, psd = psd_welch(w, rbw=10.0)
    width, limited = fwhm(freqs, psd)
    assert limited
    assert width < 30.0


def test_fwhm_lorentzian_linewidth():
    # phase random walk with 3 kHz Lorentzian linewidth
    rate, n = 1e7, 2**22
    lw = 3e3
    phi = synth_wiener_phase(lw, n, rate, seed=4)
    w = ComplexWaveform(np.exp(1j * phi.samples), rate)
    freqs, psd = psd_welch(w, rbw=200.0)
    width, limited = fwhm(freqs, psd)
    assert not limited
    assert width == pytest.approx(lw, rel=0.25)


def test_plateau_level_median_and_band_check():
    freqs = np.linspace(-1e5, 1e5, 2001)
    psd = np.ones_like(freqs)
    psd[np.abs(freqs) > 5e4] = 100.0
    assert plateau_level(freqs, psd, (1e4, 4e4)) == 1.0
    with pytest.raises(ValueError):
        plateau_level(freqs, psd, (2e5, 3e5))


def test_allan_constant_series_is_zero():
    y = np.full(10_000, 42.0)
    taus = np.array([1e-3, 1e-2])
    assert np.allclose(allan_deviation(y, 1e-3, taus), 0.0)


def test_allan_white_fm_slope():
    # white frequency noise: sigma(tau) = sigma_y(tau0) * sqrt(tau0/tau)
    rng = stream_rng(5, "allan-test")
    tau0 = 1e-3
    y = rng.standard_normal(2_000_000)
    taus = tau0 * np.array([1, 10, 100])
    dev = allan_deviation(y, tau0, taus)
    assert dev[0] == pytest.approx(1.0, rel=0.05)
    assert dev[1] == pytest.approx(1.0 / np.sqrt(10), rel=0.1)
    assert dev[2] == pytest.approx(0.1, rel=0.1)


def test_allan_linear_drift():
    # pure drift d (Hz/s): sigma(tau) = d * tau / sqrt(2)
    tau0 = 1e-2
    d = 7.0
    y = d * tau0 * np.arange(100_000)
    taus = tau0 * np.array([1, 10, 100])
    dev = allan_deviation(y, tau0, taus)
    assert np.allclose(dev, d * taus / np.sqrt(2.0), rtol=1e-6)
    # constant frequency offsets do not contribute
    assert np.allclose(allan_deviation(y + 1e6, tau0, taus), dev, rtol=1e-6)


def test_allan_rejects_short_series():
    with pytest.raises(ValueError):
        allan_deviation(np.ones(10), 1.0, np.array([10.0]))


def test_cpe_op_count_reference_points():
    channels = list(range(1, 11))
    # one estimate per block, ten channels
    every = DspConfig(cpe_block=32, skip_blocks=0)
    assert cpe_op_count(every, 400_000, channels) == 12_500 * 10
    assert cpe_op_count(every, 400_000, [7]) == 12_500
    # skip factor 1000: 13 estimates per frame
    sparse = DspConfig(cpe_block=32, skip_blocks=1000)
    assert cpe_op_count(sparse, 400_000, [7]) == 13
    # master-slave: only the master is estimated regardless of channel count
    ms = DspConfig(cpe_block=32, skip_blocks=1000, master_channel=10)
    assert cpe_op_count(ms, 400_000, channels) == 13


def test_cpe_op_count_covers_all_blocks():
    # the ops always tile the frame: ops*interval >= blocks > (ops-1)*interval
    for skip in (0, 1, 3, 999, 1000, 12_499, 50_000):
        cfg = DspConfig(cpe_block=32, skip_blocks=skip)
        ops = cpe_op_count(cfg, 400_000, [1])
        interval = max(skip, 1)
        blocks = 400_000 // 32
        assert ops * interval >= blocks > (ops - 1) * interval
