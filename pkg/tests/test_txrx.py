"""Gray 16-QAM mapping, line modulation, and coherent mixing."""

import numpy as np
import pytest

from combclone.channel import ComplexWaveform
from combclone.comb import PhaseTrajectory
from combclone.txrx import (
    ModulationConfig,
    SymbolFrame,
    add_iq_imbalance,
    coherent_mix,
    matched_filter,
    modulate_line,
    qam16_demap,
    qam16_mod,
    random_frame,
)


def test_mod_demap_round_trip():
    rng = np.random.default_rng(0)
    bits = rng.integers(0, 2, size=4 * 10_000, dtype=np.uint8)
    frame = qam16_mod(bits)
    assert np.array_equal(qam16_demap(frame.symbols), bits)
    # unit average symbol energy
    assert np.mean(np.abs(frame.symbols) ** 2) == pytest.approx(1.0, rel=0.02)


def test_mod_fixed_mapping():
    # documented anchor: 0000 -> (+1+1j)/sqrt(10)
    frame = qam16_mod(np.zeros(4, dtype=np.uint8))
    assert frame.symbols[0] == pytest.approx((1 + 1j) / np.sqrt(10))
    frame = qam16_mod(np.array([1, 1, 1, 1], dtype=np.uint8))
    assert frame.symbols[0] == pytest.approx((-3 - 3j) / np.sqrt(10))


def test_mapping_is_gray():
    # adjacent constellation points along either axis differ by exactly one bit
    levels = np.array([-3, -1, 1, 3]) / np.sqrt(10.0)
    bits_of = {}
    for a in range(2):
        for b in range(2):
            for c in range(2):
                for d in range(2):
                    nib = np.array([a, b, c, d], dtype=np.uint8)
                    sym = qam16_mod(nib).symbols[0]
                    bits_of[(round(sym.real, 6), round(sym.imag, 6))] = nib
    for i in range(3):
        for q_level in levels:
            k1 = (round(levels[i], 6), round(q_level, 6))
            k2 = (round(levels[i + 1], 6), round(q_level, 6))
            assert np.sum(bits_of[k1] != bits_of[k2]) == 1
            k1t = (round(q_level, 6), round(levels[i], 6))
            k2t = (round(q_level, 6), round(levels[i + 1], 6))
            assert np.sum(bits_of[k1t] != bits_of[k2t]) == 1


def test_mod_input_validation():
    with pytest.raises(ValueError):
        qam16_mod(np.array([], dtype=np.uint8))
    with pytest.raises(ValueError):
        qam16_mod(np.array([0, 1, 0], dtype=np.uint8))
    with pytest.raises(ValueError):
        qam16_demap(np.array([], dtype=complex))


def test_modulation_config_validation():
    with pytest.raises(ValueError):
        ModulationConfig(format="QPSK")
    with pytest.raises(ValueError):
        ModulationConfig(pulse_shape="RRC")
    with pytest.raises(ValueError):
        ModulationConfig(frame_length=100, pilot_block=32)
    cfg = ModulationConfig(baud=12.5e9, samples_per_symbol=4)
    assert cfg.sample_rate == 50e9


def test_random_frame_deterministic_per_channel():
    a = random_frame(256, seed=1, channel_index=3)
    b = random_frame(256, seed=1, channel_index=3)
    c = random_frame(256, seed=1, channel_index=4)
    assert np.array_equal(a.bits, b.bits)
    assert not np.array_equal(a.bits, c.bits)


def test_modulate_matched_filter_round_trip():
    cfg = ModulationConfig(frame_length=512, pilot_block=32)
    frame = random_frame(512, seed=2)
    wave = modulate_line(frame, cfg)
    assert wave.sample_rate == cfg.sample_rate
    back = matched_filter(wave, cfg)
    assert np.allclose(back, frame.symbols)


def test_modulate_applies_carrier_phase():
    cfg = ModulationConfig(frame_length=64, pilot_block=32)
    frame = random_frame(64, seed=0)
    n = 64 * cfg.samples_per_symbol
    phase = PhaseTrajectory(np.full(n, 0.7), cfg.sample_rate)
    wave = modulate_line(frame, cfg, phase)
    plain = modulate_line(frame, cfg)
    assert np.allclose(wave.samples, plain.samples * np.exp(1j * 0.7))
    with pytest.raises(ValueError):
        modulate_line(frame, cfg, PhaseTrajectory(np.zeros(n - 1), cfg.sample_rate))


def test_coherent_mix_removes_lo_terms():
    cfg = ModulationConfig(frame_length=256, pilot_block=32)
    frame = random_frame(256, seed=4)
    n = 256 * cfg.samples_per_symbol
    phase = PhaseTrajectory(0.3 * np.sin(np.arange(n)), cfg.sample_rate)
    wave = modulate_line(frame, cfg, phase)
    # mixing with the exact carrier phase and offset recovers the baseband
    shifted = ComplexWaveform(
        wave.samples * np.exp(2j * np.pi * 1e9 * wave.times),
        wave.sample_rate,
        1e9,
    )
    mixed = coherent_mix(shifted, lo_phase=phase, lo_offset=1e9)
    assert mixed.center_offset == 0.0
    assert np.allclose(matched_filter(mixed, cfg), frame.symbols, atol=1e-9)


def test_iq_imbalance_and_validation():
    w = ComplexWaveform(np.array([1 + 1j, 1 - 1j]), 1e9)
    out = add_iq_imbalance(w, amp_imbalance_db=0.0, phase_skew=0.0)
    assert np.allclose(out.samples, w.samples)
    skewed = add_iq_imbalance(w, amp_imbalance_db=1.0, phase_skew=0.1)
    g = 10 ** (1.0 / 20.0)
    expect_q = g * (np.sin(0.1) * w.samples.real + np.cos(0.1) * w.samples.imag)
    assert np.allclose(skewed.samples.imag, expect_q)
    assert np.allclose(skewed.samples.real, w.samples.real)
    with pytest.raises(ValueError):
        add_iq_imbalance(w, np.nan, 0.0)


def test_symbol_frame_save_load(tmp_path):
    frame = random_frame(128, seed=7, channel_index=5)
    path = tmp_path / "frame.npz"
    frame.save(path)
    loaded = SymbolFrame.load(path)
    assert np.array_equal(loaded.symbols, frame.symbols)
    assert np.array_equal(loaded.bits, frame.bits)
    assert loaded.channel_index == 5


def test_symbol_frame_validation():
    with pytest.raises(ValueError):
        SymbolFrame(np.zeros(4, complex), np.zeros(3, np.uint8))
