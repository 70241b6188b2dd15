"""16-QAM modulation of comb lines and ideal coherent mixing.

Gray mapping (documented, fixed): each axis encodes two bits as
00 -> +1, 01 -> +3, 10 -> -1, 11 -> -3 (levels before the 1/sqrt(10)
normalization); the first two bits of a nibble drive I, the last two Q, so
0000 maps to (+1+1j)/sqrt(10).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from combclone.comb import PhaseTrajectory, stream_rng
from combclone.channel import ComplexWaveform

# per-axis Gray code: index by (bit_a, bit_b) packed as bit_a*2 + bit_b
_GRAY_LEVELS = np.array([1.0, 3.0, -1.0, -3.0]) / np.sqrt(10.0)
# inverse: level rank (-3,-1,+1,+3) -> bit pair
_RANK_TO_BITS = {-3: (1, 1), -1: (1, 0), 1: (0, 0), 3: (0, 1)}
_LEVELS = np.array([-3.0, -1.0, 1.0, 3.0]) / np.sqrt(10.0)


@dataclass(frozen=True)
class ModulationConfig:
    baud: float = 12.5e9
    format: str = "QAM16"
    pulse_shape: str = "Rectangle"
    samples_per_symbol: int = 4
    frame_length: int = 400_000
    pilot_block: int = 32

    def __post_init__(self):
        if self.format != "QAM16":
            raise ValueError("only QAM16 is implemented")
        if self.pulse_shape != "Rectangle":
            raise ValueError("only rectangle pulse shaping is implemented")
        if self.samples_per_symbol < 2:
            raise ValueError("samples_per_symbol must be >= 2")
        if self.pilot_block < 1:
            raise ValueError("pilot_block must be >= 1")
        if self.frame_length % self.pilot_block != 0:
            raise ValueError("frame_length must be divisible by pilot_block")

    @property
    def sample_rate(self) -> float:
        return self.baud * self.samples_per_symbol


@dataclass
class SymbolFrame:
    """Gray-mapped 16-QAM symbols with the bits that produced them."""

    symbols: np.ndarray
    bits: np.ndarray
    channel_index: int = 0

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=complex)
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.size != 4 * self.symbols.size:
            raise ValueError("bits length must be 4x symbol count")

    def save(self, path):
        np.savez(path, symbols=self.symbols, bits=self.bits, channel_index=self.channel_index)

    @classmethod
    def load(cls, path) -> "SymbolFrame":
        data = np.load(path)
        return cls(data["symbols"], data["bits"], int(data["channel_index"]))


def qam16_mod(bits: np.ndarray, channel_index: int = 0) -> SymbolFrame:
    """Map a bit array (length multiple of 4) to Gray 16-QAM symbols."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if bits.size == 0:
        raise ValueError("empty bit array")
    if bits.size % 4 != 0:
        raise ValueError("bit count must be a multiple of 4")
    nib = bits.reshape(-1, 4)
    i_idx = nib[:, 0] * 2 + nib[:, 1]
    q_idx = nib[:, 2] * 2 + nib[:, 3]
    symbols = _GRAY_LEVELS[i_idx] + 1j * _GRAY_LEVELS[q_idx]
    return SymbolFrame(symbols, bits, channel_index)


def _slice_axis(values: np.ndarray) -> np.ndarray:
    """Nearest normalized PAM level; exact midpoints round toward -."""
    scaled = values * np.sqrt(10.0)
    ranks = np.full(values.shape, 3.0)
    ranks[scaled <= 2.0] = 1.0
    ranks[scaled <= 0.0] = -1.0
    ranks[scaled <= -2.0] = -3.0
    return ranks


def qam16_demap(symbols: np.ndarray) -> np.ndarray:
    """Minimum-distance demapping back to bits."""
    symbols = np.asarray(symbols, dtype=complex).ravel()
    if symbols.size == 0:
        raise ValueError("empty symbol array")
    bits = np.empty((symbols.size, 4), dtype=np.uint8)
    for col, axis in ((0, symbols.real), (2, symbols.imag)):
        ranks = _slice_axis(axis)
        for rank, (a, b) in _RANK_TO_BITS.items():
            mask = ranks == rank
            bits[mask, col] = a
            bits[mask, col + 1] = b
    return bits.ravel()


def random_frame(
    n_symbols: int, seed: int, channel_index: int = 0, stream: str = "data-bits"
) -> SymbolFrame:
    rng = stream_rng(seed, stream, channel_index)
    bits = rng.integers(0, 2, size=4 * n_symbols, dtype=np.uint8)
    return qam16_mod(bits, channel_index)


def modulate_line(
    frame: SymbolFrame, cfg: ModulationConfig, carrier_phase: PhaseTrajectory | None = None
) -> ComplexWaveform:
    """Rectangle-shaped baseband symbols on a carrier phase trajectory."""
    sps = cfg.samples_per_symbol
    rate = cfg.sample_rate
    samples = np.repeat(frame.symbols, sps).astype(complex)
    if carrier_phase is not None:
        if carrier_phase.sample_rate != rate or len(carrier_phase) != samples.size:
            raise ValueError("carrier phase must be sampled at the waveform rate")
        samples = samples * np.exp(1j * carrier_phase.samples)
    return ComplexWaveform(samples, rate)


def coherent_mix(
    signal: ComplexWaveform, lo_phase: PhaseTrajectory | None = None, lo_offset: float = 0.0
) -> ComplexWaveform:
    """Ideal homodyne/intradyne downconversion against an LO line."""
    samples = signal.samples
    t = signal.times
    rotation = 2.0 * np.pi * lo_offset * t
    if lo_phase is not None:
        if lo_phase.sample_rate != signal.sample_rate or len(lo_phase) != len(signal):
            raise ValueError("LO phase must be sampled at the signal rate")
        rotation = rotation + lo_phase.samples
    return ComplexWaveform(
        samples * np.exp(-1j * rotation),
        signal.sample_rate,
        signal.center_offset - lo_offset,
    )


def add_iq_imbalance(
    w: ComplexWaveform, amp_imbalance_db: float, phase_skew: float
) -> ComplexWaveform:
    """Inject transmitter-style IQ imbalance.

    I passes unchanged; Q is scaled by the amplitude imbalance and rotated
    into I by the skew: Q' = g*(sin(skew)*I + cos(skew)*Q).
    """
    if not (np.isfinite(amp_imbalance_db) and np.isfinite(phase_skew)):
        raise ValueError("imbalance parameters must be finite")
    g = 10.0 ** (amp_imbalance_db / 20.0)
    i = w.samples.real
    q = g * (np.sin(phase_skew) * w.samples.real + np.cos(phase_skew) * w.samples.imag)
    return ComplexWaveform(i + 1j * q, w.sample_rate, w.center_offset)


def matched_filter(w: ComplexWaveform, cfg: ModulationConfig) -> np.ndarray:
    """Block average over each symbol (matched to the rectangle pulse)."""
    sps = cfg.samples_per_symbol
    n_sym = len(w) // sps
    return w.samples[: n_sym * sps].reshape(n_sym, sps).mean(axis=1)
