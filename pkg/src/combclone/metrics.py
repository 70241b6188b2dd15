"""Quantitative observables: BER/EVM/SNR, PSD and linewidth, Allan deviation,
CPE-operation accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import welch
from scipy.special import erfc

from combclone.channel import ComplexWaveform
from combclone.dsp import DspConfig


@dataclass
class ChannelMetrics:
    channel: int
    ber: float
    bit_errors: int
    bit_count: int
    snr_db: float
    evm_pct: float
    foe_error_hz: float = float("nan")
    cpe_ops: int = 0
    cycle_slips: int = 0


@dataclass
class BeatNoteMetrics:
    m: int
    fwhm_hz: float
    resolution_limited: bool
    rbw_hz: float
    plateau_psd: float = float("nan")


@dataclass
class MetricsReport:
    per_channel: dict[int, ChannelMetrics] = field(default_factory=dict)
    beat_notes: list[BeatNoteMetrics] = field(default_factory=list)
    allan_gate_times: np.ndarray | None = None
    allan_deviations: dict[str, np.ndarray] = field(default_factory=dict)


def ber(tx_bits: np.ndarray, rx_bits: np.ndarray) -> tuple[float, int, int]:
    """Bit error ratio with the raw counts."""
    tx_bits = np.asarray(tx_bits).ravel()
    rx_bits = np.asarray(rx_bits).ravel()
    if tx_bits.size != rx_bits.size:
        raise ValueError("bit arrays must have equal length")
    errors = int(np.count_nonzero(tx_bits != rx_bits))
    return errors / tx_bits.size, errors, tx_bits.size


def qam16_ber_theory(snr_db: float) -> float:
    """Closed-form Gray 16-QAM bit error ratio over AWGN (SNR = Es/N0)."""
    s = 10.0 ** (snr_db / 10.0)
    arg = math.sqrt(s / 10.0)
    return float(
        (3.0 / 8.0) * erfc(arg)
        + (2.0 / 8.0) * erfc(3.0 * arg)
        - (1.0 / 8.0) * erfc(5.0 * arg)
    )


def evm_percent(rx_symbols: np.ndarray, ref_symbols: np.ndarray) -> float:
    """RMS error vector magnitude relative to the reference RMS power."""
    rx_symbols = np.asarray(rx_symbols, dtype=complex)
    ref_symbols = np.asarray(ref_symbols, dtype=complex)
    err = np.mean(np.abs(rx_symbols - ref_symbols) ** 2)
    ref = np.mean(np.abs(ref_symbols) ** 2)
    return float(100.0 * np.sqrt(err / ref))


def snr_from_evm(evm_pct: float) -> float:
    return float(-20.0 * np.log10(evm_pct / 100.0))


def psd_welch(w: ComplexWaveform, rbw: float) -> tuple[np.ndarray, np.ndarray]:
    """Welch PSD of a complex waveform at the requested resolution bandwidth.

    Returns (frequencies ascending, one-sided-density PSD in power/Hz);
    Parseval: the integral over frequency equals the mean power within ~1%.
    """
    n = len(w)
    if rbw < w.sample_rate / n:
        raise ValueError("record too short for the requested resolution bandwidth")
    nperseg = min(n, int(round(w.sample_rate / rbw)))
    freqs, psd = welch(
        w.samples,
        fs=w.sample_rate,
        nperseg=nperseg,
        return_onesided=False,
        detrend=False,
        window="hann",
    )
    order = np.argsort(freqs)
    return freqs[order], psd[order]


def fwhm(freqs: np.ndarray, psd: np.ndarray) -> tuple[float, bool]:
    """-3 dB full width of the PSD peak, linear interpolation between bins.

    Returns (width, resolution_limited); the read is flagged as resolution
    limited when the width is within two bins of the grid spacing.
    """
    peak = int(np.argmax(psd))
    half = psd[peak] / 2.0
    df = float(np.mean(np.diff(freqs)))

    def crossing(idx_range, direction):
        prev = peak
        for idx in idx_range:
            if psd[idx] < half:
                f1, f2 = freqs[prev], freqs[idx]
                p1, p2 = psd[prev], psd[idx]
                return f1 + (half - p1) * (f2 - f1) / (p2 - p1)
            prev = idx
        return freqs[idx_range[-1]] if len(idx_range) else freqs[peak]

    left = crossing(range(peak - 1, -1, -1), -1)
    right = crossing(range(peak + 1, len(psd)), +1)
    width = float(right - left)
    return width, width <= 2.0 * df


def plateau_level(
    freqs: np.ndarray, psd: np.ndarray, band: tuple[float, float]
) -> float:
    """Median PSD over |f| within the given band (both sidebands)."""
    mask = (np.abs(freqs) >= band[0]) & (np.abs(freqs) <= band[1])
    if not np.any(mask):
        raise ValueError("no PSD bins inside the plateau band")
    return float(np.median(psd[mask]))


def allan_deviation(
    freq_series: np.ndarray, tau0: float, gate_times: np.ndarray
) -> np.ndarray:
    """Overlapping Allan deviation of a frequency series (Hz).

    ``freq_series`` are consecutive gate-time averages at base gate ``tau0``.
    For gate m*tau0 the estimator is
    sigma^2(tau) = mean_j (ybar_{j+m} - ybar_j)^2 / 2 over all overlapping
    windows, with ybar the m-sample moving average.
    """
    y = np.asarray(freq_series, dtype=float)
    out = np.empty(len(gate_times))
    csum = np.concatenate([[0.0], np.cumsum(y)])
    for k, tau in enumerate(gate_times):
        m = int(round(tau / tau0))
        if m < 1 or y.size < 2 * m:
            raise ValueError(f"series too short for gate time {tau}")
        ybar = (csum[m:] - csum[:-m]) / m
        diffs = ybar[m:] - ybar[:-m]
        out[k] = np.sqrt(0.5 * np.mean(diffs**2))
    return out


def cpe_op_count(cfg: DspConfig, frame_length: int, channels: list[int]) -> int:
    """Total CPE operations for a frame across channels.

    One estimate per skip interval per estimated channel (every block when the
    skip factor is 0); with a master channel configured only the master is
    estimated.
    """
    blocks = frame_length // cfg.cpe_block
    divisor = max(cfg.skip_blocks, 1)
    per_channel = math.ceil(blocks / divisor)
    if cfg.master_channel is not None:
        return per_channel
    return per_channel * len(channels)
