"""Receiver DSP: IQ orthogonalization, CD compensation, equalization, FOE and
block-wise carrier phase estimation.

The CPE runs on 32-symbol blocks; with skip factor ``i`` it estimates once per
(i+1) blocks (data-aided against the known transmitted symbols of the
estimated block, as in offline processing) and holds that estimate over the
following i blocks.  Master-slave operation rescales the unwrapped estimates
of one channel by the line-index ratio and applies them to another, with a
single static offset calibrated from the slave's first estimated block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from combclone.channel import ComplexWaveform, LinkConfig, compensate_dispersion


@dataclass(frozen=True)
class DspConfig:
    cpe_block: int = 32
    skip_blocks: int = 0
    foe_mode: str = "Precalc"
    master_channel: int | None = None
    equalizer: str = "None"
    taps: int = 7

    def __post_init__(self):
        if self.cpe_block < 1:
            raise ValueError("cpe_block must be >= 1")
        if self.skip_blocks < 0:
            raise ValueError("skip_blocks must be >= 0")
        if self.foe_mode not in ("Precalc", "FourthPower", "None"):
            raise ValueError(f"unknown foe_mode {self.foe_mode!r}")
        if self.equalizer not in ("None", "LMS", "Volterra2"):
            raise ValueError(f"unknown equalizer {self.equalizer!r}")


@dataclass
class CpeTrace:
    """Block-wise phase estimates and the zero-order-hold phase applied.

    ``block_indices`` are the estimated blocks (every (i+1)-th);
    ``applied_phase`` is per symbol, piecewise constant.  ``block_duration``
    is the time per block, used to convert estimate spacing to seconds.
    """

    block_indices: np.ndarray
    phase_estimates: np.ndarray
    applied_phase: np.ndarray
    block_duration: float
    cycle_slips: int = 0

    @property
    def estimate_times(self) -> np.ndarray:
        return self.block_indices * self.block_duration


def foe_precalc(m: int, f_ref: float, locked_index: int) -> float:
    """Frequency offset of channel m fixed by the lock: m * f_ref / locked_index."""
    if locked_index == 0:
        raise ValueError("locked_index must be nonzero")
    return m * f_ref / locked_index


def foe_fourth_power(w: ComplexWaveform) -> float:
    """Fourth-power spectrum peak search with parabolic interpolation.

    Resolution before interpolation is rate/(4N); estimates are unambiguous
    only within +/- rate/8.
    """
    n = len(w)
    if n < 2**14:
        raise ValueError("need at least 2^14 samples for fourth-power FOE")
    spectrum = np.abs(np.fft.fft(w.samples**4))
    peak = int(np.argmax(spectrum))
    # 3-point parabolic interpolation around the peak bin
    y0 = spectrum[(peak - 1) % n]
    y1 = spectrum[peak]
    y2 = spectrum[(peak + 1) % n]
    denom = y0 - 2.0 * y1 + y2
    delta = 0.0 if denom == 0 else 0.5 * (y0 - y2) / denom
    freqs = np.fft.fftfreq(n, d=1.0 / w.sample_rate)
    bin_width = w.sample_rate / n
    return (freqs[peak] + delta * bin_width) / 4.0


def residual_foe_from_slope(trace: CpeTrace) -> float:
    """Residual frequency offset from the slope of the unwrapped CPE estimates."""
    if trace.phase_estimates.size < 10:
        raise ValueError("need at least 10 estimates for a slope fit")
    phase = np.unwrap(trace.phase_estimates)
    t = trace.estimate_times
    slope = np.polyfit(t, phase, 1)[0]
    return slope / (2.0 * np.pi)


def cpe_pilot_block(
    symbols: np.ndarray, pilots: np.ndarray, cfg: DspConfig, block_duration: float
) -> tuple[CpeTrace, np.ndarray]:
    """Pilot-block CPE with skip factor.

    ``pilots`` are the known transmitted symbols (full frame).  Each estimated
    block's phase is arg(sum(received * conj(pilot))); it corrects the block
    itself and the following ``skip_blocks`` blocks.
    """
    symbols = np.asarray(symbols, dtype=complex)
    pilots = np.asarray(pilots, dtype=complex)
    if pilots.size < symbols.size:
        raise ValueError("pilot frame shorter than received frame")
    blk = cfg.cpe_block
    n_blocks = symbols.size // blk
    if n_blocks == 0:
        raise ValueError("frame shorter than one CPE block")
    stride = cfg.skip_blocks + 1
    rx_blocks = symbols[: n_blocks * blk].reshape(n_blocks, blk)
    tx_blocks = pilots[: n_blocks * blk].reshape(n_blocks, blk)
    est_idx = np.arange(0, n_blocks, stride)
    corr = np.sum(rx_blocks[est_idx] * np.conj(tx_blocks[est_idx]), axis=1)
    estimates = np.angle(corr)
    slips = int(np.count_nonzero(np.abs(np.diff(estimates)) > np.pi))
    per_block = np.repeat(estimates, stride)[:n_blocks]
    applied = np.repeat(per_block, blk)
    corrected = symbols[: n_blocks * blk] * np.exp(-1j * applied)
    trace = CpeTrace(
        block_indices=est_idx,
        phase_estimates=estimates,
        applied_phase=applied,
        block_duration=block_duration,
        cycle_slips=slips,
    )
    return trace, corrected


def cpe_master_slave(
    master_trace: CpeTrace,
    m_master: int,
    m_slave: int,
    slave_symbols: np.ndarray | None = None,
    slave_pilots: np.ndarray | None = None,
    cpe_block: int = 32,
) -> CpeTrace | tuple[CpeTrace, np.ndarray]:
    """Predict a slave channel's phase from the master's CPE trace.

    The unwrapped master estimates are scaled by m_slave/m_master; when slave
    symbols and pilots are supplied, a single static offset is calibrated from
    the slave's first estimated block and the corrected symbols are returned.
    """
    if m_master == 0:
        raise ValueError("master line index must be nonzero")
    scaled = np.unwrap(master_trace.phase_estimates) * (m_slave / m_master)
    stride_blocks = int(np.diff(master_trace.block_indices)[0]) if master_trace.block_indices.size > 1 else 1
    offset = 0.0
    if slave_symbols is not None:
        if slave_pilots is None:
            raise ValueError("slave pilots required to calibrate the static offset")
        first = slave_symbols[:cpe_block] * np.conj(slave_pilots[:cpe_block])
        offset = float(np.angle(np.sum(first * np.exp(-1j * scaled[0]))))
    estimates = np.angle(np.exp(1j * (scaled + offset)))
    # rebuild the per-symbol hold on the slave's grid
    n_blocks = master_trace.block_indices[-1] + stride_blocks
    per_block = np.repeat(scaled + offset, stride_blocks)[:n_blocks]
    applied = np.repeat(per_block, cpe_block)
    trace = CpeTrace(
        block_indices=master_trace.block_indices.copy(),
        phase_estimates=estimates,
        applied_phase=applied,
        block_duration=master_trace.block_duration,
        cycle_slips=master_trace.cycle_slips,
    )
    if slave_symbols is None:
        return trace
    n = min(slave_symbols.size, applied.size)
    corrected = slave_symbols[:n] * np.exp(-1j * applied[:n])
    return trace, corrected


def gram_schmidt_iq(w: ComplexWaveform) -> ComplexWaveform:
    """IQ orthogonalization: project the I component out of Q, renormalize."""
    i = w.samples.real
    q = w.samples.imag
    p_i = np.mean(i**2)
    if p_i == 0:
        raise ValueError("zero-power I branch")
    q_orth = q - (np.mean(i * q) / p_i) * i
    p_q = np.mean(q_orth**2)
    if p_q == 0:
        raise ValueError("degenerate Q branch")
    scale = np.sqrt(p_i / p_q)
    return ComplexWaveform(i + 1j * q_orth * scale, w.sample_rate, w.center_offset)


def cd_compensate(
    w: ComplexWaveform, cfg: LinkConfig, line_offset_hz: float = 0.0
) -> ComplexWaveform:
    """Conjugate of the link dispersion operator."""
    return compensate_dispersion(w, cfg, line_offset_hz)


class EqualizerDiverged(RuntimeError):
    pass


def _volterra_features(window: np.ndarray) -> np.ndarray:
    return np.concatenate([window, np.abs(window) ** 2 * window])


def equalize(
    symbols: np.ndarray,
    pilots: np.ndarray,
    cfg: DspConfig,
    step_size: float = 1e-3,
) -> np.ndarray:
    """Pilot-trained LMS FIR equalizer, optionally with a |x|^2*x kernel.

    Trains over the pilot span, then filters the whole frame with the
    converged taps.  Aborts if the smoothed error grows by more than 10x.
    """
    if cfg.equalizer == "None":
        return np.asarray(symbols, dtype=complex)
    if cfg.taps % 2 == 0:
        raise ValueError("taps must be odd")
    symbols = np.asarray(symbols, dtype=complex)
    pilots = np.asarray(pilots, dtype=complex)
    taps = cfg.taps
    half = taps // 2
    nonlinear = cfg.equalizer == "Volterra2"
    n_weights = 2 * taps if nonlinear else taps
    w = np.zeros(n_weights, dtype=complex)
    w[half] = 1.0
    padded = np.concatenate([np.zeros(half, complex), symbols, np.zeros(half, complex)])
    n_train = min(pilots.size, symbols.size)
    err_smooth = None
    err_start = None
    for k in range(n_train):
        window = padded[k : k + taps][::-1]
        x = _volterra_features(window) if nonlinear else window
        y = np.dot(w, x)
        e = pilots[k] - y
        w = w + step_size * e * np.conj(x)
        mag = abs(e) ** 2
        err_smooth = mag if err_smooth is None else 0.99 * err_smooth + 0.01 * mag
        if k == 200:
            err_start = err_smooth
        if err_start is not None and err_smooth > 10.0 * err_start:
            raise EqualizerDiverged(
                f"LMS error grew from {err_start:.3e} to {err_smooth:.3e} at symbol {k}"
            )
    out = np.empty_like(symbols)
    for k in range(symbols.size):
        window = padded[k : k + taps][::-1]
        x = _volterra_features(window) if nonlinear else window
        out[k] = np.dot(w, x)
    return out
