"""50 km single-mode-fiber link model.

Two modes of operation: a fast per-line analytic mode (all-pass dispersion,
loss, slow fiber-fluctuation phase per line) used for all FOE/CPE studies, and
a full-field symmetric split-step mode used only for the cross-phase-modulation
study.  Fiber-fluctuation phase is mostly common to all lines; dispersion
walk-off decorrelates it slightly, which is what leaves the residual close-in
noise on the locked beat notes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from combclone.comb import PhaseNoiseParams, PhaseTrajectory, stream_rng, zero_phase


@dataclass
class ComplexWaveform:
    """Uniformly sampled complex baseband signal (sqrt(W) units).

    ``center_offset`` is the carrier offset in Hz relative to a stated
    absolute reference frequency.
    """

    samples: np.ndarray
    sample_rate: float
    center_offset: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.samples.size == 0:
            raise ValueError("waveform must contain at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform samples must be finite")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate

    @property
    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))

    @property
    def power_dbm(self) -> float:
        return 10.0 * np.log10(self.power / 1e-3)


@dataclass(frozen=True)
class LinkConfig:
    """Fiber span parameters plus noise loading and fluctuation statistics.

    ``fluct_floor_psd`` is the white phase background (rad^2/Hz, per line,
    band-limited to ``fluct_floor_bandwidth``) that survives on each line
    after transmission; together with the decorrelation scale it is a
    calibrated quantity, not a first-principles one.
    """

    length: float = 50e3
    beta2: float = -21.7e-27
    gamma: float = 1.3e-3
    alpha_db_per_km: float = 0.2
    osnr_db: float | None = 18.0
    osnr_ref_bandwidth: float | None = None
    launch_power_dbm: float = -10.0
    fluct: PhaseNoiseParams = field(default_factory=PhaseNoiseParams)
    fluct_floor_psd: float = 6.7e-11
    fluct_floor_bandwidth: float = 500e3
    fluct_decorr_scale: float = 1.0e4

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("length must be non-negative")
        if self.alpha_db_per_km < 0:
            raise ValueError("alpha must be non-negative")

    @property
    def loss_db(self) -> float:
        return self.alpha_db_per_km * self.length / 1e3

    @property
    def alpha_per_m(self) -> float:
        # field attenuation coefficient, |A| ~ exp(-alpha/2 * z)
        return self.alpha_db_per_km / 1e3 * np.log(10.0) / 10.0


def walkoff_delay(cfg: LinkConfig, m: int, mode_spacing: float) -> float:
    """Group delay of line m relative to the pump after the span (s)."""
    return cfg.beta2 * cfg.length * 2.0 * np.pi * m * mode_spacing


def _dispersion_transfer(
    n: int, rate: float, cfg: LinkConfig, offset_hz: float, sign: float = 1.0
) -> np.ndarray:
    omega = 2.0 * np.pi * (np.fft.fftfreq(n, d=1.0 / rate) + offset_hz)
    return np.exp(1j * sign * 0.5 * cfg.beta2 * cfg.length * omega**2)


def apply_dispersion(
    w: ComplexWaveform, cfg: LinkConfig, line_offset_hz: float = 0.0
) -> ComplexWaveform:
    """All-pass frequency-domain dispersion of one channel.

    ``line_offset_hz`` is the channel's offset from the dispersion reference
    (the pump), so the per-line group delay beta2*L*2*pi*offset is included.
    """
    h = _dispersion_transfer(len(w), w.sample_rate, cfg, line_offset_hz)
    out = np.fft.ifft(np.fft.fft(w.samples) * h)
    return ComplexWaveform(out, w.sample_rate, w.center_offset)


def compensate_dispersion(
    w: ComplexWaveform, cfg: LinkConfig, line_offset_hz: float = 0.0
) -> ComplexWaveform:
    """Exact inverse of :func:`apply_dispersion` (conjugate all-pass)."""
    h = _dispersion_transfer(len(w), w.sample_rate, cfg, line_offset_hz, sign=-1.0)
    out = np.fft.ifft(np.fft.fft(w.samples) * h)
    return ComplexWaveform(out, w.sample_rate, w.center_offset)


def _lowpass_noise(
    rms: float, corner: float, n: int, rate: float, rng: np.random.Generator
) -> np.ndarray:
    """Unit-rate white noise through a one-pole low pass, normalized to rms."""
    if rms == 0 or corner == 0:
        return np.zeros(n)
    rho = np.exp(-2.0 * np.pi * corner / rate)
    white = rng.standard_normal(n)
    # one-pole low pass y_k = rho*y_{k-1} + (1-rho)*x_k; stationary std for
    # unit-variance white input:
    std = np.sqrt((1.0 - rho) / (1.0 + rho))
    y0 = rng.standard_normal() * std
    y, _ = lfilter([1.0 - rho], [1.0, -rho], white, zi=np.array([rho * y0]))
    return rms * y / std


def _floor_noise(
    psd: float, bandwidth: float, n: int, rate: float, rng: np.random.Generator
) -> np.ndarray:
    """Band-limited white phase floor with in-band PSD ``psd`` (rad^2/Hz)."""
    if psd == 0:
        return np.zeros(n)
    bw = min(bandwidth, 0.49 * rate)
    white = rng.standard_normal(n) * np.sqrt(psd * rate / 2.0)
    if bw >= 0.49 * rate:
        return white
    rho = np.exp(-2.0 * np.pi * bw / rate)
    # one-pole low pass with unity DC gain keeps the in-band PSD at `psd`
    y, _ = lfilter([1.0 - rho], [1.0, -rho], white, zi=np.array([0.0]))
    return y


def synth_fiber_fluct(
    m: int,
    cfg: LinkConfig,
    mode_spacing: float,
    n: int,
    rate: float,
    seed: int,
) -> PhaseTrajectory:
    """Fiber-fluctuation phase of line m after the span.

    A common low-pass process shared by all lines, plus a per-line decorrelated
    low-pass component whose weight grows with dispersion walk-off, plus a
    small band-limited white floor (also gated by walk-off).  With zero
    walk-off every line sees the identical common process.
    """
    params = cfg.fluct
    if params.fiber_fluct_corner >= rate / 2:
        raise ValueError("fiber_fluct_corner must be below the Nyquist rate")
    common_rng = stream_rng(seed, "fiber-fluct-common")
    common = _lowpass_noise(params.fiber_fluct_rms, params.fiber_fluct_corner, n, rate, common_rng)
    delay = walkoff_delay(cfg, m, mode_spacing)
    if delay == 0.0:
        return PhaseTrajectory(common, rate)
    eps = min(1.0, abs(delay) * params.fiber_fluct_corner * cfg.fluct_decorr_scale)
    line_rng = stream_rng(seed, "fiber-fluct-line", m)
    decorr = _lowpass_noise(params.fiber_fluct_rms, params.fiber_fluct_corner, n, rate, line_rng)
    floor_rng = stream_rng(seed, "fiber-fluct-floor", m)
    floor_gate = min(1.0, abs(delay) / 1e-12)
    floor = floor_gate * _floor_noise(cfg.fluct_floor_psd, cfg.fluct_floor_bandwidth, n, rate, floor_rng)
    phase = np.sqrt(1.0 - eps**2) * common + eps * decorr + floor
    return PhaseTrajectory(phase, rate)


def add_noise(
    w: ComplexWaveform,
    *,
    osnr_db: float | None = None,
    ref_bandwidth: float | None = None,
    snr_db: float | None = None,
    signal_bandwidth: float | None = None,
    psd: float | None = None,
    seed: int = 0,
    stream: str = "ase",
) -> ComplexWaveform:
    """Load circular complex Gaussian noise onto a waveform.

    Exactly one of ``osnr_db`` (in ``ref_bandwidth``, default the sample
    rate), ``snr_db`` (in ``signal_bandwidth``, default the sample rate) or a
    raw one-sided ``psd`` (W/Hz) must be given.
    """
    specified = [x is not None for x in (osnr_db, snr_db, psd)]
    if sum(specified) != 1:
        raise ValueError("specify exactly one of osnr_db, snr_db, psd")
    rate = w.sample_rate
    if psd is not None:
        if psd < 0:
            raise ValueError("psd must be non-negative")
        noise_power = psd * rate
    else:
        target = osnr_db if osnr_db is not None else snr_db
        if not np.isfinite(target):
            return ComplexWaveform(w.samples.copy(), rate, w.center_offset)
        bw = ref_bandwidth if osnr_db is not None else signal_bandwidth
        bw = bw if bw is not None else rate
        if bw <= 0:
            raise ValueError("reference bandwidth must be positive")
        noise_in_band = w.power / 10.0 ** (target / 10.0)
        noise_power = noise_in_band * rate / bw
    if noise_power == 0:
        return ComplexWaveform(w.samples.copy(), rate, w.center_offset)
    rng = stream_rng(seed, stream)
    noise = np.sqrt(noise_power / 2.0) * (
        rng.standard_normal(len(w)) + 1j * rng.standard_normal(len(w))
    )
    return ComplexWaveform(w.samples + noise, rate, w.center_offset)


def multiplex(channels: list[ComplexWaveform]) -> ComplexWaveform:
    """Sum channels onto a shared grid at their center offsets."""
    if not channels:
        raise ValueError("no channels to multiplex")
    rate = channels[0].sample_rate
    n = len(channels[0])
    t = np.arange(n) / rate
    field_sum = np.zeros(n, dtype=complex)
    for ch in channels:
        if ch.sample_rate != rate or len(ch) != n:
            raise ValueError("channels must share the sample grid")
        field_sum += ch.samples * np.exp(2j * np.pi * ch.center_offset * t)
    return ComplexWaveform(field_sum, rate, 0.0)


def demultiplex(
    w: ComplexWaveform, offsets: list[float], bandwidth: float
) -> list[ComplexWaveform]:
    """Brick-wall extraction of channels at the given offsets."""
    n = len(w)
    spectrum = np.fft.fft(w.samples)
    freqs = np.fft.fftfreq(n, d=1.0 / w.sample_rate)
    t = np.arange(n) / w.sample_rate
    out = []
    for f0 in offsets:
        mask = np.abs(freqs - f0) <= bandwidth / 2.0
        ch = np.fft.ifft(spectrum * mask) * np.exp(-2j * np.pi * f0 * t)
        out.append(ComplexWaveform(ch, w.sample_rate, f0))
    return out


def split_step_propagate(
    channels: list[ComplexWaveform],
    cfg: LinkConfig,
    n_steps: int = 100,
    demux_bandwidth: float | None = None,
) -> list[ComplexWaveform]:
    """Symmetric split-step propagation of the multiplexed field.

    Channels are combined at their center offsets, propagated through the
    scalar nonlinear Schroedinger equation (dispersion + Kerr + loss), and
    re-extracted.  With gamma = 0 this reduces to per-channel analytic
    dispersion; with alpha = 0 total energy is conserved.
    """
    if n_steps <= 0:
        raise ValueError("n_steps must be positive")
    rate = channels[0].sample_rate
    nyquist = rate / 2.0
    bw = demux_bandwidth if demux_bandwidth is not None else rate / max(len(channels), 1)
    for ch in channels:
        if abs(ch.center_offset) + bw / 2.0 > 0.8 * nyquist:
            raise ValueError(
                f"channel at {ch.center_offset:.3e} Hz exceeds 80% of Nyquist; widen the grid"
            )
    total = multiplex(channels)
    a = total.samples
    n = len(a)
    dz = cfg.length / n_steps
    omega = 2.0 * np.pi * np.fft.fftfreq(n, d=1.0 / rate)
    half_d = np.exp(1j * 0.25 * cfg.beta2 * omega**2 * dz)
    loss = np.exp(-0.5 * cfg.alpha_per_m * dz)
    for _ in range(n_steps):
        a = np.fft.ifft(np.fft.fft(a) * half_d)
        a = a * np.exp(1j * cfg.gamma * np.abs(a) ** 2 * dz)
        a = np.fft.ifft(np.fft.fft(a) * half_d)
        a = a * loss
    propagated = ComplexWaveform(a, rate, 0.0)
    return demultiplex(propagated, [ch.center_offset for ch in channels], bw)
