"""Per-line phase synthesis for the transmitter and receiver microcombs.

Every comb line phase is the sum of four trajectories: the intrinsic pump
phase (random walk, Lorentzian line), the slow fiber-fluctuation phase, the
nonlinear phase picked up in the link, and the repetition-rate phase which
scales linearly with the line index.  The receiver comb inherits the conveyed
pump phase, so its intrinsic term is the transmitter pump phase plus whatever
the link added.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.signal import lfilter


class CombRole(Enum):
    TRANSMITTER = "transmitter"
    RECEIVER = "receiver"


@dataclass(frozen=True)
class CombSpec:
    """Static description of one microcomb.

    Line ``m`` sits at ``pump_frequency + m * mode_spacing``; index 0 is the
    pump and is always part of ``line_indices``.
    """

    pump_frequency: float = 193.4e12
    mode_spacing: float = 100.53e9
    line_indices: tuple[int, ...] = tuple(range(-11, 18))
    role: CombRole = CombRole.TRANSMITTER

    def __post_init__(self):
        if self.mode_spacing <= 0:
            raise ValueError("mode_spacing must be positive")
        if self.pump_frequency <= 0:
            raise ValueError("pump_frequency must be positive")
        if 0 not in self.line_indices:
            raise ValueError("line index 0 (the pump) must be present")

    def line_frequency(self, m: int) -> float:
        if m not in self.line_indices:
            raise ValueError(f"line index {m} not in comb")
        return self.pump_frequency + m * self.mode_spacing


@dataclass(frozen=True)
class PhaseNoiseParams:
    """Stochastic parameters of the modeled phase processes.

    ``pump_linewidth`` is the Lorentzian FWHM of the pump random walk.
    Repetition-rate jitter is a band-limited (Ornstein-Uhlenbeck) frequency
    process with the given RMS and corner.  Fiber fluctuations are a low-pass
    random phase confined below ``fiber_fluct_corner``.
    """

    pump_linewidth: float = 100.0
    rep_rate_jitter_rms: float = 2.0e3
    rep_rate_corner: float = 30.0
    fiber_fluct_rms: float = 0.1
    fiber_fluct_corner: float = 300.0

    def __post_init__(self):
        for name in (
            "pump_linewidth",
            "rep_rate_jitter_rms",
            "rep_rate_corner",
            "fiber_fluct_rms",
            "fiber_fluct_corner",
        ):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative")


@dataclass
class PhaseTrajectory:
    """Uniformly sampled phase record (rad) at ``sample_rate`` starting at ``t0``."""

    samples: np.ndarray
    sample_rate: float
    t0: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.samples.size == 0:
            raise ValueError("trajectory must contain at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("trajectory samples must be finite")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.sample_rate

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def aligned_with(self, other: "PhaseTrajectory") -> bool:
        return (
            self.samples.size == other.samples.size
            and self.sample_rate == other.sample_rate
        )

    def resample(self, rate: float, n: int) -> "PhaseTrajectory":
        """Linear interpolation onto a new uniform grid (same t0)."""
        t_new = np.arange(n) / rate
        t_old = np.arange(self.samples.size) / self.sample_rate
        return PhaseTrajectory(np.interp(t_new, t_old, self.samples), rate, self.t0)


def zero_phase(n: int, rate: float, t0: float = 0.0) -> PhaseTrajectory:
    return PhaseTrajectory(np.zeros(n), rate, t0)


@dataclass
class LinePhaseDecomposition:
    """Additive decomposition of one arrived comb-line phase.

    Components must share sample rate and length; the total line phase is
    their pointwise sum.
    """

    phi_int: PhaseTrajectory
    phi_ff: PhaseTrajectory
    phi_nl: PhaseTrajectory
    phi_rep: PhaseTrajectory

    def __post_init__(self):
        ref = self.phi_int
        for name in ("phi_ff", "phi_nl", "phi_rep"):
            if not ref.aligned_with(getattr(self, name)):
                raise ValueError(f"{name} not aligned with phi_int")

    @property
    def components(self) -> tuple[PhaseTrajectory, ...]:
        return (self.phi_int, self.phi_ff, self.phi_nl, self.phi_rep)


def stream_rng(master_seed: int, stream: str, index: int = 0) -> np.random.Generator:
    """Dedicated RNG for one noise stream.

    Seeded from (master seed, CRC32 of the stream name, line index) so adding
    channels or streams never perturbs existing ones.
    """
    tag = zlib.crc32(stream.encode("utf-8"))
    return np.random.default_rng(
        np.random.SeedSequence((int(master_seed), tag, index & 0xFFFFFFFF))
    )


def synth_wiener_phase(
    linewidth: float, n: int, rate: float, seed: int, stream: str = "wiener"
) -> PhaseTrajectory:
    """Random-walk phase with a Lorentzian line of the given FWHM.

    Increment variance is 2*pi*linewidth/rate per step; deterministic per seed.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if rate <= 0:
        raise ValueError("rate must be positive")
    if not np.isfinite(linewidth) or linewidth < 0:
        raise ValueError("linewidth must be finite and non-negative")
    if linewidth == 0:
        return zero_phase(n, rate)
    rng = stream_rng(seed, stream)
    steps = rng.standard_normal(n - 1) * np.sqrt(2.0 * np.pi * linewidth / rate)
    phase = np.empty(n)
    phase[0] = 0.0
    np.cumsum(steps, out=phase[1:])
    return PhaseTrajectory(phase, rate)


def synth_ou_frequency(
    rms: float, corner: float, n: int, rate: float, rng: np.random.Generator
) -> np.ndarray:
    """Stationary Ornstein-Uhlenbeck frequency process (Hz) at the given rate."""
    if corner >= rate / 2:
        raise ValueError("corner must be below the Nyquist rate")
    if rms == 0 or corner == 0:
        return np.zeros(n)
    rho = np.exp(-2.0 * np.pi * corner / rate)
    sigma_step = rms * np.sqrt(1.0 - rho**2)
    white = rng.standard_normal(n)
    nu0 = rms * rng.standard_normal()
    nu, _ = lfilter([sigma_step], [1.0, -rho], white, zi=np.array([rho * nu0]))
    return nu


def synth_rep_rate_phase(
    m: int, params: PhaseNoiseParams, n: int, rate: float, seed: int, comb: str = "tx"
) -> PhaseTrajectory:
    """Repetition-rate phase of line ``m``: m times the fundamental.

    The fundamental is the integral (times 2*pi) of a band-limited jitter
    process; the same seed yields the same fundamental for every m, so the
    linear-in-m scaling holds exactly.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if params.rep_rate_corner >= rate / 2:
        raise ValueError("rep_rate_corner must be below the Nyquist rate")
    if m == 0:
        return zero_phase(n, rate)
    rng = stream_rng(seed, f"rep-rate-{comb}")
    nu = synth_ou_frequency(params.rep_rate_jitter_rms, params.rep_rate_corner, n, rate, rng)
    fundamental = 2.0 * np.pi * np.cumsum(nu) / rate
    return PhaseTrajectory(m * fundamental, rate)


def compose_line_phase(decomp: LinePhaseDecomposition) -> PhaseTrajectory:
    """Pointwise sum of the four phase components of one line."""
    total = np.zeros(len(decomp.phi_int))
    for component in decomp.components:
        total += component.samples
    return PhaseTrajectory(total, decomp.phi_int.sample_rate, decomp.phi_int.t0)


def clone_pump_phase(
    tx_pump: PhaseTrajectory,
    link_ff: PhaseTrajectory,
    link_nl: PhaseTrajectory,
) -> PhaseTrajectory:
    """Intrinsic phase seeded into every receiver comb line.

    The receiver comb is generated from the conveyed pump, so its intrinsic
    phase is the transmitter pump phase plus the fiber-fluctuation and
    nonlinear phase the pump collected on the way.
    """
    if not (tx_pump.aligned_with(link_ff) and tx_pump.aligned_with(link_nl)):
        raise ValueError("pump and link trajectories must be aligned")
    return PhaseTrajectory(
        tx_pump.samples + link_ff.samples + link_nl.samples,
        tx_pump.sample_rate,
        tx_pump.t0,
    )
