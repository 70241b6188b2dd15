"""Two-point locking of the receiver comb and inter-comb phase composition.

The lock servo is a discrete-time PI controller acting on the receiver
repetition rate so that the beat between the two combs' locked lines tracks
the RF reference.  Once the locked-line residual is known, the phase of every
other inter-comb beat follows algebraically: the fiber-fluctuation terms of
the line, the pump and the locked line combine with weights 1, -(K-m)/K and
-m/K, and the servo residual enters scaled by m/K (K = locked line index).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from combclone.comb import LinePhaseDecomposition, PhaseTrajectory, compose_line_phase, stream_rng
from combclone.channel import ComplexWaveform


@dataclass(frozen=True)
class LockConfig:
    """Lock-loop parameters.

    ``detector_noise_psd`` (rad^2/Hz) is the white phase-comparator noise the
    loop imprints on the locked beat inside its bandwidth; it is calibrated
    against the observed locked-beat background, not derived.
    """

    locked_index: int = 17
    f_ref: float = 941.101000e6
    loop_bandwidth: float = 100e3
    loop_type: str = "PI"
    actuator_range: float = 1.0e6
    enabled: bool = True
    detector_noise_psd: float = 8.0e-10
    lock_threshold: float = 0.3

    def __post_init__(self):
        if self.locked_index == 0:
            raise ValueError("locked_index must be nonzero")
        if self.f_ref <= 0:
            raise ValueError("f_ref must be positive")
        if self.loop_bandwidth <= 0:
            raise ValueError("loop_bandwidth must be positive")
        if self.loop_type != "PI":
            raise ValueError("only the PI loop type is implemented")

    def gains(self) -> tuple[float, float]:
        """(Kp, Ki) in Hz per rad and Hz per rad-second.

        Standard second-order design: natural frequency at the loop bandwidth,
        critically damped.
        """
        kp = 2.0 * self.loop_bandwidth
        ki = 2.0 * np.pi * self.loop_bandwidth**2
        return kp, ki

    def validate_rate(self, rate: float):
        if self.loop_bandwidth > rate / 10.0:
            raise ValueError("loop bandwidth must not exceed control rate / 10")


def lock_settle_time(cfg: LockConfig) -> float:
    """Time for the acquisition transient to decay below numerical relevance.

    The closed loop is critically damped with a double pole at 2*pi*BW; four
    inverse bandwidths is > 25 time constants.
    """
    return 4.0 / cfg.loop_bandwidth


@dataclass
class LockResidual:
    """Closed-loop residual phase at the locked line plus diagnostics.

    ``delta_phi`` is the physical beat phase error; ``locked`` flags samples
    where the error is within threshold and the actuator within range;
    ``actuation_hz`` is the rep-rate pull applied by the servo.
    """

    delta_phi: PhaseTrajectory
    locked: np.ndarray
    actuation_hz: np.ndarray

    @property
    def in_lock_fraction(self) -> float:
        return float(np.mean(self.locked))


@dataclass
class InterCombPhase:
    """Phase of one inter-comb beat after removal of its nominal offset."""

    m: int
    phase: PhaseTrajectory
    nominal_offset: float


class LockServo:
    """Stateful PI lock servo; supports chunked processing of long records.

    The loop is linear, so it is executed as the equivalent difference
    equation of the per-sample PI recursion (error measured, actuation
    integrates onto the beat phase one sample later).
    """

    def __init__(self, cfg: LockConfig, rate: float, seed: int = 0):
        cfg.validate_rate(rate)
        self.cfg = cfg
        self.rate = rate
        kp, ki = cfg.gains()
        t = 1.0 / rate
        c1 = 2.0 * np.pi * t * kp
        c2 = 2.0 * np.pi * t * t * ki
        self._b = np.array([1.0, -2.0, 1.0])
        self._a = np.array([1.0, -2.0 + c1 + c2, 1.0 - c1])
        self._kp = kp
        self._ki_t = ki * t
        self._zi = np.zeros(2)
        self._err_integral = 0.0
        self._noise_sigma = np.sqrt(cfg.detector_noise_psd * rate / 2.0)
        self._rng = stream_rng(seed, "lock-detector-noise")

    def process(self, phi_open_loop: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Advance the loop over one chunk.

        Returns (delta_phi, locked flags, rep-rate actuation in Hz).
        """
        noise = self._noise_sigma * self._rng.standard_normal(phi_open_loop.size)
        e_meas, self._zi = lfilter(self._b, self._a, phi_open_loop + noise, zi=self._zi)
        delta_phi = e_meas - noise
        integral = self._err_integral + np.cumsum(e_meas)
        self._err_integral = integral[-1]
        actuation_line = self._kp * e_meas + self._ki_t * integral
        actuation_rep = actuation_line / self.cfg.locked_index
        locked = (np.abs(delta_phi) <= self.cfg.lock_threshold) & (
            np.abs(actuation_rep) <= self.cfg.actuator_range
        )
        return delta_phi, locked, actuation_rep


def run_lock_servo(
    beat_phase_open_loop: PhaseTrajectory, cfg: LockConfig, seed: int = 0
) -> LockResidual:
    """Close the lock loop over an open-loop locked-line beat phase.

    The input is the beat phase with the nominal reference offset already
    removed; the returned residual is the phase error the servo leaves behind.
    Out-of-lock samples (actuator range exceeded or error beyond threshold)
    are flagged, not fatal.
    """
    servo = LockServo(cfg, beat_phase_open_loop.sample_rate, seed=seed)
    delta_phi, locked, actuation = servo.process(beat_phase_open_loop.samples)
    return LockResidual(
        delta_phi=PhaseTrajectory(
            delta_phi, beat_phase_open_loop.sample_rate, beat_phase_open_loop.t0
        ),
        locked=locked,
        actuation_hz=actuation,
    )


def compose_inter_comb_phase(
    m: int,
    tx_lines: dict[int, LinePhaseDecomposition],
    rx_lines: dict[int, LinePhaseDecomposition],
    residual: LockResidual | None,
    cfg: LockConfig,
    spacing_difference: float = 0.0,
) -> InterCombPhase:
    """Phase of the beat between transmitter and receiver line m.

    With the lock enabled the locked-line relation eliminates the intrinsic
    and repetition-rate terms, leaving the fiber/nonlinear line-pump-pilot
    combination plus the scaled servo residual.  With the lock disabled the
    raw difference of the composed line phases is returned.
    """
    k = cfg.locked_index
    if cfg.enabled:
        if residual is None:
            raise ValueError("lock enabled but no servo residual given")
        for idx in (0, m, k):
            if idx not in tx_lines:
                raise ValueError(f"transmitter line {idx} required for composition")
        ff = {idx: tx_lines[idx].phi_ff.samples for idx in (0, m, k)}
        nl = {idx: tx_lines[idx].phi_nl.samples for idx in (0, m, k)}
        pump_excess = ff[0] + nl[0]
        dphi_line = ff[m] + nl[m] - pump_excess
        dphi_lock = (m / k) * (ff[k] + nl[k] - pump_excess)
        phase = dphi_line - dphi_lock + (m / k) * residual.delta_phi.samples
        ref = tx_lines[m].phi_ff
        return InterCombPhase(
            m=m,
            phase=PhaseTrajectory(phase, ref.sample_rate, ref.t0),
            nominal_offset=m * cfg.f_ref / k,
        )
    if m not in tx_lines or m not in rx_lines:
        raise ValueError(f"line {m} required on both combs")
    tx_total = compose_line_phase(tx_lines[m])
    rx_total = compose_line_phase(rx_lines[m])
    return InterCombPhase(
        m=m,
        phase=PhaseTrajectory(
            tx_total.samples - rx_total.samples, tx_total.sample_rate, tx_total.t0
        ),
        nominal_offset=m * spacing_difference,
    )


def beat_note(
    tx_line_phase: PhaseTrajectory,
    rx_line_phase: PhaseTrajectory,
    offset: float,
    rate: float,
    n: int,
) -> ComplexWaveform:
    """Unit-magnitude beat waveform exp(i(2*pi*offset*t + phase difference))."""
    if not tx_line_phase.aligned_with(rx_line_phase):
        raise ValueError("line phases must be aligned")
    diff = PhaseTrajectory(
        tx_line_phase.samples - rx_line_phase.samples,
        tx_line_phase.sample_rate,
        tx_line_phase.t0,
    )
    if diff.sample_rate != rate or len(diff) != n:
        diff = diff.resample(rate, n)
    t = np.arange(n) / rate
    return ComplexWaveform(
        np.exp(1j * (2.0 * np.pi * offset * t + diff.samples)), rate, offset
    )
