"""End-to-end composition of comb, link and lock into per-channel phases.

Two execution paths share the same model:

* :class:`NoiseRealization` draws all stochastic streams for one seed on a
  single in-memory grid and hands out line decompositions, the servo residual
  and per-channel carrier-LO phases.  Used for the data-path studies (frames
  of a few hundred thousand symbols).
* :func:`simulate_longrun_beats` streams the same processes chunk by chunk at
  the control rate for records far too long to hold in memory (Allan
  deviation runs), emitting decimated beat phases.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from combclone.comb import (
    CombRole,
    CombSpec,
    LinePhaseDecomposition,
    PhaseNoiseParams,
    PhaseTrajectory,
    stream_rng,
    synth_rep_rate_phase,
    synth_wiener_phase,
    zero_phase,
)
from combclone.channel import LinkConfig, synth_fiber_fluct
from combclone.locking import (
    InterCombPhase,
    LockConfig,
    LockResidual,
    LockServo,
    compose_inter_comb_phase,
    lock_settle_time,
    run_lock_servo,
)


@dataclass(frozen=True)
class IndependentLaserParams:
    """Baseline: free-running carrier and LO lasers per channel.

    Linewidths are calibration knobs for the CPE-rate comparison; the model
    is a plain random-walk phase for each laser.
    """

    carrier_linewidth: float = 100e3
    lo_linewidth: float = 100e3


@dataclass
class SystemConfig:
    tx: CombSpec = field(
        default_factory=lambda: CombSpec(role=CombRole.TRANSMITTER, mode_spacing=100.53e9)
    )
    rx: CombSpec = field(
        default_factory=lambda: CombSpec(role=CombRole.RECEIVER, mode_spacing=100.58e9)
    )
    noise: PhaseNoiseParams = field(default_factory=PhaseNoiseParams)
    lock: LockConfig = field(default_factory=LockConfig)
    link: LinkConfig = field(default_factory=LinkConfig)
    independent: IndependentLaserParams = field(default_factory=IndependentLaserParams)

    @property
    def spacing_difference(self) -> float:
        return self.tx.mode_spacing - self.rx.mode_spacing


class NoiseRealization:
    """All stochastic streams for one (seed, grid); immutable once built.

    Shared streams (pump walk, rep-rate fundamentals, common fiber
    fluctuation, servo residual) are drawn once, so every channel sees
    consistent correlated noise; per-line streams are seeded by line index so
    adding channels never perturbs existing ones.
    """

    def __init__(self, cfg: SystemConfig, n: int, rate: float, seed: int):
        self.cfg = cfg
        self.n = n
        self.rate = rate
        self.seed = seed
        # the lock has been closed long before any observed frame: synthesize a
        # settling pad ahead of the record and discard it everywhere, so the
        # servo is in steady state at t = 0
        self._warm = int(round(lock_settle_time(cfg.lock) * rate))
        n_tot = n + self._warm
        self._n_tot = n_tot
        self.pump_int = self._trim(
            synth_wiener_phase(
                cfg.noise.pump_linewidth, n_tot, rate, seed, stream="pump-intrinsic"
            )
        )
        self._rep_tx_full = synth_rep_rate_phase(1, cfg.noise, n_tot, rate, seed, comb="tx")
        self._rep_rx_full = synth_rep_rate_phase(1, cfg.noise, n_tot, rate, seed, comb="rx")
        self.rep_tx_1 = self._trim(self._rep_tx_full)
        self.rep_rx_1 = self._trim(self._rep_rx_full)
        self._fiber_full: dict[int, PhaseTrajectory] = {}
        self._fiber: dict[int, PhaseTrajectory] = {}
        self._zero = zero_phase(n, rate)
        self._residual: LockResidual | None = None
        self._wiener_cache: dict[str, PhaseTrajectory] = {}

    def _trim(self, traj: PhaseTrajectory) -> PhaseTrajectory:
        if self._warm == 0:
            return traj
        return PhaseTrajectory(traj.samples[self._warm :], self.rate)

    def _fiber_padded(self, m: int) -> PhaseTrajectory:
        if m not in self._fiber_full:
            # the `noise` section is authoritative for the fluctuation statistics
            link = replace(self.cfg.link, fluct=self.cfg.noise)
            self._fiber_full[m] = synth_fiber_fluct(
                m, link, self.cfg.tx.mode_spacing, self._n_tot, self.rate, self.seed
            )
        return self._fiber_full[m]

    def fiber_fluct(self, m: int) -> PhaseTrajectory:
        if m not in self._fiber:
            self._fiber[m] = self._trim(self._fiber_padded(m))
        return self._fiber[m]

    def tx_line(self, m: int) -> LinePhaseDecomposition:
        rep = PhaseTrajectory(m * self.rep_tx_1.samples, self.rate) if m else self._zero
        return LinePhaseDecomposition(
            phi_int=self.pump_int,
            phi_ff=self.fiber_fluct(m),
            phi_nl=self._zero,
            phi_rep=rep,
        )

    def rx_line(self, m: int) -> LinePhaseDecomposition:
        # the receiver comb is seeded by the conveyed pump: intrinsic phase is
        # the transmitter pump phase plus what the pump picked up in the link
        cloned = PhaseTrajectory(
            self.pump_int.samples + self.fiber_fluct(0).samples, self.rate
        )
        rep = PhaseTrajectory(m * self.rep_rx_1.samples, self.rate) if m else self._zero
        return LinePhaseDecomposition(
            phi_int=cloned, phi_ff=self._zero, phi_nl=self._zero, phi_rep=rep
        )

    def open_loop_locked_beat(self) -> PhaseTrajectory:
        """Offset-removed open-loop beat phase at the locked line."""
        k = self.cfg.lock.locked_index
        samples = (
            self.fiber_fluct(k).samples
            - self.fiber_fluct(0).samples
            + k * (self.rep_tx_1.samples - self.rep_rx_1.samples)
        )
        return PhaseTrajectory(samples, self.rate)

    @property
    def lock_residual(self) -> LockResidual:
        if self._residual is None:
            # close the loop over the padded record so the settling transient
            # falls entirely inside the discarded pad
            k = self.cfg.lock.locked_index
            padded = PhaseTrajectory(
                self._fiber_padded(k).samples
                - self._fiber_padded(0).samples
                + k * (self._rep_tx_full.samples - self._rep_rx_full.samples),
                self.rate,
            )
            full = run_lock_servo(padded, self.cfg.lock, seed=self.seed)
            self._residual = LockResidual(
                delta_phi=self._trim(full.delta_phi),
                locked=full.locked[self._warm :],
                actuation_hz=full.actuation_hz[self._warm :],
            )
        return self._residual

    def inter_comb_phase(self, m: int, locked: bool) -> InterCombPhase:
        lock_cfg = self.cfg.lock
        if locked != lock_cfg.enabled:
            lock_cfg = replace(lock_cfg, enabled=locked)
        k = lock_cfg.locked_index
        tx_lines = {idx: self.tx_line(idx) for idx in {0, m, k}}
        rx_lines = {m: self.rx_line(m)}
        residual = self.lock_residual if locked else None
        return compose_inter_comb_phase(
            m,
            tx_lines,
            rx_lines,
            residual,
            lock_cfg,
            spacing_difference=self.cfg.spacing_difference,
        )

    def independent_phase(self, m: int) -> PhaseTrajectory:
        """Residual carrier-LO phase for the free-running laser baseline."""
        key = f"indep-{m}"
        if key not in self._wiener_cache:
            carrier = synth_wiener_phase(
                self.cfg.independent.carrier_linewidth,
                self.n,
                self.rate,
                self.seed,
                stream=f"indep-carrier-{m}",
            )
            lo = synth_wiener_phase(
                self.cfg.independent.lo_linewidth,
                self.n,
                self.rate,
                self.seed,
                stream=f"indep-lo-{m}",
            )
            self._wiener_cache[key] = PhaseTrajectory(
                carrier.samples - lo.samples, self.rate
            )
        return self._wiener_cache[key]

    def channel_phase(self, m: int, mode: str) -> PhaseTrajectory:
        """Residual carrier-LO phase for one data channel in the given mode."""
        if mode == "independent_lasers":
            return self.independent_phase(m)
        if mode == "locked_combs":
            return self.inter_comb_phase(m, locked=True).phase
        if mode == "unlocked_combs":
            return self.inter_comb_phase(m, locked=False).phase
        raise ValueError(f"unknown coherence mode {mode!r}")


class _OUStream:
    """Chunked stationary Ornstein-Uhlenbeck frequency process."""

    def __init__(self, rms: float, corner: float, rate: float, rng: np.random.Generator):
        self.rms = rms
        self.rho = np.exp(-2.0 * np.pi * corner / rate) if corner else 0.0
        self.sigma_step = rms * np.sqrt(1.0 - self.rho**2)
        self.rng = rng
        nu0 = rms * rng.standard_normal()
        self.zi = np.array([self.rho * nu0])

    def next(self, n: int) -> np.ndarray:
        if self.rms == 0:
            return np.zeros(n)
        out, self.zi = lfilter(
            [self.sigma_step], [1.0, -self.rho], self.rng.standard_normal(n), zi=self.zi
        )
        return out


class _LowpassStream:
    """Chunked low-pass phase process normalized to a stationary RMS."""

    def __init__(self, rms: float, corner: float, rate: float, rng: np.random.Generator):
        self.rms = rms
        self.rho = np.exp(-2.0 * np.pi * corner / rate) if corner else 0.0
        self.std = np.sqrt((1.0 - self.rho) / (1.0 + self.rho)) if corner else 1.0
        self.rng = rng
        y0 = rng.standard_normal() * self.std
        self.zi = np.array([self.rho * y0])

    def next(self, n: int) -> np.ndarray:
        if self.rms == 0 or self.rho == 0.0:
            return np.zeros(n)
        y, self.zi = lfilter(
            [1.0 - self.rho], [1.0, -self.rho], self.rng.standard_normal(n), zi=self.zi
        )
        return self.rms * y / self.std


class _FloorStream:
    """Chunked band-limited white phase floor at a given in-band PSD."""

    def __init__(self, psd: float, bandwidth: float, rate: float, rng: np.random.Generator):
        self.sigma = np.sqrt(psd * rate / 2.0) if psd else 0.0
        bw = min(bandwidth, 0.49 * rate)
        self.rho = np.exp(-2.0 * np.pi * bw / rate)
        self.rng = rng
        self.zi = np.array([0.0])

    def next(self, n: int) -> np.ndarray:
        if self.sigma == 0:
            return np.zeros(n)
        white = self.sigma * self.rng.standard_normal(n)
        y, self.zi = lfilter([1.0 - self.rho], [1.0, -self.rho], white, zi=self.zi)
        return y


def simulate_longrun_beats(
    cfg: SystemConfig,
    m_list: list[int],
    duration: float,
    rate: float,
    seed: int,
    decimate: int,
    chunk_samples: int = 1_000_000,
) -> dict[str, dict[int, np.ndarray]]:
    """Stream locked and unlocked beat phases over a long record.

    Returns decimated phase samples (every ``decimate``-th control-rate
    sample) for each requested line, for both the locked and the unlocked
    configuration driven by the identical noise realization.
    """
    if chunk_samples % decimate != 0:
        raise ValueError("chunk_samples must be a multiple of decimate")
    n_total = int(round(duration * rate))
    n_total -= n_total % decimate
    if n_total == 0:
        raise ValueError("duration shorter than one decimation interval")
    k = cfg.lock.locked_index
    noise = cfg.noise
    link = cfg.link
    spacing = cfg.tx.mode_spacing

    ou_tx = _OUStream(
        noise.rep_rate_jitter_rms, noise.rep_rate_corner, rate, stream_rng(seed, "rep-rate-tx")
    )
    ou_rx = _OUStream(
        noise.rep_rate_jitter_rms, noise.rep_rate_corner, rate, stream_rng(seed, "rep-rate-rx")
    )
    common = _LowpassStream(
        noise.fiber_fluct_rms, noise.fiber_fluct_corner, rate,
        stream_rng(seed, "fiber-fluct-common"),
    )

    from combclone.channel import walkoff_delay

    lines = sorted(set(m_list) | {k})
    decorr: dict[int, tuple[float, _LowpassStream, _FloorStream]] = {}
    for m in lines:
        delay = walkoff_delay(link, m, spacing)
        eps = min(1.0, abs(delay) * noise.fiber_fluct_corner * link.fluct_decorr_scale)
        gate = min(1.0, abs(delay) / 1e-12)
        lp = _LowpassStream(
            noise.fiber_fluct_rms, noise.fiber_fluct_corner, rate,
            stream_rng(seed, "fiber-fluct-line", m),
        )
        fl = _FloorStream(
            gate * link.fluct_floor_psd, link.fluct_floor_bandwidth, rate,
            stream_rng(seed, "fiber-fluct-floor", m),
        )
        decorr[m] = (eps, lp, fl)

    servo = LockServo(cfg.lock, rate, seed=seed)
    rep_carry = 0.0
    out_locked = {m: [] for m in m_list}
    out_unlocked = {m: [] for m in m_list}
    # settle the servo and all stream states on a discarded pad first
    warm = int(round(lock_settle_time(cfg.lock) * rate))
    n_done = 0
    while n_done - warm < n_total:
        discard = n_done < warm
        n = warm - n_done if discard else min(chunk_samples, n_total - (n_done - warm))
        d_freq = ou_tx.next(n) - ou_rx.next(n)
        rep_diff = 2.0 * np.pi * (rep_carry + np.cumsum(d_freq)) / rate
        rep_carry += float(np.sum(d_freq))
        common_chunk = common.next(n)
        ff = {}
        for m in lines:
            eps, lp, fl = decorr[m]
            ff[m] = (
                np.sqrt(1.0 - eps**2) * common_chunk + eps * lp.next(n) + fl.next(n)
                if eps or fl.sigma
                else common_chunk
            )
        ff0 = common_chunk  # pump line: zero walk-off, pure common process
        pilot_rel = ff[k] - ff0
        open_loop = pilot_rel + k * rep_diff
        delta_phi, _, _ = servo.process(open_loop)
        if not discard:
            for m in m_list:
                line_rel = ff[m] - ff0
                locked_beat = line_rel - (m / k) * pilot_rel + (m / k) * delta_phi
                unlocked_beat = line_rel + m * rep_diff
                out_locked[m].append(locked_beat[::decimate])
                out_unlocked[m].append(unlocked_beat[::decimate])
        n_done += n
    return {
        "locked": {m: np.concatenate(chunks) for m, chunks in out_locked.items()},
        "unlocked": {m: np.concatenate(chunks) for m, chunks in out_unlocked.items()},
    }
