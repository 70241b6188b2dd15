"""Phase-process synthesis: statistics, determinism, index scaling."""

import numpy as np
import pytest

from combclone.comb import (
    CombRole,
    CombSpec,
    LinePhaseDecomposition,
    PhaseNoiseParams,
    PhaseTrajectory,
    clone_pump_phase,
    compose_line_phase,
    stream_rng,
    synth_ou_frequency,
    synth_rep_rate_phase,
    synth_wiener_phase,
    zero_phase,
)


def test_line_frequency_arithmetic():
    comb = CombSpec(pump_frequency=193.4e12, mode_spacing=100.53e9)
    assert comb.line_frequency(0) == 193.4e12
    assert comb.line_frequency(17) == 193.4e12 + 17 * 100.53e9
    assert comb.line_frequency(-11) == 193.4e12 - 11 * 100.53e9
    with pytest.raises(ValueError):
        comb.line_frequency(99)


def test_comb_spec_validation():
    with pytest.raises(ValueError):
        CombSpec(mode_spacing=0.0)
    with pytest.raises(ValueError):
        CombSpec(line_indices=(1, 2, 3))  # pump line missing


def test_noise_params_validation():
    with pytest.raises(ValueError):
        PhaseNoiseParams(pump_linewidth=-1.0)
    with pytest.raises(ValueError):
        PhaseNoiseParams(rep_rate_jitter_rms=float("nan"))


def test_stream_rng_deterministic_and_independent():
    a1 = stream_rng(5, "alpha").standard_normal(8)
    a2 = stream_rng(5, "alpha").standard_normal(8)
    b = stream_rng(5, "beta").standard_normal(8)
    a_idx = stream_rng(5, "alpha", 3).standard_normal(8)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)
    assert not np.array_equal(a1, a_idx)
    # negative line indices map to distinct streams too
    neg = stream_rng(5, "alpha", -3).standard_normal(8)
    assert not np.array_equal(neg, a_idx)


def test_wiener_phase_increment_variance():
    # increment variance must equal 2*pi*linewidth/rate
    lw, rate, n = 50e3, 1e8, 400_000
    traj = synth_wiener_phase(lw, n, rate, seed=1)
    measured = np.var(np.diff(traj.samples))
    expected = 2.0 * np.pi * lw / rate
    assert measured == pytest.approx(expected, rel=0.05)
    assert traj.samples[0] == 0.0


def test_wiener_phase_zero_linewidth():
    traj = synth_wiener_phase(0.0, 100, 1e6, seed=0)
    assert np.all(traj.samples == 0.0)


def test_ou_frequency_statistics():
    rate, fc, rms, n = 1e6, 2e3, 500.0, 2_000_000
    nu = synth_ou_frequency(rms, fc, n, rate, stream_rng(7, "ou"))
    assert np.std(nu) == pytest.approx(rms, rel=0.1)
    # lag-1 autocorrelation of the discrete process
    rho = np.corrcoef(nu[:-1], nu[1:])[0, 1]
    assert rho == pytest.approx(np.exp(-2.0 * np.pi * fc / rate), abs=1e-3)


def test_ou_frequency_rejects_fast_corner():
    with pytest.raises(ValueError):
        synth_ou_frequency(1.0, 6e5, 10, 1e6, stream_rng(0, "x"))


def test_rep_rate_phase_scales_linearly_in_m():
    params = PhaseNoiseParams()
    one = synth_rep_rate_phase(1, params, 5000, 1e6, seed=3)
    five = synth_rep_rate_phase(5, params, 5000, 1e6, seed=3)
    neg = synth_rep_rate_phase(-2, params, 5000, 1e6, seed=3)
    assert np.allclose(five.samples, 5.0 * one.samples)
    assert np.allclose(neg.samples, -2.0 * one.samples)
    assert np.all(synth_rep_rate_phase(0, params, 5000, 1e6, seed=3).samples == 0)


def test_rep_rate_tx_rx_streams_differ():
    params = PhaseNoiseParams()
    tx = synth_rep_rate_phase(1, params, 1000, 1e6, seed=3, comb="tx")
    rx = synth_rep_rate_phase(1, params, 1000, 1e6, seed=3, comb="rx")
    assert not np.allclose(tx.samples, rx.samples)


def test_phase_trajectory_resample():
    traj = PhaseTrajectory(np.arange(10, dtype=float), 10.0)
    up = traj.resample(20.0, 19)
    assert len(up) == 19
    assert up.samples[2] == pytest.approx(1.0)  # linear interpolation


def test_phase_trajectory_validation():
    with pytest.raises(ValueError):
        PhaseTrajectory(np.array([]), 1.0)
    with pytest.raises(ValueError):
        PhaseTrajectory(np.array([np.nan]), 1.0)
    with pytest.raises(ValueError):
        PhaseTrajectory(np.zeros(4), 0.0)


def test_decomposition_requires_alignment():
    z = zero_phase(10, 1e6)
    with pytest.raises(ValueError):
        LinePhaseDecomposition(z, z, z, zero_phase(9, 1e6))


def test_compose_line_phase_sums_components():
    n, rate = 64, 1e6
    comps = [
        PhaseTrajectory(np.random.default_rng(i).standard_normal(n), rate)
        for i in range(4)
    ]
    decomp = LinePhaseDecomposition(*comps)
    total = compose_line_phase(decomp)
    assert np.allclose(total.samples, sum(c.samples for c in comps))


def test_clone_pump_phase_is_sum_of_conveyed_terms():
    n, rate = 32, 1e6
    pump = PhaseTrajectory(np.ones(n), rate)
    ff = PhaseTrajectory(np.full(n, 2.0), rate)
    nl = PhaseTrajectory(np.full(n, 3.0), rate)
    cloned = clone_pump_phase(pump, ff, nl)
    assert np.allclose(cloned.samples, 6.0)
    with pytest.raises(ValueError):
        clone_pump_phase(pump, ff, PhaseTrajectory(np.zeros(n + 1), rate))


def test_comb_roles():
    assert CombRole.TRANSMITTER.value == "transmitter"
    assert CombRole.RECEIVER.value == "receiver"
