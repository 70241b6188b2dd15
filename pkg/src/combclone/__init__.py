"""Coherent WDM interconnect simulator built on coherence-cloned soliton microcombs.

Two microcombs (one at the transmitter, one re-generated at the receiver from
the conveyed pump) are tied together by a two-point lock: the shared pump line
and a high-index pilot line locked against an RF reference.  The package models
the per-line phase processes of both combs, the discrete-time lock servo, the
50 km fiber link, 16-QAM modulation/coherent detection, and the receiver DSP
chain (frequency-offset precalculation, pilot-block carrier phase estimation
with a configurable skip factor, master-slave phase transfer), plus the
metrology needed to quantify the result: beat-note PSD/linewidth, Allan
deviation, BER/EVM/SNR and CPE-operation accounting.
"""

__version__ = "0.1.0"

from combclone.comb import (
    CombRole,
    CombSpec,
    LinePhaseDecomposition,
    PhaseNoiseParams,
    PhaseTrajectory,
)
from combclone.locking import InterCombPhase, LockConfig, LockResidual
from combclone.channel import ComplexWaveform, LinkConfig
from combclone.txrx import ModulationConfig, SymbolFrame
from combclone.dsp import CpeTrace, DspConfig
from combclone.metrics import MetricsReport

__all__ = [
    "CombRole",
    "CombSpec",
    "ComplexWaveform",
    "CpeTrace",
    "DspConfig",
    "InterCombPhase",
    "LinePhaseDecomposition",
    "LinkConfig",
    "LockConfig",
    "LockResidual",
    "MetricsReport",
    "ModulationConfig",
    "PhaseNoiseParams",
    "PhaseTrajectory",
    "SymbolFrame",
    "__version__",
]
