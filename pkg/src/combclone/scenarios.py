"""Scenario runner: config schema, validation and study execution.

A scenario is a YAML mapping with a ``run_type`` selecting one of the studies
below plus sections overriding the physical defaults (``noise``, ``lock``,
``link``, ``mod``, ``dsp``, ...).  Every run writes one directory containing
the fully resolved config, a ``run.json`` provenance record and one or more
CSV tables (columns documented per study in this module's docstrings).

Studies
-------
beat_notes      locked/unlocked inter-comb beat PSDs, FWHM linewidths and
                phase-noise plateau levels per line.
allan           long-record locked vs unlocked beat frequency stability.
interconnect    full data path (per-channel phase -> 16-QAM frame -> CPE ->
                BER/EVM/SNR) for the configured coherence modes.
foe_accuracy    interconnect pipeline, summarized by the residual frequency
                offset recovered from the CPE estimate slope.
cpe_sweep       BER vs CPE skip factor i over modes and seeds.
master_slave    one estimated channel steering the others by line-index
                rescaling, compared against per-channel CPE.
xpm             split-step pilot-linewidth check with and without walk-off.
cpe_budget      CPE-operation accounting for configured DSP variants.

Symbol-domain convention: the data-path studies run one sample per symbol at
the baud rate with the nominal channel frequency offset already removed (the
coarse offset is deterministic; what remains is the stochastic phase).
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

import combclone
from combclone.channel import ComplexWaveform, LinkConfig, split_step_propagate
from combclone.comb import CombRole, CombSpec, PhaseNoiseParams, stream_rng
from combclone.dsp import (
    DspConfig,
    cpe_master_slave,
    cpe_pilot_block,
    residual_foe_from_slope,
)
from combclone.locking import LockConfig
from combclone.metrics import (
    allan_deviation,
    ber,
    cpe_op_count,
    evm_percent,
    fwhm,
    plateau_level,
    psd_welch,
    snr_from_evm,
)
from combclone.system import (
    IndependentLaserParams,
    NoiseRealization,
    SystemConfig,
    simulate_longrun_beats,
)
from combclone.txrx import ModulationConfig, qam16_demap, random_frame

COHERENCE_MODES = ("locked_combs", "unlocked_combs", "independent_lasers")
RUN_TYPES = (
    "beat_notes",
    "allan",
    "interconnect",
    "foe_accuracy",
    "cpe_sweep",
    "master_slave",
    "xpm",
    "cpe_budget",
)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Config validation failure carrying the offending field path."""

    def __init__(self, path: str, message: str):
        self.field_path = path
        super().__init__(f"{path}: {message}")


# ----------------------------------------------------------------- schema --

_SCALARS = (int, float, str, bool)


def _require_mapping(obj, path: str) -> dict:
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ConfigError(path, f"expected a mapping, got {type(obj).__name__}")
    return obj


def _coerce(value, target_type, path: str):
    if target_type is float:
        if isinstance(value, str):
            # YAML 1.1 reads exponents like 1.0e6 as strings; accept them
            try:
                return float(value)
            except ValueError:
                raise ConfigError(path, f"expected a number, got {value!r}") from None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return int(value)
    if target_type is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return value
    if target_type is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    return value


def _build_dataclass(cls, raw: dict, path: str, skip=()):
    """Instantiate a config dataclass from a mapping, rejecting unknown keys."""
    fields = {f.name: f for f in dataclasses.fields(cls) if f.name not in skip}
    kwargs = {}
    for key, value in raw.items():
        if key not in fields:
            raise ConfigError(f"{path}.{key}", "unknown field")
        ftype = fields[key].type
        target = {"float": float, "int": int, "str": str, "bool": bool}.get(
            str(ftype).split("|")[0].strip(), None
        )
        if value is None:
            kwargs[key] = None
            continue
        if target is not None:
            value = _coerce(value, target, f"{path}.{key}")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from exc


def _int_list(raw, path: str) -> list[int]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError(path, "expected a non-empty list")
    out = []
    for k, v in enumerate(raw):
        out.append(_coerce(v, int, f"{path}[{k}]"))
    return out


def _float_list(raw, path: str) -> list[float]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError(path, "expected a non-empty list")
    return [_coerce(v, float, f"{path}[{k}]") for k, v in enumerate(raw)]


@dataclass
class Scenario:
    """Validated, fully resolved scenario."""

    name: str
    run_type: str
    coherence_modes: list[str]
    channels: list[int]
    seeds: list[int]
    system: SystemConfig
    mod: ModulationConfig
    dsp: DspConfig
    snr_db: float
    study: dict = field(default_factory=dict)

    @property
    def master_seed(self) -> int:
        return self.seeds[0]


_STUDY_DEFAULTS: dict[str, dict] = {
    "beat_notes": {
        "lines": [1, 5, 10, 17],
        "duration": 4.0,
        "control_rate": 1.0e6,
        "rbw": 1.0,
        "rbw_unlocked": 100.0,
        "rbw_plateau": 50.0,
        "plateau_band": [5.0e3, 2.0e4],
        "psd_max_freq": 5.0e4,
        "psd_max_points": 4001,
    },
    "allan": {
        "line": 1,
        "duration": 100.0,
        "control_rate": 1.0e6,
        "decimate": 1000,
        "gate_times": [1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0, 3.0, 10.0],
    },
    "interconnect": {"dump_traces": False},
    "foe_accuracy": {"dump_traces": False},
    "cpe_sweep": {
        "sweep_i": [0, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 12499],
        "target_ber": 3.8e-3,
    },
    "master_slave": {"master": 10},
    "xpm": {
        "sample_rate": 1.0e12,
        "n_samples": 2**20,
        "data_offsets": [-100.53e9, 100.53e9, 201.06e9],
        "gamma_scale": 700.0,
        "n_steps": 100,
        "nperseg": 2**14,
        "demux_bandwidth": 5.0e10,
    },
    "cpe_budget": {
        "cases": [
            {"label": "master_slave_slow", "skip_blocks": 1000, "n_channels": 10,
             "master": True},
            {"label": "independent_fast", "skip_blocks": 10, "n_channels": 10,
             "master": False},
        ]
    },
}

_DEFAULT_CHANNELS = [-6, -5, -4, -3, -2, 2, 3, 4, 5, 6]
_FULL_CHANNELS = [m for m in range(-11, 12) if abs(m) >= 2]


def load_config(path) -> dict:
    """Read a YAML scenario file into a raw mapping."""
    text = Path(path).read_text()
    raw = yaml.safe_load(text)
    return _require_mapping(raw, "<root>")


def build_scenario(
    raw: dict, *, full: bool = False, seed_override: int | None = None
) -> Scenario:
    """Validate a raw config mapping and resolve every default.

    ``full`` applies the optional ``full:`` override section (the large-scale
    variant of a study); ``seed_override`` replaces the seed list with a
    single seed.
    """
    raw = dict(_require_mapping(raw, "<root>"))
    overrides = _require_mapping(raw.pop("full", None), "full")
    if full:
        for key, value in overrides.items():
            if isinstance(value, dict) and isinstance(raw.get(key), dict):
                raw[key] = {**raw[key], **value}
            else:
                raw[key] = value

    known = {
        "schema_version", "name", "run_type", "coherence_modes", "channels",
        "seed", "seeds", "snr_db", "tx_comb", "rx_comb", "noise", "lock",
        "link", "independent", "mod", "dsp", "study",
    }
    for key in raw:
        if key not in known:
            raise ConfigError(key, "unknown section")

    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version!r}")

    name = _coerce(raw.get("name", "unnamed"), str, "name")
    run_type = _coerce(raw.get("run_type", "interconnect"), str, "run_type")
    if run_type not in RUN_TYPES:
        raise ConfigError("run_type", f"must be one of {RUN_TYPES}")

    modes_raw = raw.get("coherence_modes", ["locked_combs"])
    if not isinstance(modes_raw, list) or not modes_raw:
        raise ConfigError("coherence_modes", "expected a non-empty list")
    modes = []
    for k, mode in enumerate(modes_raw):
        if mode not in COHERENCE_MODES:
            raise ConfigError(
                f"coherence_modes[{k}]", f"must be one of {COHERENCE_MODES}"
            )
        modes.append(mode)

    noise = _build_dataclass(
        PhaseNoiseParams, _require_mapping(raw.get("noise"), "noise"), "noise"
    )
    lock = _build_dataclass(
        LockConfig, _require_mapping(raw.get("lock"), "lock"), "lock"
    )
    link = _build_dataclass(
        LinkConfig, _require_mapping(raw.get("link"), "link"), "link", skip=("fluct",)
    )
    independent = _build_dataclass(
        IndependentLaserParams,
        _require_mapping(raw.get("independent"), "independent"),
        "independent",
    )
    mod = _build_dataclass(
        ModulationConfig, _require_mapping(raw.get("mod"), "mod"), "mod"
    )
    dsp_cfg = _build_dataclass(
        DspConfig, _require_mapping(raw.get("dsp"), "dsp"), "dsp"
    )

    tx_raw = _require_mapping(raw.get("tx_comb"), "tx_comb")
    rx_raw = _require_mapping(raw.get("rx_comb"), "rx_comb")
    for section, sraw in (("tx_comb", tx_raw), ("rx_comb", rx_raw)):
        for key in sraw:
            if key not in ("pump_frequency", "mode_spacing"):
                raise ConfigError(f"{section}.{key}", "unknown field")
    tx = CombSpec(
        pump_frequency=_coerce(
            tx_raw.get("pump_frequency", 193.4e12), float, "tx_comb.pump_frequency"
        ),
        mode_spacing=_coerce(
            tx_raw.get("mode_spacing", 100.53e9), float, "tx_comb.mode_spacing"
        ),
        role=CombRole.TRANSMITTER,
    )
    rx = CombSpec(
        pump_frequency=_coerce(
            rx_raw.get("pump_frequency", tx.pump_frequency),
            float,
            "rx_comb.pump_frequency",
        ),
        mode_spacing=_coerce(
            rx_raw.get("mode_spacing", 100.58e9), float, "rx_comb.mode_spacing"
        ),
        role=CombRole.RECEIVER,
    )
    system = SystemConfig(
        tx=tx, rx=rx, noise=noise, lock=lock, link=link, independent=independent
    )

    channels = _int_list(raw.get("channels", list(_DEFAULT_CHANNELS)), "channels")
    for k, m in enumerate(channels):
        if m == 0:
            raise ConfigError(f"channels[{k}]", "the pump line carries no data")
        if m == lock.locked_index:
            raise ConfigError(
                f"channels[{k}]",
                f"line {lock.locked_index} is the unmodulated lock pilot",
            )
        if m not in tx.line_indices or m not in rx.line_indices:
            raise ConfigError(f"channels[{k}]", f"line {m} outside the comb span")

    if "seeds" in raw and "seed" in raw:
        raise ConfigError("seed", "give either seed or seeds, not both")
    if "seeds" in raw:
        seeds = _int_list(raw["seeds"], "seeds")
    else:
        seeds = [_coerce(raw.get("seed", 0), int, "seed")]
    if seed_override is not None:
        seeds = [int(seed_override)]

    snr_db = _coerce(raw.get("snr_db", link.osnr_db), float, "snr_db")

    study = dict(_STUDY_DEFAULTS.get(run_type, {}))
    for key, value in _require_mapping(raw.get("study"), "study").items():
        if key not in study:
            raise ConfigError(f"study.{key}", f"unknown field for {run_type}")
        default = study[key]
        if isinstance(default, float):
            value = _coerce(value, float, f"study.{key}")
        elif isinstance(default, bool):
            value = _coerce(value, bool, f"study.{key}")
        elif isinstance(default, int):
            value = _coerce(value, int, f"study.{key}")
        study[key] = value
    _validate_study(run_type, study, lock)

    return Scenario(
        name=name,
        run_type=run_type,
        coherence_modes=modes,
        channels=channels,
        seeds=seeds,
        system=system,
        mod=mod,
        dsp=dsp_cfg,
        snr_db=snr_db,
        study=study,
    )


def _validate_study(run_type: str, study: dict, lock: LockConfig):
    if run_type == "beat_notes":
        study["lines"] = _int_list(study["lines"], "study.lines")
        band = _float_list(study["plateau_band"], "study.plateau_band")
        if len(band) != 2 or band[0] >= band[1]:
            raise ConfigError("study.plateau_band", "expected [low, high] with low < high")
        study["plateau_band"] = band
    elif run_type == "allan":
        study["gate_times"] = sorted(_float_list(study["gate_times"], "study.gate_times"))
        tau0 = study["decimate"] / study["control_rate"]
        if study["gate_times"][0] < tau0:
            raise ConfigError("study.gate_times", f"gates must be >= tau0 = {tau0}")
    elif run_type == "cpe_sweep":
        study["sweep_i"] = sorted(_int_list(study["sweep_i"], "study.sweep_i"))
        if any(i < 0 for i in study["sweep_i"]):
            raise ConfigError("study.sweep_i", "skip factors must be >= 0")
    elif run_type == "master_slave":
        if study["master"] in (0, lock.locked_index):
            raise ConfigError("study.master", "master must be a data-carrying line")
    elif run_type == "xpm":
        study["data_offsets"] = _float_list(study["data_offsets"], "study.data_offsets")
    elif run_type == "cpe_budget":
        if not isinstance(study["cases"], list) or not study["cases"]:
            raise ConfigError("study.cases", "expected a non-empty list")


def resolved_config(s: Scenario) -> dict:
    """Full echo of a scenario; re-parsing it reproduces the scenario."""

    def plain(obj):
        if isinstance(obj, dict):
            return {k: plain(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [plain(v) for v in obj]
        if isinstance(obj, (np.floating, np.integer)):
            return obj.item()
        return obj

    return {
        "schema_version": SCHEMA_VERSION,
        "name": s.name,
        "run_type": s.run_type,
        "coherence_modes": list(s.coherence_modes),
        "channels": list(s.channels),
        "seeds": list(s.seeds),
        "snr_db": s.snr_db,
        "tx_comb": {
            "pump_frequency": s.system.tx.pump_frequency,
            "mode_spacing": s.system.tx.mode_spacing,
        },
        "rx_comb": {
            "pump_frequency": s.system.rx.pump_frequency,
            "mode_spacing": s.system.rx.mode_spacing,
        },
        "noise": plain(dataclasses.asdict(s.system.noise)),
        "lock": plain(dataclasses.asdict(s.system.lock)),
        "link": {
            k: v
            for k, v in plain(dataclasses.asdict(s.system.link)).items()
            if k != "fluct"
        },
        "independent": plain(dataclasses.asdict(s.system.independent)),
        "mod": plain(dataclasses.asdict(s.mod)),
        "dsp": plain(dataclasses.asdict(s.dsp)),
        "study": plain(s.study),
    }


# -------------------------------------------------------------- execution --


@dataclass
class RunReport:
    scenario: Scenario
    tables: dict[str, tuple[list[str], list[list]]]
    summary: dict
    out_dir: Path | None = None


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def run_scenario(s: Scenario, out_dir=None, threads: int = 1) -> RunReport:
    """Execute a scenario and optionally persist its artifacts.

    Thread count only affects wall time: work is partitioned on seed/mode
    boundaries with per-task RNG streams and results are ordered by key
    before aggregation, so reports are identical for any ``threads``.
    """
    runner = _RUNNERS[s.run_type]
    start = time.time()
    tables, summary = runner(s, max(1, threads))
    report = RunReport(scenario=s, tables=tables, summary=summary)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "resolved_config.yaml", "w") as fh:
            yaml.safe_dump(resolved_config(s), fh, sort_keys=False)
        for filename, (header, rows) in tables.items():
            _write_csv(out / filename, header, rows)
        provenance = {
            "tool": "combclone",
            "version": combclone.__version__,
            "schema_version": SCHEMA_VERSION,
            "name": s.name,
            "run_type": s.run_type,
            "master_seed": s.master_seed,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "elapsed_s": round(time.time() - start, 3),
            "summary": summary,
        }
        with open(out / "run.json", "w") as fh:
            json.dump(provenance, fh, indent=2, default=float)
            fh.write("\n")
        report.out_dir = out
    return report


def _map_ordered(fn, keys, threads: int) -> dict:
    """Apply fn over keys, preserving key order regardless of thread count."""
    if threads <= 1 or len(keys) <= 1:
        return {key: fn(key) for key in keys}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {key: pool.submit(fn, key) for key in keys}
        return {key: futures[key].result() for key in keys}


# beat_notes: metrics.csv [mode,m,fwhm_hz,resolution_limited,rbw_hz,plateau_psd]
#             beat_psd.csv [mode,m,freq_hz,psd]
def _run_beat_notes(s: Scenario, threads: int):
    study = s.study
    rate = study["control_rate"]
    n = int(round(study["duration"] * rate))
    nr = NoiseRealization(s.system, n, rate, seed=s.master_seed)
    band = tuple(study["plateau_band"])
    # warm the shared caches serially so parallel workers only read
    nr.lock_residual
    for m in set(study["lines"]) | {0, s.system.lock.locked_index}:
        nr.fiber_fluct(m)

    def one(key):
        # the FWHM read of a narrow locked tone needs the finest RBW; wide
        # unlocked lines need a coarser RBW with many segment averages, and the
        # plateau uses a coarse, well-averaged PSD for both
        mode, m = key
        phase = nr.channel_phase(m, mode)
        wave = ComplexWaveform(np.exp(1j * phase.samples), rate)
        rbw = study["rbw"] if mode == "locked_combs" else study["rbw_unlocked"]
        freqs, psd = psd_welch(wave, rbw)
        width, limited = fwhm(freqs, psd)
        freqs_c, psd_c = psd_welch(wave, study["rbw_plateau"])
        plateau = plateau_level(freqs_c, psd_c, band)
        keep = np.abs(freqs_c) <= study["psd_max_freq"]
        fk, pk = freqs_c[keep], psd_c[keep]
        step = max(1, len(fk) // study["psd_max_points"])
        return (width, limited, plateau, rbw, fk[::step], pk[::step])

    keys = [(mode, m) for mode in ("locked_combs", "unlocked_combs") for m in study["lines"]]
    results = _map_ordered(one, keys, threads)

    metrics_rows, psd_rows = [], []
    summary = {}
    for (mode, m), (width, limited, plateau, rbw, fk, pk) in results.items():
        metrics_rows.append([mode, m, width, limited, rbw, plateau])
        psd_rows.extend([mode, m, f, p] for f, p in zip(fk, pk))
        summary[f"{mode}_m{m}_fwhm_hz"] = width
        summary[f"{mode}_m{m}_plateau"] = plateau
    tables = {
        "metrics.csv": (
            ["mode", "m", "fwhm_hz", "resolution_limited", "rbw_hz", "plateau_psd"],
            metrics_rows,
        ),
        "beat_psd.csv": (["mode", "m", "freq_hz", "psd"], psd_rows),
    }
    return tables, summary


# allan: allan.csv [mode,m,gate_s,adev_hz]
def _run_allan(s: Scenario, threads: int):
    study = s.study
    rate = study["control_rate"]
    decimate = int(study["decimate"])
    m = int(study["line"])
    tau0 = decimate / rate
    beats = simulate_longrun_beats(
        s.system, [m], study["duration"], rate, s.master_seed, decimate
    )
    gates = np.asarray(study["gate_times"])
    rows = []
    summary = {}
    for mode_key, mode_name in (("locked", "locked_combs"), ("unlocked", "unlocked_combs")):
        phase = beats[mode_key][m]
        freq = np.diff(phase) / (2.0 * np.pi * tau0)
        adev = allan_deviation(freq, tau0, gates)
        rows.extend([mode_name, m, g, a] for g, a in zip(gates, adev))
        summary[f"{mode_name}_adev"] = {f"{g:g}": float(a) for g, a in zip(gates, adev)}
    return {"allan.csv": (["mode", "m", "gate_s", "adev_hz"], rows)}, summary


def _channel_frame(
    nr: NoiseRealization, m: int, mode: str, mod: ModulationConfig, snr_db: float, seed: int
):
    """Transmit + receive one channel at symbol rate; returns (tx, rx symbols)."""
    tx = random_frame(mod.frame_length, seed, channel_index=m)
    phase = nr.channel_phase(m, mode)
    rx = tx.symbols * np.exp(1j * phase.samples)
    if np.isfinite(snr_db):
        es = float(np.mean(np.abs(tx.symbols) ** 2))
        sigma = math.sqrt(es / 10.0 ** (snr_db / 10.0) / 2.0)
        rng = stream_rng(seed, f"symbol-noise-{mode}", m)
        rx = rx + sigma * (
            rng.standard_normal(rx.size) + 1j * rng.standard_normal(rx.size)
        )
    return tx, rx


_DATAPATH_HEADER = [
    "mode", "seed", "channel_m", "ber", "bit_errors", "bit_count",
    "snr_db", "evm_pct", "foe_err_hz", "i", "cpe_ops", "cycle_slips",
]


def _run_datapath(s: Scenario, threads: int, modes: list[str]):
    """Shared engine for interconnect / foe_accuracy: one row per channel."""
    mod, dsp_cfg = s.mod, s.dsp
    block_duration = dsp_cfg.cpe_block / mod.baud
    blocks = mod.frame_length // dsp_cfg.cpe_block
    ops = math.ceil(blocks / max(dsp_cfg.skip_blocks, 1))

    def one_seed(seed):
        nr = NoiseRealization(s.system, mod.frame_length, mod.baud, seed=seed)
        rows, traces = [], []
        for mode in modes:
            for m in s.channels:
                tx, rx = _channel_frame(nr, m, mode, mod, s.snr_db, seed)
                trace, corrected = cpe_pilot_block(
                    rx, tx.symbols, dsp_cfg, block_duration
                )
                ratio, errors, count = ber(qam16_demap(corrected), tx.bits)
                evm = evm_percent(corrected, tx.symbols)
                foe_err = (
                    residual_foe_from_slope(trace)
                    if trace.phase_estimates.size >= 10
                    else float("nan")
                )
                rows.append([
                    mode, seed, m, ratio, errors, count,
                    snr_from_evm(evm), evm, foe_err,
                    dsp_cfg.skip_blocks, ops, trace.cycle_slips,
                ])
                if s.study.get("dump_traces"):
                    traces.extend(
                        [mode, seed, m, int(b), t, p]
                        for b, t, p in zip(
                            trace.block_indices,
                            trace.estimate_times,
                            trace.phase_estimates,
                        )
                    )
        return rows, traces

    results = _map_ordered(one_seed, list(s.seeds), threads)
    rows = [row for seed in s.seeds for row in results[seed][0]]
    tables = {"metrics.csv": (_DATAPATH_HEADER, rows)}
    if s.study.get("dump_traces"):
        trace_rows = [row for seed in s.seeds for row in results[seed][1]]
        tables["traces.csv"] = (
            ["mode", "seed", "channel_m", "block", "time_s", "phase_rad"],
            trace_rows,
        )
    summary = {}
    for mode in modes:
        bers = [r[3] for r in rows if r[0] == mode]
        foes = [abs(r[8]) for r in rows if r[0] == mode and np.isfinite(r[8])]
        summary[f"{mode}_max_ber"] = max(bers)
        if foes:
            summary[f"{mode}_max_abs_foe_hz"] = max(foes)
            summary[f"{mode}_rms_foe_hz"] = float(np.sqrt(np.mean(np.square(foes))))
    return tables, summary


def _run_interconnect(s: Scenario, threads: int):
    return _run_datapath(s, threads, s.coherence_modes)


def _run_foe_accuracy(s: Scenario, threads: int):
    modes = s.coherence_modes
    if "unlocked_combs" not in modes:
        modes = list(modes) + ["unlocked_combs"]
    return _run_datapath(s, threads, modes)


# cpe_sweep: sweep.csv [mode,seed,channel_m,i,ber]; summary i_max per mode/seed
def _run_cpe_sweep(s: Scenario, threads: int):
    study = s.study
    mod = s.mod
    channel = s.channels[0]
    block_duration = s.dsp.cpe_block / mod.baud
    grid = study["sweep_i"]

    def one_seed(seed):
        nr = NoiseRealization(s.system, mod.frame_length, mod.baud, seed=seed)
        rows = []
        for mode in s.coherence_modes:
            tx, rx = _channel_frame(nr, channel, mode, mod, s.snr_db, seed)
            for i in grid:
                cfg_i = replace(s.dsp, skip_blocks=i)
                _, corrected = cpe_pilot_block(rx, tx.symbols, cfg_i, block_duration)
                ratio, _, _ = ber(qam16_demap(corrected), tx.bits)
                rows.append([mode, seed, channel, i, ratio])
        return rows

    results = _map_ordered(one_seed, list(s.seeds), threads)
    rows = [row for seed in s.seeds for row in results[seed]]

    target = study["target_ber"]
    summary: dict = {"target_ber": target, "i_max": {}}
    for mode in s.coherence_modes:
        per_seed = []
        for seed in s.seeds:
            passing = [r[3] for r in rows if r[0] == mode and r[1] == seed and r[4] <= target]
            per_seed.append(max(passing) if passing else -1)
        summary["i_max"][mode] = {
            "per_seed": per_seed,
            "median": float(np.median(per_seed)),
        }
    return {"sweep.csv": (["mode", "seed", "channel_m", "i", "ber"], rows)}, summary


# master_slave: metrics.csv [mode,seed,channel_m,role,ber_individual,ber_steered,...]
def _run_master_slave(s: Scenario, threads: int):
    mod, dsp_cfg = s.mod, s.dsp
    master = int(s.study["master"])
    block_duration = dsp_cfg.cpe_block / mod.baud
    slaves = [m for m in s.channels if m != master]
    if master not in s.channels:
        raise ConfigError("study.master", "master must be listed in channels")

    def one_seed(seed):
        nr = NoiseRealization(s.system, mod.frame_length, mod.baud, seed=seed)
        rows = []
        for mode in s.coherence_modes:
            frames = {
                m: _channel_frame(nr, m, mode, mod, s.snr_db, seed)
                for m in [master] + slaves
            }
            tx_m, rx_m = frames[master]
            master_trace, corrected_m = cpe_pilot_block(
                rx_m, tx_m.symbols, dsp_cfg, block_duration
            )
            ratio_m, _, _ = ber(qam16_demap(corrected_m), tx_m.bits)
            rows.append([mode, seed, master, "master", ratio_m, ratio_m])
            for m in slaves:
                tx_s, rx_s = frames[m]
                _, corrected_ind = cpe_pilot_block(
                    rx_s, tx_s.symbols, dsp_cfg, block_duration
                )
                ratio_ind, _, _ = ber(qam16_demap(corrected_ind), tx_s.bits)
                _, corrected_sl = cpe_master_slave(
                    master_trace, master, m, rx_s, tx_s.symbols, dsp_cfg.cpe_block
                )
                n = corrected_sl.size
                ratio_sl, _, _ = ber(
                    qam16_demap(corrected_sl), tx_s.bits[: 4 * n]
                )
                rows.append([mode, seed, m, "slave", ratio_ind, ratio_sl])
        return rows

    results = _map_ordered(one_seed, list(s.seeds), threads)
    rows = [row for seed in s.seeds for row in results[seed]]
    slave_rows = [r for r in rows if r[3] == "slave"]
    summary = {
        "master": master,
        "max_slave_ber": max(r[5] for r in slave_rows),
        "max_penalty": max(
            r[5] / max(r[4], 1e-12) for r in slave_rows
        ),
    }
    header = ["mode", "seed", "channel_m", "role", "ber_individual", "ber_steered"]
    return {"metrics.csv": (header, rows)}, summary


# xpm: metrics.csv [case,fwhm_hz,resolution_limited,rbw_hz]
def _run_xpm(s: Scenario, threads: int):
    study = s.study
    rate = study["sample_rate"]
    n = int(study["n_samples"])
    link = s.system.link
    scaled = replace(link, gamma=link.gamma * study["gamma_scale"])
    amp = math.sqrt(10.0 ** (link.launch_power_dbm / 10.0) * 1e-3)
    sps = int(round(rate / s.mod.baud))
    n_sym = n // sps + 1
    rbw = rate / study["nperseg"]

    pilot = ComplexWaveform(np.full(n, amp, dtype=complex), rate, 0.0)
    data = []
    for k, offset in enumerate(study["data_offsets"]):
        frame = random_frame(n_sym, s.master_seed, channel_index=k, stream="xpm-bits")
        samples = np.repeat(frame.symbols, sps)[:n] * amp
        data.append(ComplexWaveform(samples, rate, offset))

    def one(case):
        cfg = scaled if case == "dispersive" else replace(scaled, beta2=0.0)
        out = split_step_propagate(
            [pilot] + data, cfg, n_steps=int(study["n_steps"]),
            demux_bandwidth=study["demux_bandwidth"],
        )
        freqs, psd = psd_welch(out[0], rbw)
        width, limited = fwhm(freqs, psd)
        return width, limited

    results = _map_ordered(one, ["dispersive", "dispersionless"], threads)
    rows = [[case, w, lim, rbw] for case, (w, lim) in results.items()]
    summary = {
        f"{case}_fwhm_hz": w for case, (w, _) in results.items()
    }
    summary["rbw_hz"] = rbw
    header = ["case", "fwhm_hz", "resolution_limited", "rbw_hz"]
    return {"metrics.csv": (header, rows)}, summary


# cpe_budget: metrics.csv [label,skip_blocks,n_channels,master_slave,cpe_ops]
def _run_cpe_budget(s: Scenario, threads: int):
    rows = []
    summary = {}
    for k, case in enumerate(s.study["cases"]):
        case = _require_mapping(case, f"study.cases[{k}]")
        label = str(case.get("label", f"case{k}"))
        i = _coerce(case.get("skip_blocks", s.dsp.skip_blocks), int, f"study.cases[{k}].skip_blocks")
        n_ch = _coerce(case.get("n_channels", len(s.channels)), int, f"study.cases[{k}].n_channels")
        master = bool(case.get("master", False))
        cfg = replace(s.dsp, skip_blocks=i, master_channel=1 if master else None)
        ops = cpe_op_count(cfg, s.mod.frame_length, list(range(1, n_ch + 1)))
        rows.append([label, i, n_ch, master, ops])
        summary[label] = ops
    header = ["label", "skip_blocks", "n_channels", "master_slave", "cpe_ops"]
    return {"metrics.csv": (header, rows)}, summary


_RUNNERS = {
    "beat_notes": _run_beat_notes,
    "allan": _run_allan,
    "interconnect": _run_interconnect,
    "foe_accuracy": _run_foe_accuracy,
    "cpe_sweep": _run_cpe_sweep,
    "master_slave": _run_master_slave,
    "xpm": _run_xpm,
    "cpe_budget": _run_cpe_budget,
}
