"""Figure rendering for completed run directories.

Reads the CSV tables a run produced and writes PNG figures next to them; the
CSVs stay the canonical artifact, figures are a convenience layer on top.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FEC_THRESHOLD = 3.8e-3


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    return header, rows


def _column(header, rows, name, cast=float):
    idx = header.index(name)
    return [cast(r[idx]) for r in rows]


def _save(fig, run_dir: Path, name: str, written: list[Path]):
    path = run_dir / name
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(path)


def _plot_beat_notes(run_dir: Path, written: list[Path]):
    header, rows = _read_csv(run_dir / "beat_psd.csv")
    curves = defaultdict(list)
    for r in rows:
        curves[(r[0], int(r[1]))].append((float(r[2]), float(r[3])))
    fig, axes = plt.subplots(1, 2, figsize=(11, 4), sharey=True)
    for ax, mode in zip(axes, ("locked_combs", "unlocked_combs")):
        for (cmode, m), pts in sorted(curves.items()):
            if cmode != mode:
                continue
            pts = np.array(sorted(pts))
            ax.semilogy(pts[:, 0] / 1e3, pts[:, 1], lw=0.8, label=f"m = {m}")
        ax.set_title(mode.replace("_", " "))
        ax.set_xlabel("offset from nominal beat (kHz)")
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
    axes[0].set_ylabel("PSD (1/Hz)")
    _save(fig, run_dir, "beat_psd.png", written)

    header, rows = _read_csv(run_dir / "metrics.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    for mode, marker in (("locked_combs", "o"), ("unlocked_combs", "s")):
        sel = [r for r in rows if r[0] == mode]
        ms = _column(header, sel, "m", int)
        widths = _column(header, sel, "fwhm_hz")
        ax.semilogy(ms, widths, marker, label=mode.replace("_", " "))
    ax.set_xlabel("line index m")
    ax.set_ylabel("beat FWHM (Hz)")
    ax.grid(alpha=0.3)
    ax.legend()
    _save(fig, run_dir, "fwhm.png", written)


def _plot_allan(run_dir: Path, written: list[Path]):
    header, rows = _read_csv(run_dir / "allan.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    for mode, marker in (("locked_combs", "o"), ("unlocked_combs", "s")):
        sel = [r for r in rows if r[0] == mode]
        ax.loglog(
            _column(header, sel, "gate_s"),
            _column(header, sel, "adev_hz"),
            marker + "-",
            label=mode.replace("_", " "),
        )
    ax.set_xlabel("gate time (s)")
    ax.set_ylabel("Allan deviation (Hz)")
    ax.grid(alpha=0.3, which="both")
    ax.legend()
    _save(fig, run_dir, "allan.png", written)


def _plot_datapath(run_dir: Path, written: list[Path]):
    header, rows = _read_csv(run_dir / "metrics.csv")
    modes = sorted({r[0] for r in rows})
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    for mode in modes:
        sel = [r for r in rows if r[0] == mode]
        ms = _column(header, sel, "channel_m", int)
        axes[0].semilogy(
            ms, np.maximum(_column(header, sel, "ber"), 1e-7), "o", label=mode
        )
        axes[1].semilogy(
            ms, np.abs(_column(header, sel, "foe_err_hz")), "o", label=mode
        )
    axes[0].axhline(FEC_THRESHOLD, color="r", ls="--", lw=1, label="FEC threshold")
    axes[0].set_xlabel("channel line index m")
    axes[0].set_ylabel("BER")
    axes[1].set_xlabel("channel line index m")
    axes[1].set_ylabel("|residual frequency offset| (Hz)")
    for ax in axes:
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
    _save(fig, run_dir, "channels.png", written)

    traces = run_dir / "traces.csv"
    if traces.exists():
        header, rows = _read_csv(traces)
        fig, ax = plt.subplots(figsize=(7, 4))
        for mode in sorted({r[0] for r in rows}):
            sel = [r for r in rows if r[0] == mode]
            t = np.array(_column(header, sel, "time_s")) * 1e6
            ax.plot(t, np.unwrap(_column(header, sel, "phase_rad")), lw=0.8, label=mode)
        ax.set_xlabel("time (us)")
        ax.set_ylabel("CPE estimate, unwrapped (rad)")
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
        _save(fig, run_dir, "cpe_traces.png", written)


def _plot_cpe_sweep(run_dir: Path, written: list[Path]):
    header, rows = _read_csv(run_dir / "sweep.csv")
    fig, ax = plt.subplots(figsize=(6.5, 4))
    for mode in sorted({r[0] for r in rows}):
        by_i = defaultdict(list)
        for r in rows:
            if r[0] == mode:
                by_i[int(r[3])].append(float(r[4]))
        grid = sorted(by_i)
        med = [np.median(by_i[i]) for i in grid]
        ax.loglog(
            [i + 1 for i in grid], np.maximum(med, 1e-7), "o-", label=mode
        )
    ax.axhline(FEC_THRESHOLD, color="r", ls="--", lw=1, label="FEC threshold")
    ax.set_xlabel("CPE skip factor i + 1")
    ax.set_ylabel("median BER")
    ax.grid(alpha=0.3, which="both")
    ax.legend(fontsize=8)
    _save(fig, run_dir, "cpe_sweep.png", written)


def _plot_master_slave(run_dir: Path, written: list[Path]):
    header, rows = _read_csv(run_dir / "metrics.csv")
    slaves = [r for r in rows if r[3] == "slave"]
    ms = _column(header, slaves, "channel_m", int)
    fig, ax = plt.subplots(figsize=(6.5, 4))
    width = 0.35
    x = np.arange(len(ms))
    ax.bar(x - width / 2, _column(header, slaves, "ber_individual"), width,
           label="individual CPE")
    ax.bar(x + width / 2, _column(header, slaves, "ber_steered"), width,
           label="master-slave CPE")
    ax.axhline(FEC_THRESHOLD, color="r", ls="--", lw=1, label="FEC threshold")
    ax.set_yscale("log")
    ax.set_xticks(x, [str(m) for m in ms])
    ax.set_xlabel("slave channel line index m")
    ax.set_ylabel("BER")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, axis="y")
    _save(fig, run_dir, "master_slave.png", written)


def _plot_xpm(run_dir: Path, written: list[Path]):
    header, rows = _read_csv(run_dir / "metrics.csv")
    cases = _column(header, rows, "case", str)
    widths = _column(header, rows, "fwhm_hz")
    rbw = _column(header, rows, "rbw_hz")[0]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar(cases, widths)
    ax.axhline(rbw, color="k", ls=":", lw=1, label="resolution bandwidth")
    ax.set_yscale("log")
    ax.set_ylabel("pilot beat FWHM (Hz)")
    ax.legend(fontsize=8)
    _save(fig, run_dir, "xpm.png", written)


def _plot_cpe_budget(run_dir: Path, written: list[Path]):
    header, rows = _read_csv(run_dir / "metrics.csv")
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar(_column(header, rows, "label", str), _column(header, rows, "cpe_ops", int))
    ax.set_yscale("log")
    ax.set_ylabel("CPE operations per frame")
    _save(fig, run_dir, "cpe_budget.png", written)


_PLOTTERS = {
    "beat_notes": _plot_beat_notes,
    "allan": _plot_allan,
    "interconnect": _plot_datapath,
    "foe_accuracy": _plot_datapath,
    "cpe_sweep": _plot_cpe_sweep,
    "master_slave": _plot_master_slave,
    "xpm": _plot_xpm,
    "cpe_budget": _plot_cpe_budget,
}


def render_run(run_dir) -> list[Path]:
    """Render all figures for a finished run; returns the files written."""
    run_dir = Path(run_dir)
    meta_path = run_dir / "run.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"{meta_path} not found; not a run directory")
    meta = json.loads(meta_path.read_text())
    run_type = meta.get("run_type")
    if run_type not in _PLOTTERS:
        raise ValueError(f"unknown run type {run_type!r} in run.json")
    written: list[Path] = []
    _PLOTTERS[run_type](run_dir, written)
    return written
