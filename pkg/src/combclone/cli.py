"""Command-line entry point.

Subcommands:
  run <config>       execute a scenario, write one run directory of artifacts
  sweep <config>     execute a sweep scenario (one CSV row per grid point)
  validate <config>  schema-check a config and echo the resolved scenario
  report <run-dir>   render figures and a text summary for a finished run

The output root is ``--out``, else the ``COMBCLONE_OUT`` environment
variable, else ``./runs``; each run writes into ``<root>/<scenario name>``.
Errors are reported as one JSON object on stderr and a nonzero exit status
(2 for config/usage errors, 1 for runtime failures).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import yaml

from combclone.scenarios import (
    ConfigError,
    build_scenario,
    load_config,
    resolved_config,
    run_scenario,
)

PRESET_DIR = Path(__file__).parent / "presets"


def _fail(kind: str, message: str, code: int, **extra):
    payload = {"error": kind, "message": message, **extra}
    print(json.dumps(payload), file=sys.stderr)
    raise SystemExit(code)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="combclone",
        description="Coherent interconnect simulator on coherence-cloned microcombs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", nargs="?", help="scenario YAML (path or preset name)")
        p.add_argument("--config", dest="config_flag", metavar="PATH",
                       help="scenario YAML, alternative to the positional")
        p.add_argument("--seed", type=int, metavar="N",
                       help="override the scenario seed list with one seed")
        p.add_argument("--out", metavar="DIR", help="output root directory")
        p.add_argument("--threads", type=int, default=1, metavar="N",
                       help="worker threads (results are thread-count invariant)")
        p.add_argument("--full", action="store_true",
                       help="apply the scenario's full-scale overrides")
        return p

    add_config_command("run", "execute one scenario")
    add_config_command("sweep", "execute a sweep scenario")
    add_config_command("validate", "validate a config without running it")

    rep = sub.add_parser("report", help="render figures for a finished run")
    rep.add_argument("run_dir", help="run directory written by `run`/`sweep`")
    return parser


def _resolve_config_path(args) -> Path:
    if args.config and args.config_flag:
        _fail("usage", "give the config either positionally or via --config, not both", 2)
    raw = args.config or args.config_flag
    if not raw:
        _fail("usage", "a config path is required", 2)
    path = Path(raw)
    if path.exists():
        return path
    preset = PRESET_DIR / f"{raw.replace('-', '_')}.yaml"
    if preset.exists():
        return preset
    _fail("config", f"config file not found: {raw}", 2, field="config")


def _load_scenario(args):
    path = _resolve_config_path(args)
    try:
        raw = load_config(path)
        return build_scenario(raw, full=args.full, seed_override=args.seed)
    except ConfigError as exc:
        _fail("config", str(exc), 2, field=exc.field_path)
    except yaml.YAMLError as exc:
        _fail("config", f"unreadable YAML: {exc}", 2)


def _out_root(args) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get("COMBCLONE_OUT")
    return Path(env) if env else Path("runs")


def _execute(args, require_sweep: bool):
    scenario = _load_scenario(args)
    if require_sweep and scenario.run_type != "cpe_sweep":
        _fail(
            "config",
            f"`sweep` needs a cpe_sweep scenario, got run_type {scenario.run_type!r}",
            2,
            field="run_type",
        )
    out_dir = _out_root(args) / scenario.name
    try:
        report = run_scenario(scenario, out_dir=out_dir, threads=args.threads)
    except Exception as exc:  # noqa: BLE001 - surfaced as structured error
        _fail("runtime", f"{type(exc).__name__}: {exc}", 1)
    print(f"run directory: {report.out_dir}")
    for filename in report.tables:
        print(f"  wrote {filename}")
    for key, value in report.summary.items():
        print(f"  {key}: {value}")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "validate":
        scenario = _load_scenario(args)
        yaml.safe_dump(resolved_config(scenario), sys.stdout, sort_keys=False)
        return 0
    if args.command in ("run", "sweep"):
        return _execute(args, require_sweep=args.command == "sweep")
    if args.command == "report":
        from combclone.plots import render_run

        run_dir = Path(args.run_dir)
        try:
            written = render_run(run_dir)
        except FileNotFoundError as exc:
            _fail("usage", str(exc), 2)
        except Exception as exc:  # noqa: BLE001
            _fail("runtime", f"{type(exc).__name__}: {exc}", 1)
        meta = json.loads((run_dir / "run.json").read_text())
        print(f"{meta['name']} ({meta['run_type']}, seed {meta['master_seed']})")
        for key, value in meta.get("summary", {}).items():
            print(f"  {key}: {value}")
        for path in written:
            print(f"  wrote {path}")
        return 0
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
