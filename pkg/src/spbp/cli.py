"""Command-line driver: ``spbp simulate | selftest | sweep``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError, SPBPError
from .localization import ScenarioConfig, ScenarioLog, rmse, run_scenario

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

LOG_COLUMNS = (
    ["run", "time", "sensor"]
    + [f"truth_{c}" for c in ("x1", "x2", "v1", "v2")]
    + [f"mean_{c}" for c in ("x1", "x2", "v1", "v2")]
    + [f"cov_{i}{j}" for i in range(1, 5) for j in range(i, 5)]
    + ["location_error", "velocity_error"]
)
RMSE_COLUMNS = ["time", "rmse_location", "rmse_velocity", "rmse_both"]
SWEEP_PARAMS = {"sigma_n2": float, "P": int, "runs": int}


class ConfigFileError(Exception):
    pass


def _fmt(value: Any) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


def _key_lines(text: str) -> dict[str, int]:
    """Line number of each top-level key (1-based), for diagnostics."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: k.start_mark.line + 1 for k, _ in node.value if isinstance(k, yaml.ScalarNode)}


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a YAML (or JSON) scenario file; a run manifest is accepted too.

    An empty file gives the built-in default scenario.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigFileError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f":{mark.line + 1}" if mark is not None else ""
        raise ConfigFileError(f"{path}{where}: malformed config: {exc}") from None
    lines = _key_lines(text)
    if isinstance(data, dict) and "config" in data and "code_version" in data:
        data = data["config"]
        lines = {}
    try:
        return ScenarioConfig.from_dict(data)
    except ConfigError as exc:
        where = f":{lines[exc.field]}" if exc.field in lines else ""
        raise ConfigFileError(f"{path}{where}: field {exc}") from None


def write_logs(path: Path, logs: ScenarioLog) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for row in logs.records():
            writer.writerow([_fmt(v) for v in row])


def write_rmse(path: Path, logs: ScenarioLog) -> None:
    series = [rmse(logs, c) for c in ("location", "velocity", "both")]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RMSE_COLUMNS)
        for t in range(len(series[0])):
            writer.writerow([str(t + 1)] + [_fmt(s[t]) for s in series])


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def write_manifest(path: Path, cfg: ScenarioConfig, started: str, outputs: dict[str, str], command: str) -> None:
    manifest = {
        "command": command,
        "code_version": __version__,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "started": started,
        "finished": _now(),
        "outputs": outputs,
    }
    path.write_text(json.dumps(manifest, indent=2) + "\n")


def _apply_overrides(cfg: ScenarioConfig, args: argparse.Namespace) -> ScenarioConfig:
    overrides = {}
    if getattr(args, "runs", None) is not None:
        overrides["runs"] = args.runs
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        cfg = _apply_overrides(load_config(args.config), args)
    except (ConfigFileError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    started = _now()
    try:
        logs = run_scenario(cfg, workers=args.workers)
    except SPBPError as exc:
        print(f"error: simulation failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_logs(out / "logs.csv", logs)
    write_rmse(out / "rmse.csv", logs)
    outputs = {"logs": "logs.csv", "rmse": "rmse.csv", "manifest": "manifest.json"}
    write_manifest(out / "manifest.json", cfg, started, outputs, "simulate")
    final = rmse(logs, "location")[-1]
    print(f"{cfg.runs} runs x {cfg.T} steps; final location RMSE {final:.4f}; outputs in {out}")
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace) -> int:
    from .selftest import run_checks

    results = run_checks(inject_fault=args.inject_fault)
    width = max(len(name) for name, _, _ in results)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    failed = sum(not ok for _, ok, _ in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_RUNTIME


def cmd_sweep(args: argparse.Namespace) -> int:
    cast = SWEEP_PARAMS[args.param]
    try:
        values = sorted({cast(v) for v in args.values.split(",") if v.strip()})
    except ValueError:
        print(f"error: --values: cannot parse {args.values!r} as {cast.__name__}", file=sys.stderr)
        return EXIT_CONFIG
    if not values:
        print("error: --values: empty value list", file=sys.stderr)
        return EXIT_CONFIG
    try:
        base = load_config(args.config)
        configs = [dataclasses.replace(base, **{args.param: v}) for v in values]
    except (ConfigFileError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out)
    rows = []
    for value, cfg in zip(values, configs):
        started = _now()
        try:
            logs = run_scenario(cfg, workers=args.workers)
        except SPBPError as exc:
            print(f"error: {args.param}={value}: simulation failed: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        sub = out / f"{args.param}={_fmt(value)}"
        sub.mkdir(parents=True, exist_ok=True)
        write_rmse(sub / "rmse.csv", logs)
        write_manifest(sub / "manifest.json", cfg, started, {"rmse": "rmse.csv"}, "sweep")
        loc = rmse(logs, "location")
        rows.append([_fmt(value), sub.name, str(cfg.seed), _fmt(loc.mean()), _fmt(loc[-1])])
        print(f"{args.param}={value}: final location RMSE {loc[-1]:.4f}")

    with (out / "index.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([args.param, "directory", "seed", "mean_rmse_location", "final_rmse_location"])
        writer.writerows(rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spbp", description="Sigma point belief propagation simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the cooperative localization scenario")
    sim.add_argument("--config", required=True, help="YAML/JSON scenario file (empty file = defaults)")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--runs", type=int, help="override the number of Monte Carlo runs")
    sim.add_argument("--seed", type=int, help="override the root seed")
    sim.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    sim.set_defaults(func=cmd_simulate)

    st = sub.add_parser("selftest", help="run built-in consistency checks")
    st.add_argument("--inject-fault", action="store_true", help="corrupt one check to exercise the harness")
    st.set_defaults(func=cmd_selftest)

    sw = sub.add_parser("sweep", help="rerun the scenario over values of one parameter")
    sw.add_argument("--config", required=True)
    sw.add_argument("--param", required=True, choices=sorted(SWEEP_PARAMS))
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.add_argument("--out", required=True)
    sw.add_argument("--workers", type=int, default=1)
    sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
