"""Command-line front end.

Subcommands: simulate, charge, ergodic, error, order, diagnose, presets.
Experiment subcommands take a config file (--config) or a preset (--preset),
optional --set key=value overrides, a --seed override, and an output
directory.  Every run writes the statistics tables as CSV plus one plain-text
manifest; re-running the same config and seed reproduces the CSV bytes.

Exit codes: 0 success, 2 config/usage error, 3 numerical blow-up,
4 diagnose-mode check failure, 5 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

from .config import ConfigError, parse_config, serialize_config
from .diagnostics import run_diagnostic_suite
from .harness import (
    CSV_SCHEMA_VERSION,
    PACKAGE_VERSION,
    EnsembleBlowUp,
    RunRecord,
    base_manifest,
    charge_experiment,
    ergodic_experiment,
    ms_error,
    order_fit,
    resolve_initial,
)
from .integrator import BlowUpError, integrate, make_propagator
from .noise import GENERATOR_NAME, generate_path
from .presets import preset_config, preset_lines

__all__ = ["main", "run"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_DIAGNOSE = 4
EXIT_IO = 5


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_manifest(path: Path, manifest: dict, config_text: str | None,
                    command: str, overrides) -> None:
    lines = [f"command = {command}"]
    if overrides:
        lines.append("overrides = " + "; ".join(overrides))
    for key, value in manifest.items():
        lines.append(f"{key} = {value}")
    if config_text is not None:
        lines.append("")
        lines.append("# config echo")
        for cfg_line in config_text.rstrip("\n").splitlines():
            lines.append("| " + cfg_line)
    path.write_text("\n".join(lines) + "\n")


def _load_config(args):
    if args.preset and args.config:
        raise ConfigError("give either --config or --preset, not both")
    if args.preset:
        try:
            text = serialize_config(preset_config(args.preset))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    elif args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from None
    else:
        raise ConfigError("an experiment subcommand needs --config PATH or --preset NAME")
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"noise.seed={args.seed}")
    return parse_config(text, overrides)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(record: RunRecord, out: Path, name: str, config, command: str, overrides) -> None:
    _write_csv(out / f"{name}.csv", record.columns, record.rows)
    _write_manifest(out / "manifest.txt", record.manifest,
                    serialize_config(config), command, overrides)


def _cmd_experiment(args, command: str) -> int:
    config = _load_config(args)
    if config.kind != command:
        raise ConfigError(
            f"config kind '{config.kind}' does not match subcommand '{command}' "
            f"(use --set kind={command} to retarget)")
    out = _out_dir(args)
    if command == "charge":
        record = charge_experiment(config, chunk_size=args.chunk_size)
        _emit(record, out, "charge", config, command, args.set or [])
    elif command == "ergodic":
        record = ergodic_experiment(config, chunk_size=args.chunk_size)
        _emit(record, out, "ergodic", config, command, args.set or [])
    elif command == "error":
        record = ms_error(config, chunk_size=args.chunk_size)
        _emit(record, out, "error", config, command, args.set or [])
    elif command == "order":
        record = ms_error(config, chunk_size=args.chunk_size)
        fit = order_fit([(tau, err) for tau, _, err, _ in record.rows])
        _write_csv(out / "fit.csv", ("slope", "intercept", "rms_residual"),
                   [(fit.slope, fit.intercept, fit.residual)])
        record.manifest["fitted_slope"] = repr(fit.slope)
        _emit(record, out, "order", config, command, args.set or [])
        print(f"fitted slope: {fit.slope:.4f}")
    else:
        raise ConfigError(f"unhandled experiment subcommand {command!r}")
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    config = _load_config(args)
    if config.kind != "simulate":
        raise ConfigError(
            f"config kind '{config.kind}' does not match subcommand 'simulate'")
    out = _out_dir(args)
    t0 = time.perf_counter()
    psi0 = resolve_initial(config.grid, config.initial)
    prop = make_propagator(config.grid, config.tau, config.params.alpha)
    path = None
    if config.params.epsilon > 0.0:
        path = generate_path(config.noise, config.tau, config.n_steps, 0)
    traj = integrate(psi0, prop, config.params, config.noise, path,
                     n_steps=config.n_steps, record_stride=config.record_stride)
    rows = []
    for i, step_idx in enumerate(traj.step_indices):
        for j in range(config.grid.J):
            z = traj.states[i, j]
            rows.append((int(step_idx), float(traj.times[i]), j + 1, z.real, z.imag))
    manifest = base_manifest(config)
    manifest["wall_time_s"] = f"{time.perf_counter() - t0:.3f}"
    _write_csv(out / "trajectory.csv", ("step", "t", "node", "re", "im"), rows)
    _write_manifest(out / "manifest.txt", manifest, serialize_config(config),
                    "simulate", args.set or [])
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    out = _out_dir(args)
    seed = 0 if args.seed is None else args.seed
    rows = run_diagnostic_suite(seed=seed)
    _write_csv(out / "diagnostics.csv",
               ("check", "step", "node", "residual", "tolerance", "passed"),
               [(r.check, r.step, r.node, r.residual, r.tolerance, r.passed) for r in rows])
    manifest = {
        "schema": CSV_SCHEMA_VERSION,
        "version": PACKAGE_VERSION,
        "generator": GENERATOR_NAME,
        "kind": "diagnose",
        "seed": str(seed),
    }
    _write_manifest(out / "manifest.txt", manifest, None, "diagnose", args.set or [])
    failures = [r for r in rows if not r.passed]
    by_check = {}
    for r in rows:
        ok, total = by_check.get(r.check, (0, 0))
        by_check[r.check] = (ok + (1 if r.passed else 0), total + 1)
    for check in sorted(by_check):
        ok, total = by_check[check]
        print(f"{'PASS' if ok == total else 'FAIL'} {check}: {ok}/{total}")
    print(f"wrote {out}")
    return EXIT_DIAGNOSE if failures else EXIT_OK


def _cmd_presets() -> int:
    for name, desc in preset_lines():
        print(f"{name:11s} {desc}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsnls",
        description="Splitting scheme for the damped stochastic cubic Schrödinger "
                    "equation: simulations, structure diagnostics, Monte Carlo experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_config=True):
        if with_config:
            p.add_argument("--config", metavar="PATH", help="config file")
            p.add_argument("--preset", metavar="NAME", help="named preset (see `dsnls presets`)")
            p.add_argument("--set", action="append", metavar="KEY=VALUE",
                           help="override a config key (repeatable)")
        p.add_argument("--out", default="dsnls-out", metavar="DIR", help="output directory")
        p.add_argument("--seed", type=int, default=None, metavar="N", help="base seed override")
        p.add_argument("--chunk-size", type=int, default=None, metavar="M",
                       help="realizations per batch (results are independent of this)")

    for name in ("simulate", "charge", "ergodic", "error", "order"):
        add_common(sub.add_parser(name, help=f"run a '{name}' experiment"))
    diag = sub.add_parser("diagnose", help="machine-precision identity suite")
    diag.add_argument("--out", default="dsnls-out", metavar="DIR")
    diag.add_argument("--seed", type=int, default=None, metavar="N")
    diag.add_argument("--set", action="append", metavar="KEY=VALUE", help=argparse.SUPPRESS)
    sub.add_parser("presets", help="list available presets")
    return parser


def run(argv=None) -> int:
    """Parse arguments, dispatch, and map failures to documented exit codes."""
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "presets":
            return _cmd_presets()
        if args.command == "diagnose":
            return _cmd_diagnose(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        return _cmd_experiment(args, args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EnsembleBlowUp, BlowUpError) as exc:
        print(f"numerical blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run())
