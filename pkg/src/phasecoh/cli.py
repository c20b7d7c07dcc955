"""Command-line front end.

Subcommands::

    simulate     --config cfg.json --out traces.qph [--seed S] [--workers W]
    analyze      traces.qph --out DIR [--t-start T0] [--window T] [--m-list 1,2,4]
                 [--bin-width W] [--surface] [--config analysis.json]
    fit-rm       r_vs_m.csv --out fit.json [--two-parameter]
    fit-surface  r_surface.csv --out fit.json [--t-start T0]
    reproduce    fig2|fig3|fig4 --out DIR [--seed S] [--workers W] [--shots N]

Exit codes: 0 ok, 1 configuration error, 2 I/O error, 3 malformed data.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import presets, traceio
from .analysis import analyze
from .circstats import DEFAULT_BIN_WIDTH, WindowSpec
from .errors import ConfigError, DomainError, ResourceError, TraceFormatError
from .fitting import fit_r_vs_m, fit_surface
from .simulate import SimConfig, simulate_ensemble

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DATA = 0, 1, 2, 3
MODES = ("simulate", "analyze", "fit-rm", "fit-surface", "reproduce")
ANALYSIS_KEYS = {"t_start", "window", "m_list", "bin_width", "surface"}


class DataFormatError(Exception):
    """Input table or document does not have the expected layout."""


class _Parser(argparse.ArgumentParser):
    # usage mistakes are configuration errors, not argparse's default exit status 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    """Resolved settings for one CLI invocation."""

    mode: str
    input: str | None = None
    output: str | None = None
    sim: SimConfig | None = None
    t_start: float | None = None
    window: float = presets.DEFAULT_WINDOW
    m_list: tuple = presets.M_LIST
    bin_width: float = DEFAULT_BIN_WIDTH
    surface: bool = False
    seed: int | None = None
    workers: int = 1
    preset: str | None = None
    shots: int | None = None
    two_parameter: bool = False

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.output is None:
            raise ConfigError("--out is required")
        if self.mode != "simulate" and self.mode != "reproduce" and self.input is None:
            raise ConfigError(f"{self.mode} needs an input file")
        if self.workers < 1:
            raise ConfigError("worker count must be at least 1")
        if not self.m_list:
            raise ConfigError("M list is empty")
        if any(int(m) != m or m < 1 for m in self.m_list):
            raise ConfigError("M values must be positive integers")
        if not self.window > 0:
            raise ConfigError("window length must be positive")
        if not 0 < self.bin_width <= 2 * np.pi:
            raise ConfigError("bin width must lie in (0, 2*pi]")
        if self.mode == "reproduce" and self.preset not in presets.PRESETS:
            raise ConfigError(f"preset must be one of {presets.PRESETS}")
        return self


def parse_m_list(text) -> tuple:
    items = [s for s in str(text).replace(" ", "").split(",") if s]
    try:
        return tuple(int(s) for s in items)
    except ValueError as exc:
        raise ConfigError(f"bad M list {text!r}") from exc


def default_workers(env=None) -> int:
    env = os.environ if env is None else env
    raw = env.get("PHASECOH_WORKERS")
    if raw is None or raw == "":
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"PHASECOH_WORKERS={raw!r} is not an integer") from exc
    if n < 1:
        raise ConfigError("PHASECOH_WORKERS must be at least 1")
    return n


def _load_json(path):
    try:
        return traceio.read_json(path)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="phasecoh", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="mode", required=True)

    def common(p, seed=False, workers=False):
        p.add_argument("--out", required=True, help="output file or directory")
        p.add_argument("--config", help="JSON configuration file")
        if seed:
            p.add_argument("--seed", type=int, help="override the random seed")
        if workers:
            p.add_argument("--workers", type=int,
                           help="worker processes (default: $PHASECOH_WORKERS or 1)")

    p = sub.add_parser("simulate", help="simulate an ensemble of single-shot records")
    common(p, seed=True, workers=True)
    p.add_argument("--preset", choices=("device", "white-noise", "correlated-noise", "fig2"),
                   default="device", help="base configuration the JSON config overrides")

    p = sub.add_parser("analyze", help="circular statistics and figure tables for a trace file")
    p.add_argument("input")
    common(p)
    p.add_argument("--t-start", type=float, help="window start in ns (default: end of the drive pulse)")
    p.add_argument("--window", type=float, help="window length T in ns")
    p.add_argument("--m-list", help="comma-separated averaging sizes")
    p.add_argument("--bin-width", type=float, help="phase bin width in rad")
    p.add_argument("--surface", action="store_true", help="also tabulate R(t_start, T)")

    p = sub.add_parser("fit-rm", help="fit R(M) with the binomial emission law")
    p.add_argument("input")
    common(p)
    p.add_argument("--two-parameter", action="store_true", help="fit p and eta separately")

    p = sub.add_parser("fit-surface", help="fit the R(t_start, T) surface")
    p.add_argument("input")
    common(p)
    p.add_argument("--t-start", type=float, default=0.0,
                   help="time origin subtracted from the t_start column")

    p = sub.add_parser("reproduce", help="regenerate a figure-data bundle")
    p.add_argument("preset_name", nargs="?", metavar="PRESET")
    common(p, seed=True, workers=True)
    p.add_argument("--preset", help="alternative to the positional PRESET")
    p.add_argument("--shots", type=int, help="override the per-ensemble shot count")
    return parser


_SIM_BASES = {
    "device": presets.device_config,
    "white-noise": presets.white_noise_config,
    "correlated-noise": presets.correlated_noise_config,
    "fig2": presets.fig2_config,
}


def resolve(args) -> RunConfig:
    """Turn parsed arguments into a validated :class:`RunConfig`."""
    rc = RunConfig(mode=args.mode, output=args.out, input=getattr(args, "input", None))
    workers = getattr(args, "workers", None)
    rc.workers = workers if workers is not None else default_workers()
    rc.seed = getattr(args, "seed", None)
    doc = _load_json(args.config) if getattr(args, "config", None) else {}
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")

    if rc.mode == "simulate":
        base = _SIM_BASES[args.preset]().to_dict()
        base.update(doc)
        if rc.seed is not None:
            base["seed"] = rc.seed
        rc.sim = SimConfig.from_dict(base)
    elif rc.mode == "analyze":
        unknown = set(doc) - ANALYSIS_KEYS
        if unknown:
            raise ConfigError(f"unknown analysis keys: {sorted(unknown)}")
        rc.t_start = doc.get("t_start")
        rc.window = float(doc.get("window", rc.window))
        if "m_list" in doc:
            rc.m_list = tuple(int(m) for m in doc["m_list"])
        rc.bin_width = float(doc.get("bin_width", rc.bin_width))
        rc.surface = bool(doc.get("surface", False))
        if args.t_start is not None:
            rc.t_start = args.t_start
        if args.window is not None:
            rc.window = args.window
        if args.m_list is not None:
            rc.m_list = parse_m_list(args.m_list)
        if args.bin_width is not None:
            rc.bin_width = args.bin_width
        rc.surface = rc.surface or args.surface
    elif rc.mode == "fit-rm":
        rc.two_parameter = args.two_parameter or bool(doc.get("two_parameter", False))
    elif rc.mode == "fit-surface":
        rc.t_start = args.t_start
    elif rc.mode == "reproduce":
        if args.preset_name and args.preset and args.preset_name != args.preset:
            raise ConfigError("conflicting preset names")
        rc.preset = args.preset_name or args.preset or doc.get("preset")
        rc.shots = args.shots if args.shots is not None else doc.get("shots")
        if rc.seed is None:
            rc.seed = int(doc.get("seed", 0))
    return rc.validate()


def cmd_simulate(rc: RunConfig, stdout=None):
    stdout = stdout or sys.stdout
    cfg = rc.sim
    parent = os.path.dirname(os.path.abspath(rc.output))
    if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
        raise OSError(f"cannot write to {rc.output}")
    ts = simulate_ensemble(cfg, rc.workers)
    traceio.write_traceset(rc.output, ts)
    print(f"wrote {rc.output}: N={cfg.shots} dt={cfg.dt} ns p={cfg.emission_probability} "
          f"sigma_N={cfg.noise_sigma} seed={cfg.seed}", file=stdout)
    return EXIT_OK


def cmd_analyze(rc: RunConfig, stdout=None):
    stdout = stdout or sys.stdout
    ts = traceio.read_traceset(rc.input)
    t0 = rc.t_start
    if t0 is None:
        t0 = ts.start_time + presets.device_config().pulse_end
    window = WindowSpec(t0, rc.window)
    surface = None
    if rc.surface:
        surface = (np.array(presets.SURFACE_OFFSETS) + t0, np.array(presets.SURFACE_WINDOWS), 1)
    written = analyze(ts, rc.output, window, rc.m_list, rc.bin_width, surface)
    for name, path in written.items():
        print(f"{name}: {path}", file=stdout)
    return EXIT_OK


def _columns(path, required):
    try:
        cols = traceio.read_csv(path)
    except IndexError as exc:
        raise DataFormatError(f"{path}: ragged CSV rows") from exc
    missing = [c for c in required if c not in cols]
    if missing:
        raise DataFormatError(f"{path}: missing columns {missing}")
    for c in required:
        if cols[c].dtype.kind != "f":
            raise DataFormatError(f"{path}: column {c!r} is not numeric")
    return cols


def cmd_fit_rm(rc: RunConfig, stdout=None):
    stdout = stdout or sys.stdout
    cols = _columns(rc.input, ("M", "R"))
    res = fit_r_vs_m(cols["M"].astype(int), cols["R"], two_parameter=rc.two_parameter)
    traceio.write_json(rc.output, res.to_dict())
    est = ", ".join(f"{k}={v:.6g}" for k, v in res.parameter_estimates.items())
    print(f"{est} converged={res.converged} flags={res.flags}", file=stdout)
    return EXIT_OK


def cmd_fit_surface(rc: RunConfig, stdout=None):
    stdout = stdout or sys.stdout
    from .analysis import read_surface_csv
    _columns(rc.input, ("t_start", "T", "R"))
    try:
        t_starts, windows, grid = read_surface_csv(rc.input)
    except ValueError as exc:
        raise DataFormatError(str(exc)) from exc
    res = fit_surface(t_starts - rc.t_start, windows, grid)
    traceio.write_json(rc.output, res.to_dict())
    est = ", ".join(f"{k}={v:.6g}" for k, v in res.parameter_estimates.items())
    print(f"{est} converged={res.converged} flags={res.flags}", file=stdout)
    return EXIT_OK


def cmd_reproduce(rc: RunConfig, stdout=None):
    stdout = stdout or sys.stdout
    manifest = presets.reproduce(rc.preset, rc.output, rc.seed, rc.workers, rc.shots)
    print(f"{rc.preset}: manifest {os.path.join(rc.output, 'manifest.json')}", file=stdout)
    for name, path in manifest["outputs"].items():
        print(f"  {name}: {path}", file=stdout)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "fit-rm": cmd_fit_rm,
    "fit-surface": cmd_fit_surface,
    "reproduce": cmd_reproduce,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        rc = resolve(args)
        return COMMANDS[rc.mode](rc)
    except (ConfigError, ResourceError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TraceFormatError as exc:
        print(f"malformed trace file: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DataFormatError as exc:
        print(f"malformed input: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DomainError as exc:
        # a value the numerics cannot accept; the inputs are at fault
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_DATA if args.mode in ("fit-rm", "fit-surface") else EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
