from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import pandas as pd

from qread import __version__
from qread.calib.klyshko import NoiseEstimate, estimate_efficiencies, estimate_noise
from qread.decide.discriminate import classical_bound, substitute_efficiency
from qread.decide.theory import photon_counting_error
from qread.io.writer import OutputWriter, read_frames
from qread.metrics.manifest import RunManifest
from qread.pipeline.experiment import (
    MemoryImage,
    SweepRow,
    read_memory,
    run_experiment,
    sweep,
    theoretical_report,
)
from qread.sim.montecarlo import (
    classically_correlated_set,
    simulate_dark_set,
    simulate_set,
    simulate_shutter_set,
)
from qread.utils.config import AppConfig
from qread.utils.errors import ConfigError, QReadError

logger = logging.getLogger("qread")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class UsageError(ConfigError):
    code = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        raise UsageError(message)


# flag dest -> dotted config key
FLAG_KEYS: Dict[str, str] = {
    "seed": "seed",
    "format": "output.format",
    "tau0": "channel.tau0",
    "tau1": "channel.tau1",
    "eta_s": "channel.eta_s",
    "eta_i": "channel.eta_i",
    "n": "channel.mean_signal_photons",
    "straylight": "channel.straylight_mean",
    "electronic_variance": "channel.electronic_variance",
    "transmitter": "simulation.transmitter",
    "frames_per_set": "simulation.frames_per_set",
    "sampling": "simulation.sampling",
    "modes": "simulation.modes",
    "workers": "simulation.workers",
    "rule": "experiment.rule",
    "n_grid": "bounds.n_grid",
    "tau0_grid": "sweep.tau0_grid",
    "n_list": "sweep.n_list",
    "frames": "calibration.frames",
    "dark": "calibration.dark_frames",
    "shutter": "calibration.shutter_frames",
    "bits": "memory.bits",
    "cells": "memory.cells",
    "truth": "simulation.truth",
    "classical": "simulation.classical",
    "calibration_frames": "simulation.calibration_frames",
    "progress": "sweep.progress",
}


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", action="append", default=[], help="YAML config or run manifest; repeatable")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", default="out")
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("--log-level", default="WARNING")
    common.add_argument("--tau0", type=float)
    common.add_argument("--tau1", type=float)
    common.add_argument("--eta-s", type=float)
    common.add_argument("--eta-i", type=float)
    common.add_argument("--n", type=float, help="mean signal photons at the memory cell")
    common.add_argument("--straylight", type=float)
    common.add_argument("--electronic-variance", type=float)
    common.add_argument("--transmitter", choices=["tmsv", "coherent"])
    common.add_argument("--frames-per-set", type=int)
    common.add_argument("--sampling", choices=["exact-pair", "gaussian"])
    common.add_argument("--modes", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument(
        "--rule",
        choices=["auto", "coherent-threshold", "tmsv-threshold", "likelihood-table", "gaussian-likelihood"],
    )
    return common


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = _Parser(prog="qread", description="Quantum reading photon-counting simulator")
    parser.add_argument("--version", action="version", version=f"qread {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _common_parser()

    p = sub.add_parser("bounds", parents=[common], help="classical bound and photon-counting error over N")
    p.add_argument("--n-grid")

    p = sub.add_parser("simulate", parents=[common], help="simulate labeled frame sets")
    p.add_argument("--truth", choices=["0", "1", "both"])
    p.add_argument("--classical", action="store_true", default=None, help="independent arms instead of twin beams")
    p.add_argument("--calibration-frames", action="store_true", default=None, help="also write dark and shutter sets")

    p = sub.add_parser("calibrate", parents=[common], help="estimate efficiencies from frames")
    p.add_argument("--frames")
    p.add_argument("--dark")
    p.add_argument("--shutter")

    sub.add_parser("experiment", parents=[common], help="one empirical gain measurement")

    p = sub.add_parser("sweep", parents=[common], help="gains over a tau0 grid and N list")
    p.add_argument("--tau0-grid")
    p.add_argument("--n-list")
    p.add_argument("--progress", action="store_true", default=None)

    p = sub.add_parser("read", parents=[common], help="read a simulated memory image")
    p.add_argument("--bits")
    p.add_argument("--cells", type=int)
    return parser.parse_args(argv)


def resolve_config(args: argparse.Namespace) -> AppConfig:
    cfg = AppConfig.from_files(*args.config, overrides=args.set)
    for dest, key in FLAG_KEYS.items():
        cfg.set(key, getattr(args, dest, None))
    return cfg


def cmd_bounds(cfg: AppConfig, args: argparse.Namespace, writer: OutputWriter) -> None:
    # the bound is taken at the transmittances as given unless an efficiency is asked for
    if not cfg.is_explicit("channel.eta_s"):
        cfg.set("channel.eta_s", 1.0)
    try:
        pair = cfg.channel_pair()
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    t0, t1 = substitute_efficiency(pair)
    rows = []
    for n in cfg.grid("bounds.n_grid", integer=True):
        rows.append({"N": n, "c_bound": classical_bound(n, t0, t1), "p_err_cla_pc": photon_counting_error(n, t0, t1)})
    writer.write_bounds(pd.DataFrame(rows), cfg.output_format())
    print(f"bounds: {len(rows)} rows for tau0={t0:g} tau1={t1:g}")


def cmd_simulate(cfg: AppConfig, args: argparse.Namespace, writer: OutputWriter) -> None:
    sim = cfg.sim_config()
    fmt = cfg.output_format()
    make = classically_correlated_set if cfg.flag("simulation.classical") else simulate_set
    for truth in cfg.simulate_truths():
        frames = make(sim, truth)
        writer.write_frames(frames, f"frames_tau{truth}", fmt)
        print(f"simulate: tau{truth} {len(frames)} frames, {frames.clamped} clamped")
    if cfg.flag("simulation.calibration_frames"):
        writer.write_frames(simulate_dark_set(sim), "dark", fmt)
        writer.write_frames(simulate_shutter_set(sim), "shutter", fmt)


def cmd_calibrate(cfg: AppConfig, args: argparse.Namespace, writer: OutputWriter) -> None:
    path = cfg.optional_path("calibration.frames")
    if path is None:
        raise UsageError("calibrate needs --frames")
    frames = read_frames(path)
    dark, shutter = cfg.optional_path("calibration.dark_frames"), cfg.optional_path("calibration.shutter_frames")
    if dark is not None and shutter is not None:
        noise = estimate_noise(read_frames(dark), read_frames(shutter))
    else:
        pair = cfg.channel_pair()
        noise = NoiseEstimate(pair.straylight_mean, pair.electronic_variance, pair.idler_straylight)
    result = estimate_efficiencies(frames, noise, int(cfg.get("experiment.subsets")))
    writer.write_calibration(result)
    print(
        f"calibrate: gamma={result.gamma:.4f} eta_s={result.eta_s:.4f}+-{result.uncertainties['eta_s']:.4f} "
        f"eta_i={result.eta_i:.4f} flags={','.join(result.flags) or '-'}"
    )


def cmd_experiment(cfg: AppConfig, args: argparse.Namespace, writer: OutputWriter) -> None:
    ecfg = cfg.experiment_config()
    row = SweepRow(
        tau0=ecfg.pair.tau0,
        n=ecfg.pair.mean_signal_photons,
        report=run_experiment(ecfg),
        theory=theoretical_report(ecfg),
    )
    writer.write_gain_table([row], cfg.output_format())
    r = row.report
    print(f"experiment: g_a={r.gain_a:.4f}+-{r.sigma_gain_a:.4f} g_emp={r.gain_emp:.4f}+-{r.sigma_gain_emp:.4f}")


def cmd_sweep(cfg: AppConfig, args: argparse.Namespace, writer: OutputWriter) -> None:
    rows = sweep(
        cfg.experiment_config(),
        cfg.grid("sweep.tau0_grid"),
        cfg.grid("sweep.n_list"),
        progress=cfg.flag("sweep.progress"),
    )
    writer.write_gain_table(rows, cfg.output_format())
    best = max(rows, key=lambda row: row.report.gain_a)
    print(f"sweep: {len(rows)} cells, max g_a={best.report.gain_a:.4f} at tau0={best.tau0:.4f} N={best.n:g}")


def cmd_read(cfg: AppConfig, args: argparse.Namespace, writer: OutputWriter) -> None:
    bits = cfg.get("memory.bits")
    if bits not in (None, "") and not isinstance(bits, str):
        raise UsageError("memory.bits must be a string of 0 and 1; quote it in YAML")
    if bits:
        image = MemoryImage.from_string(str(bits))
    else:
        image = MemoryImage.random(int(cfg.get("memory.cells")), cfg.seed)
    result = read_memory(image, cfg.experiment_config())
    writer.write_read_result(result)
    print(f"read: {image.cells} cells, ber={result.ber:.4g} info/cell={result.information_per_cell:.4f}")


COMMANDS: Dict[str, Callable[[AppConfig, argparse.Namespace, OutputWriter], None]] = {
    "bounds": cmd_bounds,
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "experiment": cmd_experiment,
    "sweep": cmd_sweep,
    "read": cmd_read,
}


def run(args: argparse.Namespace) -> List[Path]:
    cfg = resolve_config(args)
    writer = OutputWriter(args.out)
    COMMANDS[args.command](cfg, args, writer)
    manifest = RunManifest(command=args.command, config=cfg.raw, seed=cfg.seed)
    manifest.record(writer.written, writer.output_root)
    return writer.written + [manifest.write(writer.output_root)]


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(
            level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
            format="%(levelname)s %(name)s: %(message)s",
        )
        run(args)
    except ConfigError as exc:
        print(f"ERROR:{exc.code}:{exc}", file=sys.stderr)
        return EXIT_USAGE
    except QReadError as exc:
        print(f"ERROR:{exc.code}:{exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"ERROR:io:{exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
