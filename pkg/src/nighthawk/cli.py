"""Command-line entry point: ``nighthawk <command> [options]``.

Exit codes: 0 on success, 2 for an invalid configuration or argument,
3 when a run fails.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

from . import bopt, harness, imagecore, scenesim
from .config import KNOWN_KEYS, load_settings
from .errors import ConfigError, NightHawkError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

log = logging.getLogger("nighthawk")


def _objective(settings):
    return harness.SceneObjective(settings.scenario, settings.run.pose, settings.run.seed,
                                  settings.metric)


def cmd_simulate(settings, args):
    run = settings.run
    ctl = bopt.ControlInput(run.P, run.dt)
    if not settings.space.contains(ctl):
        raise ConfigError(f"control {ctl} lies outside the search space")
    for i in range(run.frames):
        d = run.pose + i * run.path_step
        img = scenesim.render(settings.scenario, d, ctl, harness.frame_seed(run.seed, i))
        imagecore.write_pgm(imagecore.frame_path(args.out, i), img)
    print(f"wrote {run.frames} frame(s) to {args.out}")


def cmd_optimize(settings, args):
    result = bopt.optimize(_objective(settings), settings.space, settings.budget)
    bopt.write_trace(os.path.join(args.out, "trace.csv"), result)
    print(f"P*={result.x_star.P:.4f} dt*={result.x_star.dt:.3f} ms "
          f"M*={result.y_star:.6f} evals={len(result.history)} stop={result.stop_reason}")


def cmd_oracle(settings, args):
    result = harness.grid_oracle(_objective(settings), settings.space,
                                 settings.run.oracle_resolution)
    harness.write_oracle(os.path.join(args.out, "oracle.csv"), result, settings.space)
    print(f"P*={result.x_star.P:.4f} dt*={result.x_star.dt:.3f} ms M*={result.y_star:.6f}")


def mission_config(settings, mode):
    run = settings.run
    return harness.MissionConfig(
        scenario=settings.scenario,
        path=harness.default_path(run.path_start, run.path_stop, run.path_step),
        mode=harness.ConfigMode(mode), trigger=settings.trigger, budget=settings.budget,
        space=settings.space, seed=run.seed, ae_initial_dt=run.ae_initial_dt,
        track_k=run.track_k, track_radius=run.track_radius)


SUMMARY_COLUMNS = ("mode", "mean_m_deep", "mean_m_outside", "mean_m_all", "trigger_count",
                   "apply_count", "mean_track_length", "mean_dt_ms", "mean_dt_deep_ms")


def cmd_mission(settings, args):
    rows = []
    for mode in settings.run.modes:
        record = harness.run_mission(mission_config(settings, mode))
        harness.write_mission(os.path.join(args.out, f"mission_{mode}.csv"), record)
        s = record.summary
        rows.append([mode, s.mean_m_deep, s.mean_m_outside, s.mean_m_all, s.trigger_count,
                     s.apply_count, s.mean_track_length, s.mean_dt, s.mean_dt_deep])
        print(f"{mode:14s} M_deep={s.mean_m_deep:.4f} l={s.mean_track_length:.3f} "
              f"dt={s.mean_dt:.2f} ms triggers={s.trigger_count}")
    with open(os.path.join(args.out, "mission_summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([r[0]] + [repr(v) for v in r[1:]])


def cmd_bench(settings, args):
    run = settings.run
    if args.frames_dir:
        names = sorted(n for n in os.listdir(args.frames_dir) if n.endswith((".pgm", ".ppm")))
        frames = [imagecore.read_pgm(os.path.join(args.frames_dir, n)) for n in names]
    else:
        frames = harness.exposure_sweep(settings.scenario, run.sweep_frames, run.pose,
                                        run.sweep_dt, (run.sweep_p_min, run.sweep_p_max),
                                        run.path_step, run.seed)
    # bench_k = 0 picks one percent of the raster
    result = harness.metric_benchmark(frames, run.bench_k or None, run.track_radius,
                                      settings.metric)
    with open(os.path.join(args.out, "benchmark.csv"), "w", newline="") as fh:
        fh.write(harness.benchmark_csv(result))
    with open(os.path.join(args.out, "correlation.csv"), "w", newline="") as fh:
        fh.write(harness.correlation_csv(result))
    for kind, rho in result.rho.items():
        print(f"{kind.value:11s} rho={'NA' if rho is None else f'{rho:.4f}'}")


def cmd_plot(settings, args):
    from .plotting import plot_csv
    out = os.path.join(args.out, args.output or os.path.splitext(os.path.basename(args.csv))[0] + ".svg")
    plot_csv(args.csv, out, x=args.x, ys=args.y)
    print(f"wrote {out}")


COMMANDS = {
    "simulate": (cmd_simulate, "render frames at a pose and control to numbered PGMs"),
    "optimize": (cmd_optimize, "run Bayesian optimization at one pose and write its trace"),
    "oracle": (cmd_oracle, "exhaustive grid search of the utility at one pose"),
    "mission": (cmd_mission, "run the three-configuration culvert missions"),
    "bench-metrics": (cmd_bench, "correlate utility metrics with synthetic match counts"),
    "plot": (cmd_plot, "render a CSV column chart as SVG"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="nighthawk", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value settings file")
    common.add_argument("--seed", type=int, help="run seed (overrides the config)")
    common.add_argument("--out", default=".", help="output directory (default: .)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; may repeat")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "bench-metrics":
            p.add_argument("--frames-dir", help="score these PGM/PPM frames instead of a sweep")
        if name == "plot":
            p.add_argument("csv", help="input CSV")
            p.add_argument("--x", default=None, help="x column (default: first column)")
            p.add_argument("--y", action="append", default=None, help="y column; may repeat")
            p.add_argument("--output", help="SVG file name inside --out")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, value = (s.strip() for s in item.split("=", 1))
            overrides[key] = value
        unknown = set(overrides) - KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
        if args.seed is not None:
            overrides["seed"] = str(args.seed)
        settings = load_settings(args.config, overrides)
    except ConfigError as exc:
        print(f"nighthawk: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        os.makedirs(args.out, exist_ok=True)
        COMMANDS[args.command][0](settings, args)
    except ConfigError as exc:
        print(f"nighthawk: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NightHawkError, OSError, ValueError) as exc:
        log.debug("run failed", exc_info=True)
        print(f"nighthawk: run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
