"""Command line entry point ``offaxis-nls``.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime
failure (partial artifacts are kept).  The output directory is taken from
``--out-dir``, else ``$OFFAXIS_NLS_OUT_DIR``, else ``./runs``.
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .experiments.config import (ConfigError, ControlsConfig, GridConfig, NonlinearityConfig,
                                 ScenarioConfig, config_from_dict)
from .experiments.runner import builtin_names, compare_runs, load_run, resolve_config, run_scenario
from .grid import set_fft_workers

OUT_DIR_ENV = "OFFAXIS_NLS_OUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("offaxis_nls")


def _out_dir(args) -> Path:
    return Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or "runs")


def _load(spec: str) -> ScenarioConfig:
    try:
        return resolve_config(spec)
    except KeyError as exc:
        raise ConfigError([str(exc.args[0])]) from None
    except FileNotFoundError:
        raise ConfigError([f"no such config file: {spec}"]) from None


def _report(outcome) -> int:
    s = outcome.summary
    line = f"{s['name']}: {s['status']}"
    if "termination" in s:
        line += f", {s['termination']['kind']} at t={s['termination']['t']:.6g}"
    if "error" in s:
        line += f" ({s['error']})"
    print(line)
    print(f"  artifacts in {outcome.out_dir}")
    return EXIT_OK if outcome.ok else EXIT_RUNTIME


def cmd_run(args) -> int:
    cfg = _load(args.config)
    return _report(run_scenario(cfg, _out_dir(args), seed=args.seed, plot=args.plot or None))


def cmd_decay(args) -> int:
    cfg = _load(args.config).replace(kind="decay")
    code = _report(outcome := run_scenario(cfg, _out_dir(args), seed=args.seed, plot=False))
    for fit in outcome.summary.get("fits", []):
        print(f"  eps={fit['epsilon']:<6g} {fit['variant']} r={fit['r']!s:<4} "
              f"exponent {fit['fitted_exponent']:+.4f} (predicted {fit['predicted_exponent']:+.4f}), "
              f"ratio max {fit['constant_ratio_max']:.4f}")
    return code


def _sweep_job(spec: str, out_dir: str, seed, plot, threads: int) -> tuple[str, dict]:
    set_fft_workers(threads)
    cfg = _load(spec)
    outcome = run_scenario(cfg, out_dir, seed=seed, plot=plot)
    return spec, outcome.summary


def cmd_sweep(args) -> int:
    specs = sorted(glob.glob(args.pattern))
    if not specs:
        raise ConfigError([f"no config files match {args.pattern!r}"])
    configs = [_load(s) for s in specs]  # validate everything before any compute
    names = [c.name for c in configs]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ConfigError([f"duplicate scenario names in sweep: {', '.join(dupes)}"])
    out = str(_out_dir(args))
    worst = EXIT_OK
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        futures = [pool.submit(_sweep_job, s, out, args.seed, args.plot or None, args.threads) for s in specs]
        for fut in futures:
            spec, summary = fut.result()
            print(f"{spec}: {summary['status']}")
            if summary["status"] != "ok":
                worst = EXIT_RUNTIME
    return worst


def cmd_compare(args) -> int:
    try:
        a, b = load_run(args.a), load_run(args.b)
    except (FileNotFoundError, KeyError, ValueError) as exc:
        raise ConfigError([f"cannot load runs: {exc}"]) from None
    try:
        rep = compare_runs(a, b)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from None
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    name = f"compare-{Path(args.a).name}-vs-{Path(args.b).name}.json"
    (out / name).write_text(json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"terminations: {rep.terminations[0]} vs {rep.terminations[1]}")
    print(f"peak grad ratio: {rep.grad_ratio_a:.4g} vs {rep.grad_ratio_b:.4g}"
          f"{'  (divergent)' if rep.divergent else ''}")
    if rep.final_l2_distance is not None:
        print(f"final L2 distance: {rep.final_l2_distance:.4e} (relative {rep.final_rel_distance:.4e})")
    for note in rep.notes:
        print(f"note: {note}")
    print(f"report written to {out / name}")
    return EXIT_OK


def cmd_groundstate(args) -> int:
    d = args.d_eff
    cfg = ScenarioConfig(name=args.name or f"groundstate-d{d}-s{args.sigma:g}", kind="groundstate")
    raw = cfg.replace(grid=GridConfig(d=d, k=0, epsilon=0.0, box_lengths=(args.box,) * d,
                                      resolutions=(args.res,) * d),
                      nonlinearity=NonlinearityConfig(sigma=args.sigma),
                      controls=ControlsConfig(rtol=args.tol)).to_dict()
    cfg = config_from_dict(raw)
    outcome = run_scenario(cfg, _out_dir(args), seed=args.seed, plot=False)
    code = _report(outcome)
    if outcome.ok:
        s = outcome.summary
        print(f"  ||Q||_L2 = {s['l2_norm']:.10f}, ||Q||^2 = {s['mass']:.8f}, residual {s['residual']:.2e}")
    return code


def cmd_list(args) -> int:
    for name in builtin_names():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or ./runs)")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--threads", type=int, default=1, help="FFT worker threads")
    common.add_argument("--plot", action="store_true", help="write a PNG of the diagnostics")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="offaxis-nls", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("run", parents=[common], help="run a scenario file or builtin name")
    s.add_argument("config")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", parents=[common], help="run every config matching a glob")
    s.add_argument("pattern")
    s.add_argument("--jobs", type=int, default=1, help="parallel scenarios")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("compare", parents=[common], help="compare two evolve run directories")
    s.add_argument("a")
    s.add_argument("b")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("groundstate", parents=[common], help="compute a ground state")
    s.add_argument("d_eff", type=int, choices=(1, 2))
    s.add_argument("sigma", type=float)
    s.add_argument("--box", type=float, default=20.0)
    s.add_argument("--res", type=int, default=128)
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--name", default=None)
    s.set_defaults(func=cmd_groundstate)

    s = sub.add_parser("decay", parents=[common], help="run a config as a dispersion-decay sweep")
    s.add_argument("config")
    s.set_defaults(func=cmd_decay)

    s = sub.add_parser("list", parents=[common], help="list builtin scenarios")
    s.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    set_fft_workers(args.threads)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
