"""Command-line front end.

Exit codes: 0 success, 1 configuration error, 2 runtime error (for example
a protocol exceeding its clock rate), 3 when an ``experiment`` verdict is
``violated``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .certificates import BoundParams, deviation_bound, floored_lipschitz, variance_bound
from .config import ExperimentConfig, load_config, override
from .core import write_grid_csv
from .engine import estimate_first_jump_drift, simulate, write_trajectory_csv
from .errors import ConfigError, MflabError
from .games import BUILTIN_GAMES
from .harness import (empirical_variance, exceedance_report, run_replicas, write_exceedance_csv,
                      write_replicas_csv, write_variance_csv)
from .meanfield import field_constants, mean_vector_field, solve_mean_ode
from .protocols import PROTOCOLS

log = logging.getLogger("mflab")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VIOLATED = 0, 1, 2, 3


def _workers_default() -> int:
    try:
        return max(1, int(os.environ.get("MFLAB_WORKERS", "1")))
    except ValueError:
        return 1


def _counts_arg(s: str) -> list[int]:
    try:
        return [int(v) for v in s.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML experiment file")
    common.add_argument("--out", metavar="PATH", help="output file or directory")
    common.add_argument("--workers", type=int, default=_workers_default(),
                        help="parallel worker processes (default: $MFLAB_WORKERS or 1)")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mflab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"mflab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="one sample path to CSV")
    s.add_argument("--N", type=int, help="population size (default: first N in config)")
    s.add_argument("--horizon", type=float)
    s.add_argument("--sample-step", type=float,
                   help="store only states on this time grid instead of every revision")

    s = sub.add_parser("ode", parents=[common], help="mean dynamics solution to CSV")
    s.add_argument("--N", type=int, help="take x0 from the initial counts for this N")
    s.add_argument("--horizon", type=float)
    s.add_argument("--step", type=float)

    s = sub.add_parser("drift", parents=[common],
                       help="first-revision drift estimate versus the mean vector field")
    s.add_argument("--N", type=int)
    s.add_argument("--counts", type=_counts_arg, help="state as comma-separated counts")
    s.add_argument("--samples", type=int, default=100_000)

    s = sub.add_parser("bound", parents=[common], help="evaluate the finite-N deviation bound")
    s.add_argument("--N", type=int, nargs="+")
    s.add_argument("--epsilon", type=float, nargs="+")
    s.add_argument("--horizon", type=float)
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--lipschitz", type=float)
    s.add_argument("--max-norm", type=float)
    s.add_argument("--csv", action="store_true", help="print CSV rows instead of key=value")

    s = sub.add_parser("experiment", parents=[common], help="full ensemble pipeline")
    s.add_argument("--replicas", type=int)
    s.add_argument("--horizon", type=float)
    s.add_argument("--ode-step", type=float)
    s.add_argument("--no-plots", action="store_true")

    sub.add_parser("games", parents=[common], help="list built-in games and protocols")
    return p


def _need_config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("this command needs --config PATH")
    return load_config(args.config)


def _pick_N(cfg: ExperimentConfig, N):
    if N is None:
        return cfg.N_list[0]
    if N not in cfg.initial_counts:
        raise ConfigError(f"N={N} is not listed in population.N", cfg.path, "population.N")
    return N


def _open_out(target):
    if target is None:
        return sys.stdout, False
    Path(target).parent.mkdir(parents=True, exist_ok=True)
    return open(target, "w", newline=""), True


def _estimate_constants(cfg: ExperimentConfig):
    fc = field_constants(cfg.model, grid_resolution=cfg.grid_resolution,
                         safety_factor=cfg.safety_factor, samples=cfg.samples)
    lip = cfg.lipschitz if cfg.lipschitz is not None else fc.lipschitz
    mx = cfg.max_norm if cfg.max_norm is not None else fc.max_norm
    heuristic = fc.heuristic and cfg.lipschitz is None
    method = "user" if cfg.lipschitz is not None else fc.describe()
    return lip, mx, heuristic, method


def cmd_simulate(args) -> int:
    cfg = override(_need_config(args), horizon=args.horizon)
    N = _pick_N(cfg, args.N)
    seed = cfg.seed if args.seed is None else args.seed
    sample_times = None
    if args.sample_step:
        K = int(np.floor(cfg.horizon / args.sample_step + 1e-9))
        sample_times = np.arange(K + 1) * args.sample_step
    traj = simulate(cfg.model, N, cfg.initial_counts[N], cfg.horizon, seed,
                    sample_times=sample_times)
    fh, close = _open_out(args.out)
    try:
        write_trajectory_csv(fh, traj)
    finally:
        if close:
            fh.close()
    log.info("simulated %d revisions", traj.jump_count)
    return EXIT_OK


def cmd_ode(args) -> int:
    cfg = override(_need_config(args), horizon=args.horizon)
    N = _pick_N(cfg, args.N)
    step = args.step or cfg.ode_step
    x0 = cfg.initial_counts[N] / N
    traj = solve_mean_ode(cfg.model, x0, cfg.horizon, step)
    fh, close = _open_out(args.out)
    try:
        write_grid_csv(fh, traj)
    finally:
        if close:
            fh.close()
    log.info("max simplex correction %.3e", traj.max_renorm_delta)
    return EXIT_OK


def cmd_drift(args) -> int:
    cfg = _need_config(args)
    if args.counts is not None:
        counts = np.asarray(args.counts)
        N = int(counts.sum())
    else:
        N = _pick_N(cfg, args.N)
        counts = cfg.initial_counts[N]
    seed = cfg.seed if args.seed is None else args.seed
    est = estimate_first_jump_drift(cfg.model, N, counts, args.samples, seed)
    phi = mean_vector_field(cfg.model, counts / N)
    fh, close = _open_out(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "estimate", "stderr", "mean_field", "z"])
        for i in range(cfg.model.n):
            z = (est.mean[i] - phi[i]) / est.stderr[i] if est.stderr[i] > 0 else 0.0
            w.writerow([i + 1, repr(float(est.mean[i])), repr(float(est.stderr[i])),
                        repr(float(phi[i])), f"{z:.3f}"])
    finally:
        if close:
            fh.close()
    return EXIT_OK


def cmd_bound(args) -> int:
    cfg = load_config(args.config) if args.config else None
    if cfg is not None:
        Ns = args.N or cfg.N_list
        eps_list = args.epsilon or cfg.epsilons
        horizon = args.horizon or cfg.horizon
        lam = args.lam or cfg.model.lam
    else:
        missing = [f for f, v in (("--N", args.N), ("--epsilon", args.epsilon),
                                  ("--horizon", args.horizon), ("--lambda", args.lam),
                                  ("--lipschitz", args.lipschitz)) if v is None]
        if missing:
            raise ConfigError(f"without --config, {', '.join(missing)} must be given")
        Ns, eps_list, horizon, lam = args.N, args.epsilon, args.horizon, args.lam

    heuristic = False
    method = "user"
    if args.lipschitz is not None:
        lip = args.lipschitz
        mx = args.max_norm if args.max_norm is not None else (cfg.max_norm if cfg else None)
        if mx is None:
            mx = _estimate_constants(cfg)[1] if cfg else 0.0
    else:
        lip, mx, heuristic, method = _estimate_constants(cfg)
        if args.max_norm is not None:
            mx = args.max_norm
    lip, floored = floored_lipschitz(lip)

    reports = [deviation_bound(BoundParams(N, eps, horizon, lam, lip, mx),
                               heuristic=heuristic, lipschitz_floored=floored)
               for N in Ns for eps in eps_list]
    out = sys.stdout
    if args.csv or len(reports) > 1:
        keys = list(reports[0].as_dict()) + ["constants"]
        w = csv.writer(out, lineterminator="\n")
        w.writerow(keys)
        for r in reports:
            w.writerow([_cell(v) for v in r.as_dict().values()] + [method])
    else:
        for line in reports[0].lines():
            print(line, file=out)
        print(f"constants={method}", file=out)
    return EXIT_OK


def _cell(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return v


def cmd_experiment(args) -> int:
    cfg = override(_need_config(args), replicas=args.replicas, horizon=args.horizon,
                   ode_step=args.ode_step, seed=args.seed, out=args.out)
    out = Path(cfg.out or "mflab-out")
    out.mkdir(parents=True, exist_ok=True)
    plots = cfg.plots and not args.no_plots
    if plots:
        from . import plotting
        (out / "figures").mkdir(exist_ok=True)

    lip_raw, mx, heuristic, method = _estimate_constants(cfg)
    lip, floored = floored_lipschitz(lip_raw)
    model = cfg.model
    report_times = sorted(set([0.0] + list(cfg.report_times)))
    summary = []
    verdicts = []
    digests = {}
    for N in cfg.N_list:
        counts = cfg.initial_counts[N]
        ens = run_replicas(model, N, counts, cfg.horizon, cfg.replicas, cfg.seed, cfg.ode_step,
                           report_times=report_times, workers=args.workers, max_norm=mx,
                           config={"config_digest": cfg.digest})
        d = out / f"N{N}"
        d.mkdir(exist_ok=True)
        write_replicas_csv(d / "replicas.csv", ens)
        if ens.M >= 2:
            curve = empirical_variance(ens, report_times)
            write_variance_csv(d / "variance.csv", curve, N, model.lam, lip)
        reports = []
        for eps in cfg.epsilons:
            b = deviation_bound(BoundParams(N, eps, cfg.horizon, model.lam, lip, mx),
                                heuristic=heuristic, lipschitz_floored=floored)
            reports.append(exceedance_report(ens, eps, b))
        write_exceedance_csv(d / "exceedance.csv", reports)
        verdicts += [r.verdict for r in reports]
        digests[str(N)] = ens.results_digest
        summary.append((N, ens.M, float(np.median(ens.sup_raw)),
                        float(np.median(ens.sup_conservative)),
                        float(np.quantile(ens.sup_conservative, 0.9)), float(ens.jumps.mean())))
        if plots:
            plotting.sup_deviation_histogram(out / "figures" / f"sup_hist_N{N}.svg",
                                             ens.sup_conservative, N, cfg.epsilons)
            if ens.M >= 2:
                bounds = [variance_bound(N, model.lam, lip, t) for t in curve.times]
                plotting.variance_curve(out / "figures" / f"variance_N{N}.svg", curve.times,
                                        curve.variance, curve.stderr, bounds, N)
        for r in reports:
            log.info("N=%d eps=%g: %d/%d exceed, bound=%.4g -> %s", N, r.epsilon, r.count,
                     r.M, r.bound.total, r.verdict)

    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "M", "median_sup_raw", "median_sup_conservative",
                    "q90_sup_conservative", "mean_jumps"])
        for row in summary:
            w.writerow([row[0], row[1]] + [repr(v) for v in row[2:]])
    if plots and len(summary) > 1:
        plotting.deviation_vs_n(out / "figures" / "deviation_vs_N.svg",
                                [s[0] for s in summary], [s[3] for s in summary],
                                [s[4] for s in summary])
    manifest = {"config_digest": cfg.digest, "master_seed": cfg.seed,
                "lipschitz": lip, "lipschitz_floored": floored, "max_norm": mx,
                "constants": method, "results_digests": digests, "mflab_version": __version__}
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if "violated" in verdicts:
        print("verdict: violated", file=sys.stderr)
        return EXIT_VIOLATED
    return EXIT_OK


def cmd_games(args) -> int:
    print("games:")
    for name, (make, desc) in BUILTIN_GAMES.items():
        print(f"  {name:<14} n={make().n}  {desc}")
    print("protocols:")
    for name, desc in PROTOCOLS.items():
        print(f"  {name:<14} {desc}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "ode": cmd_ode, "drift": cmd_drift, "bound": cmd_bound,
            "experiment": cmd_experiment, "games": cmd_games}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"mflab: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except MflabError as e:
        print(f"mflab: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run_cli())
