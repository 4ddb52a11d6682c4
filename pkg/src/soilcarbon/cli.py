"""Command-line interface.

Subcommands: simulate, gen-synthetic, fit, diagnose, summarize,
sensitivity.  Progress goes to standard error; data only to files under
the --out directory, each run leaving a manifest of its artifacts.

Exit codes: 0 success, 2 invalid input or usage, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import glob
import os
import sys

import numpy as np

from . import io as dio
from .diagnostics import (
    flux_posterior,
    rhat,
    summarize,
    trend_surface_diagnostic,
)
from .inference.sampling import run_hmc
from .pools import POOL_NAMES, DegenerateStateError
from .priortable import SIGMA2_PROCESS_NAMES, default_priors

__all__ = ["main"]

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERIC = 3

WORKERS_ENV = "SOILCARBON_WORKERS"


def _log(*parts):
    print(*parts, file=sys.stderr)


def _default_workers(value):
    if value is not None:
        return value
    env = os.environ.get(WORKERS_ENV)
    if env:
        return int(env)
    return os.cpu_count() or 1


def _add_common(parser):
    parser.add_argument("--config", required=True, help="experiment config JSON")
    parser.add_argument("--out", required=True, help="output directory")


def _parse_months(text):
    try:
        months = sorted({int(tok) for tok in text.split(",") if tok.strip()})
    except ValueError:
        raise dio.ValidationError(f"bad month list {text!r}")
    if not months:
        raise dio.ValidationError("empty month list")
    return months


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="soilcarbon",
        description="Six-pool soil-carbon model: simulation and Bayesian fitting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "simulate", help="forward-simulate pool trajectories from the priors"
    )
    _add_common(p)
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.add_argument("--stochastic", action="store_true",
                   help="apply process noise instead of the mean dynamics")

    p = sub.add_parser(
        "gen-synthetic",
        help="generate a synthetic dataset plus its hidden truth file",
    )
    _add_common(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--obs-months", default=None,
                   help="comma-separated months to observe "
                        "(default: months present in the observations file)")

    p = sub.add_parser("fit", help="sample the posterior with NUTS")
    _add_common(p)
    p.add_argument("--chains", type=int, default=None, help="default 6")
    p.add_argument("--warmup", type=int, default=None, help="default 20000")
    p.add_argument("--iters", type=int, default=None, help="default 50000")
    p.add_argument("--thin", type=int, default=None, help="default 10")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--scenario", choices=("N", "A", "B"), default=None)
    p.add_argument("--workers", type=int, default=None,
                   help=f"worker processes (or ${WORKERS_ENV})")

    p = sub.add_parser(
        "diagnose", help="spatial trend-surface residual diagnostic"
    )
    _add_common(p)
    p.add_argument("--month", type=int, default=0,
                   help="observation month to diagnose (default 0)")

    p = sub.add_parser(
        "summarize", help="summaries and R-hat from exported draws"
    )
    _add_common(p)
    p.add_argument("--draws", required=True,
                   help="directory holding draws_chain*.csv")

    p = sub.add_parser(
        "sensitivity", help="fit under prior scenarios N, A and B"
    )
    _add_common(p)
    p.add_argument("--chains", type=int, default=None)
    p.add_argument("--warmup", type=int, default=None)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--thin", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    return parser


# ----------------------------------------------------------------------
# command implementations


def _report_names(chain_names):
    """Coordinates worth reporting: parameters and initial pools, not the
    per-month latent states."""
    return [n for n in chain_names if not n.startswith("pool[")]


def cmd_simulate(args) -> int:
    config, plots = dio.load_experiment(args.config)
    seed = args.seed if args.seed is not None else config.seed
    priors = dio.build_priors(config)
    theta = None
    if not args.stochastic:
        theta = {name: 0.0 for name in SIGMA2_PROCESS_NAMES}
    _log(f"simulating {len(plots)} plots (seed {seed})")
    sim_plots, truth = dio.generate_synthetic(
        plots, priors, seed=seed, obs_months=[], theta=theta
    )
    os.makedirs(args.out, exist_ok=True)
    traj_path = os.path.join(args.out, "trajectories.csv")
    with open(traj_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("plot_id", "month") + POOL_NAMES)
        for plot in sim_plots:
            traj = truth.trajectories[plot.plot_id]
            for month, row in enumerate(traj):
                writer.writerow(
                    [plot.plot_id, month] + [repr(float(v)) for v in row]
                )
    params_path = os.path.join(args.out, "params.json")
    dio._write_json(params_path, {"seed": seed, "values": truth.values})
    dio.write_manifest(args.out, config, [traj_path, params_path])
    _log(f"wrote {traj_path}")
    return EXIT_OK


def cmd_gen_synthetic(args) -> int:
    config, plots = dio.load_experiment(args.config)
    seed = args.seed if args.seed is not None else config.seed
    priors = dio.build_priors(config)
    if args.obs_months is not None:
        obs_months = _parse_months(args.obs_months)
    else:
        obs_months = {
            p.plot_id: sorted({o.month for o in p.observations})
            for p in plots
        }
        if all(not m for m in obs_months.values()):
            raise dio.ValidationError(
                "no observation months: pass --obs-months or provide "
                "an observations file with rows"
            )
    _log(f"generating synthetic data for {len(plots)} plots (seed {seed})")
    syn_plots, truth = dio.generate_synthetic(
        plots, priors, seed=seed, obs_months=obs_months
    )
    os.makedirs(args.out, exist_ok=True)
    paths = {
        "plots": os.path.join(args.out, "plots.csv"),
        "forcing": os.path.join(args.out, "forcing.csv"),
        "observations": os.path.join(args.out, "observations.csv"),
        "truth": os.path.join(args.out, "truth.json"),
        "config": os.path.join(args.out, "config.json"),
    }
    dio.write_plots(paths["plots"], config.plot_table)
    dio.write_forcing(paths["forcing"], syn_plots)
    dio.write_observations(paths["observations"], syn_plots)
    dio.write_truth(paths["truth"], truth)
    out_config = {
        "plots": "plots.csv",
        "forcing": "forcing.csv",
        "observations": "observations.csv",
        "scenario": config.scenario,
        "seed": seed,
        "prior_overrides": config.prior_overrides,
        "sampler": config.sampler,
    }
    dio._write_json(paths["config"], out_config)
    dio.write_manifest(args.out, config, list(paths.values()))
    _log(f"wrote synthetic dataset under {args.out}")
    return EXIT_OK


def _fit_once(config, plots, out, sampler_config, scenario):
    priors = dio.build_priors(config)
    from .priortable import apply_scenario

    if scenario is not None and scenario != config.scenario:
        priors = apply_scenario(priors, scenario)
    _log(
        f"fitting: {len(plots)} plots, {sampler_config.n_chains} chains, "
        f"{sampler_config.n_warmup} warmup + {sampler_config.n_iter} "
        f"iterations, thin {sampler_config.thin}, seed {sampler_config.seed}"
    )
    chains = run_hmc(plots, priors, sampler_config)
    for chain in chains:
        _log(
            f"chain {chain.chain_id}: step size {chain.stats.step_size:.4g}, "
            f"accept {chain.stats.mean_accept:.3f}, "
            f"divergences {chain.stats.n_divergent}"
        )
    os.makedirs(out, exist_ok=True)
    draw_paths = dio.export_draws(chains, os.path.join(out, "draws"))

    names = _report_names(chains[0].names)
    rhats = {}
    for name in names:
        try:
            rhats[name] = rhat([c.column(name) for c in chains])
        except ValueError:
            rhats[name] = float("nan")
    summaries = [summarize(chains, name) for name in names]
    flux_rows = flux_posterior(chains, plots)
    summaries.extend(flux_rows[t] for t in sorted(flux_rows))
    report_path = os.path.join(out, "report.json")
    dio.export_report(report_path, summaries, rhats)
    dio.write_manifest(out, config, draw_paths + [report_path])

    _log("R-hat (threshold 1.01):")
    worst = sorted(rhats.items(), key=lambda kv: -kv[1])[:10]
    for name, value in worst:
        flag = "" if value < 1.01 else "  <-- not converged"
        _log(f"  {name:24s} {value:.4f}{flag}")
    return chains, summaries, rhats


def cmd_fit(args) -> int:
    config, plots = dio.load_experiment(args.config)
    sampler_config = config.sampler_config(
        n_chains=args.chains,
        n_warmup=args.warmup,
        n_iter=args.iters,
        thin=args.thin,
        seed=args.seed,
        n_workers=_default_workers(args.workers),
    )
    _fit_once(config, plots, args.out, sampler_config, args.scenario)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    config, plots = dio.load_experiment(args.config)
    coords = {r.id: (r.x, r.y) for r in config.plot_table}
    samples: dict = {}
    for plot in plots:
        for o in plot.observations:
            if o.month == args.month:
                x, y = coords[plot.plot_id]
                samples.setdefault(o.kind, []).append((x, y, o.value))
    if not samples:
        raise dio.ValidationError(
            f"no observations at month {args.month} to diagnose"
        )
    result = trend_surface_diagnostic(samples)
    os.makedirs(args.out, exist_ok=True)
    table_path = os.path.join(args.out, "trend_pairs.csv")
    with open(table_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("d", "sq_diff", "rootabs_diff", "type"))
        for d, sq, ra, kind in result.rows:
            writer.writerow((repr(d), repr(sq), repr(ra), kind))
    fit_path = os.path.join(args.out, "trend_fit.json")
    dio._write_json(
        fit_path,
        {
            kind: {
                "coef": list(map(float, result.coef[kind])),
                "sigma2": result.sigma2[kind],
            }
            for kind in result.coef
        },
    )
    dio.write_manifest(args.out, config, [table_path, fit_path])
    _log(f"wrote {table_path}")
    return EXIT_OK


def cmd_summarize(args) -> int:
    config, plots = dio.load_experiment(args.config)
    paths = sorted(glob.glob(os.path.join(args.draws, "draws_chain*.csv")))
    if not paths:
        raise dio.ValidationError(f"no draws_chain*.csv under {args.draws}")
    chains = [dio.read_draws(p) for p in paths]
    rhats = {}
    summaries = []
    for name in _report_names(chains[0].names):
        summaries.append(summarize(chains, name))
        if len(chains) >= 2:
            try:
                rhats[name] = rhat([c.column(name) for c in chains])
            except ValueError:
                rhats[name] = float("nan")
    flux_rows = flux_posterior(chains, plots)
    summaries.extend(flux_rows[t] for t in sorted(flux_rows))
    os.makedirs(args.out, exist_ok=True)
    report_path = os.path.join(args.out, "report.json")
    dio.export_report(report_path, summaries, rhats)
    dio.write_manifest(args.out, config, [report_path])
    _log(f"wrote {report_path}")
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    config, plots = dio.load_experiment(args.config)
    sampler_config = config.sampler_config(
        n_chains=args.chains,
        n_warmup=args.warmup,
        n_iter=args.iters,
        thin=args.thin,
        seed=args.seed,
        n_workers=_default_workers(args.workers),
    )
    rows = {}
    for scenario in ("N", "A", "B"):
        out = os.path.join(args.out, f"scenario_{scenario}")
        _log(f"--- scenario {scenario} ---")
        _, summaries, _ = _fit_once(config, plots, out, sampler_config, scenario)
        for row in summaries:
            rows.setdefault(row.name, {})[scenario] = row
    table_path = os.path.join(args.out, "scenario_comparison.csv")
    with open(table_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["name"]
        for s in ("N", "A", "B"):
            header += [f"median_{s}", f"q25_{s}", f"q75_{s}"]
        writer.writerow(header)
        for name in rows:
            line = [name]
            for s in ("N", "A", "B"):
                row = rows[name].get(s)
                if row is None:
                    line += ["", "", ""]
                else:
                    line += [repr(row.median), repr(row.q25), repr(row.q75)]
            writer.writerow(line)
    dio.write_manifest(args.out, config, [table_path])
    _log(f"wrote {table_path}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "gen-synthetic": cmd_gen_synthetic,
    "fit": cmd_fit,
    "diagnose": cmd_diagnose,
    "summarize": cmd_summarize,
    "sensitivity": cmd_sensitivity,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except dio.ValidationError as err:
        _log(f"error: {err}")
        return EXIT_INVALID
    except (DegenerateStateError, FloatingPointError, np.linalg.LinAlgError,
            RuntimeError) as err:
        _log(f"numeric failure: {err}")
        return EXIT_NUMERIC
    except ValueError as err:
        _log(f"error: {err}")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
