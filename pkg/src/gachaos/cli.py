"""Command-line front end.

Subcommands: simulate, rate-n, rate-tau, couple-test, dist, suite.
Exit codes: 0 success, 1 validation error (bad config or input files),
2 runtime failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, config_hash, parse_config
from .coupling import build_sampler, sample_xstar_many
from .engine import SimParams, run
from .measures import load_measure, moment_q, save_measure, uniform_empirical
from .rng import stream
from .transport import CostKind, solve_ot

USAGE_ERROR = 64


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gachaos",
        description="Genetic-algorithm particle system, transport distances, "
                    "and chaos-rate experiments")
    parser.add_argument("--version", action="version", version=f"gachaos {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: machine parallelism)")

    p = sub.add_parser("simulate", help="run the particle system")
    add_common(p)
    p.add_argument("--coupled", action="store_true",
                   help="also run the coupled nonlinear system and write the trace")
    p.add_argument("--reference", choices=["grid", "ensemble"], default=None,
                   help="override the reference solver from the config")

    p = sub.add_parser("rate-n", help="convergence rate in the population size")
    add_common(p)

    p = sub.add_parser("rate-tau", help="convergence rate in the time step")
    add_common(p)

    p = sub.add_parser("suite", help="lemma-level property suites")
    add_common(p)

    p = sub.add_parser("couple-test", help="verify the coupling sampler on two measures")
    p.add_argument("reference", help="reference measure file")
    p.add_argument("population", help="population measure file (weights strictly positive)")
    p.add_argument("--cost", choices=["euclidean", "truncated", "indicator"],
                   default="truncated")
    p.add_argument("--draws", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")

    p = sub.add_parser("dist", help="transport distance between two measure files")
    p.add_argument("mu", help="first measure file")
    p.add_argument("nu", help="second measure file")
    p.add_argument("--cost", choices=["euclidean", "truncated", "indicator"],
                   default="truncated")
    p.add_argument("--plan-out", default=None, help="write the plan as CSV i,j,mass")
    p.add_argument("--out", default=None)

    return parser


def _load_config(args):
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "threads", None) is not None:
        from dataclasses import replace
        cfg = replace(cfg, threads=args.threads)
    return cfg


def _finish(out_dir, cfg_hash, seed, outputs):
    from .report import write_manifest
    os.makedirs(out_dir, exist_ok=True)
    write_manifest(out_dir, cfg_hash, seed, __version__, outputs)
    return 0


def cmd_dist(args) -> int:
    mu = load_measure(args.mu)
    nu = load_measure(args.nu)
    plan = solve_ot(mu, nu, CostKind.coerce(args.cost))
    print(repr(plan.cost_value))
    outputs = []
    if args.plan_out:
        from .report import write_csv
        rows = [(int(i), int(j), plan.mass[i, j])
                for i, j in zip(*np.nonzero(plan.mass))]
        write_csv(args.plan_out, ["i", "j", "mass"], rows)
        outputs.append(args.plan_out)
    if args.out:
        return _finish(args.out, "-", 0, outputs)
    return 0


def cmd_couple_test(args) -> int:
    from .report import write_csv, write_summary
    f_ref = load_measure(args.reference)
    pop = load_measure(args.population)
    sampler = build_sampler(f_ref, pop.support, pop.weights, args.cost)

    gen = stream(args.seed, 7)
    alphas = gen.random(size=args.draws) * sampler.n_index
    _, partners, ref_idx = sample_xstar_many(sampler, alphas)
    counts = np.zeros_like(sampler.plan.mass)
    np.add.at(counts, (ref_idx, partners), 1.0)
    empirical = counts / args.draws
    tv = 0.5 * float(np.abs(empirical - sampler.plan.mass).sum())

    from .coupling import pairwise_cost
    costs = pairwise_cost(sampler.reference.support[ref_idx],
                          sampler.positions[partners], sampler.cost)
    mc_mean = float(costs.mean())
    mc_se = float(costs.std(ddof=1) / np.sqrt(args.draws)) if args.draws > 1 else 0.0

    out = args.out
    plan_path = os.path.join(out, "plan.csv")
    joint_path = os.path.join(out, "joint.csv")
    nz = list(zip(*np.nonzero(sampler.plan.mass + counts)))
    write_csv(plan_path, ["i", "j", "mass"],
              [(int(i), int(j), sampler.plan.mass[i, j]) for i, j in nz])
    write_csv(joint_path, ["i", "j", "plan_mass", "empirical_freq"],
              [(int(i), int(j), sampler.plan.mass[i, j], empirical[i, j]) for i, j in nz])
    summary_path = os.path.join(out, "summary.json")
    write_summary(summary_path, {
        "tv_discrepancy": tv,
        "plan_cost": sampler.plan.cost_value,
        "mc_cost_mean": mc_mean,
        "mc_cost_stderr": mc_se,
        "draws": args.draws,
    })
    print(f"tv_discrepancy={tv!r} plan_cost={sampler.plan.cost_value!r} "
          f"mc_cost={mc_mean!r} (se {mc_se!r})")
    return _finish(out, "-", args.seed, [plan_path, joint_path, summary_path])


def _trajectory_rows(states, fitness, q):
    for state in states:
        x = state.positions
        means = x.mean(axis=0)
        emp = uniform_empirical(x)
        row = [state.step, *means, moment_q(emp, 2.0).value, moment_q(emp, q).value,
               float(np.max(fitness(x)))]
        yield row


def cmd_simulate(args) -> int:
    from .experiments import TAG_SIMULATE, coupled_error_trace
    from .meanfield import run_grid_reference
    from .report import trace_csv, write_csv

    cfg = _load_config(args)
    if args.reference is not None:
        from dataclasses import replace
        if args.reference == "grid" and cfg.dim != 1:
            raise ConfigError("experiment.reference", "grid reference requires dim = 1")
        cfg = replace(cfg, reference=args.reference)
    fitness = cfg.make_fitness()
    initial = cfg.make_initial()
    params = SimParams(n_particles=cfg.n_particles, tau=cfg.tau, sigma=cfg.sigma,
                       n_max=cfg.n_max, dim=cfg.dim, seed=cfg.seed)
    traj = run(params, fitness, initial, stream_path=(TAG_SIMULATE, 0, 0),
               keep_draws=False)

    out = args.out
    outputs = []
    d = cfg.dim
    header = ["step"] + [f"mean_{i + 1}" for i in range(d)] + ["m2", "mq", "best_fitness"]
    summary_path = os.path.join(out, "trajectory.csv")
    write_csv(summary_path, header, _trajectory_rows(traj.states, fitness, cfg.q))
    outputs.append(summary_path)

    stride = cfg.stride_for(cfg.n_max)
    snap_dir = os.path.join(out, "snapshots")
    os.makedirs(snap_dir, exist_ok=True)
    for state in traj.states:
        if state.step % stride == 0 or state.step == cfg.n_max:
            path = os.path.join(snap_dir, f"step_{state.step:05d}.msr")
            save_measure(uniform_empirical(state.positions), path)
            outputs.append(path)

    ref_dir = os.path.join(out, "reference")
    if cfg.reference == "grid":
        os.makedirs(ref_dir, exist_ok=True)
        grid_traj = run_grid_reference(initial, fitness, cfg.tau, cfg.sigma,
                                       cfg.n_max, cfg.grid_m)
        for n, g in enumerate(grid_traj):
            if n % stride == 0 or n == cfg.n_max:
                path = os.path.join(ref_dir, f"grid_{n:05d}.csv")
                write_csv(path, ["cell_midpoint", "mass"],
                          zip(g.midpoints(), g.masses))
                outputs.append(path)
    else:
        from .experiments import TAG_REFERENCE_ENSEMBLE
        os.makedirs(ref_dir, exist_ok=True)
        ref_params = SimParams(
            n_particles=cfg.ensemble_factor * cfg.n_particles, tau=cfg.tau,
            sigma=cfg.sigma, n_max=cfg.n_max, dim=cfg.dim, seed=cfg.seed)
        ref_traj = run(ref_params, fitness, initial,
                       stream_path=(TAG_REFERENCE_ENSEMBLE,), keep_draws=False)
        ref_summary = os.path.join(ref_dir, "trajectory.csv")
        write_csv(ref_summary, header, _trajectory_rows(ref_traj.states, fitness, cfg.q))
        outputs.append(ref_summary)

    if args.coupled:
        trace = coupled_error_trace(cfg)
        trace_path = os.path.join(out, "trace.csv")
        trace_csv(trace, trace_path)
        outputs.append(trace_path)
        if not trace.coupling_bound_ok:
            print("warning: coupling bound violated in the trace", file=sys.stderr)

    return _finish(out, config_hash(cfg.raw), cfg.seed, outputs)


def _rate_command(args, kind: str) -> int:
    from .experiments import rate_in_n_experiment, rate_in_tau_experiment
    from .report import plot_rate_table, rate_table_csv, write_summary
    from .transport import concentration_rate

    cfg = _load_config(args)
    if kind == "N":
        table = rate_in_n_experiment(cfg)
        target = np.log(concentration_rate(2 * cfg.n_list[0], cfg.dim)
                        / concentration_rate(cfg.n_list[0], cfg.dim)) / np.log(2.0)
        name = "rate_n"
    else:
        table = rate_in_tau_experiment(cfg)
        target = 1.0
        name = "rate_tau"

    out = args.out
    csv_path = os.path.join(out, f"{name}.csv")
    svg_path = os.path.join(out, f"{name}.svg")
    summary_path = os.path.join(out, "summary.json")
    rate_table_csv(table, csv_path)
    plot_rate_table(table, svg_path, float(target))
    payload = {
        "kind": table.kind,
        "slope": table.slope,
        "slope_stderr": table.slope_stderr,
        "target_slope": float(target),
        "excluded_params": list(table.excluded),
        "flagged_params": [row.param for row in table.rows if row.flagged],
        "extras": table.extras,
    }
    if table.moment_report is not None:
        payload["moment_check"] = {
            "q": table.moment_report.q,
            "c_observed": table.moment_report.c_observed,
            "c_analytic": table.moment_report.c_analytic,
            "within_envelope": table.moment_report.within_envelope,
            "observed_below_analytic": table.moment_report.observed_below_analytic,
        }
    write_summary(summary_path, payload)
    print(f"{name}: fitted slope {table.slope!r} (target {float(target)!r})")
    return _finish(out, config_hash(cfg.raw), cfg.seed,
                   [csv_path, svg_path, summary_path])


def cmd_suite(args) -> int:
    from .experiments import crossover_lipschitz_suite, selection_stability_suite
    from .report import write_csv, write_summary

    cfg = _load_config(args)
    fitness = cfg.make_fitness()
    sel = selection_stability_suite(fitness, cfg.suite_cases, cfg.seed, dim=cfg.dim)
    cross = crossover_lipschitz_suite(cfg.suite_cases, cfg.seed)

    out = args.out
    csv_path = os.path.join(out, "suite.csv")
    write_csv(csv_path, ["suite", "n_cases", "violations", "worst", "bound", "passed"],
              [(r.name, r.n_cases, r.violations, r.worst, r.bound, int(r.passed))
               for r in (sel, cross)])
    summary_path = os.path.join(out, "summary.json")
    write_summary(summary_path, {
        r.name: {"n_cases": r.n_cases, "violations": r.violations,
                 "worst": r.worst, "bound": r.bound, "passed": r.passed,
                 "extras": r.extras}
        for r in (sel, cross)})
    for r in (sel, cross):
        print(f"{r.name}: {'PASS' if r.passed else 'FAIL'} "
              f"(worst {r.worst!r}, bound {r.bound!r}, cases {r.n_cases})")
    code = _finish(out, config_hash(cfg.raw), cfg.seed, [csv_path, summary_path])
    return code if sel.passed and cross.passed else 2


COMMANDS = {
    "dist": cmd_dist,
    "couple-test": cmd_couple_test,
    "simulate": cmd_simulate,
    "rate-n": lambda args: _rate_command(args, "N"),
    "rate-tau": lambda args: _rate_command(args, "tau"),
    "suite": cmd_suite,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems (unknown subcommand, bad flags)
        if exc.code == 2:
            return USAGE_ERROR
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
