"""Batch command-line front end.

Subcommands: describe, synthesize, simulate, estimate, check, baseline,
and the developer-facing check-oracle. Every command is a pure function
of its inputs and the seed: rerunning with identical arguments produces
byte-identical output files. Exit codes: 0 success, 1 non-convergence,
2 input error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import ctmc
from .baselines import build_regression_panel, fe_ols, fe_poisson
from .effects import EffectContext, EffectSpec, moment_names, target_statistics, wave_contexts
from .estimate import EstimationConfig, EstimationDiverged, convergence_check, estimate
from .files import (
    read_dataset,
    read_json,
    read_model,
    write_behavior_csv,
    write_dataset,
    write_edges_csv,
    write_json,
    atomic_write_text,
)
from .panel import (
    DataError,
    LoadConfig,
    behavior_change_table,
    describe_network,
    network_change_table,
)
from .simulate import ParameterVector, simulate_panel
from .synth import SynthesisConfig, synthesize_dataset

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_INPUT_ERROR = 2


def _dataset_args(parser):
    parser.add_argument("--edges", required=True, help="edge CSV (wave,src,dst)")
    parser.add_argument("--behavior", required=True, help="behavior CSV (wave,actor,value)")
    parser.add_argument("--covariates", required=True, help="covariate CSV (actor,gender,age,tenure_days)")
    parser.add_argument("--config", required=True, help="dataset JSON (n_levels, behavior_value, ...)")


def _fmt(value, digits=3):
    return "undef" if value is None else f"{value:.{digits}f}"


def render_descriptives(dataset) -> str:
    """The four descriptive tables: per-wave network summary, tie-change
    summary with Jaccard stability, level histogram, level-change summary."""
    lines = ["network descriptives"]
    lines.append(f"  {'wave':<6}{'ties':>10}{'density':>10}{'avg degree':>12}")
    for row in describe_network(dataset):
        lines.append(
            f"  {row['wave']:<6}{row['tie_count']:>10}{row['density']:>10.3f}"
            f"{row['average_degree']:>12.3f}"
        )
    lines.append("")
    lines.append("tie changes")
    lines.append(f"  {'period':<8}{'0=>0':>10}{'0=>1':>10}{'1=>0':>10}{'1=>1':>10}{'jaccard':>10}")
    for row in network_change_table(dataset):
        lines.append(
            f"  {row['period']:<8}{row['n00']:>10}{row['n01']:>10}{row['n10']:>10}"
            f"{row['n11']:>10}{_fmt(row['jaccard']):>10}"
        )
    changes, hist = behavior_change_table(dataset)
    lines.append("")
    lines.append("behavior level histogram")
    lines.append("  " + f"{'level':<7}" + "".join(f"{f'wave {w + 1}':>9}" for w in range(dataset.n_waves)))
    for lv in range(dataset.n_levels):
        lines.append("  " + f"{lv + 1:<7}" + "".join(f"{int(c):>9}" for c in hist[lv]))
    lines.append("")
    lines.append("behavior changes")
    lines.append(f"  {'period':<8}{'decrease':>10}{'increase':>10}{'constant':>10}")
    for row in changes:
        lines.append(
            f"  {row['period']:<8}{row['n_decrease']:>10}{row['n_increase']:>10}"
            f"{row['n_constant']:>10}"
        )
    return "\n".join(lines) + "\n"


def cmd_describe(args) -> int:
    dataset, _ = read_dataset(args.edges, args.behavior, args.covariates, args.config)
    text = render_descriptives(dataset)
    if args.out:
        atomic_write_text(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_synthesize(args) -> int:
    spec, params, raw = read_model(args.model)
    if params is None:
        raise DataError("synthesize needs a model file with a 'params' section (the true parameters)")
    cfg = SynthesisConfig(
        n_actors=args.n_actors,
        n_waves=args.n_waves,
        n_levels=args.n_levels,
        density=args.density,
        spec=spec,
        params=params,
        level_mode=args.level_mode,
    )
    dataset = synthesize_dataset(cfg, args.seed)
    load_cfg = LoadConfig(n_levels=args.n_levels)
    paths = write_dataset(args.out_dir, dataset, load_cfg)
    write_json(
        os.path.join(args.out_dir, "true_params.json"),
        {"effects": spec.to_config(), "params": params.to_config(), "seed": args.seed},
    )
    sys.stdout.write(f"wrote {len(paths) + 1} files to {args.out_dir}\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    dataset, _ = read_dataset(args.edges, args.behavior, args.covariates, args.config)
    spec, params, _ = read_model(args.model)
    if params is None:
        raise DataError("simulate needs a model file with a 'params' section")
    try:
        params.validate(spec, dataset.n_periods, require_positive_rates=False)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    contexts = wave_contexts(dataset)
    names = moment_names(spec, dataset.n_periods)
    from .simulate import replicated_moments

    moments = replicated_moments(
        dataset, params, spec, seed_root=[args.seed], n_reps=args.replications,
        threads=args.threads, contexts=contexts,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    write_json(
        os.path.join(args.out_dir, "moments.json"),
        {
            "names": names,
            "replications": args.replications,
            "mean": [float(x) for x in moments.mean(axis=0)],
            "per_replication": [[float(x) for x in row] for row in moments],
            "targets": [float(x) for x in target_statistics(dataset, spec, contexts=contexts).vector()],
        },
    )
    # End states of replication 0, written as a full panel (wave 1 observed).
    sim = simulate_panel(dataset, params, spec, seed=[args.seed, 0], contexts=contexts,
                         collect_trace=args.trace is not None)
    nets = np.stack([dataset.networks[0]] + [r.network for r in sim.records])
    behs = np.stack([dataset.behaviors[0]] + [r.behavior for r in sim.records])
    write_edges_csv(os.path.join(args.out_dir, "sim_edges.csv"), nets)
    write_behavior_csv(os.path.join(args.out_dir, "sim_behavior.csv"), behs)
    if args.trace is not None:
        lines = ["t,actor,domain,choice"]
        for m, rec in enumerate(sim.records):
            for t, actor, domain, choice in rec.trace:
                lines.append(f"{m + t:.9f},{actor},{domain},{choice}")
        atomic_write_text(args.trace, "\n".join(lines) + "\n")
    sys.stdout.write(f"simulated {args.replications} replication(s) over {dataset.n_periods} period(s)\n")
    return EXIT_OK


def cmd_estimate(args) -> int:
    dataset, _ = read_dataset(args.edges, args.behavior, args.covariates, args.config)
    spec, _, raw = read_model(args.model)
    est_cfg = dict(raw.get("estimation", {}))
    est_cfg["base_seed"] = args.seed
    if args.threads is not None:
        est_cfg["threads"] = args.threads
    try:
        config = EstimationConfig.from_mapping(est_cfg)
    except ValueError as exc:
        raise DataError(f"bad estimation settings: {exc}") from None
    result = estimate(dataset, spec, config)
    os.makedirs(args.out_dir, exist_ok=True)
    write_json(os.path.join(args.out_dir, "result.json"), result.to_dict())
    report = result.format_report() + "\nconvergence diagnostics\n" + result.format_check_table()
    atomic_write_text(os.path.join(args.out_dir, "report.txt"), report)
    sys.stdout.write(report)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_check(args) -> int:
    dataset, _ = read_dataset(args.edges, args.behavior, args.covariates, args.config)
    spec, params, _ = read_model(args.model)
    if params is None:
        raise DataError("check needs a model file with a 'params' section")
    try:
        params.validate(spec, dataset.n_periods)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    check = convergence_check(
        params, dataset, spec, args.n_check, seed=args.seed, tau=args.tau, threads=args.threads
    )
    payload = {
        "converged": bool(check.converged),
        "max_abs_t_ratio": check.max_abs_t,
        "statistics": [
            {
                "name": r.name,
                "target": r.target,
                "mean_deviation": r.mean_deviation,
                "sd_deviation": r.sd_deviation,
                "t_ratio": r.t_ratio if np.isfinite(r.t_ratio) else None,
            }
            for r in check.rows
        ],
    }
    if args.out:
        write_json(args.out, payload)
    sys.stdout.write(f"max |t-ratio| {check.max_abs_t:.3f} over {args.n_check} simulations; "
                     f"{'converged' if check.converged else 'NOT converged'} (tau {args.tau})\n")
    return EXIT_OK if check.converged else EXIT_NOT_CONVERGED


def cmd_baseline(args) -> int:
    dataset, cfg = read_dataset(args.edges, args.behavior, args.covariates, args.config)
    if dataset.raw_counts is None:
        raise DataError(
            "baseline regressions need raw counts; set behavior_value='count' in the dataset config"
        )
    panel = build_regression_panel(dataset.raw_counts, dataset.networks, dataset.covariates)
    result = fe_ols(panel) if args.kind == "ols" else fe_poisson(panel)
    text = result.format_table()
    if args.out:
        atomic_write_text(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_check_oracle(args) -> int:
    """Developer smoke test: event-driven simulation against the exact
    transient distribution on a two-actor chain."""
    from .panel import CovariateTable, classify_activity
    from .simulate import simulate_period

    spec = EffectSpec.from_config({"network": ["out_degree"], "behavior": ["linear_tendency"]})
    params = ParameterVector(rate_net=[1.2], rate_beh=[1.5], beta_net=[0.4], beta_beh=[-0.3])
    n, n_levels = 2, 2
    network = np.zeros((n, n), dtype=np.uint8)
    behavior = np.ones(n, dtype=np.int64)
    ctx = EffectContext.build(CovariateTable.zeros(n), n_levels, classify_activity(behavior))
    space = ctmc.StateSpace(n, n_levels)
    q = ctmc.build_intensity_matrix(space, params, 0, spec, ctx)
    exact = ctmc.transition_distribution(q, space.index(network, behavior))

    counts = np.zeros(space.size)
    for rep in range(args.replications):
        rec = simulate_period(network, behavior, params, 0, spec, ctx, seed=[args.seed, rep])
        counts[space.index(rec.network, rec.behavior)] += 1
    freq = counts / args.replications
    worst = 0.0
    for s in range(space.size):
        se = np.sqrt(max(exact[s] * (1 - exact[s]), 1e-12) / args.replications)
        worst = max(worst, abs(freq[s] - exact[s]) / (3 * se + 1e-300))
    sys.stdout.write(
        f"worst |simulated - exact| over 3 standard errors: {worst:.3f} "
        f"({args.replications} replications, {space.size} states)\n"
    )
    return EXIT_OK if worst <= 1.0 else EXIT_NOT_CONVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coevolve",
        description="simulate and estimate joint network-behavior evolution",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("describe", help="render the descriptive tables")
    _dataset_args(p)
    p.add_argument("--out", help="also write the tables to this file")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("synthesize", help="generate a synthetic panel with known parameters")
    p.add_argument("--model", required=True, help="model JSON with effects and true params")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--n-actors", required=True, type=int)
    p.add_argument("--n-waves", required=True, type=int)
    p.add_argument("--n-levels", required=True, type=int)
    p.add_argument("--density", required=True, type=float)
    p.add_argument("--level-mode", default="uniform", choices=["uniform", "skewed"])
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="run conditional panel simulations")
    _dataset_args(p)
    p.add_argument("--model", required=True, help="model JSON with effects and params")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--trace", help="write replication 0's event trace to this file")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="method-of-moments estimation")
    _dataset_args(p)
    p.add_argument("--model", required=True, help="model JSON with effects (+ optional estimation section)")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("check", help="convergence diagnostics at given parameters")
    _dataset_args(p)
    p.add_argument("--model", required=True, help="model JSON with effects and params")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--n-check", type=int, default=1000)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help="write diagnostics JSON to this file")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("baseline", help="fixed-effects regression baselines")
    _dataset_args(p)
    p.add_argument("--kind", required=True, choices=["ols", "poisson"])
    p.add_argument("--out", help="write the coefficient table to this file")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("check-oracle", help="internal: simulator vs exact transient distribution")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replications", type=int, default=20000)
    p.set_defaults(func=cmd_check_oracle)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING
    if args.verbose == 1:
        level = logging.INFO
    elif args.verbose >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DataError, EstimationDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
