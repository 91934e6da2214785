"""Command-line runner: ``banditmc run --experiment ... [--config file.yaml]``.

Exit status is 0 on success, 2 for an invalid configuration (the message
names the offending file and line) and 1 for a failure while running.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from .config import ConfigError, ExperimentConfig, EXPERIMENTS, COMBINERS, load_config, validate
from .experiments import from_config
from .harness import (
    config_hash,
    evaluate,
    evaluate_pmc,
    fig1_grid,
    grid_csv,
    provenance_line,
    report_csv,
    run_block,
    write_outputs,
)

log = logging.getLogger("banditmc")

# block index reserved for the single-replicate trace runs
TRACE_BLOCK = 2**31 - 1
# keys that change where or how fast results are produced, never what they are
_UNHASHED = ("workers", "out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="banditmc", description="Bandit allocation among Monte Carlo estimators.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment and write CSV reports")
    run.add_argument("--config", help="YAML experiment file")
    run.add_argument("--experiment", choices=EXPERIMENTS)
    run.add_argument("--policies", help="comma-separated list, e.g. ucb1,ts")
    run.add_argument("--n", type=int, help="samples per run (unit-cost experiments)")
    run.add_argument("--budget", type=float, help="time budget per run (cost-aware experiments)")
    run.add_argument("--replicates", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="output directory")
    run.add_argument("--workers", type=int, help="worker processes (default: all CPUs)")
    run.add_argument("--strike", type=float, help="CIR caplet strike")
    run.add_argument("--combiner", choices=COMBINERS)
    return parser


def resolve_config(args) -> ExperimentConfig:
    """Config file (or defaults) with command-line overrides applied."""
    if args.config:
        cfg = load_config(args.config)
    elif args.experiment:
        cfg = ExperimentConfig(experiment=args.experiment)
    else:
        raise ConfigError("<command line>: give --experiment or --config")
    overrides = {
        "experiment": args.experiment,
        "n": args.n,
        "budget": args.budget,
        "replicates": args.replicates,
        "seed": args.seed,
        "out": args.out,
        "workers": args.workers,
        "combiner": args.combiner,
    }
    if args.policies:
        overrides["policies"] = [p.strip() for p in args.policies.split(",") if p.strip()]
    cfg = dataclasses.replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    if args.strike is not None:
        cfg.cir = dataclasses.replace(cfg.cir, strike=args.strike)
    return validate(cfg, "<command line>")


def hashed_config(cfg: ExperimentConfig) -> dict:
    d = cfg.as_dict()
    for key in _UNHASHED:
        d.pop(key)
    return d


def execute(cfg: ExperimentConfig) -> list[str]:
    """Run ``cfg`` and write its artifacts; returns the written paths."""
    workers = cfg.workers or os.cpu_count() or 1
    conf = hashed_config(cfg)
    meta = {"config": conf, "config_hash": config_hash(conf), "seed": cfg.seed}
    if cfg.experiment == "synthetic-grid":
        n = cfg.n or 100_000
        cells = fig1_grid(cfg.grid.scales, cfg.policies, n, cfg.replicates, cfg.seed, workers, cfg.block_size)
        return list(write_outputs(cfg.out, "grid", grid_csv(cells, cfg.policies), meta))

    exp = from_config(cfg)
    log.info("experiment %s: %d arms, horizon %g", exp.name, exp.n_arms, exp.horizon)
    reports = evaluate(exp, cfg.policies, cfg.replicates, cfg.seed, workers, cfg.combiner)
    if cfg.experiment == "cir" and cfg.cir.pmc:
        reports.append(evaluate_pmc(exp, cfg.replicates, cfg.seed, workers, cfg.cir.pmc_population))
    meta["experiment"] = exp.metadata
    meta["clamped_pairs"] = {r.policy: [r.clamped, r.pairs] for r in reports if r.pairs}
    paths = list(write_outputs(cfg.out, cfg.experiment, report_csv(reports, exp.n_arms), meta))
    if cfg.trace:
        header = provenance_line(meta["config_hash"], cfg.seed)
        for policy in cfg.policies:
            trace = run_block(exp, policy, TRACE_BLOCK, 1, cfg.seed, record=True).traces[0]
            path = os.path.join(cfg.out, f"trace_{policy.lower()}.csv")
            with open(path, "w", newline="") as fh:
                fh.write(header)
                fh.write(trace.to_csv())
            paths.append(path)
    return paths


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        paths = execute(cfg)
    except Exception as exc:  # reported, not re-raised: the exit status carries the outcome
        log.debug("run failed", exc_info=True)
        print(f"error: run failed: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
