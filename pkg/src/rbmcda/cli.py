"""Command-line surface.

Subcommands::

    rbmcda simulate --config cfg.yaml --out DIR [--seed S]
    rbmcda filter   --config cfg.yaml --scenario scenario.csv --out DIR [--seed S]
    rbmcda sample   --config cfg.yaml --scenario scenario.csv --out DIR
                    [--seed S] [--chains K] [--threads K]
    rbmcda diagnose --config cfg.yaml --traces DIR [DIR ...] --out DIR
                    [--reference DIR] [--truth truth.csv]
    rbmcda --print-defaults

Exit codes: 0 success, 2 validation error, 3 numeric degeneracy, 4 I/O
error. Every command writes a provenance JSON capturing the resolved
configuration and seed, which is sufficient to rerun it.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, config_to_dict, default_config, dump_config, load_config
from .diagnostics import (
    kolmogorov,
    mean_ospa_over_trace,
    pooled_num_targets_dist,
    psrf,
)
from .filter import DegenerateFilterError, rbmcda_filter
from .io import (
    config_digest,
    read_histories_jsonl,
    read_trace_csv,
    write_histories_jsonl,
    write_particles_jsonl,
    write_provenance,
    write_trace_csv,
)
from .oumodel import PARAM_NAMES
from .runner import run_chain, chain_seeds
from .simulate import GenerationFailedError, scenario_from_csv, scenario_to_csv, simulate_scenario, truth_from_csv, truth_to_csv

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DEGENERATE = 3
EXIT_IO = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rbmcda",
        description="Multi-target tracking with Rao-Blackwellized Monte "
        "Carlo data association and particle MCMC parameter estimation.",
    )
    parser.add_argument(
        "--print-defaults", action="store_true",
        help="print the default configuration as YAML and exit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command")

    def common(p, scenario=False):
        p.add_argument("--config", required=True, help="YAML configuration file")
        p.add_argument("--out", default=None, help="output directory (default: config output.dir)")
        p.add_argument("--seed", type=int, default=None, help="override chains.seed")
        if scenario:
            p.add_argument("--scenario", required=True, help="scenario CSV")

    p_sim = sub.add_parser("simulate", help="generate a ground-truth scenario CSV")
    common(p_sim)

    p_filt = sub.add_parser("filter", help="run the filter once over a scenario")
    common(p_filt, scenario=True)

    p_samp = sub.add_parser("sample", help="run MCMC chains over a scenario")
    common(p_samp, scenario=True)
    p_samp.add_argument("--chains", type=int, default=None, help="override chains.count")
    p_samp.add_argument("--threads", type=int, default=1, help="parallel chain workers")

    p_diag = sub.add_parser("diagnose", help="summarize one or more sample runs")
    p_diag.add_argument("--config", required=True)
    p_diag.add_argument("--out", default=None)
    p_diag.add_argument("--traces", nargs="+", required=True,
                        help="sample output directories")
    p_diag.add_argument("--reference", default=None,
                        help="sample output directory used as the long-run reference")
    p_diag.add_argument("--truth", default=None, help="truth CSV for OSPA")
    p_diag.add_argument("--scenario", default=None,
                        help="scenario CSV (needed for OSPA replay)")
    p_diag.add_argument("--ospa-cutoff", type=float, default=10.0)
    p_diag.add_argument("--ospa-order", type=float, default=1.0)
    p_diag.add_argument("--ospa-stride", type=int, default=50)
    return parser


def _prepare(args) -> tuple[RunConfig, Path, int]:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.chains.seed = args.seed
    if getattr(args, "chains", None) is not None:
        cfg.chains.count = args.chains
    cfg.validate()
    out = Path(args.out if args.out is not None else cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out, cfg.chains.seed


def cmd_simulate(args) -> int:
    cfg, out, seed = _prepare(args)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    scenario = simulate_scenario(cfg.scenario.scenario_config(cfg.model.params()), rng)
    scenario_to_csv(scenario, out / "scenario.csv")
    truth_to_csv(scenario, out / "truth.csv")
    write_provenance(
        out / "provenance.json", "simulate", config_to_dict(cfg), seed,
        extra={"n_obs": scenario.n_obs, "version": __version__},
    )
    print(f"wrote {scenario.n_obs} observations to {out / 'scenario.csv'}")
    return EXIT_OK


def cmd_filter(args) -> int:
    cfg, out, seed = _prepare(args)
    scenario = scenario_from_csv(args.scenario)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    pset, log_ml = rbmcda_filter(
        scenario, cfg.model.params(), cfg.filter.n_particles,
        cfg.filter_config(), rng,
    )
    write_particles_jsonl(pset, out / "particles.jsonl")
    with open(out / "summary.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["metric", "value"])
        writer.writerow(["log_marginal_lik", f"{log_ml:.17g}"])
        writer.writerow(["n_particles", pset.n_particles])
        writer.writerow(["kalman_predicts", pset.counter.predicts])
        writer.writerow(["kalman_updates", pset.counter.updates])
        writer.writerow(["ess", f"{pset.ess():.17g}"])
    write_provenance(
        out / "provenance.json", "filter", config_to_dict(cfg), seed,
        extra={"scenario": str(args.scenario), "version": __version__},
    )
    print(f"log marginal likelihood {log_ml:.6f} "
          f"({pset.counter.total} Kalman evaluations)")
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg, out, seed = _prepare(args)
    scenario = scenario_from_csv(args.scenario)
    count = cfg.chains.count
    seeds = chain_seeds(seed, count)
    manifest = {
        "format_version": 1,
        "command": "sample",
        "algorithm": cfg.sampler.algorithm,
        "fix_parameters": cfg.sampler.fix_parameters,
        "config_digest": config_digest(config_to_dict(cfg)),
        "seed": seed,
        "chains": [],
        "status": "running",
    }
    threads = max(1, args.threads)
    failed = None
    traces = []
    try:
        if threads > 1 and count > 1:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=min(threads, count)) as pool:
                futures = [
                    pool.submit(run_chain, cfg, scenario, c, seeds[c])
                    for c in range(count)
                ]
                traces = [f.result() for f in futures]
        else:
            traces = [run_chain(cfg, scenario, c, seeds[c]) for c in range(count)]
    except DegenerateFilterError as exc:
        failed = str(exc)
    for trace in traces:
        stem = f"chain{trace.chain_id:02d}"
        write_trace_csv(trace, out / f"trace_{stem}.csv")
        write_histories_jsonl(trace, out / f"histories_{stem}.jsonl")
        manifest["chains"].append(
            {
                "chain": trace.chain_id,
                "trace": f"trace_{stem}.csv",
                "histories": f"histories_{stem}.jsonl",
                "iterations": trace.iterations,
                "acceptance_rate": trace.acceptance_rate(),
                "degenerate_rejects": trace.degenerate_rejects,
            }
        )
    manifest["status"] = "failed" if failed else "complete"
    if failed:
        manifest["error"] = failed
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    write_provenance(
        out / "provenance.json", "sample", config_to_dict(cfg), seed,
        extra={"scenario": str(args.scenario), "version": __version__},
    )
    if failed:
        print(f"sampling failed: {failed}", file=sys.stderr)
        return EXIT_DEGENERATE
    print(f"wrote {len(traces)} chain(s) to {out}")
    return EXIT_OK


def _load_run(run_dir: Path):
    manifest = json.loads((Path(run_dir) / "manifest.json").read_text())
    traces = []
    for entry in manifest["chains"]:
        trace = read_trace_csv(
            Path(run_dir) / entry["trace"], Path(run_dir) / entry["histories"]
        )
        traces.append(trace)
    return manifest, traces


def cmd_diagnose(args) -> int:
    cfg = load_config(args.config).validate()
    out = Path(args.out if args.out is not None else cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = [_load_run(d) for d in args.traces]
    scenario = scenario_from_csv(args.scenario) if args.scenario else None
    truth_points = None
    if args.truth:
        _, truth_states = truth_from_csv(args.truth)
        truth_points = truth_states[-1, :, 2:4]

    metrics: list[tuple[str, str, str]] = []
    reference = None
    if args.reference:
        _, ref_traces = _load_run(args.reference)
        reference = pooled_num_targets_dist(ref_traces)

    hist_rows = []
    for label_idx, (manifest, traces) in enumerate(runs):
        label = "without_params" if manifest.get("fix_parameters") else "with_params"
        label = f"{label}:{Path(args.traces[label_idx]).name}"
        pooled = pooled_num_targets_dist(traces)
        for value, prob in zip(pooled.support, pooled.probs):
            hist_rows.append((label, int(value), float(prob)))
        if len(traces) >= 2:
            halves = [t.thetas[t.thetas.shape[0] // 2 :] for t in traces]
            rhat = psrf(halves)
            for name, value in zip(PARAM_NAMES, np.atleast_1d(rhat)):
                metrics.append((label, f"psrf_{name}", f"{value:.6g}"))
        if reference is not None:
            metrics.append(
                (label, "kolmogorov_to_reference", f"{kolmogorov(pooled, reference):.6g}")
            )
        if truth_points is not None and scenario is not None:
            ospa_values = []
            for trace in traces:
                n = trace.thetas.shape[0]
                ospa_values.append(
                    mean_ospa_over_trace(
                        trace, scenario, truth_points, cfg.filter_config(),
                        cutoff=args.ospa_cutoff, order=args.ospa_order,
                        start=n // 2, stride=args.ospa_stride,
                    )
                )
            metrics.append((label, "mean_ospa", f"{np.mean(ospa_values):.6g}"))
            metrics.append((label, "ospa_cutoff", f"{args.ospa_cutoff:g}"))
            metrics.append((label, "ospa_order", f"{args.ospa_order:g}"))
        elif truth_points is not None:
            metrics.append((label, "mean_ospa", "unavailable: --scenario not given"))
        else:
            metrics.append((label, "mean_ospa", "unavailable: no truth provided"))
        if scenario is not None and scenario.truth_assoc is not None:
            true_count = int(scenario.truth_assoc.max())
            metrics.append(
                (label, "p_true_target_count", f"{pooled.prob_of(true_count):.6g}")
            )

    with open(out / "metrics.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["run", "metric", "value"])
        writer.writerows(metrics)
    with open(out / "num_targets_hist.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["run", "n_targets", "probability"])
        writer.writerows(hist_rows)
    print(f"wrote metrics for {len(runs)} run(s) to {out / 'metrics.csv'}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults:
        print(dump_config(default_config()), end="")
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_VALIDATION
    handlers = {
        "simulate": cmd_simulate,
        "filter": cmd_filter,
        "sample": cmd_sample,
        "diagnose": cmd_diagnose,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DegenerateFilterError, GenerationFailedError) as exc:
        print(f"numeric degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
