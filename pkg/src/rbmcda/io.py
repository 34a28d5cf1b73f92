"""File formats: trace CSV, history / particle JSON-lines, provenance.

All formats carry a version marker. The trace CSV starts with a comment
line ``# rbmcda-trace v1`` followed by a header row; JSON-lines records
carry a ``format_version`` field; provenance and manifest files are plain
JSON documents that record everything needed to rerun a command.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .filter import ParticleSet
from .oumodel import PARAM_NAMES
from .pmcmc import Trace

__all__ = [
    "TRACE_MAGIC",
    "FORMAT_VERSION",
    "write_trace_csv",
    "read_trace_csv",
    "write_histories_jsonl",
    "read_histories_jsonl",
    "write_particles_jsonl",
    "write_provenance",
    "config_digest",
]

FORMAT_VERSION = 1
TRACE_MAGIC = f"# rbmcda-trace v{FORMAT_VERSION}"

TRACE_COLUMNS = (
    ("chain", "iteration")
    + PARAM_NAMES
    + ("log_lik", "log_prior", "accepted", "occupancy", "kalman_calls",
       "n_alive", "n_seen")
)


def write_trace_csv(trace: Trace, path) -> None:
    with open(path, "w", newline="") as handle:
        handle.write(TRACE_MAGIC + "\n")
        writer = csv.writer(handle)
        writer.writerow(TRACE_COLUMNS)
        for i in range(trace.thetas.shape[0]):
            writer.writerow(
                [trace.chain_id, i]
                + [f"{v:.17g}" for v in trace.thetas[i]]
                + [
                    f"{trace.log_liks[i]:.17g}",
                    f"{trace.log_priors[i]:.17g}",
                    int(trace.accepted[i]),
                    f"{trace.occupancy[i]:.17g}",
                    int(trace.kalman_calls[i]),
                    int(trace.n_alive[i]),
                    int(trace.n_seen[i]),
                ]
            )


def read_trace_csv(path, histories_path=None) -> Trace:
    """Rebuild a Trace from its CSV (and optional histories JSONL).

    Fields that are not serialized (proposal covariance snapshots,
    marginal-MH particle summaries unless present in the JSONL) come back
    empty.
    """
    with open(path, newline="") as handle:
        magic = handle.readline().strip()
        if magic != TRACE_MAGIC:
            raise ValueError(f"not a trace file (got {magic!r})")
        reader = csv.DictReader(handle)
        rows = list(reader)
    n = len(rows)
    thetas = np.zeros((n, len(PARAM_NAMES)))
    log_liks = np.zeros(n)
    log_priors = np.zeros(n)
    accepted = np.zeros(n, dtype=bool)
    occupancy = np.zeros(n)
    kalman_calls = np.zeros(n, dtype=np.int64)
    n_alive = np.zeros(n, dtype=int)
    n_seen = np.zeros(n, dtype=int)
    chain_id = 0
    for i, row in enumerate(rows):
        chain_id = int(row["chain"])
        for j, name in enumerate(PARAM_NAMES):
            thetas[i, j] = float(row[name])
        log_liks[i] = float(row["log_lik"])
        log_priors[i] = float(row["log_prior"])
        accepted[i] = bool(int(row["accepted"]))
        occupancy[i] = float(row["occupancy"])
        kalman_calls[i] = int(row["kalman_calls"])
        n_alive[i] = int(row["n_alive"])
        n_seen[i] = int(row["n_seen"])
    histories: list[tuple[int, ...]] = [()] * n
    counts_alive = counts_seen = pweights = None
    algorithm = "pgibbs" if np.allclose(occupancy[1:], 1.0) else "pmmh"
    if histories_path is not None:
        records = read_histories_jsonl(histories_path)
        algorithm = records[0].get("algorithm", algorithm) if records else algorithm
        particle_rows = []
        for rec in records:
            histories[rec["iteration"]] = tuple(rec["history"])
            if "particles" in rec:
                particle_rows.append((rec["iteration"], rec["particles"]))
        if particle_rows:
            n_particles = len(particle_rows[0][1])
            counts_alive = np.zeros((n, n_particles), dtype=int)
            counts_seen = np.zeros((n, n_particles), dtype=int)
            pweights = np.zeros((n, n_particles))
            for i, summaries in particle_rows:
                for p, (alive, seen, weight) in enumerate(summaries):
                    counts_alive[i, p] = alive
                    counts_seen[i, p] = seen
                    pweights[i, p] = weight
    return Trace(
        algorithm=algorithm,
        param_names=PARAM_NAMES,
        thetas=thetas,
        log_liks=log_liks,
        log_priors=log_priors,
        accepted=accepted,
        occupancy=occupancy,
        histories=histories,
        n_alive=n_alive,
        n_seen=n_seen,
        kalman_calls=kalman_calls,
        proposal_covs=np.zeros((n, 0, 0)),
        particle_counts_alive=counts_alive,
        particle_counts_seen=counts_seen,
        particle_weights=pweights,
        chain_id=chain_id,
    )


def write_histories_jsonl(trace: Trace, path) -> None:
    """One record per iteration: retained history plus, for marginal-MH
    traces, the per-particle population summaries."""
    with open(path, "w") as handle:
        for i in range(trace.thetas.shape[0]):
            record = {
                "format_version": FORMAT_VERSION,
                "algorithm": trace.algorithm,
                "chain": trace.chain_id,
                "iteration": i,
                "history": list(trace.histories[i]),
                "n_alive": int(trace.n_alive[i]),
                "n_seen": int(trace.n_seen[i]),
            }
            if trace.particle_weights is not None:
                record["particles"] = [
                    [
                        int(trace.particle_counts_alive[i, p]),
                        int(trace.particle_counts_seen[i, p]),
                        float(trace.particle_weights[i, p]),
                    ]
                    for p in range(trace.particle_weights.shape[1])
                ]
            handle.write(json.dumps(record) + "\n")


def read_histories_jsonl(path) -> list[dict]:
    records = []
    with open(path) as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def write_particles_jsonl(pset: ParticleSet, path) -> None:
    """One record per particle: weight, history, and per-target moments."""
    with open(path, "w") as handle:
        for i, p in enumerate(pset.particles):
            record = {
                "format_version": FORMAT_VERSION,
                "particle": i,
                "log_weight": _json_float(p.log_weight),
                "cond_loglik": _json_float(p.cond_loglik),
                "history": list(p.assoc_history),
                "n_alive": p.n_alive,
                "n_seen": p.n_seen,
                "targets": [
                    {
                        "label": j + 1,
                        "alive": bool(p.summary.visible[j]),
                        "last_seen": float(p.summary.last_seen[j]),
                        "mean": np.asarray(t.mean).tolist(),
                        "cov": np.asarray(t.cov).tolist(),
                    }
                    for j, t in enumerate(p.targets)
                ],
            }
            handle.write(json.dumps(record) + "\n")


def _json_float(x: float):
    return None if math.isinf(x) or math.isnan(x) else float(x)


def config_digest(config_dict: dict) -> str:
    return hashlib.sha256(
        json.dumps(config_dict, sort_keys=True).encode()
    ).hexdigest()


def write_provenance(path, command: str, config_dict: dict, seed: int, extra=None) -> None:
    record = {
        "format_version": FORMAT_VERSION,
        "command": command,
        "seed": seed,
        "config_digest": config_digest(config_dict),
        "config": config_dict,
    }
    if extra:
        record.update(extra)
    Path(path).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
