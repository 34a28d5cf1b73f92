"""Ground-truth scenario generation and CSV interchange.

A scenario draws fixed home locations uniformly in a rectangular window,
starts every target in the stationary law of the motion model, samples
observation times uniformly over a span, and assigns each measurement to a
uniformly random target, rejecting whole assignment vectors until every
target is observed at least once. Measurements are true positions plus
isotropic Gaussian noise. The stored assignment truth is relabeled
canonically (labels in order of first appearance) so it is directly
comparable with filter output.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .oumodel import ModelParams, steady_state_var

__all__ = [
    "ScenarioConfig",
    "Scenario",
    "GenerationFailedError",
    "ScenarioParseError",
    "simulate_scenario",
    "scenario_to_csv",
    "scenario_from_csv",
    "truth_to_csv",
    "truth_from_csv",
]


class GenerationFailedError(RuntimeError):
    """The assignment rejection loop hit its attempt limit."""


class ScenarioParseError(ValueError):
    """A scenario CSV row could not be parsed."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class ScenarioConfig:
    """Generator settings: target/observation counts, spatial window,
    observation time span, true parameters, and the rejection cap."""

    n_targets: int
    n_obs: int
    window: tuple[float, float, float, float] = (0.0, 100.0, 0.0, 100.0)
    time_span: tuple[float, float] = (0.0, 1.0)
    theta: ModelParams = ModelParams(q=100.0, lam=0.5, sigma=0.5)
    max_attempts: int = 1_000_000

    def __post_init__(self):
        if self.n_targets < 1 or self.n_obs < self.n_targets:
            raise ValueError("need n_obs >= n_targets >= 1")
        x0, x1, y0, y1 = self.window
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"window must be nonempty, got {self.window}")
        t0, t1 = self.time_span
        if not t1 > t0:
            raise ValueError(f"time span must be nonempty, got {self.time_span}")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be positive")


@dataclass
class Scenario:
    """Time-ordered measurements with optional ground truth.

    truth_states, when present, holds every target's state at every
    observation time, shape (n_obs, n_targets, 4) in canonical label
    order.
    """

    times: np.ndarray
    ys: np.ndarray
    truth_assoc: np.ndarray | None = None
    truth_states: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        self.ys = ys.reshape(self.times.size, -1) if ys.size else ys.reshape(0, 2)
        if np.any(np.diff(self.times) < 0):
            raise ValueError("observation times must be nondecreasing")
        if self.truth_assoc is not None:
            self.truth_assoc = np.asarray(self.truth_assoc, dtype=int)

    @property
    def n_obs(self) -> int:
        return self.times.size

    def final_truth_positions(self) -> np.ndarray:
        """True target positions at the last observation time."""
        if self.truth_states is None:
            raise ValueError("scenario carries no ground-truth states")
        return self.truth_states[-1, :, 2:4]


def _surjective_assignments(
    n_obs: int, n_targets: int, max_attempts: int, rng: np.random.Generator
) -> np.ndarray:
    for _ in range(max_attempts):
        assoc = rng.integers(1, n_targets + 1, size=n_obs)
        if np.unique(assoc).size == n_targets:
            return assoc
    raise GenerationFailedError(
        f"no surjective assignment of {n_obs} observations onto "
        f"{n_targets} targets within {max_attempts} attempts"
    )


def _canonical_order(assoc: np.ndarray, n_targets: int) -> np.ndarray:
    """Original labels in order of first appearance."""
    _, first_pos = np.unique(assoc, return_index=True)
    order = assoc[np.sort(first_pos)]
    if order.size != n_targets:
        raise AssertionError("assignment is not surjective")
    return order


def simulate_scenario(cfg: ScenarioConfig, rng: np.random.Generator) -> Scenario:
    """Generate one scenario from the configured ground-truth model."""
    theta = cfg.theta
    x0, x1, y0, y1 = cfg.window
    homes = np.column_stack(
        [rng.uniform(x0, x1, cfg.n_targets), rng.uniform(y0, y1, cfg.n_targets)]
    )
    excursion_std = math.sqrt(steady_state_var(theta))
    positions = homes + excursion_std * rng.standard_normal(homes.shape)

    raw_times = rng.uniform(cfg.time_span[0], cfg.time_span[1], cfg.n_obs)
    order = np.argsort(raw_times, kind="stable")
    times = raw_times[order]

    assoc = _surjective_assignments(cfg.n_obs, cfg.n_targets, cfg.max_attempts, rng)
    label_order = _canonical_order(assoc, cfg.n_targets)
    relabel = np.empty(cfg.n_targets + 1, dtype=int)
    relabel[label_order] = np.arange(1, cfg.n_targets + 1)
    canonical = relabel[assoc]
    homes = homes[label_order - 1]
    positions = positions[label_order - 1]

    states = np.zeros((cfg.n_obs, cfg.n_targets, 4))
    ys = np.zeros((cfg.n_obs, 2))
    prev_t = times[0]
    for k, t in enumerate(times):
        dt = float(t - prev_t)
        decay = math.exp(-theta.lam * dt)
        pull = -math.expm1(-theta.lam * dt)
        step_std = math.sqrt(steady_state_var(theta) * -math.expm1(-2.0 * theta.lam * dt))
        positions = (
            pull * homes
            + decay * positions
            + step_std * rng.standard_normal(positions.shape)
        )
        states[k, :, :2] = homes
        states[k, :, 2:] = positions
        target = canonical[k] - 1
        ys[k] = positions[target] + theta.sigma * rng.standard_normal(2)
        prev_t = t

    return Scenario(times=times, ys=ys, truth_assoc=canonical, truth_states=states)


def scenario_to_csv(scenario: Scenario, path) -> None:
    """Write observations (and assignment truth when present) to CSV."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        header = ["t", "y1", "y2"]
        if scenario.truth_assoc is not None:
            header.append("truth_assoc")
        writer.writerow(header)
        for k in range(scenario.n_obs):
            row = [
                f"{scenario.times[k]:.17g}",
                f"{scenario.ys[k, 0]:.17g}",
                f"{scenario.ys[k, 1]:.17g}",
            ]
            if scenario.truth_assoc is not None:
                row.append(str(int(scenario.truth_assoc[k])))
            writer.writerow(row)


def scenario_from_csv(path) -> Scenario:
    """Read a scenario CSV; rows are re-sorted by time, stable on ties."""
    times: list[float] = []
    ys: list[tuple[float, float]] = []
    assoc: list[int] = []
    has_assoc = False
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration as exc:
            raise ScenarioParseError("empty file", 1) from exc
        header = [h.strip() for h in header]
        if header[:3] != ["t", "y1", "y2"]:
            raise ScenarioParseError(f"unexpected header {header}", 1)
        has_assoc = len(header) > 3 and header[3] == "truth_assoc"
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                times.append(float(row[0]))
                ys.append((float(row[1]), float(row[2])))
                if has_assoc:
                    assoc.append(int(row[3]))
            except (ValueError, IndexError) as exc:
                raise ScenarioParseError(str(exc), line_no) from exc
    times_arr = np.array(times)
    order = np.argsort(times_arr, kind="stable")
    return Scenario(
        times=times_arr[order],
        ys=np.array(ys).reshape(len(times), 2)[order],
        truth_assoc=np.array(assoc, dtype=int)[order] if has_assoc else None,
    )


def truth_to_csv(scenario: Scenario, path) -> None:
    """Write per-target true states at every observation time."""
    if scenario.truth_states is None:
        raise ValueError("scenario carries no ground-truth states")
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", "target", "mu1", "mu2", "p1", "p2"])
        n_obs, n_targets, _ = scenario.truth_states.shape
        for k in range(n_obs):
            for j in range(n_targets):
                writer.writerow(
                    [f"{scenario.times[k]:.17g}", j + 1]
                    + [f"{v:.17g}" for v in scenario.truth_states[k, j]]
                )


def truth_from_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a truth CSV back as (times, states) with states shaped
    (n_obs, n_targets, 4)."""
    rows: list[tuple[float, int, float, float, float, float]] = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if [h.strip() for h in header] != ["t", "target", "mu1", "mu2", "p1", "p2"]:
            raise ScenarioParseError(f"unexpected header {header}", 1)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append(
                    (float(row[0]), int(row[1]), float(row[2]), float(row[3]),
                     float(row[4]), float(row[5]))
                )
            except (ValueError, IndexError) as exc:
                raise ScenarioParseError(str(exc), line_no) from exc
    n_targets = max(r[1] for r in rows)
    times = sorted({r[0] for r in rows})
    index = {t: k for k, t in enumerate(times)}
    states = np.zeros((len(times), n_targets, 4))
    for t, j, m1, m2, p1, p2 in rows:
        states[index[t], j - 1] = (m1, m2, p1, p2)
    return np.array(times), states
