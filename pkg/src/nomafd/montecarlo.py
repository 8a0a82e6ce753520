"""Seeded Monte Carlo sweeps and per-iteration SINR traces.

Every trial draws one scenario and one channel realization, and all requested
algorithms run on that same realization. Trial seeds are derived from
``(seed0, point index, trial index)`` through ``numpy.random.SeedSequence``,
so they are reproducible and independent of worker scheduling.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import model
from .baselines import grid_oracle, oma_fd_greedy, oma_hd_waterfill
from .channel import (ChannelSet, ScenarioConfig, budgets_from_config, fairness_weights,
                      generate_channels, generate_scenario)
from .wmmse import BisectionError, SolverConfig, solve

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ALGORITHMS = ("wmmse", "oma_fd_greedy", "oma_hd_waterfill", "grid_oracle")
SWEPT_PARAMETERS = ("p_d_dbm", "num_users")
CSV_COLUMNS = ("algorithm", "sweep_value", "mean_bpshz", "stderr", "trials")


@dataclass(frozen=True)
class SweepSpec:
    swept_parameter: str = "p_d_dbm"
    values: tuple = (10.0, 14.0, 20.0, 24.0)
    trials_per_point: int = 200
    scenario: ScenarioConfig = ScenarioConfig()
    solver: SolverConfig = SolverConfig()
    algorithms: tuple = ("wmmse", "oma_fd_greedy", "oma_hd_waterfill")
    seed0: int = 0
    grid_points: int = 50
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        if self.swept_parameter not in SWEPT_PARAMETERS:
            raise ValueError(f"swept_parameter must be one of {SWEPT_PARAMETERS}")
        if not self.values:
            raise ValueError("values must be nonempty")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("values must be strictly increasing")
        if self.swept_parameter == "num_users" and any(
                int(v) != v or v < 1 for v in self.values):
            raise ValueError("num_users values must be positive integers")
        if self.trials_per_point < 1:
            raise ValueError("trials_per_point must be >= 1")
        if not self.algorithms:
            raise ValueError("algorithms must be nonempty")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ValueError(f"unknown algorithms: {sorted(unknown)}")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ValueError("algorithms must not repeat")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        for v in self.values:
            self.point_config(v).validate()

    def point_config(self, value) -> ScenarioConfig:
        if self.swept_parameter == "p_d_dbm":
            return self.scenario.replace(p_d_dbm=float(value))
        return self.scenario.replace(num_uplink=int(value), num_downlink=int(value))

    def to_dict(self) -> dict:
        return {
            "swept_parameter": self.swept_parameter,
            "values": list(self.values),
            "trials_per_point": self.trials_per_point,
            "scenario": asdict(self.scenario),
            "solver": asdict(self.solver),
            "algorithms": list(self.algorithms),
            "seed0": self.seed0,
            "grid_points": self.grid_points,
        }


def trial_seed(seed0: int, point_index: int, trial: int) -> int:
    """64-bit seed for one trial; distinct keys give independent SeedSequence streams."""
    state = np.random.SeedSequence([seed0, point_index, trial]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


@dataclass
class Outcome:
    utility_bpshz: float  # weighted sum rate / F, bits
    weighted_sum_rate_nats: float
    iterations: Optional[int] = None
    converged: Optional[bool] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class TrialRecord:
    point_index: int
    value: float
    trial: int
    seed: int
    channel_digest: str
    outcomes: dict  # algorithm -> Outcome


def run_algorithm(name: str, channels: ChannelSet, alpha, budgets, solver: SolverConfig,
                  grid_points: int = 50) -> Outcome:
    f_count = channels.num_subcarriers
    iterations = converged = None
    if name == "wmmse":
        res = solve(channels, alpha, budgets, solver)
        wsr, iterations, converged = res.weighted_sum_rate, res.iterations_used, res.converged
    elif name == "oma_fd_greedy":
        res = oma_fd_greedy(channels, alpha, budgets, solver)
        wsr = res.weighted_sum_rate
        iterations, converged = res.extra["iterations_used"], res.extra["converged"]
    elif name == "oma_hd_waterfill":
        wsr = oma_hd_waterfill(channels, alpha, budgets).weighted_sum_rate
    elif name == "grid_oracle":
        wsr = grid_oracle(channels, alpha, budgets, grid_points).weighted_sum_rate
    else:
        raise ValueError(f"unknown algorithm {name!r}")
    return Outcome(wsr / f_count / math.log(2.0), wsr, iterations, converged)


def run_trial(spec: SweepSpec, point_index: int, trial: int) -> TrialRecord:
    value = spec.values[point_index]
    seed = trial_seed(spec.seed0, point_index, trial)
    config = spec.point_config(value)
    scenario = generate_scenario(config, seed)
    channels = generate_channels(scenario)
    alpha = fairness_weights(scenario).alpha
    budgets = budgets_from_config(config)
    outcomes = {}
    for name in spec.algorithms:
        try:
            outcomes[name] = run_algorithm(name, channels, alpha, budgets, spec.solver,
                                           spec.grid_points)
        except (BisectionError, ValueError, FloatingPointError) as exc:
            log.warning("%s failed at point %d trial %d: %s", name, point_index, trial, exc)
            outcomes[name] = Outcome(math.nan, math.nan, error=f"{type(exc).__name__}: {exc}")
    return TrialRecord(point_index, value, trial, seed, channels.digest(), outcomes)


def _run_task(args):
    return run_trial(*args)


@dataclass
class SweepResult:
    spec: SweepSpec
    trials: list  # TrialRecord ordered by (point_index, trial)
    summary: list = field(default_factory=list)

    def __post_init__(self):
        if not self.summary:
            self.summary = summarize(self.spec, self.trials)

    def raw(self, algorithm: str, value) -> np.ndarray:
        """Successful per-trial utilities (bits/s/Hz) of ``algorithm`` at ``value``."""
        return np.array([r.outcomes[algorithm].utility_bpshz for r in self.trials
                         if r.value == value and r.outcomes[algorithm].ok])

    def row(self, algorithm: str, value) -> dict:
        for row in self.summary:
            if row["algorithm"] == algorithm and row["sweep_value"] == value:
                return row
        raise KeyError((algorithm, value))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.summary:
            writer.writerow([row["algorithm"], repr(float(row["sweep_value"])),
                             repr(row["mean_bpshz"]), repr(row["stderr"]), row["trials"]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "sweep",
            "spec": self.spec.to_dict(),
            "summary": self.summary,
            "trials": [
                {
                    "point_index": r.point_index,
                    "sweep_value": r.value,
                    "trial": r.trial,
                    "seed": r.seed,
                    "channel_digest": r.channel_digest,
                    "outcomes": {k: _json_safe(asdict(o)) for k, o in r.outcomes.items()},
                }
                for r in self.trials
            ],
        }


def _json_safe(d: dict) -> dict:
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
            for k, v in d.items()}


def summarize(spec: SweepSpec, trials: list) -> list:
    rows = []
    for alg in spec.algorithms:
        for idx, value in enumerate(spec.values):
            recs = [r.outcomes[alg] for r in trials if r.point_index == idx]
            vals = np.array([o.utility_bpshz for o in recs if o.ok])
            n = len(vals)
            mean = float(vals.mean()) if n else math.nan
            stderr = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
            iters = [o.iterations for o in recs if o.ok and o.iterations is not None]
            conv = [o.converged for o in recs if o.ok and o.converged is not None]
            rows.append({
                "algorithm": alg,
                "sweep_value": value,
                "mean_bpshz": mean,
                "stderr": stderr,
                "trials": n,
                "failures": len(recs) - n,
                "median_iterations": float(np.median(iters)) if iters else None,
                "converged_fraction": float(np.mean(conv)) if conv else None,
            })
    return rows


def run_sweep(spec: SweepSpec) -> SweepResult:
    """Run every (value, trial) task and reduce in (value, trial) order."""
    tasks = [(spec, idx, t) for idx in range(len(spec.values))
             for t in range(spec.trials_per_point)]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            trials = list(pool.map(_run_task, tasks, chunksize=4))
    else:
        trials = [_run_task(task) for task in tasks]
    trials.sort(key=lambda r: (r.point_index, r.trial))
    return SweepResult(spec, trials)


@dataclass
class TraceResult:
    subcarrier: int
    strong_user: int
    weak_users: list  # tracked weak downlink users
    rows: list  # (iteration, user, own_sinr, cross_sinr), linear scale
    iterations_used: int
    sic_residuals: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("iteration", "user", "own_sinr_db", "cross_sinr_db"))
        for it, user, own, cross in self.rows:
            writer.writerow([it, user, repr(_db(own)), repr(_db(cross))])
        return buf.getvalue()

    def final_dominance(self) -> dict:
        """user -> cross SINR >= own SINR at the last iteration."""
        last = self.rows[-len(self.weak_users):] if self.weak_users and self.rows else []
        return {user: cross >= own for _, user, own, cross in last}


def _db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf


def iteration_trace_experiment(config: ScenarioConfig, seed: int, subcarrier: int = 0,
                               solver: SolverConfig = SolverConfig()) -> TraceResult:
    """Own and cross-measured SINR of each weak downlink user on one subcarrier.

    The cross SINR is that of the weak user's stream as received by the strong
    downlink user, i.e. what the strong user sees when it decodes the weak
    stream for cancellation. A weak user is tracked on every iteration if it
    had nonzero power at any iteration, so switched-off users stay visible.
    """
    config.validate()
    if not 0 <= subcarrier < config.num_subcarriers:
        raise ValueError(f"subcarrier must be in [0, {config.num_subcarriers})")
    scenario = generate_scenario(config, seed)
    channels = generate_channels(scenario)
    alpha = fairness_weights(scenario).alpha
    budgets = budgets_from_config(config)
    res = solve(channels, alpha, budgets, solver, record_history=True)
    strong = res.final_state.strong
    m = config.num_uplink
    f = subcarrier
    i_star = int(strong.downlink[f])
    mask = model.interference_mask(strong)
    history = res.power_history
    weak = [k for k in range(m, m + config.num_downlink)
            if k != i_star and np.any(history[:, f, k] > 0)]
    rows = []
    for it, P in enumerate(history, start=1):
        gamma = model.sinr_matrix(P, channels, mask)
        for k in weak:
            rows.append((it, k, float(gamma[f, k]), model.cross_sinr(k, i_star, f, P, channels)))
    return TraceResult(f, i_star, weak, rows, res.iterations_used,
                       {k: v for k, v in res.sic_residuals.items() if k[1] == f})

