"""Command-line entry point: ``nomafd {solve,sweep,trace,oracle}``.

Configuration is a YAML document with up to four top-level sections, all
optional::

    seed: 0
    scenario:   # ScenarioConfig fields, powers in dBm
      p_d_dbm: 20
    solver:     # SolverConfig fields
      sic_strategy: repair
    sweep:      # SweepSpec fields except scenario/solver
      swept_parameter: p_d_dbm
      values: [10, 14, 20, 24]

Unknown keys are rejected. Exit status is 0 on success, 2 for configuration or
usage errors and 3 when a solver fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .baselines import grid_oracle
from .channel import (ScenarioConfig, budgets_from_config, fairness_weights, generate_channels,
                      generate_scenario)
from .montecarlo import SCHEMA_VERSION, SweepSpec, iteration_trace_experiment, run_sweep
from .wmmse import BisectionError, SolverConfig, solve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

log = logging.getLogger("nomafd")

_SWEEP_KEYS = ("swept_parameter", "values", "trials_per_point", "algorithms", "seed0",
               "grid_points", "workers")


class ConfigError(ValueError):
    pass


@dataclass
class CliConfig:
    seed: int = 0
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    sweep: dict = field(default_factory=dict)

    def sweep_spec(self, **overrides) -> SweepSpec:
        kw = {**self.sweep, **{k: v for k, v in overrides.items() if v is not None}}
        return SweepSpec(scenario=self.scenario, solver=self.solver, **kw)


def _section(data, name, allowed):
    section = data.get(name)
    if section is None:
        return {}
    if not isinstance(section, dict):
        raise ConfigError(f"'{name}' must be a mapping")
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {', '.join(map(str, unknown))}")
    return section


def parse_config(data) -> CliConfig:
    """Validate a parsed YAML document and build the typed config."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    unknown = sorted(set(data) - {"seed", "scenario", "solver", "sweep"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(map(str, unknown))}")
    scen = _section(data, "scenario", [f.name for f in fields(ScenarioConfig)])
    solv = _section(data, "solver", [f.name for f in fields(SolverConfig)])
    sweep = _section(data, "sweep", _SWEEP_KEYS)
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    try:
        scenario = ScenarioConfig(**scen)
        scenario.validate()
        solver = SolverConfig(**solv)
        cfg = CliConfig(seed=seed, scenario=scenario, solver=solver, sweep=dict(sweep))
        cfg.sweep_spec()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path) -> CliConfig:
    if path is None:
        return CliConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    return parse_config(data)


def _clean(obj):
    """Replace non-finite floats with None and numpy scalars with Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write(text: str, out) -> None:
    if out is None or str(out) == "-":
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _instance(cfg: CliConfig, seed: int):
    scenario = generate_scenario(cfg.scenario, seed)
    channels = generate_channels(scenario)
    return scenario, channels, fairness_weights(scenario).alpha, budgets_from_config(cfg.scenario)


def _header(kind: str, cfg: CliConfig, seed: int, channels=None) -> dict:
    head = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "seed": seed,
        "scenario": asdict(cfg.scenario),
        "solver": asdict(cfg.solver),
    }
    if channels is not None:
        head["channel_digest"] = channels.digest()
    return head


def cmd_solve(cfg: CliConfig, seed: int, out) -> int:
    _, channels, alpha, budgets = _instance(cfg, seed)
    res = solve(channels, alpha, budgets, cfg.solver)
    doc = _header("solve", cfg, seed, channels)
    doc["alpha"] = np.asarray(alpha).tolist()
    doc["result"] = res.to_dict()
    _write(dump_json(doc), out)
    return EXIT_OK


def cmd_sweep(cfg: CliConfig, out, seed=None, algorithms=None, workers=None) -> int:
    try:
        spec = cfg.sweep_spec(seed0=seed, algorithms=algorithms, workers=workers)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    result = run_sweep(spec)
    out_dir = Path(out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "sweep.csv").write_text(result.to_csv(), encoding="utf-8")
    doc = {"schema_version": SCHEMA_VERSION, **result.to_dict()}
    (out_dir / "sweep.json").write_text(dump_json(doc), encoding="utf-8")
    failures = sum(row["failures"] for row in result.summary)
    if failures:
        log.warning("%d algorithm runs failed; see sweep.json", failures)
    return EXIT_OK


def cmd_trace(cfg: CliConfig, seed: int, subcarrier: int, out) -> int:
    if not 0 <= subcarrier < cfg.scenario.num_subcarriers:
        raise ConfigError(f"--subcarrier must be in [0, {cfg.scenario.num_subcarriers})")
    trace = iteration_trace_experiment(cfg.scenario, seed, subcarrier, cfg.solver)
    _write(trace.to_csv(), out)
    return EXIT_OK


def cmd_oracle(cfg: CliConfig, seed: int, grid_points: int, out) -> int:
    _, channels, alpha, budgets = _instance(cfg, seed)
    try:
        oracle = grid_oracle(channels, alpha, budgets, grid_points)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    res = solve(channels, alpha, budgets, cfg.solver)
    ln2 = math.log(2.0)
    w, o = res.weighted_sum_rate, oracle.weighted_sum_rate
    doc = _header("oracle", cfg, seed, channels)
    doc.update({
        "grid_points": grid_points,
        "wmmse_bits": w / ln2,
        "oracle_bits": o / ln2,
        "relative_gap": (w - o) / o if o > 0 else 0.0,
        "wmmse": res.to_dict(),
        "oracle": oracle.to_dict(),
    })
    _write(dump_json(doc), out)
    return EXIT_OK


def _algorithms(text: str):
    return tuple(a.strip() for a in text.split(",") if a.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nomafd",
                                     description="WMMSE power allocation for NOMA full-duplex cells")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", type=Path, help="YAML config (defaults used when omitted)")
        if seed:
            p.add_argument("--seed", type=int, help="scenario seed (overrides config)")

    p = sub.add_parser("solve", help="solve one scenario and write the result as JSON")
    common(p)
    p.add_argument("--out", help="output JSON path (stdout when omitted)")

    p = sub.add_parser("sweep", help="Monte Carlo sweep, writes sweep.csv and sweep.json")
    common(p)
    p.add_argument("--out", help="output directory", default=".")
    p.add_argument("--algorithms", type=_algorithms, help="comma-separated algorithm list")
    p.add_argument("--workers", type=int, help="worker processes")

    p = sub.add_parser("trace", help="per-iteration weak-user SINR trace as CSV")
    common(p)
    p.add_argument("--subcarrier", type=int, default=0)
    p.add_argument("--out", help="output CSV path (stdout when omitted)")

    p = sub.add_parser("oracle", help="compare WMMSE against the grid oracle")
    common(p)
    p.add_argument("--grid-points", type=int, default=200)
    p.add_argument("--out", help="output JSON path (stdout when omitted)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        seed = cfg.seed if args.seed is None else args.seed
        if seed < 0:
            raise ConfigError("--seed must be nonnegative")
        if args.command == "solve":
            return cmd_solve(cfg, seed, args.out)
        if args.command == "sweep":
            sweep_seed = args.seed if args.seed is not None else cfg.sweep.get("seed0", cfg.seed)
            return cmd_sweep(cfg, args.out, sweep_seed, args.algorithms, args.workers)
        if args.command == "trace":
            return cmd_trace(cfg, seed, args.subcarrier, args.out)
        return cmd_oracle(cfg, seed, args.grid_points, args.out)
    except ConfigError as exc:
        print(f"nomafd: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BisectionError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"nomafd: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
