"""WMMSE power allocation for multicarrier NOMA full-duplex single-cell systems."""

from ._backend import BACKEND
from .baselines import BaselineResult, grid_oracle, oma_fd_greedy, oma_hd_waterfill, waterfill
from .channel import (Budgets, ChannelSet, FairnessWeights, Scenario, ScenarioConfig,
                      budgets_from_config, dbm_to_watt, fairness_weights, generate_channels,
                      generate_scenario, watt_to_dbm)
from .model import StrongUserMap, interference_mask, sinr_matrix, weighted_sum_rate
from .montecarlo import SweepResult, SweepSpec, iteration_trace_experiment, run_sweep
from .wmmse import BisectionError, RunResult, SolverConfig, select_strong_users, solve

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BaselineResult", "BisectionError", "Budgets", "ChannelSet", "FairnessWeights",
    "RunResult", "Scenario", "ScenarioConfig", "SolverConfig", "StrongUserMap", "SweepResult",
    "SweepSpec", "budgets_from_config", "dbm_to_watt", "fairness_weights", "generate_channels",
    "generate_scenario", "grid_oracle", "interference_mask", "iteration_trace_experiment",
    "oma_fd_greedy", "oma_hd_waterfill", "run_sweep", "select_strong_users", "sinr_matrix",
    "solve", "watt_to_dbm", "waterfill", "weighted_sum_rate",
]
