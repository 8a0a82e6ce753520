"""Weighted-MMSE power allocation for NOMA full-duplex cells.

The solver alternates three closed-form block updates: MMSE receiver
scalings ``g``, MSE weights ``w = 1/e`` and transmit powers ``P``. The power
block decouples per user into scalar quadratics whose multipliers are found
by bisection on the uplink per-user budgets and the pooled downlink budget.
Downlink SIC feasibility is handled by one of three strategies (``repair``,
``subgradient`` or ``ignore``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _backend, _pycore
from . import model
from .channel import Budgets, ChannelSet
from .model import EPS_ACTIVE, StrongUserMap

log = logging.getLogger(__name__)

SIC_STRATEGIES = ("repair", "subgradient", "ignore")
SELECTORS = ("max_gain", "oma_wmmse")
INITIALIZATIONS = ("multistart", "uniform")


class BisectionError(RuntimeError):
    """Multiplier search did not reach the budget within the step cap."""

    def __init__(self, residual: float):
        super().__init__(f"multiplier bisection failed, relative budget residual {residual:.3e}")
        self.residual = residual


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 500
    objective_rel_tol: float = 1e-6
    bisection_tol: float = 1e-10
    bisection_max_steps: int = 100
    sic_strategy: str = "repair"
    sic_subgradient_step0: float = 1e3
    sic_outer_rounds: int = 20
    epsilon_active: float = EPS_ACTIVE
    selector: str = "max_gain"
    # multistart: uniform split plus one start per direction with the other
    # direction scaled down by start_tilt; the best final objective wins
    initialization: str = "multistart"
    start_tilt: float = 1e-6

    def __post_init__(self) -> None:
        if self.initialization not in INITIALIZATIONS:
            raise ValueError(f"initialization must be one of {INITIALIZATIONS}")
        if not 0 < self.start_tilt <= 1:
            raise ValueError("start_tilt must be in (0, 1]")
        if self.sic_strategy not in SIC_STRATEGIES:
            raise ValueError(f"sic_strategy must be one of {SIC_STRATEGIES}")
        if self.selector not in SELECTORS:
            raise ValueError(f"selector must be one of {SELECTORS}")
        for name in ("objective_rel_tol", "bisection_tol", "epsilon_active",
                     "sic_subgradient_step0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("max_iterations", "bisection_max_steps", "sic_outer_rounds"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class AllocationState:
    power: np.ndarray  # (F, K) watts
    g: np.ndarray  # (F, K) complex receiver scalings
    w: np.ndarray  # (F, K) MSE weights
    strong: StrongUserMap
    mu_d: float = 0.0
    mu_u: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # normalized SIC multipliers, indexed [f, weak downlink user]
    mu_sic: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    iteration: int = 0

    @classmethod
    def initial(cls, power: np.ndarray, strong: StrongUserMap) -> "AllocationState":
        power = np.array(power, dtype=float)
        return cls(
            power=power,
            g=np.zeros(power.shape, dtype=complex),
            w=np.ones(power.shape),
            strong=strong,
            mu_u=np.zeros(strong.num_uplink),
            mu_sic=np.zeros(power.shape),
        )


@dataclass
class RunResult:
    final_state: AllocationState
    objective_trace: np.ndarray  # weighted sum rate (nats), all rounds concatenated
    segment_starts: list[int]  # index into objective_trace where each round starts
    per_user_rates: np.ndarray  # (K,) nats, summed over subcarriers
    sic_residuals: dict  # (k, f) -> Gamma for active (weak, strong) downlink pairs
    iterations_used: int
    converged: bool
    selector: str
    sic_strategy: str
    power_history: Optional[np.ndarray] = None  # (iterations_used, F, K)
    start_index: int = 0  # which start point produced this result
    starts_tried: int = 1
    total_iterations: int = 0  # summed over all start points

    @property
    def weighted_sum_rate(self) -> float:
        return float(self.objective_trace[-1])

    def to_dict(self, alpha=None) -> dict:
        st = self.final_state
        ln2 = np.log(2.0)
        f_count = st.power.shape[0]
        out = {
            "objective_trace_bits": (self.objective_trace / ln2).tolist(),
            "segment_starts": list(self.segment_starts),
            "weighted_sum_rate_bits": self.weighted_sum_rate / ln2,
            "normalized_utility_bpshz": self.weighted_sum_rate / ln2 / f_count,
            "powers_w": st.power.tolist(),
            "per_user_rates_bpshz": (self.per_user_rates / ln2).tolist(),
            "strong_users": st.strong.to_dict(),
            "multipliers": {
                "mu_d": st.mu_d,
                "mu_u": np.asarray(st.mu_u).tolist(),
                "mu_sic": np.asarray(st.mu_sic).tolist(),
            },
            "sic_residuals": [
                {"weak": k, "subcarrier": f, "gamma": v}
                for (k, f), v in sorted(self.sic_residuals.items(), key=lambda kv: (kv[0][1], kv[0][0]))
            ],
            "iterations_used": self.iterations_used,
            "converged": self.converged,
            "selector": self.selector,
            "sic_strategy": self.sic_strategy,
            "start_index": self.start_index,
            "starts_tried": self.starts_tried,
            "total_iterations": self.total_iterations,
        }
        return out


def _budget_groups(num_uplink: int, num_downlink: int, budgets: Budgets):
    group = np.concatenate([np.arange(num_uplink), np.full(num_downlink, num_uplink)])
    budget = np.concatenate([np.full(num_uplink, budgets.p_u), [budgets.p_d]])
    return group.astype(np.intp), budget.astype(float)


def uniform_power(num_uplink: int, num_downlink: int, num_subcarriers: int,
                  budgets: Budgets) -> np.ndarray:
    """Full-budget uniform split: ``P_U/F`` per uplink entry, ``P_D/(N F)`` per downlink entry."""
    p = np.empty((num_subcarriers, num_uplink + num_downlink))
    p[:, :num_uplink] = budgets.p_u / num_subcarriers
    p[:, num_uplink:] = budgets.p_d / (num_downlink * num_subcarriers)
    return p


def random_feasible_power(rng: np.random.Generator, num_uplink: int, num_downlink: int,
                          num_subcarriers: int, budgets: Budgets) -> np.ndarray:
    """Random strictly positive allocation using each budget in full."""
    p = rng.random((num_subcarriers, num_uplink + num_downlink)) + 1e-3
    p[:, :num_uplink] *= budgets.p_u / p[:, :num_uplink].sum(axis=0)
    p[:, num_uplink:] *= budgets.p_d / p[:, num_uplink:].sum()
    return p


def start_points(base: np.ndarray, num_uplink: int, cfg: SolverConfig,
                 strong: Optional[StrongUserMap] = None) -> list[np.ndarray]:
    """Initial powers tried by :func:`solve`.

    Full-duplex cross interference often makes the best allocation favor one
    direction outright, and the iteration tends to stay in the basin it starts
    in, so each direction also gets a start where the other one is nearly off.
    With ``strong`` given, one more start keeps only the strong users near full
    power, i.e. begins close to an orthogonal allocation.
    """
    if cfg.initialization == "uniform":
        return [base]
    ul_first = base.copy()
    ul_first[:, num_uplink:] *= cfg.start_tilt
    dl_first = base.copy()
    dl_first[:, :num_uplink] *= cfg.start_tilt
    out = [base, ul_first, dl_first]
    if strong is not None:
        strong_first = base.copy()
        strong_first[strong.flags() == 0] *= cfg.start_tilt
        out.append(strong_first)
    return out


def check_feasible(power: np.ndarray, num_uplink: int, budgets: Budgets,
                   rel_tol: float = 1e-9) -> None:
    if np.any(power < 0) or not np.all(np.isfinite(power)):
        raise ValueError("powers must be finite and nonnegative")
    if np.any(power[:, :num_uplink].sum(axis=0) > budgets.p_u * (1 + rel_tol)):
        raise ValueError("uplink budget exceeded")
    if power[:, num_uplink:].sum() > budgets.p_d * (1 + rel_tol):
        raise ValueError("downlink budget exceeded")


def max_gain_strong_users(channels: ChannelSet, alpha) -> StrongUserMap:
    m = channels.num_uplink
    score = np.asarray(alpha)[None, :] * np.diagonal(channels.power_gains, axis1=1, axis2=2)
    # argmax returns the first maximum, i.e. the lowest user id on ties
    return StrongUserMap(
        uplink=np.argmax(score[:, :m], axis=1),
        downlink=m + np.argmax(score[:, m:], axis=1),
        num_uplink=m,
        num_downlink=channels.num_downlink,
    )


def select_strong_users(channels: ChannelSet, alpha, cfg: SolverConfig,
                        budgets: Optional[Budgets] = None) -> StrongUserMap:
    """Pick the strong (SIC-capable) user per direction and subcarrier.

    ``max_gain`` takes the largest ``alpha_i |h_ii(f)|^2``. ``oma_wmmse`` runs
    the WMMSE loop with no cancellation anywhere, so users in the same direction
    compete for each subcarrier, and keeps the user left with the most power.
    """
    greedy = max_gain_strong_users(channels, alpha)
    if cfg.selector == "max_gain":
        return greedy
    if budgets is None:
        raise ValueError("oma_wmmse selection needs power budgets")
    m, n, f_count = channels.num_uplink, channels.num_downlink, channels.num_subcarriers
    mask = model.oma_mask(f_count, m + n)
    p0 = uniform_power(m, n, f_count, budgets)
    P = _run(channels, alpha, budgets, cfg, p0, mask, np.zeros_like(p0), greedy)[0]
    ul = np.where(P[:, :m].max(axis=1) > cfg.epsilon_active, np.argmax(P[:, :m], axis=1),
                  greedy.uplink)
    dl = np.where(P[:, m:].max(axis=1) > cfg.epsilon_active, m + np.argmax(P[:, m:], axis=1),
                  greedy.downlink)
    return StrongUserMap(uplink=ul, downlink=dl, num_uplink=m, num_downlink=n)


def update_g(state: AllocationState, channels: ChannelSet) -> np.ndarray:
    mask = model.interference_mask(state.strong)
    g, _, _ = _pycore.receiver_step(channels.power_gains, channels.direct, state.power,
                                    mask, channels.noise_power)
    return g


def update_w(state: AllocationState, channels: ChannelSet) -> np.ndarray:
    """``w = 1/e`` with the MSE evaluated at the state's current ``g`` and ``P``."""
    mask = model.interference_mask(state.strong)
    gp = channels.power_gains
    h = channels.direct
    P = state.power
    g = state.g
    interf = np.einsum("fij,fji,fj->fi", mask, gp, P)
    e = (np.abs(1.0 - g * h * np.sqrt(P)) ** 2
         + np.abs(g) ** 2 * (interf + channels.noise_power))
    return 1.0 / e


def sic_coefficients(channels: ChannelSet, strong: StrongUserMap, p_d: float) -> np.ndarray:
    """Normalized slopes ``dGamma_{k,i*}(f)/dP_{i,f}`` for uplink ``i`` and weak downlink ``k``.

    Each margin is scaled by ``G_i*i*(f) G_kk(f) P_D`` so the multipliers are
    dimensionless.
    """
    G = channels.power_gains
    m, k_count = channels.num_uplink, channels.num_users
    coef = np.zeros((channels.num_subcarriers, k_count, k_count))
    for f in range(channels.num_subcarriers):
        sd = strong.downlink[f]
        for k in range(m, k_count):
            if k == sd:
                continue
            scale = G[f, sd, sd] * G[f, k, k] * p_d
            coef[f, :m, k] = model.sic_margin_slopes(k, sd, f, channels) / scale
    return coef


def update_p(state: AllocationState, channels: ChannelSet, alpha, budgets: Budgets,
             cfg: SolverConfig) -> AllocationState:
    """Closed-form power block with multiplier bisection; ``g`` and ``w`` are held fixed."""
    m = channels.num_uplink
    mask = model.interference_mask(state.strong)
    group, budget = _budget_groups(m, channels.num_downlink, budgets)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(state.mu_sic > 0):
        coef = sic_coefficients(channels, state.strong, budgets.p_d)
        offset = _pycore.sic_offset(state.power, state.mu_sic, coef, state.strong.downlink,
                                    m, cfg.epsilon_active)
    else:
        offset = np.zeros_like(state.power)
    P, mu, status, res = _pycore.power_step(
        channels.power_gains, channels.direct, state.g, state.w, mask, alpha, group, budget,
        offset, cfg.bisection_tol, cfg.bisection_max_steps,
    )
    if status != _pycore.STATUS_OK:
        raise BisectionError(res)
    return replace(state, power=P, mu_u=mu[:m].copy(), mu_d=float(mu[m]),
                   iteration=state.iteration + 1)


def sic_margins(power: np.ndarray, channels: ChannelSet, strong: StrongUserMap,
                eps: float = EPS_ACTIVE) -> dict:
    """``Gamma_{k,i*}(f)`` for every pair where both downlink powers are active."""
    out = {}
    m = channels.num_uplink
    for f in range(channels.num_subcarriers):
        sd = int(strong.downlink[f])
        if power[f, sd] <= eps:
            continue
        for k in range(m, channels.num_users):
            if k != sd and power[f, k] > eps:
                out[(k, f)] = model.gamma_sic(k, sd, f, power, channels)
    return out


def enforce_sic(state: AllocationState, channels: ChannelSet, cfg: SolverConfig,
                round_index: int = 1, p_d: Optional[float] = None) -> AllocationState:
    """Apply one SIC round to ``state`` according to ``cfg.sic_strategy``.

    ``repair`` switches off every weak downlink user whose active pair has a
    negative margin; the caller re-runs the block updates afterwards.
    ``subgradient`` takes a diminishing projected step on the normalized
    multipliers, which needs the downlink budget ``p_d`` for the scaling.
    """
    margins = sic_margins(state.power, channels, state.strong, cfg.epsilon_active)
    if cfg.sic_strategy == "ignore" or not margins:
        return state
    if cfg.sic_strategy == "repair":
        power = state.power.copy()
        for (k, f), gamma in margins.items():
            if gamma < 0.0:
                power[f, k] = 0.0
        return replace(state, power=power)
    if p_d is None:
        raise ValueError("subgradient SIC step needs the downlink budget")
    G = channels.power_gains
    mu_sic = state.mu_sic.copy()
    step = cfg.sic_subgradient_step0 / round_index
    for (k, f), gamma in margins.items():
        sd = state.strong.downlink[f]
        scaled = gamma / (G[f, sd, sd] * G[f, k, k] * p_d)
        mu_sic[f, k] = max(0.0, mu_sic[f, k] - step * scaled)
    return replace(state, mu_sic=mu_sic)


def _run(channels, alpha, budgets, cfg, p0, mask, mu_sic, strong, record_history=False,
         kernels=None):
    kernels = kernels or _backend.kernels
    m = channels.num_uplink
    group, budget = _budget_groups(m, channels.num_downlink, budgets)
    coef = (sic_coefficients(channels, strong, budgets.p_d) if np.any(mu_sic > 0)
            else np.zeros((channels.num_subcarriers, channels.num_users, channels.num_users)))
    out = kernels.run_loop(
        channels.power_gains, channels.direct, mask.astype(np.uint8),
        np.asarray(alpha, dtype=float), channels.noise_power, group, budget, p0, mu_sic, coef,
        strong.downlink, m, cfg.max_iterations, cfg.objective_rel_tol, cfg.bisection_tol,
        cfg.bisection_max_steps, cfg.epsilon_active, record_history,
    )
    P, mu, trace, iters, converged, history, status, res, g, w = out
    if status != _pycore.STATUS_OK:
        raise BisectionError(res)
    return P, mu, trace, iters, converged, history, g, w


def solve(channels: ChannelSet, alpha, budgets: Budgets, cfg: SolverConfig = SolverConfig(),
          initial_power: Optional[np.ndarray] = None, strong: Optional[StrongUserMap] = None,
          record_history: bool = False, kernels=None) -> RunResult:
    """Run the WMMSE iteration to convergence.

    Args:
        channels: channel realization.
        alpha: per-user fairness weights, shape ``(K,)``.
        budgets: power budgets in watts.
        cfg: solver settings.
        initial_power: single starting ``(F, K)`` allocation; zero entries stay
            zero. When omitted the starts come from :func:`start_points`
            around :func:`uniform_power`.
        strong: strong-user map; selected with ``cfg.selector`` when omitted.
        record_history: keep the powers after every iteration.
        kernels: kernel module override (see :mod:`nomafd._backend`).

    Returns:
        RunResult of the best start, with the objective trace of every SIC
        round concatenated.
    """
    m, n, f_count = channels.num_uplink, channels.num_downlink, channels.num_subcarriers
    alpha = np.asarray(alpha, dtype=float)
    if strong is None:
        strong = select_strong_users(channels, alpha, cfg, budgets)
    if initial_power is None:
        starts = start_points(uniform_power(m, n, f_count, budgets), m, cfg, strong)
    else:
        p0 = np.array(initial_power, dtype=float)
        if p0.shape != (f_count, m + n):
            raise ValueError("initial_power has the wrong shape")
        check_feasible(p0, m, budgets)
        starts = [p0]
    return solve_from_starts(channels, alpha, budgets, cfg, starts, strong, record_history,
                             kernels)


def solve_from_starts(channels: ChannelSet, alpha, budgets: Budgets, cfg: SolverConfig,
                      starts: list, strong: StrongUserMap, record_history: bool = False,
                      kernels=None) -> RunResult:
    """Solve from each start point and keep the highest final objective (first on ties)."""
    results = [_solve_single(channels, alpha, budgets, cfg, p0, strong, record_history, kernels)
               for p0 in starts]
    best = max(range(len(results)), key=lambda j: (results[j].weighted_sum_rate, -j))
    out = results[best]
    out.start_index = best
    out.starts_tried = len(results)
    out.total_iterations = sum(r.iterations_used for r in results)
    return out


def _solve_single(channels, alpha, budgets, cfg, p0, strong, record_history, kernels):
    m, n, f_count = channels.num_uplink, channels.num_downlink, channels.num_subcarriers
    mask = model.interference_mask(strong)
    state = AllocationState.initial(p0, strong)

    traces, starts, histories = [], [], []
    total_iters = 0
    converged = False
    n_pairs = f_count * max(n - 1, 0)
    max_rounds = {"ignore": 1, "repair": n_pairs + 1,
                  "subgradient": cfg.sic_outer_rounds}[cfg.sic_strategy]
    for round_index in range(1, max_rounds + 1):
        P, mu, trace, iters, converged, history, g, w = _run(
            channels, alpha, budgets, cfg, state.power, mask, state.mu_sic, strong,
            record_history, kernels,
        )
        starts.append(sum(len(t) for t in traces))
        traces.append(trace)
        if record_history:
            histories.append(history)
        total_iters += iters
        state = replace(state, power=P, g=g, w=w, mu_u=mu[:m].copy(), mu_d=float(mu[m]),
                        iteration=total_iters)
        if cfg.sic_strategy == "ignore":
            break
        margins = sic_margins(P, channels, strong, cfg.epsilon_active)
        violated = any(v < 0 for v in margins.values())
        if cfg.sic_strategy == "repair":
            if not violated:
                break
            state = enforce_sic(state, channels, cfg)
        else:
            if not violated:
                break
            state = enforce_sic(state, channels, cfg, round_index, budgets.p_d)

    if cfg.sic_strategy == "subgradient" and any(
            v < 0 for v in sic_margins(state.power, channels, strong,
                                       cfg.epsilon_active).values()):
        # the subgradient rounds ran out; finish with repair so the result is SIC-feasible
        log.debug("subgradient SIC rounds exhausted; repairing remaining violations")
        repair_cfg = replace(cfg, sic_strategy="repair")
        rest = solve(channels, alpha, budgets, repair_cfg,
                     initial_power=enforce_sic(state, channels, repair_cfg).power,
                     strong=strong, record_history=record_history, kernels=kernels)
        offset = sum(len(t) for t in traces)
        traces.append(rest.objective_trace)
        starts.extend(offset + s for s in rest.segment_starts)
        if record_history:
            histories.append(rest.power_history)
        total_iters += rest.iterations_used
        state = replace(rest.final_state, mu_sic=state.mu_sic, iteration=total_iters)
        converged = rest.converged

    objective = np.concatenate(traces)
    gamma = model.sinr_matrix(state.power, channels, mask)
    per_user = (model.rate(gamma)).sum(axis=0)
    return RunResult(
        final_state=state,
        objective_trace=objective,
        segment_starts=starts,
        per_user_rates=per_user,
        sic_residuals=sic_margins(state.power, channels, strong, cfg.epsilon_active),
        iterations_used=total_iters,
        converged=converged,
        selector=cfg.selector,
        sic_strategy=cfg.sic_strategy,
        power_history=np.concatenate(histories) if record_history else None,
        total_iterations=total_iters,
    )


def weak_user_sparsity(result: RunResult, eps: float = EPS_ACTIVE) -> dict:
    """Active weak users per ``(direction, f)``, strong user excluded."""
    st = result.final_state
    m = st.strong.num_uplink
    counts = {}
    for f in range(st.power.shape[0]):
        active = st.power[f] > eps
        counts[(model.UPLINK, f)] = int(active[:m].sum() - active[st.strong.uplink[f]])
        counts[(model.DOWNLINK, f)] = int(active[m:].sum() - active[st.strong.downlink[f]])
    return counts
