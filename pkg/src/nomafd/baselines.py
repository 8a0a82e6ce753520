"""Reference allocators: half-duplex water-filling, greedy OMA full duplex and a grid oracle."""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _backend, model
from .channel import Budgets, ChannelSet
from .model import DOWNLINK, UPLINK, StrongUserMap
from .wmmse import SolverConfig, max_gain_strong_users, solve_from_starts, start_points

MAX_ORACLE_DIMENSIONS = 4
MAX_GRID_POINTS = 400


@dataclass
class BaselineResult:
    name: str
    power: np.ndarray  # (F, K) watts
    per_user_rates: np.ndarray  # (K,) nats
    weighted_sum_rate: float  # nats
    assignment: dict  # (direction, f) -> user id or None
    strong: Optional[StrongUserMap] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        ln2 = np.log(2.0)
        f_count = self.power.shape[0]
        return {
            "baseline": self.name,
            "weighted_sum_rate_bits": self.weighted_sum_rate / ln2,
            "normalized_utility_bpshz": self.weighted_sum_rate / ln2 / f_count,
            "powers_w": self.power.tolist(),
            "per_user_rates_bpshz": (self.per_user_rates / ln2).tolist(),
            "assignment": [
                {"direction": d, "subcarrier": f, "user": u}
                for (d, f), u in sorted(self.assignment.items(), key=lambda kv: (kv[0][1], kv[0][0]))
            ],
            "strong_users": self.strong.to_dict() if self.strong is not None else None,
            **self.extra,
        }


def waterfill(weights, gain_to_noise, budget: float) -> np.ndarray:
    """Maximize ``sum_f a_f log(1 + c_f p_f)`` subject to ``sum_f p_f <= budget``.

    Solution ``p_f = max(0, a_f / nu - 1 / c_f)``; the active set is the top of
    the ``a_f c_f`` ordering, found exactly by scanning it.
    """
    a = np.asarray(weights, dtype=float)
    c = np.asarray(gain_to_noise, dtype=float)
    p = np.zeros_like(a)
    usable = (a > 0) & (c > 0)
    if not usable.any() or budget <= 0:
        return p
    idx = np.flatnonzero(usable)
    order = idx[np.argsort(-(a[idx] * c[idx]), kind="stable")]
    nu = None
    for n in range(len(order), 0, -1):
        act = order[:n]
        cand = a[act].sum() / (budget + np.sum(1.0 / c[act]))
        # weakest member of the candidate set must still get positive power
        if a[act[-1]] * c[act[-1]] > cand:
            nu = cand
            break
    act = order[:n]
    p[act] = a[act] / nu - 1.0 / c[act]
    return np.maximum(p, 0.0)


def _rates(power: np.ndarray, channels: ChannelSet, mask: np.ndarray, alpha):
    gamma = model.sinr_matrix(power, channels, mask)
    per_user = model.rate(gamma).sum(axis=0)
    return per_user, float(np.sum(np.asarray(alpha) * per_user))


def oma_hd_waterfill(channels: ChannelSet, alpha, budgets: Budgets,
                     uplink_subcarriers=None) -> BaselineResult:
    """Half-duplex OMA: each subcarrier serves one direction and one user.

    By default even subcarriers carry uplink and odd ones downlink. Each
    subcarrier goes to the user with the largest ``alpha_i |h_ii(f)|^2`` in its
    direction; uplink users water-fill their own budget, the downlink
    water-fills the pooled budget.
    """
    f_count, m, k = channels.num_subcarriers, channels.num_uplink, channels.num_users
    alpha = np.asarray(alpha, dtype=float)
    if uplink_subcarriers is None:
        uplink_subcarriers = range(0, f_count, 2)
    ul_set = sorted(set(int(f) for f in uplink_subcarriers))
    dl_set = [f for f in range(f_count) if f not in ul_set]
    gdiag = np.diagonal(channels.power_gains, axis1=1, axis2=2)
    c = gdiag / channels.noise_power
    score = alpha[None, :] * gdiag
    power = np.zeros((f_count, k))
    assignment = {}
    for f in range(f_count):
        if f in ul_set:
            assignment[(UPLINK, f)] = int(np.argmax(score[f, :m]))
            assignment[(DOWNLINK, f)] = None
        else:
            assignment[(UPLINK, f)] = None
            assignment[(DOWNLINK, f)] = int(m + np.argmax(score[f, m:]))
    for u in range(m):
        carriers = [f for f in ul_set if assignment[(UPLINK, f)] == u]
        if carriers:
            power[carriers, u] = waterfill(np.full(len(carriers), alpha[u]), c[carriers, u],
                                           budgets.p_u)
    if dl_set:
        users = [assignment[(DOWNLINK, f)] for f in dl_set]
        power[dl_set, users] = waterfill(alpha[users], c[dl_set, users], budgets.p_d)
    per_user, total = _rates(power, channels, model.oma_mask(f_count, k), alpha)
    return BaselineResult("oma_hd_waterfill", power, per_user, total, assignment)


def oma_fd_greedy(channels: ChannelSet, alpha, budgets: Budgets,
                  cfg: Optional[SolverConfig] = None) -> BaselineResult:
    """Full-duplex OMA: one uplink and one downlink user per subcarrier.

    Users are assigned greedily by ``alpha_i |h_ii(f)|^2``; powers come from the
    WMMSE loop with every unassigned entry pinned at zero, using the same start
    points as the NOMA solver. Stands in for a
    quasi-optimal OMA-FD scheme that is not reproduced here.
    """
    f_count, m, n = channels.num_subcarriers, channels.num_uplink, channels.num_downlink
    cfg = replace(cfg or SolverConfig(), sic_strategy="ignore")
    strong = max_gain_strong_users(channels, alpha)
    p0 = np.zeros((f_count, m + n))
    rows = np.arange(f_count)
    for u in range(m):
        mine = strong.uplink == u
        if mine.any():
            p0[mine, u] = budgets.p_u / mine.sum()
    p0[rows, strong.downlink] = budgets.p_d / f_count
    starts = start_points(p0, m, cfg)
    run = solve_from_starts(channels, np.asarray(alpha, dtype=float), budgets, cfg, starts,
                            strong)
    assignment = {}
    for f in range(f_count):
        assignment[(UPLINK, f)] = int(strong.uplink[f])
        assignment[(DOWNLINK, f)] = int(strong.downlink[f])
    power = run.final_state.power
    per_user, total = _rates(power, channels, model.interference_mask(strong), alpha)
    return BaselineResult("oma_fd_greedy", power, per_user, total, assignment, strong=strong,
                          extra={"iterations_used": run.iterations_used,
                                 "converged": run.converged})


def _strong_maps(m: int, n: int, f_count: int):
    per_f = list(itertools.product(range(m), range(m, m + n)))
    for combo in itertools.product(per_f, repeat=f_count):
        yield StrongUserMap(uplink=[c[0] for c in combo], downlink=[c[1] for c in combo],
                            num_uplink=m, num_downlink=n)


def grid_oracle(channels: ChannelSet, alpha, budgets: Budgets, grid_points: int = 200,
                workers: int = 1, eps_active: float = model.EPS_ACTIVE,
                kernels=None) -> BaselineResult:
    """Exhaustive search over quantized powers and every strong-user choice.

    Each power takes the values ``k * budget / grid_points``, ``k = 0..grid_points``,
    so grids with ``grid_points`` dividing one another are nested. Points
    violating a budget or an active downlink SIC margin are discarded.
    """
    f_count, m, n = channels.num_subcarriers, channels.num_uplink, channels.num_downlink
    k = m + n
    n_var = k * f_count
    if n_var > MAX_ORACLE_DIMENSIONS:
        raise ValueError(
            f"grid oracle limited to {MAX_ORACLE_DIMENSIONS} decision variables, got {n_var}"
        )
    if not 1 <= grid_points <= MAX_GRID_POINTS:
        raise ValueError(f"grid_points must be in [1, {MAX_GRID_POINTS}]")
    kernels = kernels or _backend.kernels
    alpha = np.asarray(alpha, dtype=float)
    var_f, var_user = np.divmod(np.arange(n_var), k)
    var_cap = np.where(var_user < m, budgets.p_u, budgets.p_d)
    group = np.concatenate([np.arange(m), np.full(n, m)]).astype(np.intp)
    budget = np.concatenate([np.full(m, budgets.p_u), [budgets.p_d]])
    G = channels.power_gains

    blocks = np.array_split(np.arange(grid_points + 1), max(1, workers))
    blocks = [(int(b[0]), int(b[-1]) + 1) for b in blocks if len(b)]

    best_val, best_idx, best_strong = -np.inf, None, None
    for strong in _strong_maps(m, n, f_count):
        mask = model.interference_mask(strong).astype(np.uint8)

        def run_block(bounds, mask=mask, strong=strong):
            return kernels.grid_search(G, mask, alpha, channels.noise_power, var_user, var_f,
                                       var_cap, grid_points, group, budget, strong.downlink,
                                       m, eps_active, True, bounds[0], bounds[1])

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run_block, blocks))
        else:
            results = [run_block(b) for b in blocks]
        # blocks are in index order, strict comparison keeps the first maximum
        for val, idx in results:
            if idx is not None and val > best_val:
                best_val, best_idx, best_strong = val, np.asarray(idx), strong

    power = np.zeros((f_count, k))
    power[var_f, var_user] = best_idx / grid_points * var_cap
    mask = model.interference_mask(best_strong)
    per_user, total = _rates(power, channels, mask, alpha)
    assignment = {}
    for f in range(f_count):
        assignment[(UPLINK, f)] = int(best_strong.uplink[f])
        assignment[(DOWNLINK, f)] = int(best_strong.downlink[f])
    return BaselineResult("grid_oracle", power, per_user, total, assignment, strong=best_strong,
                          extra={"grid_points": grid_points, "grid_value_nats": best_val})
