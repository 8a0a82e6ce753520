import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import Instance
from nomafd import model
from nomafd.baselines import (MAX_GRID_POINTS, grid_oracle, oma_fd_greedy, oma_hd_waterfill,
                              waterfill)
from nomafd.channel import Budgets, ChannelSet
from nomafd.wmmse import SolverConfig, solve


def wf_objective(a, c, p):
    return float(np.sum(a * np.log1p(c * p)))


def test_waterfill_two_channel_closed_form():
    # equal weights: both active iff B > 1/c2 - 1/c1, then p1 - p2 = 1/c2 - 1/c1
    c1, c2 = 4.0, 1.0
    for budget in (0.1, 0.75, 0.76, 2.0, 10.0):
        p = waterfill([1.0, 1.0], [c1, c2], budget)
        gap = 1 / c2 - 1 / c1
        if budget <= gap:
            np.testing.assert_allclose(p, [budget, 0.0], atol=1e-15)
        else:
            np.testing.assert_allclose(p, [(budget + gap) / 2, (budget - gap) / 2], rtol=1e-12)


@given(st.integers(0, 10**6), st.integers(1, 6), st.floats(1e-3, 1e3))
def test_waterfill_kkt(seed, n, budget):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.05, 1.0, n)
    c = 10.0 ** rng.uniform(-2, 3, n)
    p = waterfill(a, c, budget)
    assert np.all(p >= 0)
    assert p.sum() == pytest.approx(budget, rel=1e-9)
    # marginal utility a c / (1 + c p) is equal on the active set and lower elsewhere
    marg = a * c / (1 + c * p)
    on = p > 1e-12 * budget
    nu = marg[on].mean()
    np.testing.assert_allclose(marg[on], nu, rtol=1e-8)
    assert np.all(marg[~on] <= nu * (1 + 1e-8))


@given(st.integers(0, 10**6))
def test_waterfill_beats_grid(seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.1, 1.0, 3)
    c = 10.0 ** rng.uniform(-1, 2, 3)
    budget = 1.0
    best = wf_objective(a, c, waterfill(a, c, budget))
    steps = np.linspace(0, 1, 41)
    for x, y in itertools.product(steps, steps):
        if x + y <= 1:
            assert best >= wf_objective(a, c, np.array([x, y, 1 - x - y])) - 1e-12


def test_waterfill_degenerate():
    np.testing.assert_array_equal(waterfill([1, 1], [0, 0], 1.0), [0, 0])
    np.testing.assert_array_equal(waterfill([0, 1], [5, 0], 1.0), [0, 0])
    np.testing.assert_allclose(waterfill([0, 1], [5, 2], 1.0), [0, 1])


def decoupled_channels(rng, f_count=6, noise=1e-13):
    hu = (rng.standard_normal(f_count) + 1j * rng.standard_normal(f_count)) * np.sqrt(
        10 ** rng.uniform(-9, -6) / 2)
    hd = (rng.standard_normal(f_count) + 1j * rng.standard_normal(f_count)) * np.sqrt(
        10 ** rng.uniform(-9, -6) / 2)
    g = np.zeros((f_count, 2, 2), complex)
    g[:, 0, 0], g[:, 1, 1] = hu, hd
    return ChannelSet(g, 1, noise, np.zeros(f_count, complex), np.inf), hu, hd


@pytest.mark.parametrize("seed", range(5))
def test_wmmse_reduces_to_waterfilling(seed):
    rng = np.random.default_rng(seed)
    H, hu, hd = decoupled_channels(rng)
    b = Budgets(0.025, 0.1)
    a = rng.uniform(0.1, 1.0, 2)
    cfg = SolverConfig(sic_strategy="ignore", max_iterations=5000, objective_rel_tol=1e-12)
    r = solve(H, a, b, cfg)
    pu = waterfill(np.full(6, a[0]), np.abs(hu) ** 2 / H.noise_power, b.p_u)
    pd = waterfill(np.full(6, a[1]), np.abs(hd) ** 2 / H.noise_power, b.p_d)
    ref = (wf_objective(a[0], np.abs(hu) ** 2 / H.noise_power, pu)
           + wf_objective(a[1], np.abs(hd) ** 2 / H.noise_power, pd))
    assert r.weighted_sum_rate == pytest.approx(ref, rel=1e-6)
    assert r.weighted_sum_rate <= ref * (1 + 1e-12)


def test_oma_hd_structure():
    inst = Instance(3)
    res = oma_hd_waterfill(inst.channels, inst.alpha, inst.budgets)
    P, m = res.power, inst.m
    assert np.all(P[1::2, :m] == 0) and np.all(P[0::2, m:] == 0)
    assert np.all((P > 0).sum(axis=1) <= 1)
    assert np.all(P[:, :m].sum(axis=0) <= inst.budgets.p_u * (1 + 1e-12))
    assert P[:, m:].sum() == pytest.approx(inst.budgets.p_d)
    gam = model.sinr_matrix(P, inst.channels, model.oma_mask(inst.f, 6))
    assert res.weighted_sum_rate == pytest.approx(float(np.sum(inst.alpha * np.log1p(gam))))
    # custom split: everything uplink
    res2 = oma_hd_waterfill(inst.channels, inst.alpha, inst.budgets,
                            uplink_subcarriers=range(inst.f))
    assert np.all(res2.power[:, m:] == 0)


def test_oma_hd_assignment_is_max_weighted_gain():
    inst = Instance(8)
    res = oma_hd_waterfill(inst.channels, inst.alpha, inst.budgets)
    score = inst.alpha * np.abs(inst.channels.direct) ** 2
    for (direction, f), user in res.assignment.items():
        if user is None:
            continue
        lo, hi = (0, 3) if direction == model.UPLINK else (3, 6)
        assert user == lo + int(np.argmax(score[f, lo:hi]))


def test_oma_fd_one_user_per_direction():
    inst = Instance(5)
    res = oma_fd_greedy(inst.channels, inst.alpha, inst.budgets)
    P, m = res.power, inst.m
    assert np.all((P[:, :m] > 0).sum(axis=1) <= 1)
    assert np.all((P[:, m:] > 0).sum(axis=1) <= 1)
    for f in range(inst.f):
        for u in np.flatnonzero(P[f] > 0):
            assert u in (res.strong.uplink[f], res.strong.downlink[f])
    assert res.to_dict()["baseline"] == "oma_fd_greedy"


def brute_force(channels, alpha, budgets, grid_points):
    # plain nested loops over every strong map and grid point
    f_count, m, n = channels.num_subcarriers, channels.num_uplink, channels.num_downlink
    k = m + n
    caps = [budgets.p_u if u < m else budgets.p_d for f in range(f_count) for u in range(k)]
    best = -np.inf
    for ul in itertools.product(range(m), repeat=f_count):
        for dl in itertools.product(range(m, k), repeat=f_count):
            strong = model.StrongUserMap(list(ul), list(dl), m, n)
            mask = model.interference_mask(strong)
            for idx in itertools.product(range(grid_points + 1), repeat=k * f_count):
                P = (np.array(idx) / grid_points * caps).reshape(f_count, k)
                if np.any(P[:, :m].sum(axis=0) > budgets.p_u * (1 + 1e-12)):
                    continue
                if P[:, m:].sum() > budgets.p_d * (1 + 1e-12):
                    continue
                margins = [model.gamma_sic(w, dl[f], f, P, channels)
                           for f in range(f_count) for w in range(m, k)
                           if w != dl[f] and P[f, w] > 1e-10 and P[f, dl[f]] > 1e-10]
                if any(g < 0 for g in margins):
                    continue
                gam = model.sinr_matrix(P, channels, mask)
                best = max(best, float(np.sum(alpha * np.log1p(gam))))
    return best


@pytest.mark.parametrize("m,n,f,seed", [(1, 1, 1, 0), (1, 1, 2, 1), (1, 2, 1, 2), (1, 2, 1, 7)])
def test_grid_oracle_matches_brute_force(m, n, f, seed):
    inst = Instance(seed, num_uplink=m, num_downlink=n, num_subcarriers=f)
    gp = 12 if m + n == 3 else 8
    res = grid_oracle(inst.channels, inst.alpha, inst.budgets, grid_points=gp)
    ref = brute_force(inst.channels, inst.alpha, inst.budgets, gp)
    assert res.weighted_sum_rate == pytest.approx(ref, rel=1e-12)


def test_grid_oracle_nested_grids_monotone():
    inst = Instance(4, num_uplink=1, num_downlink=1, num_subcarriers=1)
    vals = [grid_oracle(inst.channels, inst.alpha, inst.budgets, g).weighted_sum_rate
            for g in (25, 50, 100, 200)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_grid_oracle_workers_identical():
    inst = Instance(2, num_uplink=1, num_downlink=2, num_subcarriers=1)
    a = grid_oracle(inst.channels, inst.alpha, inst.budgets, 30, workers=1)
    b = grid_oracle(inst.channels, inst.alpha, inst.budgets, 30, workers=3)
    np.testing.assert_array_equal(a.power, b.power)
    assert a.weighted_sum_rate == b.weighted_sum_rate


def test_grid_oracle_limits():
    inst = Instance(0)
    with pytest.raises(ValueError, match="decision variables"):
        grid_oracle(inst.channels, inst.alpha, inst.budgets, 10)
    tiny = Instance(0, num_uplink=1, num_downlink=1, num_subcarriers=1)
    with pytest.raises(ValueError):
        grid_oracle(tiny.channels, tiny.alpha, tiny.budgets, MAX_GRID_POINTS + 1)


@pytest.mark.parametrize("seed", range(6))
def test_wmmse_close_to_oracle(seed):
    inst = Instance(seed, num_uplink=1, num_downlink=1, num_subcarriers=1)
    o = grid_oracle(inst.channels, inst.alpha, inst.budgets, 200).weighted_sum_rate
    w = solve(inst.channels, inst.alpha, inst.budgets).weighted_sum_rate
    assert w >= o * 0.98


def test_oma_fd_equals_forced_wmmse_without_weak_users():
    inst = Instance(3, num_uplink=1, num_downlink=1)
    res = oma_fd_greedy(inst.channels, inst.alpha, inst.budgets)
    direct = solve(inst.channels, inst.alpha, inst.budgets, strong=res.strong)
    assert res.weighted_sum_rate == pytest.approx(direct.weighted_sum_rate, rel=1e-12)
    np.testing.assert_allclose(res.power, direct.final_state.power, rtol=1e-12)


def test_wmmse_dominates_oma_fd_in_most_seeds():
    wins = 0
    for seed in range(100):
        inst = Instance(seed)
        w = solve(inst.channels, inst.alpha, inst.budgets).weighted_sum_rate
        wins += w >= oma_fd_greedy(inst.channels, inst.alpha, inst.budgets).weighted_sum_rate
    assert wins >= 90


def test_oracle_single_link_uses_full_budget():
    rng = np.random.default_rng(0)
    H, _, _ = decoupled_channels(rng, f_count=1)
    b = Budgets(0.025, 0.1)
    res = grid_oracle(H, np.array([0.5, 1.0]), b, grid_points=50)
    np.testing.assert_allclose(res.power, [[b.p_u, b.p_d]])


@pytest.mark.parametrize("seed", range(6, 12))
def test_oracle_not_far_below_wmmse(seed):
    inst = Instance(seed, num_uplink=1, num_downlink=1, num_subcarriers=1)
    o = grid_oracle(inst.channels, inst.alpha, inst.budgets, 200).weighted_sum_rate
    w = solve(inst.channels, inst.alpha, inst.budgets).weighted_sum_rate
    assert o >= w * 0.99
