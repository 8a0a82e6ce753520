"""Pure numpy kernels. Reference semantics for the compiled ``_core`` module.

Array conventions shared with ``_core``:

* ``G``      float64 ``(F, K, K)`` power gains ``|h[f, tx, rx]|**2``
* ``hdiag``  complex128 ``(F, K)`` direct gains ``h[f, i, i]``
* ``mask``   uint8 ``(F, K, K)``, ``mask[f, i, j] = 1`` iff ``j`` interferes with ``i``
* ``group``  intp ``(K,)`` budget group of each user, ``budget`` float64 per group
* ``sic_coef`` float64 ``(F, K, K)``, ``[f, i, k]`` normalized SIC slope of
  uplink power ``i`` for weak downlink user ``k``; ``mu_sic`` ``(F, K)``
"""

from __future__ import annotations

import itertools

import numpy as np

DENOM_FLOOR = 1e-12
MU_TINY = 1e-300

STATUS_OK = 0
STATUS_BISECTION_FAILED = 1


def receiver_step(G, hdiag, P, mask, sigma2):
    """MMSE scalings, MSEs and SINRs for the powers ``P``."""
    gdiag = np.diagonal(G, axis1=1, axis2=2)
    own = gdiag * P
    interf = np.einsum("fij,fji,fj->fi", mask, G, P)
    noise_interf = interf + sigma2
    total = own + noise_interf
    g = np.conj(hdiag) * np.sqrt(P) / total
    return g, noise_interf / total, own / noise_interf


def weighted_objective(G, P, mask, alpha, sigma2):
    own = np.diagonal(G, axis1=1, axis2=2) * P
    gamma = own / (np.einsum("fij,fji,fj->fi", mask, G, P) + sigma2)
    return float(np.sum(alpha * np.log1p(gamma)))


def sic_offset(P_prev, mu_sic, sic_coef, strong_dl, num_uplink, eps_active):
    """Uplink multiplier shift ``-sum_k mu[k, f] * dGamma_k / dP_i`` (gated)."""
    f_count = P_prev.shape[0]
    rows = np.arange(f_count)
    gate = (P_prev > eps_active) & (P_prev[rows, strong_dl] > eps_active)[:, None]
    gate[:, :num_uplink] = False
    gate[rows, strong_dl] = False
    weighted = np.where(gate, mu_sic, 0.0)
    off = np.zeros_like(P_prev)
    off[:, :num_uplink] = -np.einsum("fik,fk->fi", sic_coef[:, :num_uplink, :], weighted)
    return off


def solve_multiplier(a, base, floor, budget, tol, max_steps):
    """Find the smallest ``mu >= 0`` with ``sum((a / max(base + mu, floor))**2) <= budget``.

    Returns ``(mu, powers, ok, relative_residual)``.
    """
    active = a > 0

    def powers(mu):
        d = np.maximum(base + mu, floor)
        return np.where(active, (a / np.where(active, d, 1.0)) ** 2, 0.0)

    p = powers(0.0)
    total = p.sum()
    if total <= budget:
        return 0.0, p, True, 0.0
    hi = np.sqrt(np.sum(a**2) / budget) + max(0.0, -float(base.min()))
    while powers(hi).sum() > budget:
        hi *= 2.0
    # near-zero receivers can put the root many decades below hi; shrink the
    # bracket geometrically first so the linear phase starts within a factor 2
    lo = 0.5 * hi
    while lo > MU_TINY and powers(lo).sum() <= budget:
        hi, lo = lo, 0.5 * lo
    if lo <= MU_TINY:
        lo = 0.0
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        p = powers(mid)
        total = p.sum()
        if abs(total - budget) <= tol * budget:
            return mid, p, True, abs(total - budget) / budget
        if total > budget:
            lo = mid
        else:
            hi = mid
    p = powers(hi)
    return hi, p, False, abs(p.sum() - budget) / budget


def power_step(G, hdiag, g, w, mask, alpha, group, budget, offset, bis_tol, bis_max):
    """Closed-form power update with one multiplier per budget group."""
    awg = alpha[None, :] * w
    gdiag = np.diagonal(G, axis1=1, axis2=2)
    a = np.maximum(awg * np.real(g * hdiag), 0.0)
    g2 = np.abs(g) ** 2
    own = awg * g2 * gdiag
    # interference caused by i at every receiver t with i in I(t)
    interf = np.einsum("fti,ft,fit->fi", mask, awg * g2, G)
    base = own + interf + offset
    floor = DENOM_FLOOR * (own + interf)
    P = np.zeros_like(gdiag)
    mu = np.zeros(len(budget))
    status, worst = STATUS_OK, 0.0
    for gi in range(len(budget)):
        cols = np.flatnonzero(group == gi)
        if cols.size == 0:
            continue
        m, p, ok, res = solve_multiplier(
            a[:, cols].ravel(), base[:, cols].ravel(), floor[:, cols].ravel(),
            budget[gi], bis_tol, bis_max,
        )
        mu[gi] = m
        P[:, cols] = p.reshape(-1, cols.size)
        if not ok:
            status, worst = STATUS_BISECTION_FAILED, max(worst, res)
    return P, mu, status, worst


def run_loop(G, hdiag, mask, alpha, sigma2, group, budget, P0, mu_sic, sic_coef,
             strong_dl, num_uplink, max_iter, rel_tol, bis_tol, bis_max, eps_active,
             record_history):
    """Alternate receiver, weight and power updates until the objective settles.

    Returns ``(P, mu, trace, iterations, converged, history, status, residual,
    g, w)`` where ``trace`` holds the objective before the first and after
    every iteration, and ``g``, ``w`` are the blocks used by the last power
    update.
    """
    P = np.array(P0, dtype=float, copy=True)
    use_sic = bool(np.any(mu_sic > 0))
    trace = [weighted_objective(G, P, mask, alpha, sigma2)]
    history = [] if record_history else None
    mu = np.zeros(len(budget))
    converged = False
    it = 0
    zero_offset = np.zeros_like(P)
    g = np.zeros(P.shape, dtype=complex)
    w = np.ones_like(P)
    while it < max_iter:
        g, e, _ = receiver_step(G, hdiag, P, mask, sigma2)
        w = 1.0 / e
        offset = (sic_offset(P, mu_sic, sic_coef, strong_dl, num_uplink, eps_active)
                  if use_sic else zero_offset)
        P, mu, status, res = power_step(G, hdiag, g, w, mask, alpha, group, budget,
                                        offset, bis_tol, bis_max)
        if status != STATUS_OK:
            return P, mu, np.array(trace), it, False, history, status, res, g, w
        it += 1
        trace.append(weighted_objective(G, P, mask, alpha, sigma2))
        if record_history:
            history.append(P.copy())
        prev, cur = trace[-2], trace[-1]
        if abs(cur - prev) <= rel_tol * max(abs(prev), 1e-300):
            converged = True
            break
    if record_history:
        history = np.array(history).reshape(-1, *P.shape)
    return P, mu, np.array(trace), it, converged, history, STATUS_OK, 0.0, g, w


def grid_search(G, mask, alpha, sigma2, var_user, var_f, var_cap, n_steps, group,
                budget, strong_dl, num_uplink, eps_active, check_sic, first_lo, first_hi):
    """Exhaustive search over powers ``k * cap / n_steps`` for each decision variable.

    The first variable's index is restricted to ``[first_lo, first_hi)`` so the
    caller can split the work into blocks. Returns ``(best_value, best_index)``
    with ``best_index = None`` when no grid point is feasible. Ties keep the
    lexicographically smallest index.
    """
    n_var = len(var_user)
    f_count, k_count = G.shape[0], G.shape[1]
    levels = np.arange(n_steps + 1) / n_steps
    best_val, best_idx = -np.inf, None
    # vectorize over the last (up to) two variables
    n_vec = min(2, n_var - 1) if n_var > 1 else 0
    outer_dims = n_var - n_vec
    outer_ranges = [range(first_lo, first_hi)] + [range(n_steps + 1)] * (outer_dims - 1)
    if n_vec:
        mesh = np.meshgrid(*([np.arange(n_steps + 1)] * n_vec), indexing="ij")
        inner_idx = np.stack([m.ravel() for m in mesh], axis=1)
    else:
        inner_idx = np.zeros((1, 0), dtype=int)
    n_pts = inner_idx.shape[0]
    gdiag = np.diagonal(G, axis1=1, axis2=2)
    mask_f = mask.astype(float)
    group_budget_tol = budget * (1.0 + 1e-12)
    for outer in itertools.product(*outer_ranges):
        idx = np.concatenate([np.tile(np.array(outer, dtype=int), (n_pts, 1)), inner_idx],
                             axis=1)
        P = np.zeros((n_pts, f_count, k_count))
        for v in range(n_var):
            P[:, var_f[v], var_user[v]] += levels[idx[:, v]] * var_cap[v]
        sums = np.zeros((n_pts, len(budget)))
        for v in range(n_var):
            sums[:, group[var_user[v]]] += levels[idx[:, v]] * var_cap[v]
        feasible = np.all(sums <= group_budget_tol[None, :], axis=1)
        own = gdiag[None] * P
        interf = np.einsum("fij,fji,nfj->nfi", mask_f, G, P)
        val = np.sum(alpha[None, None, :] * np.log1p(own / (interf + sigma2)), axis=(1, 2))
        if check_sic:
            feasible &= _sic_feasible_batch(G, P, sigma2, strong_dl, num_uplink, eps_active)
        val = np.where(feasible, val, -np.inf)
        j = int(np.argmax(val))
        if val[j] > best_val:
            best_val, best_idx = float(val[j]), idx[j].copy()
    return best_val, best_idx


def _sic_feasible_batch(G, P, sigma2, strong_dl, m, eps_active):
    n_pts, f_count, k_count = P.shape
    ok = np.ones(n_pts, dtype=bool)
    for f in range(f_count):
        i = strong_dl[f]
        gf = G[f]
        strong_on = P[:, f, i] > eps_active
        for k in range(m, k_count):
            if k == i:
                continue
            slope = gf[i, i] * gf[:m, k] - gf[k, k] * gf[:m, i]
            margin = P[:, f, :m] @ slope + sigma2 * (gf[i, i] - gf[k, k])
            ok &= ~(strong_on & (P[:, f, k] > eps_active) & (margin < 0))
    return ok
