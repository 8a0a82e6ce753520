# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the WMMSE inner loop and the grid oracle.

Same signatures and semantics as :mod:`nomafd._pycore`; see its docstring for
the array conventions.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log1p, fabs, INFINITY

cnp.import_array()

cdef double DENOM_FLOOR = 1e-12
cdef double MU_TINY = 1e-300

STATUS_OK = 0
STATUS_BISECTION_FAILED = 1


cdef double _objective(const double[:, :, ::1] G, const double[:, ::1] P,
                       const unsigned char[:, :, ::1] mask, const double[::1] alpha,
                       double sigma2) noexcept nogil:
    cdef Py_ssize_t F = G.shape[0], K = G.shape[1], f, i, j
    cdef double total = 0.0, interf
    for f in range(F):
        for i in range(K):
            interf = 0.0
            for j in range(K):
                if mask[f, i, j]:
                    interf += G[f, j, i] * P[f, j]
            total += alpha[i] * log1p(G[f, i, i] * P[f, i] / (interf + sigma2))
    return total


cdef double _group_total(const double[::1] a, const double[::1] base,
                         const double[::1] floor_, Py_ssize_t n, double mu,
                         double[::1] out) noexcept nogil:
    cdef Py_ssize_t q
    cdef double d, s = 0.0, p
    for q in range(n):
        if a[q] > 0.0:
            d = base[q] + mu
            if d < floor_[q]:
                d = floor_[q]
            p = a[q] / d
            p = p * p
        else:
            p = 0.0
        out[q] = p
        s += p
    return s


cdef int _solve_multiplier(const double[::1] a, const double[::1] base,
                           const double[::1] floor_, Py_ssize_t n, double budget,
                           double tol, int max_steps, double[::1] out,
                           double* mu_out, double* res_out) noexcept nogil:
    cdef double total, hi, lo, mid, asq = 0.0, bmin = INFINITY
    cdef Py_ssize_t q
    cdef int step
    total = _group_total(a, base, floor_, n, 0.0, out)
    if total <= budget:
        mu_out[0] = 0.0
        res_out[0] = 0.0
        return 1
    for q in range(n):
        asq += a[q] * a[q]
        if base[q] < bmin:
            bmin = base[q]
    hi = sqrt(asq / budget)
    if bmin < 0.0:
        hi -= bmin
    while _group_total(a, base, floor_, n, hi, out) > budget:
        hi *= 2.0
    lo = 0.5 * hi
    while lo > MU_TINY and _group_total(a, base, floor_, n, lo, out) <= budget:
        hi = lo
        lo *= 0.5
    if lo <= MU_TINY:
        lo = 0.0
    for step in range(max_steps):
        mid = 0.5 * (lo + hi)
        total = _group_total(a, base, floor_, n, mid, out)
        if fabs(total - budget) <= tol * budget:
            mu_out[0] = mid
            res_out[0] = fabs(total - budget) / budget
            return 1
        if total > budget:
            lo = mid
        else:
            hi = mid
    total = _group_total(a, base, floor_, n, hi, out)
    mu_out[0] = hi
    res_out[0] = fabs(total - budget) / budget
    return 0


def run_loop(G_in, hdiag_in, mask_in, alpha_in, double sigma2, group_in, budget_in,
             P0, mu_sic_in, sic_coef_in, strong_dl_in, Py_ssize_t num_uplink,
             int max_iter, double rel_tol, double bis_tol, int bis_max,
             double eps_active, bint record_history):
    cdef const double[:, :, ::1] G = np.ascontiguousarray(G_in, dtype=np.float64)
    hdiag_arr = np.ascontiguousarray(hdiag_in, dtype=np.complex128)
    cdef const double[:, ::1] hr = np.ascontiguousarray(hdiag_arr.real)
    cdef const double[:, ::1] hi_ = np.ascontiguousarray(hdiag_arr.imag)
    cdef const unsigned char[:, :, ::1] mask = np.ascontiguousarray(mask_in, dtype=np.uint8)
    cdef const double[::1] alpha = np.ascontiguousarray(alpha_in, dtype=np.float64)
    cdef const cnp.intp_t[::1] group = np.ascontiguousarray(group_in, dtype=np.intp)
    cdef const double[::1] budget = np.ascontiguousarray(budget_in, dtype=np.float64)
    cdef const double[:, ::1] mu_sic = np.ascontiguousarray(mu_sic_in, dtype=np.float64)
    cdef const double[:, :, ::1] sic_coef = np.ascontiguousarray(sic_coef_in, dtype=np.float64)
    cdef const cnp.intp_t[::1] strong_dl = np.ascontiguousarray(strong_dl_in, dtype=np.intp)

    cdef Py_ssize_t F = G.shape[0], K = G.shape[1], NG = budget.shape[0]
    cdef Py_ssize_t f, i, j, t, k, n, gi

    P_arr = np.array(P0, dtype=np.float64, order="C", copy=True)
    gr_arr = np.zeros((F, K))
    gim_arr = np.zeros((F, K))
    w_arr = np.ones((F, K))
    mu_arr = np.zeros(NG)
    trace_arr = np.zeros(max_iter + 1)
    hist_arr = np.zeros((max_iter if record_history else 0, F, K))
    cdef double[:, ::1] P = P_arr
    cdef double[:, ::1] gr = gr_arr
    cdef double[:, ::1] gim = gim_arr
    cdef double[:, ::1] w = w_arr
    cdef double[::1] mu = mu_arr
    cdef double[::1] trace = trace_arr
    cdef double[:, :, ::1] hist = hist_arr
    cdef double[:, ::1] a = np.zeros((F, K))
    cdef double[:, ::1] base = np.zeros((F, K))
    cdef double[:, ::1] floor_ = np.zeros((F, K))
    cdef double[:, ::1] prev = np.zeros((F, K))
    cdef double[::1] ga = np.zeros(F * K)
    cdef double[::1] gb = np.zeros(F * K)
    cdef double[::1] gf = np.zeros(F * K)
    cdef double[::1] gout = np.zeros(F * K)

    cdef bint use_sic = bool(np.any(np.asarray(mu_sic_in) > 0))
    cdef int it = 0, ok, status = 0
    cdef bint converged = False
    cdef double interf, ni, own, total, s, e, awg, g2, off, worst = 0.0, m_val, res
    cdef double cur, prv, scale
    cdef Py_ssize_t sd

    with nogil:
        trace[0] = _objective(G, P, mask, alpha, sigma2)
        while it < max_iter:
            # receiver scalings and MSE weights
            for f in range(F):
                for i in range(K):
                    interf = 0.0
                    for j in range(K):
                        if mask[f, i, j]:
                            interf += G[f, j, i] * P[f, j]
                    ni = interf + sigma2
                    own = G[f, i, i] * P[f, i]
                    total = own + ni
                    s = sqrt(P[f, i]) / total
                    gr[f, i] = hr[f, i] * s
                    gim[f, i] = -hi_[f, i] * s
                    e = ni / total
                    w[f, i] = 1.0 / e
                    prev[f, i] = P[f, i]
            # quadratic coefficients of the power subproblem
            for f in range(F):
                sd = strong_dl[f]
                for i in range(K):
                    awg = alpha[i] * w[f, i]
                    g2 = gr[f, i] * gr[f, i] + gim[f, i] * gim[f, i]
                    own = awg * g2 * G[f, i, i]
                    s = awg * (gr[f, i] * hr[f, i] - gim[f, i] * hi_[f, i])
                    a[f, i] = s if s > 0.0 else 0.0
                    interf = 0.0
                    for t in range(K):
                        if mask[f, t, i]:
                            interf += alpha[t] * w[f, t] * (gr[f, t] * gr[f, t] + gim[f, t] * gim[f, t]) * G[f, i, t]
                    off = 0.0
                    if use_sic and i < num_uplink and prev[f, sd] > eps_active:
                        for k in range(num_uplink, K):
                            if k != sd and prev[f, k] > eps_active:
                                off -= sic_coef[f, i, k] * mu_sic[f, k]
                    base[f, i] = own + interf + off
                    floor_[f, i] = DENOM_FLOOR * (own + interf)
            # one multiplier per budget group
            for gi in range(NG):
                n = 0
                for f in range(F):
                    for i in range(K):
                        if group[i] == gi:
                            ga[n] = a[f, i]
                            gb[n] = base[f, i]
                            gf[n] = floor_[f, i]
                            n += 1
                if n == 0:
                    continue
                ok = _solve_multiplier(ga, gb, gf, n, budget[gi], bis_tol, bis_max,
                                       gout, &m_val, &res)
                mu[gi] = m_val
                n = 0
                for f in range(F):
                    for i in range(K):
                        if group[i] == gi:
                            P[f, i] = gout[n]
                            n += 1
                if not ok:
                    status = 1
                    if res > worst:
                        worst = res
            if status != 0:
                break
            it += 1
            trace[it] = _objective(G, P, mask, alpha, sigma2)
            if record_history:
                for f in range(F):
                    for i in range(K):
                        hist[it - 1, f, i] = P[f, i]
            prv = trace[it - 1]
            cur = trace[it]
            scale = fabs(prv)
            if scale < 1e-300:
                scale = 1e-300
            if fabs(cur - prv) <= rel_tol * scale:
                converged = True
                break

    g_out = gr_arr + 1j * gim_arr
    history = hist_arr[:it] if record_history else None
    if status != 0:
        return P_arr, mu_arr, trace_arr[:it + 1].copy(), it, False, history, status, worst, g_out, w_arr
    return P_arr, mu_arr, trace_arr[:it + 1].copy(), it, converged, history, STATUS_OK, 0.0, g_out, w_arr


def grid_search(G_in, mask_in, alpha_in, double sigma2, var_user_in, var_f_in, var_cap_in,
                int n_steps, group_in, budget_in, strong_dl_in, Py_ssize_t num_uplink,
                double eps_active, bint check_sic, Py_ssize_t first_lo, Py_ssize_t first_hi):
    cdef const double[:, :, ::1] G = np.ascontiguousarray(G_in, dtype=np.float64)
    cdef const unsigned char[:, :, ::1] mask = np.ascontiguousarray(mask_in, dtype=np.uint8)
    cdef const double[::1] alpha = np.ascontiguousarray(alpha_in, dtype=np.float64)
    cdef const cnp.intp_t[::1] vu = np.ascontiguousarray(var_user_in, dtype=np.intp)
    cdef const cnp.intp_t[::1] vf = np.ascontiguousarray(var_f_in, dtype=np.intp)
    cdef const double[::1] cap = np.ascontiguousarray(var_cap_in, dtype=np.float64)
    cdef const cnp.intp_t[::1] group = np.ascontiguousarray(group_in, dtype=np.intp)
    cdef const double[::1] budget = np.ascontiguousarray(budget_in, dtype=np.float64)
    cdef const cnp.intp_t[::1] strong_dl = np.ascontiguousarray(strong_dl_in, dtype=np.intp)

    cdef Py_ssize_t F = G.shape[0], K = G.shape[1], NV = vu.shape[0], NG = budget.shape[0]
    cdef Py_ssize_t f, i, j, k, v, q, sd
    cdef double[:, ::1] P = np.zeros((F, K))
    cdef double[::1] sums = np.zeros(NG)
    cdef cnp.intp_t[::1] idx = np.zeros(NV, dtype=np.intp)
    best_idx_arr = np.zeros(NV, dtype=np.intp)
    cdef cnp.intp_t[::1] best = best_idx_arr
    cdef double best_val = -INFINITY, val, interf, margin, lvl
    cdef bint feasible, found = False, done = False

    if first_lo >= first_hi or NV == 0:
        return -np.inf, None
    idx[0] = first_lo

    with nogil:
        while not done:
            for f in range(F):
                for i in range(K):
                    P[f, i] = 0.0
            for q in range(NG):
                sums[q] = 0.0
            for v in range(NV):
                lvl = (<double> idx[v] / n_steps) * cap[v]
                P[vf[v], vu[v]] += lvl
            for v in range(NV):
                lvl = (<double> idx[v] / n_steps) * cap[v]
                sums[group[vu[v]]] += lvl
            feasible = True
            for q in range(NG):
                if sums[q] > budget[q] * (1.0 + 1e-12):
                    feasible = False
            if feasible and check_sic:
                for f in range(F):
                    sd = strong_dl[f]
                    if P[f, sd] <= eps_active:
                        continue
                    for k in range(num_uplink, K):
                        if k == sd or P[f, k] <= eps_active:
                            continue
                        margin = 0.0
                        for j in range(num_uplink):
                            margin += P[f, j] * (G[f, sd, sd] * G[f, j, k] - G[f, k, k] * G[f, j, sd])
                        margin += sigma2 * (G[f, sd, sd] - G[f, k, k])
                        if margin < 0.0:
                            feasible = False
            if feasible:
                val = 0.0
                for f in range(F):
                    for i in range(K):
                        interf = 0.0
                        for j in range(K):
                            if mask[f, i, j]:
                                interf += G[f, j, i] * P[f, j]
                        val += alpha[i] * log1p(G[f, i, i] * P[f, i] / (interf + sigma2))
                if val > best_val:
                    best_val = val
                    found = True
                    for v in range(NV):
                        best[v] = idx[v]
            # odometer, last variable fastest
            v = NV - 1
            while True:
                idx[v] += 1
                if v == 0:
                    if idx[0] >= first_hi:
                        done = True
                    break
                if idx[v] <= n_steps:
                    break
                idx[v] = 0
                v -= 1
    if not found:
        return -np.inf, None
    return best_val, best_idx_arr
