"""Pure-Python implementation of the interval kernels.

This is the fallback used when the compiled ``_core`` extension is missing, and
the reference the extension is checked against.  Both produce bit-identical
results: products are ordered by ``(ratio desc, index asc)`` and every sum is
accumulated sequentially in that order.
"""
import math

import numpy as np

BACKEND = "python"


def _sort(ratio, order):
    idx = np.arange(len(ratio))
    order[:] = np.lexsort((idx, -ratio))
    return order


def _fill(coef, v, order_pos, cap):
    """Continuous knapsack fill over ``order_pos`` (positive items, sorted).

    Returns (value, critical item or -1).
    """
    if cap <= 0.0 or len(order_pos) == 0:
        return 0.0, -1
    vs = v[order_pos]
    cum = np.cumsum(vs)
    k = int(np.searchsorted(cum, cap, side="right"))
    cval = np.cumsum(coef[order_pos])
    val = float(cval[k - 1]) if k > 0 else 0.0
    if k == len(order_pos):
        return val, -1
    s = int(order_pos[k])
    used = float(cum[k - 1]) if k > 0 else 0.0
    val = val + (cap - used) / v[s] * coef[s]
    return val, s


def _greedy(r, v, c, coef, order_pos, cap, kappa):
    """Skip-and-continue greedy; returns (true profit, picked item list)."""
    used = 0.0
    rv = 0.0
    cost = 0.0
    picked = []
    for j in order_pos:
        if kappa >= 0 and len(picked) >= kappa:
            break
        if used + v[j] <= cap:
            used += v[j]
            rv += r[j] * v[j]
            cost += c[j]
            picked.append(int(j))
    if not picked:
        return 0.0, picked
    p = 1.0 / (1.0 + used)
    return rv * p - cost, picked


def interval_bounds(r, v, c, p_lo, p_hi, order, kappa=-1):
    """Dual (LP) and greedy primal bounds for a batch of intervals.

    ``order`` is a work array holding a permutation of range(n); it is left
    holding the sort order of the last interval.
    """
    m = len(p_lo)
    dual = np.empty(m)
    primal = np.empty(m)
    crit = np.empty(m, dtype=np.int64)
    crit_ratio = np.empty(m)
    for i in range(m):
        ph = p_hi[i]
        cap = 1.0 / p_lo[i] - 1.0
        coef = ph * r * v - c
        ratio = coef / v
        _sort(ratio, order)
        npos = int(np.count_nonzero(ratio > 0.0))
        pos = order[:npos]
        dual[i], s = _fill(coef, v, pos, cap)
        crit[i] = s
        crit_ratio[i] = ratio[s] if s >= 0 else math.nan
        primal[i], _ = _greedy(r, v, c, coef, pos, cap, kappa)
    return dual, primal, crit, crit_ratio


def greedy_selection(r, v, c, p_lo, p_hi, kappa=-1):
    """Indices picked by the greedy primal heuristic on one interval."""
    coef = p_hi * r * v - c
    ratio = coef / v
    order = np.empty(len(r), dtype=np.int64)
    _sort(ratio, order)
    npos = int(np.count_nonzero(ratio > 0.0))
    val, picked = _greedy(r, v, c, coef, order[:npos], 1.0 / p_lo - 1.0, kappa)
    return val, picked, order


def _lagr_value(coef, v, lam, kappa, cap, order):
    """Bound at one multiplier; info = (crit, crit_pos, xsum, cl, ratio, n_taken)."""
    cl = coef - lam
    ratio = cl / v
    _sort(ratio, order)
    npos = int(np.count_nonzero(ratio > 0.0))
    pos = order[:npos]
    val, s = _fill(cl, v, pos, cap)
    if cap <= 0.0:
        return lam * kappa + val, (-1, 0, 0.0, cl, ratio, 0)
    if s < 0:
        return lam * kappa + val, (-1, npos, float(npos), cl, ratio, npos)
    k = int(np.flatnonzero(pos == s)[0])
    used = float(np.cumsum(v[pos[:k]])[-1]) if k > 0 else 0.0
    xsum = k + (cap - used) / v[s]
    return lam * kappa + val, (s, k, xsum, cl, ratio, npos)


def _horizon(v, order, info, lam, up):
    """Multiplier distance to the next change of the LP basis."""
    s, k, _, cl, ratio, npos = info
    if s < 0:
        taken = order[:npos]
        if up:
            return float(np.min(cl[taken])) if npos else math.inf
        rest = order[npos:]
        rest = rest[np.isfinite(cl[rest])]
        h = float(np.min(-cl[rest])) if len(rest) else math.inf
        return min(h, lam)
    inv_s = 1.0 / v[s]
    rs = ratio[s]
    pre = order[:k]
    tail = order[k + 1:]
    tail = tail[np.isfinite(ratio[tail])]
    h = cl[s] if up else lam
    dp = ratio[pre] - rs
    sp = inv_s - 1.0 / v[pre]
    dt = ratio[tail] - rs
    st = inv_s - 1.0 / v[tail]
    if up:
        a = dp[sp < 0.0] / -sp[sp < 0.0]
        b = -dt[st > 0.0] / st[st > 0.0]
    else:
        a = dp[sp > 0.0] / sp[sp > 0.0]
        b = dt[st < 0.0] / st[st < 0.0]
    for arr in (a, b):
        if len(arr):
            h = min(h, float(np.min(arr)))
    return h


def lagrangian_scan(coef, v, cap, kappa, lam0, delta, max_iter, order):
    """Fixed-step scan on the multiplier from ``lam0``.

    Steps up by ``delta`` while the bound strictly improves; if the first upward
    step does not improve, steps down instead.  Runs of steps that stay on one
    linear piece of the bound are taken in a single jump; the stopping point
    is the one the step-by-step scan reaches.  ``max_iter`` caps bound
    evaluations.  Returns (bound, lam, crit, evaluations, capped).
    """
    best, info = _lagr_value(coef, v, lam0, kappa, cap, order)
    crit = info[0]
    lam_best = lam0
    evals = 1
    moved = False
    for up in (True, False):
        if not up and moved:
            break
        cur, cur_info = lam0, info
        if not up and evals > 1 and lam0 > 0.0:
            # the work order belongs to the rejected upward trial
            _, cur_info = _lagr_value(coef, v, lam0, kappa, cap, order)
            evals += 1
        while evals < max_iter:
            if not up and cur <= 0.0:
                break
            g = kappa - cur_info[2] if up else cur_info[2] - kappa
            t = 1.0
            if g < 0.0:
                h = _horizon(v, order, cur_info, cur, up)
                if h != math.inf:
                    t = max(1.0, min(math.floor(h / delta), 2.0**52) - 1.0)
            z = math.inf
            for tt in ((t, 1.0) if t > 1.0 else (1.0,)):
                lam = cur + tt * delta if up else max(cur - tt * delta, 0.0)
                z, new_info = _lagr_value(coef, v, lam, kappa, cap, order)
                evals += 1
                if z < best:
                    break
            if z < best:
                best, lam_best, crit = z, lam, new_info[0]
                cur, cur_info = lam, new_info
                moved = True
            else:
                break
    capped = evals >= max_iter
    return best, lam_best, crit, evals, capped


def interval_bounds_card(r, v, c, p_lo, p_hi, order, lorder, kappa, lam0, delta, max_iter):
    """Cardinality variant: Lagrangian dual and cardinality-capped greedy primal.

    The multiplier is chained through the batch in the given interval order.
    The primal is the better of the capped greedy in ratio order and the
    capped greedy in Lagrangian ratio order ``(coef - lam) / v``.
    Returns (dual, primal, crit, lam, total_iters, capped_count, lam_at).
    """
    m = len(p_lo)
    dual = np.empty(m)
    primal = np.empty(m)
    crit = np.empty(m, dtype=np.int64)
    lam_at = np.empty(m)
    lam = lam0
    total = 0
    capped = 0
    for i in range(m):
        ph = p_hi[i]
        cap = 1.0 / p_lo[i] - 1.0
        coef = ph * r * v - c
        ratio = coef / v
        _sort(ratio, order)
        npos = int(np.count_nonzero(ratio > 0.0))
        primal[i], _ = _greedy(r, v, c, coef, order[:npos], cap, kappa)
        lam_at[i] = lam
        if kappa == 0 or cap <= 0.0:
            dual[i], crit[i] = 0.0, -1
            continue
        dual[i], lam, crit[i], it, cp = lagrangian_scan(
            coef, v, cap, kappa, lam, delta, max_iter, lorder
        )
        lam_at[i] = lam
        total += it
        capped += int(cp)
        alt, _ = _lagr_greedy(r, v, c, coef, cap, kappa, lam, lorder)
        if alt > primal[i]:
            primal[i] = alt
    return dual, primal, crit, lam, total, capped, lam_at


def _lagr_greedy(r, v, c, coef, cap, kappa, lam, order):
    cl = coef - lam
    ratio = cl / v
    _sort(ratio, order)
    npos = int(np.count_nonzero(ratio > 0.0))
    return _greedy(r, v, c, cl, order[:npos], cap, kappa)


def lagr_greedy_selection(r, v, c, p_lo, p_hi, kappa, lam):
    """Greedy picks in Lagrangian ratio order on one interval: (value, picked)."""
    coef = p_hi * r * v - c
    order = np.empty(len(r), dtype=np.int64)
    return _lagr_greedy(r, v, c, coef, 1.0 / p_lo - 1.0, kappa, lam, order)


def rule2_mask(r, v, c, cand, p_hi, dual, crit_ratio, lb, band):
    """True for candidate products meeting both rule-2 conditions on every interval."""
    out = np.zeros(len(cand), dtype=bool)
    if len(p_hi) == 0 or np.any(np.isnan(crit_ratio)):
        return out
    for t, j in enumerate(cand):
        pt = p_hi * r[j] * v[j] - c[j]
        cond1 = pt / v[j] < crit_ratio - band
        cond2 = dual + pt - v[j] * crit_ratio < lb - band
        out[t] = bool(np.all(cond1 & cond2))
    return out


def node_lp(r, v, c, status, p_hi, cap, order, take):
    """LP bound over free products (status == 0) of a search node.

    Returns (value, critical item or -1, fraction of critical item).  ``take``
    is set to 1 for free products taken integrally by the LP, 0 elsewhere.
    """
    coef = p_hi * r * v - c
    ratio = coef / v
    _sort(ratio, order)
    take[:] = 0
    if cap < 0.0:
        return -math.inf, -1, 0.0
    if cap == 0.0:
        return 0.0, -1, 0.0
    free = order[(status[order] == 0) & (ratio[order] > 0.0)]
    val, s = _fill(coef, v, free, cap)
    if s < 0:
        take[free] = 1
        return val, -1, 0.0
    k = int(np.flatnonzero(free == s)[0])
    take[free[:k]] = 1
    used = float(np.cumsum(v[free[:k]])[-1]) if k > 0 else 0.0
    return val, s, (cap - used) / v[s]


def node_lp_card(r, v, c, status, p_hi, cap, kappa, lam0, delta, max_iter, order):
    """Lagrangian LP bound over free products with ``kappa`` remaining slots.

    Returns (bound, lam, critical item or -1, iters).
    """
    coef = p_hi * r * v - c
    if cap < 0.0 or kappa < 0:
        return -math.inf, lam0, -1, 0
    # fixed products get a prohibitive coefficient so they never enter
    coef = np.where(status == 0, coef, -math.inf)
    if kappa == 0:
        return 0.0, lam0, -1, 0
    best, lam, s, it, _ = lagrangian_scan(coef, v, cap, kappa, lam0, delta, max_iter, order)
    return best, lam, s, it
