# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled interval kernels.

Same contract as :mod:`aopc._core_py`; results are bit-identical.  The sort
order is kept between consecutive intervals and repaired by insertion sort,
because neighbouring grid intervals order the products almost identically.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, NAN, isnan, floor
from libc.stdlib cimport qsort, malloc, free

cnp.import_array()

BACKEND = "cython"

ctypedef cnp.int64_t idx_t

cdef const double* _qs_key = NULL


cdef int _cmp(const void* a, const void* b) noexcept nogil:
    cdef idx_t ia = (<idx_t*>a)[0]
    cdef idx_t ib = (<idx_t*>b)[0]
    cdef double ra = _qs_key[ia]
    cdef double rb = _qs_key[ib]
    if ra > rb:
        return -1
    if ra < rb:
        return 1
    if ia < ib:
        return -1
    if ia > ib:
        return 1
    return 0


cdef inline bint _before(const double* ratio, idx_t a, idx_t b) noexcept nogil:
    return ratio[a] > ratio[b] or (ratio[a] == ratio[b] and a < b)


cdef void _sort(const double* ratio, idx_t* order, Py_ssize_t n) noexcept nogil:
    """Order by (ratio desc, index asc); insertion sort with a full-sort bail-out."""
    global _qs_key
    cdef Py_ssize_t i, j
    cdef idx_t x
    cdef Py_ssize_t moves = 0
    cdef Py_ssize_t budget = 16 * n + 64
    for i in range(1, n):
        x = order[i]
        j = i - 1
        while j >= 0 and _before(ratio, x, order[j]):
            order[j + 1] = order[j]
            j -= 1
            moves += 1
        order[j + 1] = x
        if moves > budget:
            _qs_key = ratio
            qsort(order, n, sizeof(idx_t), _cmp)
            return


cdef double _fill(const double* coef, const double* v, const double* ratio,
                  const idx_t* order, const signed char* status, Py_ssize_t n,
                  double cap, idx_t* crit) noexcept nogil:
    """Continuous knapsack fill; status may be NULL (all products free)."""
    cdef Py_ssize_t i
    cdef idx_t j
    cdef double used = 0.0, val = 0.0
    crit[0] = -1
    if cap <= 0.0:
        return 0.0
    for i in range(n):
        j = order[i]
        if not (ratio[j] > 0.0):
            break
        if status != NULL and status[j] != 0:
            continue
        if used + v[j] <= cap:
            used = used + v[j]
            val = val + coef[j]
        else:
            crit[0] = j
            return val + (cap - used) / v[j] * coef[j]
    return val


cdef double _greedy(const double* r, const double* v, const double* c,
                    const double* ratio, const idx_t* order, Py_ssize_t n,
                    double cap, Py_ssize_t kappa) noexcept nogil:
    cdef Py_ssize_t i, cnt = 0
    cdef idx_t j
    cdef double used = 0.0, rv = 0.0, cost = 0.0
    for i in range(n):
        j = order[i]
        if not (ratio[j] > 0.0):
            break
        if kappa >= 0 and cnt >= kappa:
            break
        if used + v[j] <= cap:
            used = used + v[j]
            rv = rv + r[j] * v[j]
            cost = cost + c[j]
            cnt += 1
    if cnt == 0:
        return 0.0
    return rv * (1.0 / (1.0 + used)) - cost


def interval_bounds(const double[::1] r, const double[::1] v, const double[::1] c,
                    const double[::1] p_lo, const double[::1] p_hi,
                    idx_t[::1] order, Py_ssize_t kappa=-1):
    cdef Py_ssize_t n = r.shape[0], m = p_lo.shape[0], i, j
    dual_a = np.empty(m)
    primal_a = np.empty(m)
    crit_a = np.empty(m, dtype=np.int64)
    cr_a = np.empty(m)
    cdef double[::1] dual = dual_a, primal = primal_a, cr = cr_a
    cdef idx_t[::1] crit = crit_a
    coef_a = np.empty(n)
    ratio_a = np.empty(n)
    cdef double[::1] coef = coef_a, ratio = ratio_a
    cdef double ph, cap
    cdef idx_t s
    if n == 0:
        dual_a[:] = 0.0
        primal_a[:] = 0.0
        crit_a[:] = -1
        cr_a[:] = NAN
        return dual_a, primal_a, crit_a, cr_a
    with nogil:
        for i in range(m):
            ph = p_hi[i]
            cap = 1.0 / p_lo[i] - 1.0
            for j in range(n):
                coef[j] = ph * r[j] * v[j] - c[j]
                ratio[j] = coef[j] / v[j]
            _sort(&ratio[0], &order[0], n)
            dual[i] = _fill(&coef[0], &v[0], &ratio[0], &order[0], NULL, n, cap, &s)
            crit[i] = s
            cr[i] = ratio[s] if s >= 0 else NAN
            primal[i] = _greedy(&r[0], &v[0], &c[0], &ratio[0], &order[0], n, cap, kappa)
    return dual_a, primal_a, crit_a, cr_a


cdef struct LInfo:
    idx_t crit
    Py_ssize_t cpos
    Py_ssize_t npos
    double xsum


cdef double _lagr_value(const double* coef, const double* v, const signed char* status,
                        Py_ssize_t n, double lam, Py_ssize_t kappa, double cap,
                        double* cl, double* ratio, idx_t* order, LInfo* info) noexcept nogil:
    cdef Py_ssize_t i, j, k = 0
    cdef idx_t q
    cdef double used = 0.0, val = 0.0
    for j in range(n):
        if status != NULL and status[j] != 0:
            cl[j] = -INFINITY
            ratio[j] = -INFINITY
        else:
            cl[j] = coef[j] - lam
            ratio[j] = cl[j] / v[j]
    _sort(ratio, order, n)
    info.crit = -1
    info.cpos = 0
    info.npos = 0
    info.xsum = 0.0
    if cap <= 0.0:
        return lam * kappa + 0.0
    for i in range(n):
        q = order[i]
        if not (ratio[q] > 0.0):
            break
        if used + v[q] <= cap:
            used = used + v[q]
            val = val + cl[q]
            k += 1
        else:
            info.crit = q
            info.cpos = k
            info.xsum = k + (cap - used) / v[q]
            return lam * kappa + (val + (cap - used) / v[q] * cl[q])
    info.cpos = k
    info.npos = k
    info.xsum = <double>k
    return lam * kappa + val


cdef double _horizon(const double* v, const double* cl, const double* ratio,
                     const idx_t* order, Py_ssize_t n, const LInfo* info, double lam,
                     bint up) noexcept nogil:
    """Multiplier distance to the next change of the LP basis."""
    cdef Py_ssize_t i
    cdef idx_t j, s = info.crit
    cdef double h, d, sl, inv_s, rs
    if s < 0:
        h = INFINITY
        if up:
            for i in range(info.npos):
                j = order[i]
                if cl[j] < h:
                    h = cl[j]
            return h
        for i in range(info.npos, n):
            j = order[i]
            if cl[j] != -INFINITY and -cl[j] < h:
                h = -cl[j]
        return h if h < lam else lam
    inv_s = 1.0 / v[s]
    rs = ratio[s]
    h = cl[s] if up else lam
    for i in range(n):
        j = order[i]
        if i == info.cpos or ratio[j] == -INFINITY:
            continue
        d = ratio[j] - rs
        sl = inv_s - 1.0 / v[j]
        if i < info.cpos:
            if up and sl < 0.0:
                d = d / -sl
            elif not up and sl > 0.0:
                d = d / sl
            else:
                continue
        else:
            if up and sl > 0.0:
                d = -d / sl
            elif not up and sl < 0.0:
                d = d / sl
            else:
                continue
        if d < h:
            h = d
    return h


cdef double _scan(const double* coef, const double* v, const signed char* status,
                  Py_ssize_t n, double cap, Py_ssize_t kappa, double lam0, double delta,
                  Py_ssize_t max_iter, double* cl, double* ratio, idx_t* order,
                  double* lam_out, idx_t* crit_out, Py_ssize_t* iters_out) noexcept nogil:
    cdef LInfo info0, cur_info, new_info
    cdef double z, lam, lam_best, cur, g, h, t, tt
    cdef Py_ssize_t evals = 1, pass_, trial, ntrial
    cdef bint moved = False, up
    cdef double best = _lagr_value(coef, v, status, n, lam0, kappa, cap, cl, ratio, order, &info0)
    crit_out[0] = info0.crit
    lam_best = lam0
    for pass_ in range(2):
        up = pass_ == 0
        if not up and moved:
            break
        cur = lam0
        cur_info = info0
        if not up and evals > 1 and lam0 > 0.0:
            # the work order belongs to the rejected upward trial
            _lagr_value(coef, v, status, n, lam0, kappa, cap, cl, ratio, order, &cur_info)
            evals += 1
        while evals < max_iter:
            if not up and cur <= 0.0:
                break
            g = (kappa - cur_info.xsum) if up else (cur_info.xsum - kappa)
            t = 1.0
            if g < 0.0:
                h = _horizon(v, cl, ratio, order, n, &cur_info, cur, up)
                if h != INFINITY:
                    t = floor(h / delta)
                    if t > 4503599627370496.0:
                        t = 4503599627370496.0
                    t = t - 1.0
                    if t < 1.0:
                        t = 1.0
            ntrial = 2 if t > 1.0 else 1
            z = INFINITY
            for trial in range(ntrial):
                tt = t if trial == 0 else 1.0
                if up:
                    lam = cur + tt * delta
                else:
                    lam = cur - tt * delta
                    if lam < 0.0:
                        lam = 0.0
                z = _lagr_value(coef, v, status, n, lam, kappa, cap, cl, ratio, order, &new_info)
                evals += 1
                if z < best:
                    break
            if z < best:
                best = z
                lam_best = lam
                crit_out[0] = new_info.crit
                cur = lam
                cur_info = new_info
                moved = True
            else:
                break
    lam_out[0] = lam_best
    iters_out[0] = evals
    return best


def lagrangian_scan(const double[::1] coef, const double[::1] v, double cap, Py_ssize_t kappa,
                    double lam0, double delta, Py_ssize_t max_iter, idx_t[::1] order):
    cdef Py_ssize_t n = coef.shape[0], it
    cl_a = np.empty(n)
    ratio_a = np.empty(n)
    cdef double[::1] cl = cl_a, ratio = ratio_a
    cdef double lam, best
    cdef idx_t s
    with nogil:
        best = _scan(&coef[0], &v[0], NULL, n, cap, kappa, lam0, delta, max_iter,
                     &cl[0], &ratio[0], &order[0], &lam, &s, &it)
    return best, lam, s, it, it >= max_iter


def interval_bounds_card(const double[::1] r, const double[::1] v, const double[::1] c,
                         const double[::1] p_lo, const double[::1] p_hi,
                         idx_t[::1] order, idx_t[::1] lorder, Py_ssize_t kappa,
                         double lam0, double delta, Py_ssize_t max_iter):
    cdef Py_ssize_t n = r.shape[0], m = p_lo.shape[0], i, j, it
    cdef Py_ssize_t total = 0, capped = 0
    dual_a = np.empty(m)
    primal_a = np.empty(m)
    crit_a = np.empty(m, dtype=np.int64)
    lam_at_a = np.empty(m)
    cdef double[::1] dual = dual_a, primal = primal_a, lam_at = lam_at_a
    cdef idx_t[::1] crit = crit_a
    cdef double alt
    coef_a = np.empty(n)
    ratio_a = np.empty(n)
    cl_a = np.empty(n)
    lratio_a = np.empty(n)
    cdef double[::1] coef = coef_a, ratio = ratio_a, cl = cl_a, lratio = lratio_a
    cdef double ph, cap, lam = lam0
    cdef idx_t s
    if n == 0:
        dual_a[:] = 0.0
        primal_a[:] = 0.0
        crit_a[:] = -1
        lam_at_a[:] = lam0
        return dual_a, primal_a, crit_a, lam0, 0, 0, lam_at_a
    with nogil:
        for i in range(m):
            ph = p_hi[i]
            cap = 1.0 / p_lo[i] - 1.0
            for j in range(n):
                coef[j] = ph * r[j] * v[j] - c[j]
                ratio[j] = coef[j] / v[j]
            _sort(&ratio[0], &order[0], n)
            primal[i] = _greedy(&r[0], &v[0], &c[0], &ratio[0], &order[0], n, cap, kappa)
            lam_at[i] = lam
            if kappa == 0 or cap <= 0.0:
                dual[i] = 0.0
                crit[i] = -1
                continue
            dual[i] = _scan(&coef[0], &v[0], NULL, n, cap, kappa, lam, delta, max_iter,
                            &cl[0], &lratio[0], &lorder[0], &lam, &s, &it)
            lam_at[i] = lam
            crit[i] = s
            total += it
            if it >= max_iter:
                capped += 1
            # second primal candidate in Lagrangian ratio order
            for j in range(n):
                cl[j] = coef[j] - lam
                lratio[j] = cl[j] / v[j]
            _sort(&lratio[0], &lorder[0], n)
            alt = _greedy(&r[0], &v[0], &c[0], &lratio[0], &lorder[0], n, cap, kappa)
            if alt > primal[i]:
                primal[i] = alt
    return dual_a, primal_a, crit_a, lam, total, capped, lam_at_a


def rule2_mask(const double[::1] r, const double[::1] v, const double[::1] c,
               const idx_t[::1] cand, const double[::1] p_hi, const double[::1] dual,
               const double[::1] crit_ratio, double lb, double band):
    cdef Py_ssize_t nc = cand.shape[0], m = p_hi.shape[0], t, k
    out_a = np.zeros(nc, dtype=bool)
    cdef cnp.npy_bool[::1] out = out_a
    cdef idx_t j
    cdef double pt, cr
    cdef bint ok
    if m == 0:
        return out_a
    for k in range(m):
        if isnan(crit_ratio[k]):
            return out_a
    with nogil:
        for t in range(nc):
            j = cand[t]
            ok = True
            for k in range(m):
                pt = p_hi[k] * r[j] * v[j] - c[j]
                cr = crit_ratio[k]
                if not (pt / v[j] < cr - band) or not (dual[k] + pt - v[j] * cr < lb - band):
                    ok = False
                    break
            out[t] = ok
    return out_a


def node_lp(const double[::1] r, const double[::1] v, const double[::1] c,
            const signed char[::1] status, double p_hi, double cap,
            idx_t[::1] order, signed char[::1] take):
    cdef Py_ssize_t n = r.shape[0], i, j
    cdef double used = 0.0, val = 0.0, cf
    cdef idx_t k
    coef_a = np.empty(n)
    ratio_a = np.empty(n)
    cdef double[::1] coef = coef_a, ratio = ratio_a
    for j in range(n):
        take[j] = 0
    if cap < 0.0:
        return -INFINITY, -1, 0.0
    with nogil:
        for j in range(n):
            coef[j] = p_hi * r[j] * v[j] - c[j]
            ratio[j] = coef[j] / v[j]
        _sort(&ratio[0], &order[0], n)
    if cap <= 0.0:
        return 0.0, -1, 0.0
    for i in range(n):
        k = order[i]
        if not (ratio[k] > 0.0):
            break
        if status[k] != 0:
            continue
        if used + v[k] <= cap:
            used = used + v[k]
            val = val + coef[k]
            take[k] = 1
        else:
            return val + (cap - used) / v[k] * coef[k], k, (cap - used) / v[k]
    return val, -1, 0.0


def node_lp_card(const double[::1] r, const double[::1] v, const double[::1] c,
                 const signed char[::1] status, double p_hi, double cap, Py_ssize_t kappa,
                 double lam0, double delta, Py_ssize_t max_iter, idx_t[::1] order):
    cdef Py_ssize_t n = r.shape[0], j, it
    cdef double lam, best
    cdef idx_t s
    if cap < 0.0 or kappa < 0:
        return -INFINITY, lam0, -1, 0
    if kappa == 0:
        return 0.0, lam0, -1, 0
    coef_a = np.empty(n)
    cl_a = np.empty(n)
    ratio_a = np.empty(n)
    cdef double[::1] coef = coef_a, cl = cl_a, ratio = ratio_a
    with nogil:
        for j in range(n):
            coef[j] = p_hi * r[j] * v[j] - c[j]
        best = _scan(&coef[0], &v[0], &status[0], n, cap, kappa, lam0, delta, max_iter,
                     &cl[0], &ratio[0], &order[0], &lam, &s, &it)
    return best, lam, s, it
