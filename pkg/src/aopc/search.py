"""Exact solve: bounding, fixing, and a window-restricted branch-and-bound.

After the bounding procedure every optimal assortment has its no-purchase
probability inside ``[p_window_lo, p_window_hi]``.  The search enumerates
assortments of the remaining products inside that window.  A node's bound is
the continuous knapsack over its free products with the node window's upper
probability as the price and the capacity left by the committed products.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._backend import core
from .bounding import BoundingResult, sequential_bound
from .fixing import FixingHook, FixingReport
from .knapsack import DEFAULT_DELTA, DEFAULT_MAX_ITER
from .model import Instance, SolveResult, expected_profit, normalize

OPTIMAL = "Optimal"
TIME_LIMIT = "TimeLimit"
INFEASIBLE_WINDOW = "Infeasible-window"

WINDOW_SLACK = 1e-12
MAX_ROOTS = 1024


class WindowError(RuntimeError):
    """The bounding procedure produced an empty window; indicates a bug."""


@dataclass
class SolveParams:
    rho_first: float = 1e-2
    rho_last: float = 1e-7
    kappa: Optional[int] = None
    time_limit: float = 600.0
    tolerance: float = 1e-9
    delta: float = DEFAULT_DELTA
    max_iter: int = DEFAULT_MAX_ITER
    use_fixing: bool = True
    restrict_to_union: bool = False
    split_ratio: float = 0.5
    roots: str = "auto"


SPLIT = -2  # branch marker: bisect the node window instead of a product


@dataclass
class _Node:
    status: np.ndarray
    v_in: float
    rv_in: float
    c_in: float
    n_in: int
    lam: float
    bound: float
    depth: int
    lo: float
    hi: float
    branch: int  # product to branch on, SPLIT, or -1 for none


class _Search:
    def __init__(self, inst: Instance, idx, window, spans, params: SolveParams, incumbent, inc_val,
                 deadline):
        self.inst = inst
        self.idx = idx
        self.r = np.ascontiguousarray(inst.r[idx])
        self.v = np.ascontiguousarray(inst.v[idx])
        self.c = np.ascontiguousarray(inst.c[idx])
        self.rv = self.r * self.v
        self.m = len(idx)
        self.w_lo, self.w_hi = window
        self.spans = spans
        self.kappa = params.kappa
        self.tol = params.tolerance
        self.delta = params.delta
        self.max_iter = params.max_iter
        self.split_ratio = params.split_ratio
        self.order = np.arange(self.m, dtype=np.int64)
        self.lorder = np.arange(self.m, dtype=np.int64)
        self.take = np.zeros(self.m, dtype=np.int8)
        self.best_val = inc_val
        self.best_sel = incumbent.copy()
        self.max_pruned = -math.inf
        self.nodes = 0
        self.deadline = deadline

    # -- helpers -------------------------------------------------------
    def _in_window(self, vsum: float) -> bool:
        p = 1.0 / (1.0 + vsum)
        if not (self.w_lo - WINDOW_SLACK <= p <= self.w_hi + WINDOW_SLACK):
            return False
        if self.spans is None:
            return True
        return any(lo - WINDOW_SLACK <= p <= hi + WINDOW_SLACK for lo, hi in self.spans)

    def _offer(self, local: np.ndarray) -> None:
        """Evaluate the assortment given by local product positions."""
        if self.kappa is not None and len(local) > self.kappa:
            return
        if not self._in_window(float(np.sum(self.v[local]))):
            return
        sel = np.zeros(self.inst.n, dtype=bool)
        sel[self.idx[local]] = True
        val = expected_profit(self.inst, sel)
        if val > self.best_val:
            self.best_val = val
            self.best_sel = sel

    def _prune(self, bound: float) -> None:
        self.max_pruned = max(self.max_pruned, bound)

    def _make(self, status, v_in, rv_in, c_in, n_in, lam, depth, lo, hi) -> Optional[_Node]:
        """Bound a node; None if it is infeasible or cannot beat the incumbent."""
        self.nodes += 1
        free = status == 0
        hi = min(hi, 1.0 / (1.0 + v_in))
        lo = max(lo, 1.0 / (1.0 + v_in + float(np.sum(self.v[free]))))
        if hi < lo - WINDOW_SLACK:
            return None
        if lo > hi:
            lo = hi
        cap = 1.0 / lo - 1.0 - v_in
        if cap < 0.0:
            cap = 0.0
        base = hi * rv_in - c_in
        lp, crit, frac = core.node_lp(self.r, self.v, self.c, status, hi, cap, self.order, self.take)
        lagr = None
        if self.kappa is not None:
            rem = self.kappa - n_in
            n_lp = int(np.count_nonzero(self.take)) + (1 if frac > 0.0 else 0)
            if n_lp <= rem or base + lp <= self.best_val + self.tol:
                # the LP optimum already respects the limit, or prunes alone
                lp_bound = lp
            else:
                lb_card, lam, lcrit, _ = core.node_lp_card(
                    self.r, self.v, self.c, status, hi, cap, rem, lam, self.delta,
                    self.max_iter, self.lorder,
                )
                lp_bound = min(lp, lb_card)
                lagr = (base + lb_card, lam, lcrit)
        else:
            lp_bound = lp
        bound = base + lp_bound
        # rounding heuristic: committed products plus the LP's integral part
        taken = np.flatnonzero(status == 1)
        extra = self.order[self.take[self.order] == 1]
        if self.kappa is not None:
            extra = extra[: max(self.kappa - n_in, 0)]
        self._offer(np.concatenate((taken, extra)))
        if self.kappa is not None and n_in >= self.kappa:
            return None
        if bound <= self.best_val + self.tol:
            self._prune(bound)
            return None
        fixed = self._reduced_cost_fix(status, hi, base + lp, crit, lagr)
        if fixed is False:
            return None
        if fixed is not None:
            status, take_in = fixed
            if len(take_in):
                n_in += len(take_in)
                if self.kappa is not None and n_in > self.kappa:
                    return None
                v_in += float(np.sum(self.v[take_in]))
                rv_in += float(np.sum(self.rv[take_in]))
                c_in += float(np.sum(self.c[take_in]))
                hi = min(hi, 1.0 / (1.0 + v_in))
                if hi < lo - WINDOW_SLACK:
                    return None
            free = status == 0
        cand = np.flatnonzero(free)
        if len(cand) == 0:
            self._offer(np.flatnonzero(status == 1))
            return None
        branch = self._choose(status, cand, bound, lo, hi, rv_in, crit, frac, n_in)
        return _Node(status, v_in, rv_in, c_in, n_in, lam, bound, depth, lo, hi, branch)

    def _rc_hits(self, coef, free, bound, crit):
        """Free products whose reduced cost against ``bound`` exceeds the node gap.

        With the critical ratio as dual price, forcing product ``j`` against
        its relaxed value lowers ``bound`` by at least ``|coef_j - ratio * v_j|``.
        Returns (fix-out mask, fix-in mask, weakest pruned bound).
        """
        gap = bound - (self.best_val + self.tol)
        margin = 1e-12 * max(1.0, abs(bound))
        cr = coef[crit] / self.v[crit] if crit >= 0 else 0.0
        rc = coef - cr * self.v
        loss = np.abs(rc)
        hit = free & (loss >= gap + margin)
        if crit >= 0:
            hit[crit] = False
        if not hit.any():
            return None
        weakest = bound - float(np.min(loss[hit])) + margin
        into = hit & (rc > 0.0)
        return hit & ~into, into, weakest

    def _reduced_cost_fix(self, status, hi, lp_bound, crit, lagr=None):
        """Fix products by LP reduced costs and, under a cardinality limit, by
        the reduced costs of the Lagrangian problem ``lagr = (bound, lam, crit)``.

        Returns None when nothing changes, False when the node holds no
        improving assortment, else (new status, products fixed in).
        """
        free = status == 0
        coef = hi * self.rv - self.c
        passes = [self._rc_hits(coef, free, lp_bound, crit)]
        if lagr is not None:
            bound, lam, lcrit = lagr
            passes.append(self._rc_hits(coef - lam, free, bound, lcrit))
        out = np.zeros(self.m, dtype=bool)
        into = np.zeros(self.m, dtype=bool)
        for hitset in passes:
            if hitset is None:
                continue
            o, i, weakest = hitset
            out |= o
            into |= i
            self._prune(weakest)
        if not (out.any() or into.any()):
            return None
        if (out & into).any():
            return False
        status = status.copy()
        status[out] = -1
        status[into] = 1
        return status, np.flatnonzero(into)

    def _choose(self, status, cand, bound, lo, hi, rv_in, crit, frac, n_in) -> int:
        # slack the window width adds to the bound: the price gap on the LP's
        # revenue plus the capacity gap valued at the critical ratio
        rv_lp = rv_in + float(np.sum(self.rv[self.take == 1]))
        slack = 0.0
        int_slack = 0.0
        if crit >= 0:
            rv_lp += frac * self.rv[crit]
            ph = hi * self.rv[crit] - self.c[crit]
            slack = max(ph / self.v[crit], 0.0) * (1.0 / lo - 1.0 / hi)
            # what rounding the critical product either way gives up
            int_slack = min(frac, 1.0 - frac) * max(ph, 0.0)
        slack += (hi - lo) * rv_lp
        mid = 0.5 * (lo + hi)
        if (lo < mid < hi and slack > self.split_ratio * (bound - self.best_val)
                and slack > int_slack):
            return SPLIT
        if crit >= 0 and frac > 0.0 and (self.kappa is None or n_in < self.kappa):
            return int(crit)
        if lo < mid < hi and slack > 0.0:
            return SPLIT
        return int(cand[np.argmax(self.v[cand])])

    def _children(self, node: _Node):
        j = node.branch
        out = []
        if j == SPLIT:
            mid = 0.5 * (node.lo + node.hi)
            for lo, hi in ((mid, node.hi), (node.lo, mid)):
                out.append(self._make(node.status, node.v_in, node.rv_in, node.c_in, node.n_in,
                                      node.lam, node.depth + 1, lo, hi))
        else:
            if self.kappa is None or node.n_in < self.kappa:
                st = node.status.copy()
                st[j] = 1
                out.append(self._make(
                    st, node.v_in + self.v[j], node.rv_in + self.rv[j], node.c_in + self.c[j],
                    node.n_in + 1, node.lam, node.depth + 1, node.lo, node.hi,
                ))
            st = node.status.copy()
            st[j] = -1
            out.append(self._make(st, node.v_in, node.rv_in, node.c_in, node.n_in, node.lam,
                                  node.depth + 1, node.lo, node.hi))
        kids = [k for k in out if k is not None]
        # best bound first; the first child (include, or upper half) wins ties
        kids.sort(key=lambda k: -k.bound)
        return kids

    def run(self, roots=None):
        """Depth-first search from each root window in turn.

        ``roots`` is a list of ``(p_lo, p_hi, bound)`` windows covering the
        global window, searched in the given order; a root whose known bound
        cannot beat the incumbent is skipped.  Returns (timed_out, open_ub).
        """
        status = np.zeros(self.m, dtype=np.int8)
        self._offer(np.empty(0, dtype=np.int64))
        if roots is None:
            roots = [(self.w_lo, self.w_hi, math.inf)]
        for t, (lo, hi, known) in enumerate(roots):
            if known <= self.best_val + self.tol:
                self._prune(known)
                continue
            root = self._make(status, 0.0, 0.0, 0.0, 0, 0.0, 0, lo, hi)
            stack = [] if root is None else [root]
            while stack:
                if time.perf_counter() > self.deadline:
                    rest = [b for _, _, b in roots[t + 1:]]
                    open_ub = max([n.bound for n in stack] + rest, default=-math.inf)
                    return True, open_ub
                node = stack.pop()
                if node.bound <= self.best_val + self.tol:
                    self._prune(node.bound)
                    continue
                kids = self._children(node)
                stack.extend(reversed(kids))
        return False, -math.inf


def _root_windows(bres: BoundingResult, mode: str, kappa=None) -> list:
    """Search roots ``(p_lo, p_hi, known bound)``, best known bound first.

    ``window`` is the whole window, ``spans`` each maximal run of adjacent
    surviving intervals, ``intervals`` each surviving interval (grouped into
    blocks of adjacent intervals once there are more than ``MAX_ROOTS``).  ``auto`` picks
    spans without a cardinality limit and intervals with one, where the
    Lagrangian node bound is much looser than the per-interval grid bound.
    """
    sv = bres.survivors
    if mode == "auto":
        mode = "spans" if kappa is None else "intervals"
    if mode == "window":
        return [(bres.p_window_lo, bres.p_window_hi, bres.ub)]
    if mode not in ("spans", "intervals"):
        raise ValueError(f"unknown root mode {mode!r}")
    # survivors are ordered by grid index; runs of consecutive indices form spans
    k = sv.k
    cuts = np.flatnonzero(np.diff(k) != 1) + 1
    runs = np.split(np.arange(len(k)), cuts)
    block = len(k) if mode == "spans" else max(1, -(-len(k) // MAX_ROOTS))
    roots = []
    for run in runs:
        for start in range(0, len(run), block):
            part = run[start:start + block]
            roots.append((float(sv.p_lo[part[-1]]), float(sv.p_hi[part[0]]),
                          float(np.max(sv.dual[part]))))
    roots.sort(key=lambda t: (-t[2], -t[1]))
    return roots


def solve(instance: Instance, params: Optional[SolveParams] = None, **kw) -> SolveResult:
    """Solve the AOPC (optionally with ``kappa``) to proven optimality."""
    if params is None:
        params = SolveParams(**kw)
    elif kw:
        raise TypeError("pass either a SolveParams or keyword overrides, not both")
    if params.tolerance < 0:
        raise ValueError("tolerance must be non-negative")
    if params.kappa is not None and params.kappa < 0:
        raise ValueError("kappa must be non-negative")
    t0 = time.perf_counter()
    deadline = t0 + params.time_limit
    inst = normalize(instance)
    if params.kappa == 0:
        empty = np.zeros(inst.n, dtype=bool)
        return SolveResult(OPTIMAL, empty, 0.0, 0.0, wall_time=time.perf_counter() - t0)

    hook = FixingHook() if params.use_fixing else None
    bres = sequential_bound(
        inst, params.rho_first, params.rho_last, params.kappa, hook, params.delta,
        params.max_iter,
    )
    report = hook.report if hook is not None else FixingReport(active_remaining=inst.n)
    t_bound = time.perf_counter() - t0

    def finish(status, sel, val, ub, nodes):
        res = SolveResult(
            status=status,
            best_selection=sel,
            best_profit=val,
            proven_ub=ub,
            nodes_explored=nodes,
            wall_time=time.perf_counter() - t0,
            bounding_stats=bres,
            fixing_stats=report,
            bounding_time=t_bound,
        )
        return res

    gap_tol = params.tolerance * max(1.0, abs(bres.ub))
    if bres.ub - bres.lb <= gap_tol:
        return finish(OPTIMAL, bres.incumbent, bres.lb, bres.ub, 0)
    if not len(bres.survivors) or not bres.p_window_lo <= bres.p_window_hi:
        raise WindowError("bounding returned an empty probability window")

    idx = np.flatnonzero(bres.active).astype(np.int64)
    spans = bres.surviving_intervals if params.restrict_to_union else None
    s = _Search(inst, idx, (bres.p_window_lo, bres.p_window_hi), spans, params,
                bres.incumbent, bres.lb, deadline)
    timed_out, open_ub = s.run(_root_windows(bres, params.roots, params.kappa))
    if timed_out:
        ub = min(bres.ub, max(s.best_val, open_ub, s.max_pruned))
        return finish(TIME_LIMIT, s.best_sel, s.best_val, ub, s.nodes)
    ub = max(s.best_val, s.max_pruned)
    ub = min(ub, bres.ub)
    return finish(OPTIMAL, s.best_sel, s.best_val, max(ub, s.best_val), s.nodes)


# -- LP export ----------------------------------------------------------------

def _num(x: float) -> str:
    return format(float(x), ".17g")


def _term(coef: float, var: str, first: bool) -> str:
    if coef < 0 or (coef == 0 and math.copysign(1.0, coef) < 0):
        return f"- {_num(-coef)} {var}"
    return f"{_num(coef)} {var}" if first else f"+ {_num(coef)} {var}"


def _wrap(terms, indent=" "):
    lines, cur = [], indent
    for t in terms:
        if len(cur) + len(t) + 1 > 250:
            lines.append(cur.rstrip())
            cur = indent + "   "
        cur += t + " "
    lines.append(cur.rstrip())
    return "\n".join(lines)


def export_lp(instance: Instance, path, window=None, kappa: Optional[int] = None) -> None:
    """Write the linear MIP of the AOPC in CPLEX LP format.

    Variables: binaries ``x1..xn``, purchase probabilities ``u1..un`` and the
    no-purchase probability ``u0``.  ``window=(p_lo, p_hi)`` adds
    ``p_lo <= u0 <= p_hi`` as two rows; ``kappa`` adds ``sum x <= kappa``.
    """
    n = instance.n
    r, c, v, v0 = instance.r, instance.c, instance.v, instance.v0
    out = [f"\\ AOPC linear MIP, n = {n}", "Maximize"]
    terms = []
    for j in range(n):
        terms.append(_term(r[j], f"u{j + 1}", not terms))
        terms.append(_term(-c[j], f"x{j + 1}", False))
    out.append(_wrap([" obj:"] + terms, indent=""))
    out.append("Subject To")
    for j in range(n):
        out.append(f" ratio{j + 1}: {_term(v0, f'u{j + 1}', True)} {_term(-v[j], 'u0', False)} <= 0")
    for j in range(n):
        coef = v[j] / (v0 + v[j])
        out.append(f" force{j + 1}: {_term(1.0, f'u{j + 1}', True)} {_term(-coef, f'x{j + 1}', False)} <= 0")
    conv = ["1 u0"] + [f"+ 1 u{j + 1}" for j in range(n)]
    out.append(_wrap([" conv:"] + conv, indent="") + " = 1")
    if window is not None:
        lo, hi = window
        out.append(f" window_lo: 1 u0 >= {_num(lo)}")
        out.append(f" window_hi: 1 u0 <= {_num(hi)}")
    if kappa is not None:
        card = [f"{'+ ' if j else ''}1 x{j + 1}" for j in range(n)]
        out.append(_wrap([" card:"] + card, indent="") + f" <= {int(kappa)}")
    out.append("Bounds")
    for j in range(n + 1):
        out.append(f" u{j} >= 0")
    out.append("Binaries")
    out.append(_wrap([f"x{j + 1}" for j in range(n)]))
    out.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
