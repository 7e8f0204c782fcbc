"""Exponential grids over the no-purchase probability and the sequential bounding procedure.

Grid points are ``(1 + rho) ** -(k - 1)`` for ``k = 1 .. K + 1`` (descending
from 1) and interval ``k`` is ``[point(k + 1), point(k)]``.  A coarse grid is
evaluated in full; each finer grid (rho divided by 10) is only evaluated on
intervals that touch the union of coarse intervals whose dual bound reaches
the best primal bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _core_py
from ._backend import core
from .knapsack import DEFAULT_DELTA, DEFAULT_MAX_ITER, primal_bound
from .model import Instance, InstanceError, expected_profit

SURVIVE_TOL = 1e-9
ENDPOINT_SLACK = 1e-12
CHUNK = 1 << 18


@dataclass(frozen=True)
class GridSpec:
    rho: float
    K: int
    p_min: float

    @property
    def log_step(self) -> float:
        return math.log1p(self.rho)

    def point(self, k):
        """Grid point ``k`` (1-based, scalar or array)."""
        return np.exp(-(np.asarray(k, dtype=np.float64) - 1.0) * self.log_step)

    def points(self) -> np.ndarray:
        return self.point(np.arange(1, self.K + 2))

    def index_range(self, lo: float, hi: float):
        """Inclusive range of interval indices meeting ``[lo, hi]``, or None."""
        L = self.log_step
        hi_s = hi + ENDPOINT_SLACK
        lo_s = max(lo - ENDPOINT_SLACK, 1e-300)
        # first k with point(k + 1) <= hi_s
        k1 = max(1, int(math.floor(-math.log(hi_s) / L)) - 1)
        while k1 > 1 and float(self.point(k1)) <= hi_s:
            k1 -= 1
        while float(self.point(k1 + 1)) > hi_s:
            k1 += 1
        # last k with point(k) >= lo_s
        k2 = max(1, int(math.floor(-math.log(lo_s) / L)) + 2)
        while float(self.point(k2)) < lo_s:
            k2 -= 1
        while float(self.point(k2 + 1)) >= lo_s:
            k2 += 1
        k1 = max(k1, 1)
        k2 = min(k2, self.K)
        if k1 > k2:
            return None
        return k1, k2


def build_grid(instance_or_pmin, rho: float) -> GridSpec:
    """Exponential grid with the smallest ``K`` such that ``(1+rho)^-K <= p_min``."""
    if not rho > 0:
        raise InstanceError("rho must be positive")
    if isinstance(instance_or_pmin, Instance):
        inst = instance_or_pmin
        if inst.v0 != 1.0:
            raise InstanceError("build_grid expects a normalized instance")
        p_min = inst.p_min
    else:
        p_min = float(instance_or_pmin)
    if not 0.0 < p_min <= 1.0:
        raise InstanceError("p_min must lie in (0, 1]")
    L = math.log1p(rho)
    K = max(1, int(math.ceil(-math.log(p_min) / L)))
    g = GridSpec(rho, K, p_min)
    while float(g.point(K + 1)) > p_min:
        K += 1
        g = GridSpec(rho, K, p_min)
    while K > 1 and float(g.point(K)) <= p_min:
        K -= 1
        g = GridSpec(rho, K, p_min)
    return g


@dataclass
class Survivors:
    """Per-interval records of the intervals whose dual bound reaches ``lb``."""

    p_lo: np.ndarray
    p_hi: np.ndarray
    dual: np.ndarray
    crit_ratio: np.ndarray
    k: np.ndarray

    def __len__(self):
        return len(self.p_lo)

    def spans(self):
        """Merge runs of consecutive interval indices into ``(lo, hi)`` spans."""
        if len(self.k) == 0:
            return []
        breaks = np.flatnonzero(np.diff(self.k) != 1)
        starts = np.concatenate(([0], breaks + 1))
        ends = np.concatenate((breaks, [len(self.k) - 1]))
        return [(float(self.p_lo[e]), float(self.p_hi[s])) for s, e in zip(starts, ends)]


@dataclass
class StageRecord:
    rho: float
    K: int
    evaluated: int
    lb: float
    ub: float
    grid_ub: float
    n_survivors: int
    p_window_lo: float
    p_window_hi: float
    fixed: int = 0
    lagrangian_iters: int = 0


@dataclass
class BoundingResult:
    lb: float
    ub: float
    grid_ub: float
    incumbent: np.ndarray
    survivors: Survivors
    surviving_intervals: list
    p_window_lo: float
    p_window_hi: float
    intervals_evaluated: int
    rho_final: float
    K_final: int
    active: np.ndarray
    stages: list = field(default_factory=list)
    lagrangian_capped: int = 0

    @property
    def gap(self) -> float:
        return 100.0 * (self.ub - self.lb) / max(self.ub, 1e-12)

    def summary(self) -> dict:
        return {
            "lb": self.lb,
            "ub": self.ub,
            "gap_pct": self.gap,
            "p_window": [self.p_window_lo, self.p_window_hi],
            "n_spans": len(self.surviving_intervals),
            "n_surviving_intervals": len(self.survivors),
            "intervals_evaluated": self.intervals_evaluated,
            "rho_final": self.rho_final,
            "K_final": self.K_final,
            "stages": len(self.stages),
        }


class _Evaluator:
    """Evaluates interval bounds for one instance over a changing active set."""

    def __init__(self, instance: Instance, kappa, delta, max_iter):
        if instance.v0 != 1.0:
            raise InstanceError("bounding expects a normalized instance")
        self.inst = instance
        self.kappa = kappa
        self.delta = delta
        self.max_iter = max_iter
        self.set_active(np.ones(instance.n, dtype=bool))
        self.lagr_iters = 0
        self.capped = 0

    def set_active(self, active: np.ndarray):
        self.active = active.copy()
        self.idx = np.flatnonzero(active).astype(np.int64)
        self.r = np.ascontiguousarray(self.inst.r[self.idx])
        self.v = np.ascontiguousarray(self.inst.v[self.idx])
        self.c = np.ascontiguousarray(self.inst.c[self.idx])
        self.order = np.arange(len(self.idx), dtype=np.int64)
        self.lorder = np.arange(len(self.idx), dtype=np.int64)

    def run_stage(self, grid: GridSpec, ranges, lb: float):
        """Evaluate intervals ``ranges`` (inclusive k pairs, ascending).

        Returns (candidates, best_primal, best_interval, grid_ub, evaluated).  The
        candidates hold every interval with dual >= running lb - tol and are
        filtered against the final lb by the caller.
        """
        lam = 0.0
        cand = {"p_lo": [], "p_hi": [], "dual": [], "crit_ratio": [], "k": []}
        best_primal, best_k = -math.inf, None
        grid_ub = -math.inf
        evaluated = 0
        running = lb
        for k1, k2 in ranges:
            for start in range(k1, k2 + 1, CHUNK):
                ks = np.arange(start, min(start + CHUNK, k2 + 1), dtype=np.int64)
                pts = grid.point(np.arange(ks[0], ks[-1] + 2))
                p_hi = np.ascontiguousarray(pts[:-1])
                p_lo = np.ascontiguousarray(pts[1:])
                evaluated += len(ks)
                lam_at = None
                if len(self.idx) == 0:
                    dual = np.zeros(len(ks))
                    primal = np.zeros(len(ks))
                    cr = np.full(len(ks), math.nan)
                elif self.kappa is None:
                    dual, primal, _, cr = core.interval_bounds(
                        self.r, self.v, self.c, p_lo, p_hi, self.order
                    )
                else:
                    dual, primal, _, lam, it, cp, lam_at = core.interval_bounds_card(
                        self.r, self.v, self.c, p_lo, p_hi, self.order, self.lorder,
                        self.kappa, lam, self.delta, self.max_iter,
                    )
                    cr = np.full(len(ks), math.nan)
                    self.lagr_iters += it
                    self.capped += cp
                i = int(np.argmax(primal))
                if primal[i] > best_primal:
                    best_primal = float(primal[i])
                    best_k = (float(p_lo[i]), float(p_hi[i]),
                              None if lam_at is None else float(lam_at[i]))
                running = max(running, best_primal)
                grid_ub = max(grid_ub, float(np.max(dual)))
                keep = dual >= running - SURVIVE_TOL
                for key, arr in (("p_lo", p_lo), ("p_hi", p_hi), ("dual", dual),
                                 ("crit_ratio", cr), ("k", ks)):
                    cand[key].append(arr[keep])
        joined = {
            key: (np.concatenate(vals) if vals else np.empty(0, dtype=np.int64 if key == "k" else float))
            for key, vals in cand.items()
        }
        return joined, best_primal, best_k, grid_ub, evaluated

    def selection_at(self, interval) -> np.ndarray:
        """Assortment behind the primal value the kernel reported on ``interval``."""
        p_lo, p_hi, lam = interval
        plain = primal_bound(self.inst, p_lo, p_hi, self.active, kappa=self.kappa)
        if lam is None or len(self.idx) == 0:
            return plain.primal_selection
        val, picked = _core_py.lagr_greedy_selection(
            self.r, self.v, self.c, p_lo, p_hi, self.kappa, lam
        )
        if val > plain.primal:
            sel = np.zeros(self.inst.n, dtype=bool)
            sel[self.idx[np.asarray(picked, dtype=np.int64)]] = True
            return sel
        return plain.primal_selection


def _finish_stage(ev: _Evaluator, grid, cand, lb, incumbent, best_primal, best_k):
    if best_primal > lb:
        sel = ev.selection_at(best_k)
        lb = expected_profit(ev.inst, sel)
        incumbent = sel
    keep = cand["dual"] >= lb - SURVIVE_TOL
    surv = Survivors(*(cand[key][keep] for key in ("p_lo", "p_hi", "dual", "crit_ratio", "k")))
    return lb, incumbent, surv


def _result(ev, grid, lb, ub, grid_ub, incumbent, surv, evaluated, stages):
    if len(surv):
        lo, hi = float(np.min(surv.p_lo)), float(np.max(surv.p_hi))
    else:
        lo, hi = math.nan, math.nan
    return BoundingResult(
        lb=lb,
        ub=ub,
        grid_ub=grid_ub,
        incumbent=incumbent,
        survivors=surv,
        surviving_intervals=surv.spans(),
        p_window_lo=lo,
        p_window_hi=hi,
        intervals_evaluated=evaluated,
        rho_final=grid.rho,
        K_final=grid.K,
        active=ev.active.copy(),
        stages=stages,
        lagrangian_capped=ev.capped,
    )


def full_grid_bound(
    instance: Instance,
    grid: GridSpec,
    kappa: Optional[int] = None,
    delta: float = DEFAULT_DELTA,
    max_iter: int = DEFAULT_MAX_ITER,
    active=None,
) -> BoundingResult:
    """Evaluate every interval of ``grid``: ub = max dual, lb = best greedy profit."""
    ev = _Evaluator(instance, kappa, delta, max_iter)
    if active is not None:
        ev.set_active(np.asarray(active, dtype=bool))
    empty = np.zeros(instance.n, dtype=bool)
    cand, best_primal, best_k, grid_ub, evaluated = ev.run_stage(grid, [(1, grid.K)], 0.0)
    lb, inc, surv = _finish_stage(ev, grid, cand, 0.0, empty, best_primal, best_k)
    res = _result(ev, grid, lb, grid_ub, grid_ub, inc, surv, evaluated, [])
    res.stages.append(_stage_record(res, grid, evaluated, ev))
    return res


def _stage_record(res, grid, evaluated, ev, fixed=0):
    return StageRecord(
        rho=grid.rho,
        K=grid.K,
        evaluated=evaluated,
        lb=res.lb,
        ub=res.ub,
        grid_ub=res.grid_ub,
        n_survivors=len(res.survivors),
        p_window_lo=res.p_window_lo,
        p_window_hi=res.p_window_hi,
        fixed=fixed,
        lagrangian_iters=ev.lagr_iters,
    )


def rho_schedule(rho_first: float, rho_last: float) -> list:
    """rho_first, rho_first/10, ... and finally exactly rho_last."""
    if not (0 < rho_last <= rho_first):
        raise InstanceError("need 0 < rho_last <= rho_first")
    out = [rho_first]
    t = 1
    while True:
        rho = rho_first * 10.0**-t
        if rho <= rho_last * (1 + 1e-9):
            break
        out.append(rho)
        t += 1
    if not math.isclose(out[-1], rho_last, rel_tol=1e-9):
        out.append(rho_last)
    else:
        out[-1] = rho_last
    return out


def _ranges_for(grid: GridSpec, spans) -> list:
    ranges = []
    for lo, hi in sorted(spans, key=lambda s: -s[1]):
        rg = grid.index_range(lo, hi)
        if rg is None:
            continue
        if ranges and rg[0] <= ranges[-1][1] + 1:
            ranges[-1] = (ranges[-1][0], max(ranges[-1][1], rg[1]))
        else:
            ranges.append(rg)
    return ranges


FixingHook = Callable[[Instance, BoundingResult, Optional[int]], np.ndarray]


def sequential_bound(
    instance: Instance,
    rho_first: float = 1e-2,
    rho_last: float = 1e-7,
    kappa: Optional[int] = None,
    fixing_hook: Optional[FixingHook] = None,
    delta: float = DEFAULT_DELTA,
    max_iter: int = DEFAULT_MAX_ITER,
) -> BoundingResult:
    """Grid bounds of increasing density, each stage restricted to the previous survivors.

    ``fixing_hook(instance, stage_result, kappa)`` is called after every stage
    and returns indices of products to drop from the active set.
    """
    schedule = rho_schedule(rho_first, rho_last)
    ev = _Evaluator(instance, kappa, delta, max_iter)
    lb = 0.0
    ub = math.inf
    incumbent = np.zeros(instance.n, dtype=bool)
    evaluated = 0
    stages = []
    spans = None
    res = None
    for rho in schedule:
        grid = build_grid(instance, rho)
        ranges = [(1, grid.K)] if spans is None else _ranges_for(grid, spans)
        cand, best_primal, best_k, grid_ub, n_eval = ev.run_stage(grid, ranges, lb)
        evaluated += n_eval
        lb, incumbent, surv = _finish_stage(ev, grid, cand, lb, incumbent, best_primal, best_k)
        ub = min(ub, grid_ub)
        res = _result(ev, grid, lb, ub, grid_ub, incumbent, surv, evaluated, stages)
        spans = res.surviving_intervals
        fixed = 0
        if fixing_hook is not None:
            drop = np.asarray(fixing_hook(instance, res, kappa), dtype=np.int64)
            drop = drop[ev.active[drop]] if len(drop) else drop
            if len(drop):
                act = ev.active.copy()
                act[drop] = False
                ev.set_active(act)
                fixed = len(drop)
        stages.append(_stage_record(res, grid, n_eval, ev, fixed))
        res.active = ev.active.copy()
    return res
