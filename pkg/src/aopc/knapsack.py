"""Parametric knapsack bounds on one no-purchase-probability interval.

For an interval ``[p_lo, p_hi]`` every assortment ``S`` with no-purchase
probability in the interval satisfies ``v(S) <= 1/p_lo - 1`` and earns at most
``sum_{j in S} (p_hi r_j v_j - c_j)``.  The continuous relaxation of that
knapsack gives the dual bound; a greedy fill in the same ratio order gives a
feasible assortment and thus a primal bound.

These functions handle a single interval and are what the tests and the
search use directly.  Batches of intervals go through the kernels in
:mod:`aopc._backend`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._backend import core
from .model import Instance, InstanceError

DEFAULT_DELTA = 1e-5
DEFAULT_MAX_ITER = 10**6


@dataclass
class IntervalBound:
    p_lo: float
    p_hi: float
    dual: float = math.nan
    primal: float = math.nan
    primal_selection: Optional[np.ndarray] = None
    critical_index: Optional[int] = None
    critical_ratio: float = math.nan
    sorted_order: Optional[np.ndarray] = None

    def profit(self, instance: Instance, j: int) -> float:
        """Linearised profit ``p_hi r_j v_j - c_j`` of product ``j`` on this interval."""
        return self.p_hi * instance.r[j] * instance.v[j] - instance.c[j]


@dataclass
class LagrangianState:
    lam: float = 0.0
    delta: float = DEFAULT_DELTA
    last_bound: float = math.nan
    iterations: int = 0
    capped: bool = False
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("Lagrangian multiplier must be non-negative")
        if self.delta <= 0:
            raise ValueError("step must be positive")


def check_interval(p_lo: float, p_hi: float) -> None:
    if not (0.0 < p_lo <= p_hi <= 1.0):
        raise InstanceError(f"invalid probability interval [{p_lo}, {p_hi}]")


def active_indices(instance: Instance, active=None) -> np.ndarray:
    """Ascending product indices of ``active`` (None = all; bool mask or index list)."""
    if active is None:
        return np.arange(instance.n, dtype=np.int64)
    a = np.asarray(active)
    if a.dtype == bool:
        if len(a) != instance.n:
            raise InstanceError("active mask has wrong length")
        return np.flatnonzero(a).astype(np.int64)
    return np.unique(a.astype(np.int64))


def _arrays(instance: Instance, idx: np.ndarray):
    if instance.v0 != 1.0:
        raise InstanceError("knapsack bounds expect a normalized instance (v0 = 1)")
    return (
        np.ascontiguousarray(instance.r[idx]),
        np.ascontiguousarray(instance.v[idx]),
        np.ascontiguousarray(instance.c[idx]),
    )


def _selection(n: int, idx: np.ndarray, picked) -> np.ndarray:
    sel = np.zeros(n, dtype=bool)
    sel[idx[np.asarray(picked, dtype=np.int64)]] = True
    return sel


def dual_bound(instance: Instance, p_lo: float, p_hi: float, active=None) -> IntervalBound:
    """Continuous knapsack bound; also records the critical product and the sort order."""
    check_interval(p_lo, p_hi)
    idx = active_indices(instance, active)
    out = IntervalBound(p_lo, p_hi)
    if len(idx) == 0:
        out.dual = 0.0
        out.sorted_order = idx
        return out
    r, v, c = _arrays(instance, idx)
    order = np.arange(len(idx), dtype=np.int64)
    dual, _, crit, cr = core.interval_bounds(
        r, v, c, np.array([p_lo]), np.array([p_hi]), order
    )
    out.dual = float(dual[0])
    out.critical_index = int(idx[crit[0]]) if crit[0] >= 0 else None
    out.critical_ratio = float(cr[0])
    out.sorted_order = idx[order]
    return out


def primal_bound(
    instance: Instance, p_lo: float, p_hi: float, active=None, kappa: Optional[int] = None
) -> IntervalBound:
    """Greedy assortment in ratio order; ``primal`` is its true expected profit."""
    check_interval(p_lo, p_hi)
    if kappa is not None and kappa < 0:
        raise InstanceError("kappa must be non-negative")
    idx = active_indices(instance, active)
    out = IntervalBound(p_lo, p_hi)
    if len(idx) == 0:
        out.primal = 0.0
        out.primal_selection = np.zeros(instance.n, dtype=bool)
        return out
    r, v, c = _arrays(instance, idx)
    val, picked, order = core_greedy(r, v, c, p_lo, p_hi, -1 if kappa is None else kappa)
    out.primal = float(val)
    out.primal_selection = _selection(instance.n, idx, picked)
    out.sorted_order = idx[order]
    return out


def core_greedy(r, v, c, p_lo, p_hi, kappa=-1):
    # selection recovery is not a hot path; the numpy reference reproduces
    # exactly the value the compiled batch kernel reports
    from . import _core_py

    return _core_py.greedy_selection(r, v, c, p_lo, p_hi, kappa)


def primal_bound_cardinality(
    instance: Instance, p_lo: float, p_hi: float, active=None, kappa: int = 0
) -> IntervalBound:
    return primal_bound(instance, p_lo, p_hi, active, kappa=kappa)


def lagrangian_value(
    instance: Instance, p_lo: float, p_hi: float, lam: float, kappa: int, active=None
) -> float:
    """Bound ``lam*kappa + LP(coefficients - lam)`` at a fixed multiplier."""
    check_interval(p_lo, p_hi)
    idx = active_indices(instance, active)
    if len(idx) == 0:
        return lam * kappa
    r, v, c = _arrays(instance, idx)
    coef = p_hi * r * v - c
    order = np.arange(len(idx), dtype=np.int64)
    best, _, _, _, _ = core.lagrangian_scan(coef, v, 1.0 / p_lo - 1.0, kappa, lam, 1.0, 1, order)
    return float(best)


def dual_bound_cardinality(
    instance: Instance,
    p_lo: float,
    p_hi: float,
    active=None,
    kappa: int = 0,
    state: Optional[LagrangianState] = None,
):
    """Lagrangian bound for the cardinality-constrained relaxation.

    Scans the multiplier in fixed steps of ``state.delta`` from ``state.lam``
    and returns ``(IntervalBound, new_state)``; the new state warm-starts the
    next interval.
    """
    check_interval(p_lo, p_hi)
    if kappa < 0:
        raise InstanceError("kappa must be non-negative")
    state = state or LagrangianState()
    idx = active_indices(instance, active)
    out = IntervalBound(p_lo, p_hi)
    cap = 1.0 / p_lo - 1.0
    if len(idx) == 0 or kappa == 0 or cap <= 0.0:
        out.dual = 0.0
        return out, LagrangianState(state.lam, state.delta, 0.0, 0, False, state.max_iter)
    r, v, c = _arrays(instance, idx)
    coef = p_hi * r * v - c
    order = np.arange(len(idx), dtype=np.int64)
    best, lam, s, it, capped = core.lagrangian_scan(
        coef, v, cap, kappa, state.lam, state.delta, state.max_iter, order
    )
    out.dual = float(best)
    out.critical_index = int(idx[s]) if s >= 0 else None
    new = LagrangianState(float(lam), state.delta, float(best), int(it), bool(capped), state.max_iter)
    return out, new
