"""Variable fixing: products provably absent from every optimal assortment.

Rule 1 drops products that lose money even at the largest no-purchase
probability still in play.  Rule 2 uses the critical product of each surviving
interval's continuous knapsack: forcing product ``j`` into the knapsack costs at
least ``v_j * ratio(critical) - profit_j``, and if that pushes every surviving
interval's bound below the incumbent, ``j`` can be dropped.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._backend import core
from .bounding import BoundingResult, Survivors
from .knapsack import active_indices
from .model import Instance

GUARD_BAND = 1e-12


def _band(lb: float) -> float:
    # the absolute band is scaled with the bound magnitude: dual values carry
    # rounding error proportional to |lb|
    return GUARD_BAND * max(1.0, abs(lb))


@dataclass
class FixingReport:
    fixed_out: set = field(default_factory=set)
    by_rule: dict = field(default_factory=lambda: {1: 0, 2: 0})
    active_remaining: int = 0

    def summary(self) -> dict:
        return {
            "fixed": len(self.fixed_out),
            "rule1": self.by_rule[1],
            "rule2": self.by_rule[2],
            "active_remaining": self.active_remaining,
        }

    def merge(self, other: "FixingReport") -> None:
        self.fixed_out |= other.fixed_out
        self.by_rule[1] += other.by_rule[1]
        self.by_rule[2] += other.by_rule[2]
        self.active_remaining = other.active_remaining


def fix_rule1(instance: Instance, p_window_hi: float, active=None) -> set:
    idx = active_indices(instance, active)
    coef = p_window_hi * instance.r[idx] * instance.v[idx] - instance.c[idx]
    return {int(j) for j in idx[coef < -GUARD_BAND]}


def fix_rule2(instance: Instance, survivors: Survivors, lb: float, active=None) -> set:
    """Products meeting both critical-product conditions on every surviving interval.

    An interval without a critical product blocks all fixing.
    """
    idx = active_indices(instance, active)
    if len(survivors) == 0 or len(idx) == 0:
        return set()
    mask = core.rule2_mask(
        np.ascontiguousarray(instance.r),
        np.ascontiguousarray(instance.v),
        np.ascontiguousarray(instance.c),
        np.ascontiguousarray(idx, dtype=np.int64),
        np.ascontiguousarray(survivors.p_hi),
        np.ascontiguousarray(survivors.dual),
        np.ascontiguousarray(survivors.crit_ratio),
        float(lb),
        _band(lb),
    )
    return {int(j) for j in idx[mask]}


def apply_fixing(
    instance: Instance, result: BoundingResult, kappa: Optional[int] = None
) -> FixingReport:
    """Rule 1, then rule 2 on what is left.  Rule 2 is skipped under a cardinality limit."""
    active = result.active.copy()
    rep = FixingReport()
    if len(result.survivors) == 0:
        rep.active_remaining = int(active.sum())
        return rep
    out1 = fix_rule1(instance, result.p_window_hi, active)
    active[list(out1)] = False
    out2 = set()
    if kappa is None:
        out2 = fix_rule2(instance, result.survivors, result.lb, active)
        active[list(out2)] = False
    rep.fixed_out = out1 | out2
    rep.by_rule = {1: len(out1), 2: len(out2)}
    rep.active_remaining = int(active.sum())
    return rep


class FixingHook:
    """Callable for :func:`aopc.bounding.sequential_bound` that accumulates a report."""

    def __init__(self):
        self.report = FixingReport()

    def __call__(self, instance, result, kappa):
        rep = apply_fixing(instance, result, kappa)
        self.report.merge(rep)
        return np.array(sorted(rep.fixed_out), dtype=np.int64)
