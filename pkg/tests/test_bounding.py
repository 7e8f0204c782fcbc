import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aopc.bounding import build_grid, full_grid_bound, rho_schedule, sequential_bound
from aopc.fixing import FixingHook
from aopc.model import InstanceError, brute_force_optimum, generate_one
from conftest import generated_instances, norm, p_of

TOL = 1e-9


def exact_K(p_min, rho):
    """Smallest K with (1 + rho)^-K <= p_min, in 60-digit arithmetic."""
    with mpmath.workdps(60):
        return int(mpmath.ceil(-mpmath.log(mpmath.mpf(p_min)) / mpmath.log1p(mpmath.mpf(rho))))


def test_grid_size_known_value():
    assert build_grid(0.25, 0.001).K == 1387


@pytest.mark.parametrize("p_min", [0.25, 0.75, 0.5, 0.1, 0.013])
@pytest.mark.parametrize("rho", [1e-2, 1e-4, 1e-7])
def test_grid_size_matches_high_precision(p_min, rho):
    assert build_grid(p_min, rho).K == exact_K(p_min, rho)


@given(st.floats(0.001, 0.999), st.sampled_from([1e-1, 1e-2, 1e-3, 1e-5]))
def test_grid_covers_window(p_min, rho):
    g = build_grid(p_min, rho)
    pts = g.points()
    assert pts[0] == 1.0
    assert pts[-1] <= p_min < pts[-2]
    assert np.all(np.diff(pts) < 0)


def test_grid_rejects_bad_input():
    for args in [(0.25, 0.0), (0.0, 0.1), (1.5, 0.1)]:
        with pytest.raises(InstanceError):
            build_grid(*args)
    with pytest.raises(InstanceError):
        build_grid(generate_one(5, 0.25, 0.5, 0), 0.1)


@given(st.floats(0.01, 0.9), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_index_range_brackets(p_min, a, b):
    g = build_grid(p_min, 1e-2)
    lo, hi = sorted((p_min + a * (1 - p_min), p_min + b * (1 - p_min)))
    k1, k2 = g.index_range(lo, hi)
    assert g.point(k1 + 1) <= hi + 1e-12 and g.point(k2) >= lo - 1e-12
    # the range is maximal
    assert k1 == 1 or g.point(k1) > hi
    assert k2 == g.K or g.point(k2 + 1) < lo


def test_rho_schedule():
    assert rho_schedule(1e-2, 1e-7) == pytest.approx([1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7])
    assert rho_schedule(1e-2, 1e-7)[-1] == 1e-7
    assert rho_schedule(1e-2, 3e-4)[-1] == 3e-4
    assert rho_schedule(1e-3, 1e-3) == [1e-3]
    with pytest.raises(InstanceError):
        rho_schedule(1e-5, 1e-2)


def check_sandwich(res, z, p_star):
    for stg in res.stages:
        assert stg.lb <= z + TOL * max(1.0, z)
        assert z <= stg.ub + TOL * max(1.0, z)
        assert z <= stg.grid_ub + TOL * max(1.0, z)
    lbs = [s.lb for s in res.stages]
    ubs = [s.ub for s in res.stages]
    assert lbs == sorted(lbs)
    assert ubs == sorted(ubs, reverse=True)
    assert res.p_window_lo - 1e-12 <= p_star <= res.p_window_hi + 1e-12


@given(generated_instances(3, 12), st.booleans(), st.booleans())
def test_sequential_sandwich(inst, card, fixing):
    kappa = math.ceil(inst.n / 2) if card else None
    opt = brute_force_optimum(inst, kappa)
    ni = norm(inst)
    hook = FixingHook() if fixing else None
    res = sequential_bound(ni, 1e-2, 1e-5, kappa, hook)
    z = opt.best_profit
    if z > 0:
        check_sandwich(res, z, p_of(inst, opt.best_selection))
    assert res.lb <= z + TOL * max(1.0, z)
    assert res.incumbent.sum() <= (kappa if kappa is not None else inst.n)


@given(generated_instances(3, 10))
def test_full_grid_sandwich_and_survivors(inst):
    opt = brute_force_optimum(inst)
    z = opt.best_profit
    ni = norm(inst)
    g = build_grid(ni, 1e-3)
    res = full_grid_bound(ni, g)
    assert res.intervals_evaluated == g.K
    assert res.lb <= z + TOL * max(1.0, z) <= res.ub + 2 * TOL * max(1.0, z)
    if z > 0:
        p = p_of(inst, opt.best_selection)
        sv = res.survivors
        # the optimum sits in some surviving interval
        assert np.any((sv.p_lo <= p + 1e-12) & (p <= sv.p_hi + 1e-12))
        assert np.all(sv.dual >= res.lb - 1e-9 * max(1.0, res.lb))


def test_denser_grid_is_tighter():
    ni = norm(generate_one(40, 0.25, 0.5, 3))
    gaps = [sequential_bound(ni, 1e-2, rl).gap for rl in (1e-2, 1e-4, 1e-6)]
    assert gaps[0] >= gaps[1] >= gaps[2]


def test_sequential_evaluates_fewer_intervals_than_full_grid():
    ni = norm(generate_one(60, 0.25, 0.5, 7))
    seq = sequential_bound(ni, 1e-2, 1e-5)
    assert seq.intervals_evaluated < build_grid(ni, 1e-5).K
    assert seq.K_final == build_grid(ni, 1e-5).K
    assert len(seq.stages) == 4


def test_summary_keys():
    res = sequential_bound(norm(generate_one(10, 0.75, 1.0, 0)), 1e-2, 1e-3)
    s = res.summary()
    assert {"lb", "ub", "gap_pct", "p_window", "intervals_evaluated"} <= set(s)
    assert res.survivors.spans() == res.surviving_intervals
