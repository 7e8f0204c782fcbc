import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy.optimize import linprog

from aopc.knapsack import (
    LagrangianState,
    dual_bound,
    dual_bound_cardinality,
    lagrangian_value,
    primal_bound,
    primal_bound_cardinality,
)
from aopc.model import InstanceError, enumerate_assortments, expected_profit, generate_one
from conftest import close, generated_instances, norm, raw_instances

intervals = st.tuples(st.floats(0.02, 1.0), st.floats(0.02, 1.0)).map(sorted)


def lp_oracle(inst, p_lo, p_hi, kappa=None, active=None):
    """max sum (p_hi r v - c) x  s.t.  v x <= 1/p_lo - 1,  [sum x <= kappa],  0 <= x <= 1."""
    idx = np.arange(inst.n) if active is None else np.flatnonzero(active)
    if len(idx) == 0:
        return 0.0
    coef = p_hi * inst.r[idx] * inst.v[idx] - inst.c[idx]
    A = [inst.v[idx]]
    b = [1.0 / p_lo - 1.0]
    if kappa is not None:
        A.append(np.ones(len(idx)))
        b.append(kappa)
    res = linprog(-coef, A_ub=np.array(A), b_ub=b, bounds=[(0, 1)] * len(idx), method="highs")
    assert res.status == 0
    return -res.fun


def best_in_interval(inst, p_lo, p_hi, kappa=None):
    en = enumerate_assortments(inst)
    i = en.best(p_lo, p_hi, kappa)
    return -math.inf if i is None else float(en.profit[i])


@given(raw_instances(1, 12), intervals)
def test_dual_matches_lp(inst, iv):
    inst = norm(inst)
    p_lo, p_hi = iv
    b = dual_bound(inst, p_lo, p_hi)
    assert close(b.dual, lp_oracle(inst, p_lo, p_hi), 1e-9)
    assert sorted(b.sorted_order.tolist()) == list(range(inst.n))


@given(generated_instances(2, 10), intervals, st.data())
def test_dual_with_active_mask(inst, iv, data):
    inst = norm(inst)
    mask = np.array(data.draw(st.lists(st.booleans(), min_size=inst.n, max_size=inst.n)))
    b = dual_bound(inst, *iv, active=mask)
    assert close(b.dual, lp_oracle(inst, *iv, active=mask), 1e-9)
    if b.critical_index is not None:
        assert mask[b.critical_index]


@given(generated_instances(2, 10), intervals)
def test_dual_and_primal_sandwich_interval_optimum(inst, iv):
    inst = norm(inst)
    p_lo, p_hi = iv
    d = dual_bound(inst, p_lo, p_hi)
    p = primal_bound(inst, p_lo, p_hi)
    opt = best_in_interval(inst, p_lo, p_hi)
    assert d.dual >= opt - 1e-9 * max(1.0, abs(opt))
    # the greedy set respects the capacity and reports its true profit
    assert inst.v[p.primal_selection].sum() <= 1.0 / p_lo - 1.0 + 1e-12
    assert close(p.primal, expected_profit(inst, p.primal_selection), 1e-12)


@given(generated_instances(2, 10), intervals)
def test_critical_product(inst, iv):
    inst = norm(inst)
    p_lo, p_hi = iv
    b = dual_bound(inst, p_lo, p_hi)
    if b.critical_index is None:
        assert math.isnan(b.critical_ratio)
        return
    s = b.critical_index
    assert close(b.critical_ratio, b.profit(inst, s) / inst.v[s], 1e-12)
    # products ahead of the critical one fit integrally, the critical one does not
    order = b.sorted_order.tolist()
    ahead = order[: order.index(s)]
    cap = 1.0 / p_lo - 1.0
    assert inst.v[ahead].sum() <= cap
    assert inst.v[ahead].sum() + inst.v[s] > cap


@given(generated_instances(2, 10), intervals, st.integers(0, 10))
def test_cardinality_bounds(inst, iv, kappa):
    inst = norm(inst)
    p_lo, p_hi = iv
    b, state = dual_bound_cardinality(inst, p_lo, p_hi, kappa=kappa, state=LagrangianState(delta=1e-3))
    lp = lp_oracle(inst, p_lo, p_hi, kappa=min(kappa, inst.n))
    # Lagrangian duality: the relaxed value bounds the constrained LP from above
    assert b.dual >= lp - 1e-9 * max(1.0, abs(lp))
    assert state.lam >= 0
    pr = primal_bound_cardinality(inst, p_lo, p_hi, kappa=kappa)
    assert pr.primal_selection.sum() <= kappa
    opt = best_in_interval(inst, p_lo, p_hi, kappa)
    assert b.dual >= opt - 1e-9 * max(1.0, abs(opt))


@given(generated_instances(2, 10), intervals, st.integers(1, 10), st.floats(0, 50))
def test_lagrangian_value_is_an_upper_bound_everywhere(inst, iv, kappa, lam):
    inst = norm(inst)
    p_lo, p_hi = iv
    z = lagrangian_value(inst, p_lo, p_hi, lam, kappa)
    assert z >= lp_oracle(inst, p_lo, p_hi, kappa=min(kappa, inst.n)) - 1e-9 * max(1.0, abs(z))
    b, st_ = dual_bound_cardinality(inst, p_lo, p_hi, kappa=kappa, state=LagrangianState(lam=lam))
    # the scan starts at lam and only accepts improvements
    assert b.dual <= z + 1e-12 * max(1.0, abs(z))
    assert close(b.dual, lagrangian_value(inst, p_lo, p_hi, st_.lam, kappa), 1e-12)


def test_cardinality_large_kappa_equals_plain_lp():
    inst = norm(generate_one(12, 0.25, 0.5, 4))
    a = dual_bound(inst, 0.3, 0.35).dual
    b, _ = dual_bound_cardinality(inst, 0.3, 0.35, kappa=12)
    assert close(a, b.dual, 1e-12)


def test_kappa_zero_and_empty_active():
    inst = norm(generate_one(6, 0.25, 0.5, 2))
    b, _ = dual_bound_cardinality(inst, 0.3, 0.4, kappa=0)
    assert b.dual == 0.0
    assert dual_bound(inst, 0.3, 0.4, active=np.zeros(6, dtype=bool)).dual == 0.0
    assert primal_bound(inst, 0.3, 0.4, active=[]).primal == 0.0


@pytest.mark.parametrize("iv", [(0.0, 0.5), (0.6, 0.5), (0.5, 1.5), (-0.1, 0.2)])
def test_invalid_interval(iv):
    inst = norm(generate_one(3, 0.25, 0.5, 0))
    with pytest.raises(InstanceError):
        dual_bound(inst, *iv)


def test_unnormalized_instance_rejected():
    inst = generate_one(3, 0.25, 0.5, 0)
    assert inst.v0 != 1.0
    with pytest.raises(InstanceError):
        dual_bound(inst, 0.3, 0.4)


def test_lagrangian_state_validation():
    with pytest.raises(ValueError):
        LagrangianState(lam=-1.0)
    with pytest.raises(ValueError):
        LagrangianState(delta=0.0)


@given(generated_instances(3, 10), intervals)
def test_dual_monotone_in_interval(inst, iv):
    inst = norm(inst)
    p_lo, p_hi = iv
    assume(p_hi - p_lo > 1e-6)
    mid = 0.5 * (p_lo + p_hi)
    whole = dual_bound(inst, p_lo, p_hi).dual
    assert dual_bound(inst, p_lo, mid).dual <= whole + 1e-9 * max(1.0, abs(whole))
    assert dual_bound(inst, mid, p_hi).dual <= whole + 1e-9 * max(1.0, abs(whole))
