"""The compiled kernels and the pure-Python reference agree bit for bit."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aopc._backend import available_backends

backends = available_backends()
pytestmark = pytest.mark.skipif("cython" not in backends, reason="extension not built")
PY = backends["python"]
CY = backends.get("cython")


def same(a, b):
    if isinstance(a, tuple):
        assert len(a) == len(b)
        for x, y in zip(a, b):
            same(x, y)
        return
    a, b = np.asarray(a), np.asarray(b)
    assert a.shape == b.shape
    assert a.dtype.kind == b.dtype.kind or {a.dtype.kind, b.dtype.kind} <= {"i", "b", "u"}
    if a.dtype.kind == "f":
        assert a.tobytes() == b.tobytes() or np.array_equal(a, b, equal_nan=True)
    else:
        assert np.array_equal(a, b)


@st.composite
def problems(draw, n_max=40):
    seed = draw(st.integers(0, 2**32 - 1))
    n = draw(st.integers(1, n_max))
    m = draw(st.integers(1, 12))
    rng = np.random.default_rng(seed)
    v = rng.random(n) * rng.choice([1.0, 1.0 / n]) + 1e-3
    r = 2000 * rng.random(n) + 1e-3
    c = rng.random(n) * r * v * draw(st.sampled_from([0.0, 0.5, 1.0]))
    if draw(st.booleans()):
        # ties in ratio exercise the index tie-break
        r[: n // 2] = r[0]
        v[: n // 2] = v[0]
        c[: n // 2] = c[0]
    pts = np.sort(rng.uniform(0.05, 1.0, m + 1))[::-1]
    p_hi, p_lo = pts[:-1].copy(), pts[1:].copy()
    return r, v, c, p_lo, p_hi, rng


@given(problems(), st.integers(-1, 10))
def test_interval_bounds(prob, kappa):
    r, v, c, p_lo, p_hi, _ = prob
    o1, o2 = np.arange(len(r)), np.arange(len(r))
    same(PY.interval_bounds(r, v, c, p_lo, p_hi, o1, kappa),
         CY.interval_bounds(r, v, c, p_lo, p_hi, o2, kappa))
    same(o1, o2)


@given(problems(), st.integers(0, 12), st.floats(0, 500), st.sampled_from([1e-5, 1e-3, 1.0]),
       st.sampled_from([3, 50, 10**6]))
def test_interval_bounds_card(prob, kappa, lam0, delta, max_iter):
    r, v, c, p_lo, p_hi, _ = prob
    n = len(r)
    args = (r, v, c, p_lo, p_hi)
    a = PY.interval_bounds_card(*args, np.arange(n), np.arange(n), kappa, lam0, delta, max_iter)
    b = CY.interval_bounds_card(*args, np.arange(n), np.arange(n), kappa, lam0, delta, max_iter)
    same(a, b)


@given(problems(), st.integers(1, 12), st.floats(0, 500), st.sampled_from([1e-5, 1e-2]),
       st.sampled_from([2, 10**6]))
def test_lagrangian_scan(prob, kappa, lam0, delta, max_iter):
    r, v, c, p_lo, p_hi, _ = prob
    coef = p_hi[0] * r * v - c
    cap = 1.0 / p_lo[0] - 1.0
    o1, o2 = np.arange(len(r)), np.arange(len(r))
    same(PY.lagrangian_scan(coef, v, cap, kappa, lam0, delta, max_iter, o1),
         CY.lagrangian_scan(coef, v, cap, kappa, lam0, delta, max_iter, o2))


@given(problems(), st.floats(0, 1000))
def test_rule2_mask(prob, lb):
    r, v, c, p_lo, p_hi, rng = prob
    d, _, _, cr = PY.interval_bounds(r, v, c, p_lo, p_hi, np.arange(len(r)))
    cand = np.arange(len(r), dtype=np.int64)
    same(PY.rule2_mask(r, v, c, cand, p_hi, d, cr, lb, 1e-12),
         CY.rule2_mask(r, v, c, cand, p_hi, d, cr, lb, 1e-12))


@given(problems(), st.floats(-0.5, 20.0), st.integers(-1, 10), st.floats(0, 100))
def test_node_kernels(prob, cap, kappa, lam0):
    r, v, c, p_lo, p_hi, rng = prob
    n = len(r)
    status = rng.integers(-1, 2, n).astype(np.int8)
    t1, t2 = np.zeros(n, dtype=np.int8), np.zeros(n, dtype=np.int8)
    o1, o2 = np.arange(n), np.arange(n)
    same(PY.node_lp(r, v, c, status, p_hi[0], cap, o1, t1),
         CY.node_lp(r, v, c, status, p_hi[0], cap, o2, t2))
    same(t1, t2)
    same(PY.node_lp_card(r, v, c, status, p_hi[0], cap, kappa, lam0, 1e-4, 10**6, np.arange(n)),
         CY.node_lp_card(r, v, c, status, p_hi[0], cap, kappa, lam0, 1e-4, 10**6, np.arange(n)))


def test_backend_names():
    assert PY.BACKEND == "python"
    assert CY.BACKEND == "cython"
