"""Shared strategies and helpers for the test suite."""
from __future__ import annotations

import numpy as np
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from aopc.model import Instance, generate_one, normalize

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

CONFIGS = [(phi, gamma) for phi in (0.25, 0.75) for gamma in (0.5, 1.0)]


@st.composite
def generated_instances(draw, n_min=5, n_max=12):
    """Instances from the generator with drawn size, configuration and seed."""
    n = draw(st.integers(n_min, n_max))
    phi, gamma = draw(st.sampled_from(CONFIGS))
    seed = draw(st.integers(0, 2**32 - 1))
    return generate_one(n, phi, gamma, seed)


@st.composite
def raw_instances(draw, n_min=1, n_max=10):
    """Arbitrary valid instances, including zero costs and unnormalized v0."""
    n = draw(st.integers(n_min, n_max))
    pos = st.floats(0.01, 100.0, allow_nan=False, allow_infinity=False)
    r = draw(st.lists(pos, min_size=n, max_size=n))
    v = draw(st.lists(st.floats(0.01, 5.0), min_size=n, max_size=n))
    c = draw(st.lists(st.floats(0.0, 20.0), min_size=n, max_size=n))
    v0 = draw(st.floats(0.05, 5.0))
    return Instance(r=r, c=c, v=v, v0=v0)


def norm(inst: Instance) -> Instance:
    return normalize(inst)


def close(a: float, b: float, rel: float = 1e-9) -> bool:
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))


def p_of(inst: Instance, sel) -> float:
    sel = np.asarray(sel, dtype=bool)
    return inst.v0 / (inst.v0 + float(inst.v[sel].sum()))
