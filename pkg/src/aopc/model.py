"""Instances, profit evaluation, instance generation and a brute-force oracle.

An instance describes ``n`` products with revenues ``r``, offering costs ``c``
and MNL preference weights ``v``, plus the no-purchase weight ``v0``.  The
expected profit of an assortment ``S`` is::

    sum_{j in S} r_j v_j / (v0 + v(S)) - sum_{j in S} c_j
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

MAX_BRUTE_FORCE_N = 25


class InstanceError(ValueError):
    """Raised for malformed instances or selections."""


class SizeError(ValueError):
    """Raised when an exhaustive routine is asked to handle too many products."""


def _frozen(a, name: str) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise InstanceError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Instance:
    """An AOPC instance.  Arrays are copied and made read-only on construction."""

    r: np.ndarray
    c: np.ndarray
    v: np.ndarray
    v0: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        r = _frozen(self.r, "r")
        c = _frozen(self.c, "c")
        v = _frozen(self.v, "v")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "v0", float(self.v0))
        if not (len(r) == len(c) == len(v)):
            raise InstanceError("r, c and v must have the same length")
        if len(r) < 1:
            raise InstanceError("an instance needs at least one product")
        if np.any(r <= 0):
            raise InstanceError("revenues must be positive")
        if np.any(c < 0):
            raise InstanceError("costs must be non-negative")
        if np.any(v <= 0):
            raise InstanceError("preferences must be positive")
        if not (self.v0 >= 0 and math.isfinite(self.v0)):
            raise InstanceError("no-purchase preference must be non-negative")

    @property
    def n(self) -> int:
        return len(self.r)

    @property
    def p_min(self) -> float:
        """Smallest reachable no-purchase probability (all products offered)."""
        return self.v0 / (self.v0 + float(np.sum(self.v)))

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.v0 == other.v0
            and np.array_equal(self.r, other.r)
            and np.array_equal(self.c, other.c)
            and np.array_equal(self.v, other.v)
        )

    __hash__ = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "v0": self.v0,
            "r": self.r.tolist(),
            "c": self.c.tolist(),
            "v": self.v.tolist(),
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Instance":
        try:
            inst = cls(r=d["r"], c=d["c"], v=d["v"], v0=d["v0"], meta=dict(d.get("meta", {})))
        except KeyError as exc:
            raise InstanceError(f"missing field {exc.args[0]!r}") from None
        if "n" in d and int(d["n"]) != inst.n:
            raise InstanceError(f"n={d['n']} does not match array length {inst.n}")
        return inst


def dumps_instance(instance: Instance) -> str:
    # json writes floats with repr(), i.e. the shortest string that round-trips
    # to the same double; this is at most 17 significant digits.
    return json.dumps(instance.to_dict(), indent=None) + "\n"


def save_instance(instance: Instance, path) -> None:
    Path(path).write_text(dumps_instance(instance))


def load_instance(path) -> Instance:
    with open(path) as fh:
        return Instance.from_dict(json.load(fh))


def _selection_array(instance: Instance, selection) -> np.ndarray:
    x = np.asarray(selection)
    if x.ndim != 1 or len(x) != instance.n:
        raise InstanceError(
            f"selection has length {len(x) if x.ndim == 1 else x.shape}, expected {instance.n}"
        )
    return x.astype(bool)


def expected_profit(instance: Instance, selection) -> float:
    """Expected MNL profit of the assortment given as a 0/1 vector of length n."""
    x = _selection_array(instance, selection)
    if not x.any():
        return 0.0
    v = instance.v[x]
    rv = instance.r[x] * v
    return float(np.sum(rv) / (instance.v0 + np.sum(v)) - np.sum(instance.c[x]))


def normalize(instance: Instance) -> Instance:
    """Rescale preferences so that the no-purchase weight is exactly 1."""
    if instance.v0 <= 0:
        raise InstanceError("cannot normalize an instance with v0 = 0")
    if instance.v0 == 1.0:
        return instance
    return Instance(
        r=instance.r, c=instance.c, v=instance.v / instance.v0, v0=1.0, meta=instance.meta
    )


@dataclass(frozen=True)
class GeneratorConfig:
    n: int
    phi: float = 0.25
    gamma: float = 0.5
    seed: int = 0
    count: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0.0 < self.phi < 1.0:
            raise ValueError("phi must lie in (0, 1)")
        if self.gamma < 0:
            # gamma = 0 is accepted as a degenerate cost-free configuration
            raise ValueError("gamma must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.count < 0:
            raise ValueError("count must be non-negative")


def instance_rng(seed: int, index: int) -> np.random.Generator:
    """PCG64 stream for instance ``index`` of base ``seed``.

    The stream is keyed on ``(seed, index)`` through ``SeedSequence`` so that
    instance ``i`` does not depend on how many instances are generated.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))


def generate_one(n: int, phi: float, gamma: float, seed: int, index: int = 0) -> Instance:
    """Generate one instance.

    Draw order on the stream: ``n`` preference draws, then ``n`` revenue draws
    with resampling of exact zeros, then ``n`` cost draws.
    """
    rng = instance_rng(seed, index)
    w = 1.0 - rng.random(n)  # uniform on (0, 1]
    v = w / np.sum(w)
    v0 = phi / (1.0 - phi) * float(np.sum(v))
    r = 2000.0 * rng.random(n)
    while np.any(r == 0.0):
        zero = r == 0.0
        r[zero] = 2000.0 * rng.random(int(zero.sum()))
    c = rng.random(n) * (gamma * r * v / (v0 + v))
    meta = {"phi": phi, "gamma": gamma, "seed": seed, "index": index}
    return Instance(r=r, c=c, v=v, v0=v0, meta=meta)


def generate(config: GeneratorConfig) -> list:
    return [
        generate_one(config.n, config.phi, config.gamma, config.seed, i)
        for i in range(config.count)
    ]


@dataclass
class SolveResult:
    """Outcome of an exact (or exhaustive) solve."""

    status: str
    best_selection: np.ndarray
    best_profit: float
    proven_ub: float
    nodes_explored: int = 0
    wall_time: float = 0.0
    bounding_stats: Optional[Any] = None
    fixing_stats: Optional[Any] = None
    bounding_time: float = 0.0

    @property
    def assortment(self) -> list:
        return [int(j) for j in np.flatnonzero(self.best_selection)]

    def to_dict(self) -> dict:
        d = {
            "status": self.status,
            "assortment": self.assortment,
            "profit": self.best_profit,
            "proven_ub": self.proven_ub,
            "nodes_explored": self.nodes_explored,
            "wall_time": self.wall_time,
        }
        if self.bounding_stats is not None:
            d["bounding"] = self.bounding_stats.summary()
        if self.fixing_stats is not None:
            d["fixing"] = self.fixing_stats.summary()
        return d


@dataclass
class Enumeration:
    """Every assortment of a small instance, in lexicographic bit-vector order.

    Row ``i`` of ``selections`` is the bit-vector whose binary reading
    (product 0 as the most significant bit) equals ``i``.
    """

    selections: np.ndarray
    profit: np.ndarray
    p: np.ndarray
    size: np.ndarray

    def best(self, p_lo=None, p_hi=None, kappa=None, contains=None, slack=0.0):
        """Index of the best assortment among those passing the filters, or None."""
        mask = np.ones(len(self.profit), dtype=bool)
        if p_lo is not None:
            mask &= self.p >= p_lo - slack
        if p_hi is not None:
            mask &= self.p <= p_hi + slack
        if kappa is not None:
            mask &= self.size <= kappa
        if contains is not None:
            mask &= self.selections[:, contains]
        if not mask.any():
            return None
        idx = np.flatnonzero(mask)
        return int(idx[np.argmax(self.profit[idx])])


def enumerate_assortments(instance: Instance) -> Enumeration:
    n = instance.n
    if n > 20:
        raise SizeError(f"full enumeration table limited to n <= 20, got {n}")
    codes = np.arange(2**n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    bits = ((codes[:, None] >> shifts[None, :]) & 1).astype(bool)
    vsum = bits @ instance.v
    rv = bits @ (instance.r * instance.v)
    cost = bits @ instance.c
    denom = instance.v0 + vsum
    with np.errstate(divide="ignore", invalid="ignore"):
        profit = np.where(vsum > 0, rv / denom - cost, 0.0)
        p = np.where(denom > 0, instance.v0 / denom, 1.0)
    return Enumeration(bits, profit, p, bits.sum(axis=1))


def brute_force_optimum(instance: Instance, kappa: Optional[int] = None) -> SolveResult:
    """Exhaustive search over all 2^n assortments (n <= 25).

    Ties are broken towards the lexicographically smallest bit-vector.
    """
    n = instance.n
    if n > MAX_BRUTE_FORCE_N:
        raise SizeError(f"brute force refuses n={n} > {MAX_BRUTE_FORCE_N}")
    if kappa is not None and kappa < 0:
        raise ValueError("kappa must be non-negative")
    # split into a low table of up to 12 products and a loop over the rest
    n_low = min(n, 12)
    n_high = n - n_low
    low = np.arange(2**n_low, dtype=np.int64)
    low_bits = ((low[:, None] >> np.arange(n_low - 1, -1, -1)) & 1).astype(np.float64)
    sl = slice(n_high, n)
    lv = low_bits @ instance.v[sl]
    lrv = low_bits @ (instance.r[sl] * instance.v[sl])
    lc = low_bits @ instance.c[sl]
    lsize = low_bits.sum(axis=1)

    best_val = -math.inf
    best_code = 0
    hv_, hrv_, hc_ = instance.v[:n_high], (instance.r * instance.v)[:n_high], instance.c[:n_high]
    for high in range(2**n_high):
        hb = np.array([(high >> (n_high - 1 - i)) & 1 for i in range(n_high)], dtype=np.float64)
        vs = lv + hb @ hv_
        rv = lrv + hb @ hrv_
        cs = lc + hb @ hc_
        with np.errstate(divide="ignore", invalid="ignore"):
            prof = np.where(vs > 0, rv / (instance.v0 + vs) - cs, 0.0)
        if kappa is not None:
            prof = np.where(lsize + hb.sum() <= kappa, prof, -math.inf)
        k = int(np.argmax(prof))
        if prof[k] > best_val:
            best_val = float(prof[k])
            best_code = (high << n_low) | k
    sel = np.array([(best_code >> (n - 1 - j)) & 1 for j in range(n)], dtype=bool)
    profit = expected_profit(instance, sel)
    return SolveResult(
        status="Optimal",
        best_selection=sel,
        best_profit=profit,
        proven_ub=profit,
        nodes_explored=2**n,
    )
