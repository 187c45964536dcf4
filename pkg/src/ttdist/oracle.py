"""Dense ground truth and Monte Carlo baseline.

Everything here works on explicit joint arrays built by broadcasting support
vectors over the union of ancestor axes.  Nothing in this module touches the
tensor-train code, so agreement between the two pipelines is real evidence.
"""

from __future__ import annotations

import math
import operator
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import SizeLimitError
from .mixture import DiracMixture

DENSE_LIMIT = 10 ** 7

_OPS = {"add": operator.add, "sub": operator.sub, "mul": operator.mul}


@dataclass(frozen=True, eq=False)
class DenseTensorPair:
    """Joint support tensor over `ancestors` plus the per-ancestor mass vectors.

    ``support`` has one axis per ancestor (ascending ancestor order); the joint
    mass tensor is the outer product of ``marginals`` and is only built on
    request.  Flattening is row-major, earlier ancestors major.
    """

    support: np.ndarray
    ancestors: tuple
    marginals: tuple

    def __post_init__(self):
        if self.support.ndim != len(self.ancestors) or len(self.ancestors) != len(self.marginals):
            raise ValueError("support axes, ancestors and marginals disagree")
        if tuple(self.support.shape) != tuple(len(m) for m in self.marginals):
            raise ValueError("support shape does not match marginal lengths")

    @classmethod
    def leaf(cls, mixture: DiracMixture, ancestor) -> "DenseTensorPair":
        return cls(np.array(mixture.support), (ancestor,), (np.array(mixture.mass),))

    @classmethod
    def constant(cls, value: float) -> "DenseTensorPair":
        return cls(np.array(float(value)), (), ())

    @property
    def size(self) -> int:
        return int(self.support.size)

    @cached_property
    def mass(self) -> np.ndarray:
        out = np.array(1.0)
        for m in self.marginals:
            out = np.multiply.outer(out, m)
        return out

    @property
    def flat_support(self) -> np.ndarray:
        return self.support.reshape(-1)

    @property
    def flat_mass(self) -> np.ndarray:
        return self.mass.reshape(-1)

    def _binary(self, other, op, swap=False):
        if not isinstance(other, DenseTensorPair):
            other = DenseTensorPair.constant(other)
        return dense_combine(other, self, op) if swap else dense_combine(self, other, op)

    def __add__(self, other):
        return self._binary(other, "add")

    def __radd__(self, other):
        return self._binary(other, "add", swap=True)

    def __sub__(self, other):
        return self._binary(other, "sub")

    def __rsub__(self, other):
        return self._binary(other, "sub", swap=True)

    def __mul__(self, other):
        return self._binary(other, "mul")

    def __rmul__(self, other):
        return self._binary(other, "mul", swap=True)

    def __neg__(self):
        return DenseTensorPair(-self.support, self.ancestors, self.marginals)


def dense_combine(a: DenseTensorPair, b: DenseTensorPair, op: str, limit: int = DENSE_LIMIT) -> DenseTensorPair:
    """Combine two joint tensors over the union of their ancestors.

    Disjoint ancestors span new axes (all pairings, masses multiply); a shared
    ancestor is one axis, so both operands see the same outcome index.
    """
    fn = _OPS[op]
    marg = dict(zip(a.ancestors, a.marginals))
    for anc, m in zip(b.ancestors, b.marginals):
        if anc in marg and len(marg[anc]) != len(m):
            raise ValueError(f"ancestor {anc!r} has inconsistent sizes")
        marg.setdefault(anc, m)
    union = tuple(sorted(marg))
    size = math.prod(len(marg[k]) for k in union)
    if size > limit:
        raise SizeLimitError(f"dense joint of {size} outcomes exceeds limit {limit}")
    support = fn(_expand(a, union), _expand(b, union))
    shape = tuple(len(marg[k]) for k in union)
    if support.shape != shape:
        support = np.broadcast_to(support, shape).copy()
    return DenseTensorPair(support, union, tuple(marg[k] for k in union))


def _expand(t: DenseTensorPair, union: tuple) -> np.ndarray:
    present = set(t.ancestors)
    shape = [t.support.shape[t.ancestors.index(k)] if k in present else 1 for k in union]
    return t.support.reshape(shape)


def dense_scale(t: DenseTensorPair, c: float) -> DenseTensorPair:
    return DenseTensorPair(t.support * c, t.ancestors, t.marginals)


def dense_shift(t: DenseTensorPair, c: float) -> DenseTensorPair:
    return DenseTensorPair(t.support + c, t.ancestors, t.marginals)


def _mass_contract(values: np.ndarray, marginals: tuple) -> float:
    # sum of values * outer(marginals) without forming the joint mass tensor
    out = values
    for m in reversed(marginals):
        out = out @ m
    return float(out)


def dense_moment(t: DenseTensorPair, m: int) -> float:
    """``sum(support**m * mass) / sum(mass)`` by direct summation."""
    if m < 0:
        raise ValueError("moment order must be nonnegative")
    values = np.ones_like(t.support) if m == 0 else t.support ** m
    total = math.prod(float(np.sum(mg)) for mg in t.marginals)
    return _mass_contract(values, t.marginals) / total


def dense_variance(t: DenseTensorPair) -> float:
    return dense_moment(t, 2) - dense_moment(t, 1) ** 2


def dense_cov(x: DenseTensorPair, y: DenseTensorPair, limit: int = DENSE_LIMIT) -> float:
    """``E[XY] - E[X]E[Y]`` summed over the joint outcomes of both operands."""
    joint = dense_combine(x, y, "mul", limit)
    return dense_moment(joint, 1) - dense_moment(x, 1) * dense_moment(y, 1)


# ---------------------------------------------------------------- Monte Carlo


@dataclass(frozen=True)
class MCResult:
    mean: float
    stderr: float
    samples: int
    seed: int


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator; the same seed gives the same stream on every platform."""
    return np.random.Generator(np.random.PCG64(seed))


def uniform_sampler(a: float, b: float) -> Callable:
    return lambda rng, size: rng.uniform(a, b, size)


def normal_sampler(mu: float, sigma: float) -> Callable:
    return lambda rng, size: rng.normal(mu, sigma, size)


def rademacher_sampler() -> Callable:
    return lambda rng, size: rng.choice(np.array([-1.0, 1.0]), size)


def _shard_stats(expr, samplers, count, seed):
    rng = make_rng(seed)
    x = np.empty((count, len(samplers)))
    for k, sampler in enumerate(samplers):
        x[:, k] = sampler(rng, count)
    vals = np.asarray(expr(x), dtype=np.float64).reshape(-1)
    # shifted data: a constant integrand yields its value exactly and zero spread
    pivot = vals[0]
    dev = vals - pivot
    mean = pivot + float(np.mean(dev))
    m2 = float(np.sum((dev - (mean - pivot)) ** 2))
    return count, mean, m2


def mc_estimate(
    expr: Callable[[np.ndarray], np.ndarray],
    samplers: Sequence[Callable],
    s: int,
    seed: int,
    shards: int = 1,
    workers: int = 1,
) -> MCResult:
    """Seeded Monte Carlo estimate of ``E[expr(X)]``.

    ``expr`` maps an ``(s, d)`` array of draws (column k from ``samplers[k]``)
    to ``s`` values.  With ``shards > 1`` the draws are split over child seeds
    spawned from `seed` and combined by weighted mean; ``workers`` only
    controls how many shards run at once, never the result.
    """
    if s < 1:
        raise ValueError("need at least one sample")
    if shards <= 1:
        parts = [_shard_stats(expr, samplers, s, seed)]
    else:
        seeds = np.random.SeedSequence(seed).spawn(shards)
        counts = [s // shards + (1 if k < s % shards else 0) for k in range(shards)]
        jobs = [(c, sd) for c, sd in zip(counts, seeds) if c > 0]
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                parts = list(pool.map(lambda job: _shard_stats(expr, samplers, *job), jobs))
        else:
            parts = [_shard_stats(expr, samplers, *job) for job in jobs]
    n, mean, m2 = parts[0]
    for nb, mb, m2b in parts[1:]:
        delta = mb - mean
        tot = n + nb
        mean = mean + delta * nb / tot
        m2 = m2 + m2b + delta * delta * n * nb / tot
        n = tot
    stderr = math.sqrt(m2 / (n - 1) / n) if n > 1 else 0.0
    return MCResult(mean=mean, stderr=stderr, samples=n, seed=seed)
