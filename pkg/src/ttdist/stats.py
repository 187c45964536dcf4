"""Moments and covariances by contracting trains against the implicit mass tensor.

Each core is reduced to one matrix by summing its slices weighted by the
ancestor's masses.  An entry ``(i, l, a, c)`` contributes
``c * power_sum(type, a)`` at ``(i, l)``, so the only per-type work is the
power sums memoized in the :class:`~ttdist.core.Registry`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .arith import hadamard_power, multiply
from .core import Registry, SparseCore, TTVariable

NORMALIZATION_TOL = 1e-12
NEGATIVE_VARIANCE_TOL = 1e-10


class NegativeVarianceWarning(RuntimeWarning):
    """A tiny negative variance from cancellation was clamped to zero."""


@dataclass(frozen=True)
class ContractedChain:
    """Mass-weighted fiber sums, one dense ``r_left x r_right`` matrix per core."""

    matrices: tuple

    def product(self) -> float:
        row = np.ones((1, 1))
        for m in self.matrices:
            row = row @ m
        return float(row[0, 0])


def cache_contraction(registry: Registry, j: int, alpha: int) -> float:
    """``sum_i s_j[i]**alpha * m_j[i]``, memoized per type and power."""
    if alpha < 0:
        raise ValueError("power must be nonnegative")
    return registry.power_sum(j, alpha)


def _entry_weights(core: SparseCore, j: int, registry: Registry) -> np.ndarray:
    lookup = {int(a): registry.power_sum(j, int(a)) for a in np.unique(core.powers)}
    cached = np.array([lookup[int(a)] for a in core.powers]) if core.nnz else np.zeros(0)
    return core.coeffs * cached


def _registry_of(x: TTVariable, registry: Registry | None) -> Registry:
    if registry is not None and registry is not x.registry:
        raise ValueError("variable was built against a different registry")
    return x.registry


def fiber_contract(x: TTVariable, registry: Registry | None = None) -> ContractedChain:
    reg = _registry_of(x, registry)
    mats = []
    for core, j in zip(x.cores, x.dists):
        m = np.zeros((core.r_left, core.r_right))
        np.add.at(m, (core.rows, core.cols), _entry_weights(core, j, reg))
        mats.append(m)
    return ContractedChain(tuple(mats))


def inner_with_mass(x: TTVariable, registry: Registry | None = None) -> float:
    """``<S, M>``: sum over all outcomes of support times mass.

    Left to right with a running ``1 x r`` row; each core costs O(nnz).
    """
    reg = _registry_of(x, registry)
    row = np.ones(1)
    for core, j in zip(x.cores, x.dists):
        w = _entry_weights(core, j, reg)
        row = np.bincount(core.cols, weights=row[core.rows] * w, minlength=core.r_right)
    return float(row[0])


def normalization(x: TTVariable, registry: Registry | None = None) -> float:
    """``<1, M>``, the total mass; computed rather than assumed."""
    reg = _registry_of(x, registry)
    total = 1.0
    for j in x.dists:
        total *= reg.power_sum(j, 0)
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise ValueError(f"total mass {total!r} is not 1")
    return total


def moment(x: TTVariable, m: int, registry: Registry | None = None) -> float:
    """Raw moment ``E[X**m]`` via the m-th Hadamard power."""
    if m < 0:
        raise ValueError("moment order must be nonnegative")
    if m == 0:
        return 1.0
    return inner_with_mass(hadamard_power(x, m), registry) / normalization(x, registry)


def mean(x: TTVariable, registry: Registry | None = None) -> float:
    return moment(x, 1, registry)


def variance(x: TTVariable, registry: Registry | None = None) -> float:
    """``E[X^2] - E[X]^2``; a negative result above -1e-10 is clamped with a warning."""
    mu = moment(x, 1, registry)
    var = moment(x, 2, registry) - mu * mu
    if var < 0:
        if var < -NEGATIVE_VARIANCE_TOL:
            raise ValueError(f"variance {var!r} is negative beyond rounding")
        warnings.warn(f"clamped variance {var!r} to 0", NegativeVarianceWarning, stacklevel=2)
        return 0.0
    return var


def covariance(x: TTVariable, y: TTVariable, registry: Registry | None = None) -> float:
    """``E[XY] - E[X]E[Y]``; shared ancestors are matched by alignment."""
    return moment(multiply(x, y), 1, registry) - moment(x, 1, registry) * moment(y, 1, registry)
