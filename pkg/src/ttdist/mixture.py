"""Dirac-mixture discretizations of scalar distributions.

A :class:`DiracMixture` is a finite set of support points with probability
masses.  The constructors below produce them either exactly (finite
distributions such as dice) or by recursive mean splitting: every region is
split at its conditional mean and every leaf region contributes one point at
its conditional mean carrying the region's probability.  This keeps the
mixture mean equal to the source mean at every level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

MASS_TOL = 1e-12
# regions lighter than this stop splitting
MIN_REGION_PROB = 1e-300


@dataclass(frozen=True, eq=False)
class DiracMixture:
    """Sorted support points with strictly positive masses summing to one."""

    support: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        support = np.array(self.support, dtype=np.float64).reshape(-1)
        mass = np.array(self.mass, dtype=np.float64).reshape(-1)
        if support.size == 0 or support.shape != mass.shape:
            raise ValueError("support and mass must be nonempty and of equal length")
        if not np.all(np.isfinite(support)):
            raise ValueError("support points must be finite")
        if np.any(mass <= 0):
            raise ValueError("masses must be strictly positive")
        if abs(math.fsum(mass) - 1.0) > MASS_TOL:
            raise ValueError(f"masses sum to {math.fsum(mass)!r}, expected 1")
        if np.any(np.diff(support) <= 0):
            raise ValueError("support points must be strictly increasing")
        support.flags.writeable = False
        mass.flags.writeable = False
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "mass", mass)

    def __len__(self):
        return self.support.size

    def __repr__(self):
        return f"DiracMixture(n={len(self)}, mean={self.mean():.6g}, var={self.variance():.6g})"

    def moment(self, k: int) -> float:
        return mixture_moment(self, k)

    def mean(self) -> float:
        return mixture_moment(self, 1)

    def variance(self) -> float:
        mu = self.mean()
        return float(np.dot(self.mass, (self.support - mu) ** 2))

    def same_as(self, other: "DiracMixture", tol: float = 1e-15) -> bool:
        """True when both mixtures have the same points and masses within `tol`.

        Points are compared relative to their magnitude so that distinct
        mixtures on a tiny scale are never merged; masses lie in [0, 1] and
        are compared absolutely.
        """
        if len(self) != len(other):
            return False
        scale = np.maximum(np.abs(self.support), np.abs(other.support))
        return bool(
            np.all(np.abs(self.support - other.support) <= tol * scale)
            and np.all(np.abs(self.mass - other.mass) <= tol)
        )


def mixture_moment(m: DiracMixture, k: int) -> float:
    """Raw moment ``sum_i m_i * x_i**k``."""
    if k < 0:
        raise ValueError("moment order must be nonnegative")
    return float(np.dot(m.mass, m.support ** k))


def from_discrete(points: Sequence[float], masses: Sequence[float]) -> DiracMixture:
    """Exact finite distribution; equal points are merged by summing their masses."""
    points = np.asarray(points, dtype=np.float64).reshape(-1)
    masses = np.asarray(masses, dtype=np.float64).reshape(-1)
    if points.shape != masses.shape:
        raise ValueError(f"{points.size} points but {masses.size} masses")
    if points.size == 0:
        raise ValueError("a distribution needs at least one point")
    if np.any(masses <= 0):
        raise ValueError("masses must be strictly positive")
    if abs(math.fsum(masses) - 1.0) > MASS_TOL:
        raise ValueError(f"masses sum to {math.fsum(masses)!r}, expected 1")
    unique, inverse = np.unique(points, return_inverse=True)
    merged = np.bincount(inverse.reshape(-1), weights=masses, minlength=unique.size)
    return DiracMixture(unique, merged)


def dice(faces: int = 6) -> DiracMixture:
    if faces < 1:
        raise ValueError("a die needs at least one face")
    return from_discrete(np.arange(1, faces + 1), np.full(faces, 1.0 / faces))


def rademacher() -> DiracMixture:
    return from_discrete([-1.0, 1.0], [0.5, 0.5])


def _split(lo: float, hi: float, level: int, region: Callable) -> list[tuple[float, float]]:
    # region(lo, hi) -> (probability, conditional mean)
    prob, mean = region(lo, hi)
    if level == 0 or prob < MIN_REGION_PROB:
        return [(mean, prob)]
    return _split(lo, mean, level - 1, region) + _split(mean, hi, level - 1, region)


def _from_leaves(leaves: list[tuple[float, float]]) -> DiracMixture:
    points = np.array([p for p, _ in leaves])
    masses = np.array([m for _, m in leaves])
    keep = masses > 0
    return from_discrete(points[keep], masses[keep])


def _std_normal_region(a: float, b: float) -> tuple[float, float]:
    """Probability and conditional mean of N(0, 1) restricted to (a, b)."""
    # difference taken in whichever tail keeps it free of cancellation
    if a >= 0:
        prob = ndtr(-a) - ndtr(-b)
    elif b <= 0:
        prob = ndtr(b) - ndtr(a)
    else:
        prob = 1.0 - ndtr(a) - ndtr(-b)
    pdf = lambda t: 0.0 if math.isinf(t) else math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
    if prob <= 0:
        return 0.0, (a + b) / 2 if math.isfinite(a + b) else (a if math.isfinite(a) else b)
    mean = (pdf(a) - pdf(b)) / prob
    return float(prob), float(min(max(mean, a), b))


def from_gaussian(mu: float, sigma: float, level: int) -> DiracMixture:
    """Mean-splitting discretization of N(mu, sigma**2) into ``2**level`` points."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if level < 0:
        raise ValueError("level must be nonnegative")
    leaves = _split(-math.inf, math.inf, level, _std_normal_region)
    return _from_leaves([(mu + sigma * z, p) for z, p in leaves])


def from_uniform(a: float, b: float, level: int) -> DiracMixture:
    """Mean-splitting discretization of U(a, b): midpoints of ``2**level`` equal cells."""
    if not a < b:
        raise ValueError("uniform needs a < b")
    if level < 0:
        raise ValueError("level must be nonnegative")
    width = b - a
    return _from_leaves(_split(a, b, level, lambda lo, hi: ((hi - lo) / width, (lo + hi) / 2)))


def from_samples(samples: Sequence[float], level: int) -> DiracMixture:
    """Empirical mean-splitting discretization of equally weighted samples.

    Samples equal to a split mean go left.  A region with one sample, or whose
    samples are all identical, stops splitting, so fewer than ``2**level``
    points may be returned.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64).reshape(-1))
    if x.size == 0:
        raise ValueError("no samples")
    if level < 0:
        raise ValueError("level must be nonnegative")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    total = x.size
    leaves = []

    def visit(seg: np.ndarray, level: int):
        mean = float(np.mean(seg))
        if level == 0 or seg.size <= 1 or seg[0] == seg[-1]:
            leaves.append((mean, seg.size / total))
            return
        cut = int(np.searchsorted(seg, mean, side="right"))
        if cut == 0 or cut == seg.size:
            leaves.append((mean, seg.size / total))
            return
        visit(seg[:cut], level - 1)
        visit(seg[cut:], level - 1)

    visit(x, level)
    return _from_leaves(leaves)


def read_samples(path: str | Path) -> np.ndarray:
    """Read one number per line; ``#`` starts a comment, blank lines are skipped."""
    values = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                values.append(float(text))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a number: {text!r}") from None
    return np.array(values)


def level_for_points(n: int) -> int:
    """Splitting depth giving `n` points; `n` must be a power of two."""
    n = int(n)
    if n < 1 or n & (n - 1):
        raise ValueError(f"number of points must be a power of two, got {n}")
    return n.bit_length() - 1
