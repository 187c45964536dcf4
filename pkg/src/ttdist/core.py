"""Sparse tensor-train representation of random variables.

A :class:`TTVariable` is a function of independent *ancestors* (latent i.i.d.
draws).  Its support tensor is held as a chain of :class:`SparseCore` objects,
one per ancestor, each storing monomial entries ``(row, col, power, coeff)``:
the slice of the core for fiber index ``i`` has ``coeff * s[i]**power`` at
``(row, col)``, where ``s`` is the support vector of the ancestor's
distribution.  The joint mass tensor is never stored; it is the product of the
ancestors' mixture masses, looked up in the :class:`Registry`.

Indices are 0-based throughout.
"""

from __future__ import annotations

import enum
import itertools
import math
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import PowerOverflowError, SizeLimitError
from .mixture import DiracMixture
from .oracle import DenseTensorPair

MAX_POWER = 64
DEFAULT_ENUMERATE_LIMIT = 10 ** 6


class OpHistory(enum.Enum):
    LEAF = "LEAF"
    ADD = "ADD"
    MULT = "MULT"
    MIXED = "MIXED"


class Registry:
    """Deduplicated distribution types with memoized power sums.

    ``power_sum(j, a)`` is ``sum_i s_j[i]**a * m_j[i]``; it is computed once
    per (type, power) and reused by every ancestor of that type.
    Registration is serialized by a lock; cache fills are idempotent.
    """

    def __init__(self, dedup_tol: float = 1e-15):
        self.dedup_tol = dedup_tol
        self._types: list[DiracMixture] = []
        self._cache: list[dict[int, float]] = []
        self._lock = threading.Lock()
        # number of power sums actually evaluated, for cache-reuse checks
        self.contractions = 0

    def __len__(self):
        return len(self._types)

    def register(self, mixture: DiracMixture) -> int:
        with self._lock:
            for j, known in enumerate(self._types):
                if known.same_as(mixture, self.dedup_tol):
                    return j
            self._types.append(mixture)
            self._cache.append({})
            return len(self._types) - 1

    def mixture(self, j: int) -> DiracMixture:
        return self._types[j]

    def size(self, j: int) -> int:
        return len(self._types[j])

    def power_sum(self, j: int, alpha: int) -> float:
        cache = self._cache[j]
        try:
            return cache[alpha]
        except KeyError:
            pass
        m = self._types[j]
        value = float(np.dot(m.support ** int(alpha), m.mass))
        self.contractions += 1
        cache[alpha] = value
        return value

    def cached(self, j: int) -> dict[int, float]:
        return dict(self._cache[j])


_ancestor_ids = itertools.count()
_ancestor_lock = threading.Lock()


def next_ancestor() -> int:
    with _ancestor_lock:
        return next(_ancestor_ids)


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype).reshape(-1)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SparseCore:
    """One TT core as parallel arrays of monomial entries.

    Several entries may share a position as long as their powers differ;
    a position without entries is zero in every slice.
    """

    r_left: int
    r_right: int
    rows: np.ndarray
    cols: np.ndarray
    powers: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        for name, dtype in (("rows", np.int64), ("cols", np.int64), ("powers", np.int64), ("coeffs", np.float64)):
            object.__setattr__(self, name, _frozen(getattr(self, name), dtype))
        n = self.rows.size
        if not (self.cols.size == self.powers.size == self.coeffs.size == n):
            raise ValueError("entry arrays differ in length")
        if n:
            if self.powers.max() > MAX_POWER:
                raise PowerOverflowError(f"power {int(self.powers.max())} exceeds {MAX_POWER}")
            if self.powers.min() < 0:
                raise ValueError("negative power")
            if self.rows.min() < 0 or self.rows.max() >= self.r_left or self.cols.min() < 0 or self.cols.max() >= self.r_right:
                raise ValueError("entry position outside the core")

    @classmethod
    def from_entries(cls, r_left: int, r_right: int, entries) -> "SparseCore":
        entries = list(entries)
        if not entries:
            return cls(r_left, r_right, [], [], [], [])
        rows, cols, powers, coeffs = zip(*entries)
        return cls(r_left, r_right, rows, cols, powers, coeffs)

    @property
    def nnz(self) -> int:
        return int(self.rows.size)

    def entries(self) -> list[tuple[int, int, int, float]]:
        return [
            (int(i), int(l), int(a), float(c))
            for i, l, a, c in zip(self.rows, self.cols, self.powers, self.coeffs)
        ]

    def entry_set(self) -> set:
        return set(self.entries())

    def scaled(self, c: float) -> "SparseCore":
        return SparseCore(self.r_left, self.r_right, self.rows, self.cols, self.powers, self.coeffs * c)

    def dense_slices(self, support: np.ndarray) -> np.ndarray:
        """Evaluate every slice: array of shape ``(r_left, n, r_right)``."""
        support = np.asarray(support, dtype=np.float64)
        out = np.zeros((self.r_left, support.size, self.r_right))
        if self.nnz:
            vals = self.coeffs[:, None] * support[None, :] ** self.powers[:, None]
            fiber = np.arange(support.size)
            np.add.at(out, (self.rows[:, None], fiber[None, :], self.cols[:, None]), vals)
        return out


@lru_cache(maxsize=None)
def identity_core(rank: int) -> SparseCore:
    idx = np.arange(rank)
    return SparseCore(rank, rank, idx, idx, np.zeros(rank), np.ones(rank))


@dataclass(frozen=True, eq=False)
class TTVariable:
    """A random variable as a sparse tensor train over its ancestors.

    ``ancestors`` are ascending ancestor ids, ``dists`` the registry type of
    each, ``cores`` one :class:`SparseCore` per ancestor.
    """

    registry: Registry
    ancestors: tuple
    dists: tuple
    cores: tuple
    history: OpHistory

    def __post_init__(self):
        d = len(self.cores)
        if d == 0 or len(self.ancestors) != d or len(self.dists) != d:
            raise ValueError("need one core and one type per ancestor")
        if self.cores[0].r_left != 1 or self.cores[-1].r_right != 1:
            raise ValueError("boundary ranks must be 1")
        for left, right in zip(self.cores, self.cores[1:]):
            if left.r_right != right.r_left:
                raise ValueError("adjacent core ranks do not match")
        if any(a >= b for a, b in zip(self.ancestors, self.ancestors[1:])):
            raise ValueError("ancestors must be strictly ascending")

    @property
    def d(self) -> int:
        return len(self.cores)

    @property
    def ranks(self) -> list[int]:
        return [1] + [c.r_right for c in self.cores]

    @property
    def nnz_per_core(self) -> list[int]:
        return [c.nnz for c in self.cores]

    @property
    def total_entries(self) -> int:
        return sum(c.nnz for c in self.cores)

    def __repr__(self):
        return f"TTVariable(d={self.d}, history={self.history.value}, ranks={self.ranks})"

    # operator sugar; the arithmetic lives in ttdist.arith
    def __add__(self, other):
        from . import arith

        return arith.add(self, other) if isinstance(other, TTVariable) else arith.shift(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import arith

        return arith.subtract(self, other) if isinstance(other, TTVariable) else arith.shift(self, -other)

    def __rsub__(self, other):
        from . import arith

        return arith.shift(arith.scale(self, -1.0), other)

    def __mul__(self, other):
        from . import arith

        return arith.multiply(self, other) if isinstance(other, TTVariable) else arith.scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import arith

        return arith.scale(self, -1.0)

    def __pow__(self, m):
        from . import arith

        return arith.hadamard_power(self, m)


def new_leaf(registry: Registry, type_id: int) -> TTVariable:
    """A fresh ancestor of the given type, represented by the core ``{(0,0,1,1)}``."""
    if not 0 <= type_id < len(registry):
        raise KeyError(f"unknown distribution type {type_id}")
    return TTVariable(registry, (next_ancestor(),), (type_id,), (_leaf_core(),), OpHistory.LEAF)


@lru_cache(maxsize=1)
def _leaf_core() -> SparseCore:
    return SparseCore(1, 1, [0], [0], [1], [1.0])


def leaf(registry: Registry, mixture: DiracMixture) -> TTVariable:
    return new_leaf(registry, registry.register(mixture))


def iid(registry: Registry, mixture: DiracMixture, count: int) -> list[TTVariable]:
    j = registry.register(mixture)
    return [new_leaf(registry, j) for _ in range(count)]


def embed(x: TTVariable, ancestors, type_of: dict) -> TTVariable:
    """Place `x` in the space of `ancestors` (a superset), inserting identity cores.

    Gaps between two real cores get an ``r x r`` identity with the bond rank
    crossing the gap; gaps before the first or after the last real core are
    ``1 x 1``.
    """
    ancestors = tuple(ancestors)
    if ancestors == x.ancestors:
        return x
    own = dict(zip(x.ancestors, x.cores))
    missing = set(x.ancestors) - set(ancestors)
    if missing:
        raise ValueError(f"target space lacks ancestors {sorted(missing)}")
    cores, bond = [], 1
    for anc in ancestors:
        core = own.get(anc)
        if core is None:
            cores.append(identity_core(bond))
        else:
            cores.append(core)
            bond = core.r_right
    history = x.history
    if history is OpHistory.LEAF:
        history = OpHistory.MULT
    elif history is OpHistory.ADD:
        history = OpHistory.MIXED
    return TTVariable(x.registry, ancestors, tuple(type_of[a] for a in ancestors), tuple(cores), history)


def align(x: TTVariable, y: TTVariable) -> tuple[TTVariable, TTVariable]:
    """Embed both variables in the sorted union of their ancestors."""
    if x.registry is not y.registry:
        raise ValueError("variables belong to different registries")
    if x.ancestors == y.ancestors:
        return x, y
    type_of = dict(zip(x.ancestors, x.dists))
    type_of.update(zip(y.ancestors, y.dists))
    union = tuple(sorted(type_of))
    return embed(x, union, type_of), embed(y, union, type_of)


def enumerate_tt(x: TTVariable, limit: int = DEFAULT_ENUMERATE_LIMIT) -> DenseTensorPair:
    """Contract the full support tensor; only sensible at desk scale."""
    reg = x.registry
    sizes = [reg.size(j) for j in x.dists]
    total = math.prod(sizes)
    if total > limit:
        raise SizeLimitError(f"{total} outcomes exceed enumeration limit {limit}")
    acc = np.ones((1, 1))
    for core, j in zip(x.cores, x.dists):
        slices = core.dense_slices(reg.mixture(j).support)
        acc = np.einsum("ar,rnl->anl", acc, slices).reshape(-1, core.r_right)
    support = acc.reshape(sizes)
    marginals = tuple(np.array(reg.mixture(j).mass) for j in x.dists)
    return DenseTensorPair(support, tuple(x.ancestors), marginals)


def memory_doubles(*variables: TTVariable) -> int:
    """Storage in doubles: ``d * nnz * 4`` per variable plus ``2 * n`` per type.

    ``nnz`` is the largest entry count of any core of the variable (each entry
    is four numbers); each distribution type referenced is counted once.
    """
    total, types = 0, {}
    for x in variables:
        total += x.d * max(x.nnz_per_core) * 4
        for j in x.dists:
            types[j] = x.registry.size(j)
    return total + sum(2 * n for n in types.values())


def stored_doubles(*variables: TTVariable) -> int:
    """Like :func:`memory_doubles` but counting the entries actually stored."""
    total, types = 0, {}
    for x in variables:
        total += 4 * x.total_entries
        for j in x.dists:
            types[j] = x.registry.size(j)
    return total + sum(2 * n for n in types.values())


def stats_report(x: TTVariable) -> dict:
    return {
        "ranks": x.ranks,
        "nnz_per_core": x.nnz_per_core,
        "memory_doubles": memory_doubles(x),
        "stored_doubles": stored_doubles(x),
        "history": x.history.value,
        "d": x.d,
        "types": len(set(x.dists)),
    }
