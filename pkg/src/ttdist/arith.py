"""Arithmetic on :class:`~ttdist.core.TTVariable`.

Operands with a pure history take fast paths that keep the canonical cores
(rank 2 running-sum cores for sums, rank 1 cores for products): shared
ancestors merge coefficients or powers in place and new ancestors are
appended.  Everything else is aligned to the union of ancestors and combined
core by core, block-diagonally for sums and by Kronecker products for
products.  Nothing is truncated; every result is exact up to rounding.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .core import MAX_POWER, OpHistory, SparseCore, TTVariable, align
from .errors import MemoryGuardError, PowerOverflowError

DEFAULT_ENTRY_CAP = 10 ** 8
_entry_cap = DEFAULT_ENTRY_CAP

_ADD_LIKE = (OpHistory.LEAF, OpHistory.ADD)
_MULT_LIKE = (OpHistory.LEAF, OpHistory.MULT)


def set_entry_cap(cap: int | None) -> int:
    """Set the total-entry ceiling for general merges; returns the old value."""
    global _entry_cap
    old = _entry_cap
    _entry_cap = DEFAULT_ENTRY_CAP if cap is None else int(cap)
    return old


def get_entry_cap() -> int:
    return _entry_cap


def _guard(entries: int):
    if entries > _entry_cap:
        raise MemoryGuardError(f"result needs {entries} core entries, cap is {_entry_cap}")


# ----------------------------------------------------------- canonical forms


def _is_add_like(x: TTVariable) -> bool:
    if x.history in _ADD_LIKE:
        return True
    # a lone c*s monomial is a valid one-core sum whatever its label
    core = x.cores[0]
    return x.d == 1 and core.nnz == 1 and int(core.powers[0]) == 1


def _is_mult_like(x: TTVariable) -> bool:
    if x.history in _MULT_LIKE:
        return True
    return x.d == 1 and x.cores[0].nnz == 1


def _sum_terms(x: TTVariable) -> tuple[dict, float]:
    """Read ``{ancestor: (type, coeff)}`` and the constant of a pure sum."""
    terms, shift = {}, 0.0
    for k, (anc, j, core) in enumerate(zip(x.ancestors, x.dists, x.cores)):
        coeff = 0.0
        for i, l, a, c in core.entries():
            if a == 1:
                coeff = c
            elif k == 0 and i == 0 and l == 0:
                shift = c
        terms[anc] = (j, coeff)
    return terms, shift


@lru_cache(maxsize=65536)
def _sum_core(kind: str, coeff: float, shift: float) -> SparseCore:
    if kind == "single":
        entries = [(0, 0, 1, coeff)]
        if shift:
            entries.append((0, 0, 0, shift))
        return SparseCore.from_entries(1, 1, entries)
    if kind == "first":
        entries = [(0, 0, 1, coeff), (0, 1, 0, 1.0)]
        if shift:
            entries.append((0, 0, 0, shift))
        return SparseCore.from_entries(1, 2, entries)
    if kind == "inner":
        return SparseCore.from_entries(2, 2, [(0, 0, 0, 1.0), (1, 0, 1, coeff), (1, 1, 0, 1.0)])
    return SparseCore.from_entries(2, 1, [(0, 0, 0, 1.0), (1, 0, 1, coeff)])


def build_sum(registry, terms: dict, shift: float = 0.0) -> TTVariable:
    """Canonical running-sum train for ``shift + sum_k coeff_k * X_k``."""
    ancestors = tuple(sorted(terms))
    d = len(ancestors)
    shift = float(shift)
    cores = []
    for k, anc in enumerate(ancestors):
        coeff = float(terms[anc][1])
        if d == 1:
            kind = "single"
        elif k == 0:
            kind = "first"
        elif k == d - 1:
            kind = "last"
        else:
            kind = "inner"
        cores.append(_sum_core(kind, coeff, shift if k == 0 else 0.0))
    dists = tuple(terms[a][0] for a in ancestors)
    return TTVariable(registry, ancestors, dists, tuple(cores), OpHistory.ADD)


def _product_terms(x: TTVariable) -> dict:
    out = {}
    for anc, j, core in zip(x.ancestors, x.dists, x.cores):
        out[anc] = (j, int(core.powers[0]), float(core.coeffs[0]))
    return out


@lru_cache(maxsize=65536)
def _product_core(power: int, coeff: float) -> SparseCore:
    return SparseCore(1, 1, [0], [0], [power], [coeff])


def build_product(registry, terms: dict) -> TTVariable:
    """Rank-one train for ``prod_k coeff_k * X_k**power_k``."""
    ancestors = tuple(sorted(terms))
    cores = []
    for anc in ancestors:
        _, power, coeff = terms[anc]
        if power > MAX_POWER:
            raise PowerOverflowError(f"power {power} exceeds {MAX_POWER}")
        cores.append(_product_core(int(power), float(coeff)))
    dists = tuple(terms[a][0] for a in ancestors)
    return TTVariable(registry, ancestors, dists, tuple(cores), OpHistory.MULT)


def _check_registry(x: TTVariable, y: TTVariable):
    if x.registry is not y.registry:
        raise ValueError("variables belong to different registries")


# ------------------------------------------------------------ general merges


def block_core(a: SparseCore, b: SparseCore, position: str) -> SparseCore:
    """Sum-merge of two cores: ``first`` side by side, ``inner`` block
    diagonal, ``last`` stacked, ``single`` entrywise sum."""
    if position == "single":
        return merge_duplicates(
            SparseCore(
                1, 1,
                np.concatenate([a.rows, b.rows]),
                np.concatenate([a.cols, b.cols]),
                np.concatenate([a.powers, b.powers]),
                np.concatenate([a.coeffs, b.coeffs]),
            )
        )
    row_off = a.r_left if position in ("inner", "last") else 0
    col_off = a.r_right if position in ("inner", "first") else 0
    r_left = a.r_left + b.r_left if row_off else 1
    r_right = a.r_right + b.r_right if col_off else 1
    return SparseCore(
        r_left,
        r_right,
        np.concatenate([a.rows, b.rows + row_off]),
        np.concatenate([a.cols, b.cols + col_off]),
        np.concatenate([a.powers, b.powers]),
        np.concatenate([a.coeffs, b.coeffs]),
    )


def kron_core(a: SparseCore, b: SparseCore, merge: bool = True) -> SparseCore:
    """Kronecker product of slices (left operand major); powers add, coefficients multiply."""
    powers = (a.powers[:, None] + b.powers[None, :]).reshape(-1)
    if powers.size and powers.max() > MAX_POWER:
        raise PowerOverflowError(f"power {int(powers.max())} exceeds {MAX_POWER}")
    core = SparseCore(
        a.r_left * b.r_left,
        a.r_right * b.r_right,
        (a.rows[:, None] * b.r_left + b.rows[None, :]).reshape(-1),
        (a.cols[:, None] * b.r_right + b.cols[None, :]).reshape(-1),
        powers,
        (a.coeffs[:, None] * b.coeffs[None, :]).reshape(-1),
    )
    return merge_duplicates(core) if merge else core


def merge_duplicates(core: SparseCore) -> SparseCore:
    """Sum entries sharing ``(row, col, power)``; drop those that sum to zero."""
    if core.nnz < 2:
        return core
    order = np.lexsort((core.powers, core.cols, core.rows))
    rows, cols, powers = core.rows[order], core.cols[order], core.powers[order]
    new = np.empty(order.size, dtype=bool)
    new[0] = True
    new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1]) | (powers[1:] != powers[:-1])
    if new.all():
        return core
    starts = np.flatnonzero(new)
    coeffs = np.add.reduceat(core.coeffs[order], starts)
    keep = coeffs != 0
    return SparseCore(
        core.r_left, core.r_right,
        rows[starts][keep], cols[starts][keep], powers[starts][keep], coeffs[keep],
    )


def _general_add(x: TTVariable, y: TTVariable) -> TTVariable:
    x, y = align(x, y)
    _guard(x.total_entries + y.total_entries)
    d = x.d
    cores = []
    for k, (a, b) in enumerate(zip(x.cores, y.cores)):
        if d == 1:
            position = "single"
        elif k == 0:
            position = "first"
        elif k == d - 1:
            position = "last"
        else:
            position = "inner"
        cores.append(block_core(a, b, position))
    return TTVariable(x.registry, x.ancestors, x.dists, tuple(cores), OpHistory.MIXED)


def _general_mul(x: TTVariable, y: TTVariable) -> TTVariable:
    x, y = align(x, y)
    _guard(sum(a.nnz * b.nnz for a, b in zip(x.cores, y.cores)))
    cores = tuple(kron_core(a, b) for a, b in zip(x.cores, y.cores))
    return TTVariable(x.registry, x.ancestors, x.dists, cores, OpHistory.MIXED)


# ------------------------------------------------------------ public surface


def add(x: TTVariable, y: TTVariable) -> TTVariable:
    """``X + Y``; correlated through any shared ancestors."""
    _check_registry(x, y)
    if _is_add_like(x) and _is_add_like(y):
        tx, sx = _sum_terms(x)
        ty, sy = _sum_terms(y)
        merged = dict(tx)
        for anc, (j, c) in ty.items():
            merged[anc] = (j, merged[anc][1] + c) if anc in merged else (j, c)
        return build_sum(x.registry, merged, sx + sy)
    return _general_add(x, y)


def subtract(x: TTVariable, y: TTVariable) -> TTVariable:
    return add(x, scale(y, -1.0))


def multiply(x: TTVariable, y: TTVariable) -> TTVariable:
    """``X * Y`` elementwise over the joint outcomes."""
    _check_registry(x, y)
    if _is_mult_like(x) and _is_mult_like(y):
        merged = _product_terms(x)
        for anc, (j, a, c) in _product_terms(y).items():
            if anc in merged:
                _, a0, c0 = merged[anc]
                merged[anc] = (j, a0 + a, c0 * c)
            else:
                merged[anc] = (j, a, c)
        return build_product(x.registry, merged)
    return _general_mul(x, y)


def scale(x: TTVariable, c: float) -> TTVariable:
    """``c * X``.  Scaling by zero keeps the structure with zero coefficients."""
    c = float(c)
    if c == 1.0:
        return x
    if x.history in _ADD_LIKE:
        terms, s = _sum_terms(x)
        return build_sum(x.registry, {a: (j, coeff * c) for a, (j, coeff) in terms.items()}, s * c)
    # the first core is a row vector, scaling it scales every outcome
    first = x.cores[0].scaled(c)
    return TTVariable(x.registry, x.ancestors, x.dists, (first,) + x.cores[1:], x.history)


def constant_like(x: TTVariable, c: float) -> TTVariable:
    """The constant `c` as a rank-one train over the ancestors of `x`."""
    one = _product_core(0, 1.0)
    cores = (_product_core(0, float(c)),) + (one,) * (x.d - 1)
    return TTVariable(x.registry, x.ancestors, x.dists, cores, OpHistory.MULT)


def shift(x: TTVariable, c: float) -> TTVariable:
    """``X + c``.  Sums absorb the constant into their first core; other
    histories add a rank-one constant train over the same ancestors."""
    c = float(c)
    if c == 0.0:
        return x
    if _is_add_like(x):
        terms, s = _sum_terms(x)
        return build_sum(x.registry, terms, s + c)
    return _general_add(x, constant_like(x, c))


def hadamard_power(x: TTVariable, m: int) -> TTVariable:
    """Elementwise ``X**m`` of the support tensor."""
    m = int(m)
    if m < 1:
        raise ValueError("Hadamard power needs m >= 1")
    if m == 1:
        return x
    if _is_mult_like(x):
        terms = {anc: (j, a * m, c ** m) for anc, (j, a, c) in _product_terms(x).items()}
        return build_product(x.registry, terms)
    out = x
    for _ in range(m - 1):
        out = _general_mul(out, x)
    return out


def tt_sum(variables: Iterable[TTVariable]) -> TTVariable:
    """Sum by pairwise reduction (keeps fast-path rebuilds at O(d log d))."""
    return _pairwise(list(variables), add)


def tt_prod(variables: Iterable[TTVariable]) -> TTVariable:
    return _pairwise(list(variables), multiply)


def linear_combination(variables: Sequence[TTVariable], weights: Sequence[float], const: float = 0.0) -> TTVariable:
    terms = [scale(v, w) for v, w in zip(variables, weights)]
    out = tt_sum(terms)
    return shift(out, const) if const else out


def _pairwise(items: list, op):
    if not items:
        raise ValueError("nothing to combine")
    while len(items) > 1:
        nxt = [op(items[k], items[k + 1]) for k in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]

