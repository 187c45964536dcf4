import numpy as np
import pytest

from ttdist import arith, core, mixture
from ttdist.arith import block_core, kron_core, merge_duplicates
from ttdist.core import OpHistory, Registry, SparseCore
from ttdist.errors import MemoryGuardError, PowerOverflowError


@pytest.fixture
def reg():
    return Registry()


def brute(x):
    return core.enumerate_tt(x).support


def grid(*supports):
    return np.meshgrid(*supports, indexing="ij")


def test_sum_of_three_has_canonical_cores(reg):
    x = core.iid(reg, mixture.dice(6), 3)
    z = arith.tt_sum(x)
    assert z.history is OpHistory.ADD
    assert z.ranks == [1, 2, 2, 1]
    assert z.cores[0].entry_set() == {(0, 0, 1, 1.0), (0, 1, 0, 1.0)}
    assert z.cores[1].entry_set() == {(0, 0, 0, 1.0), (1, 0, 1, 1.0), (1, 1, 0, 1.0)}
    assert z.cores[2].entry_set() == {(0, 0, 0, 1.0), (1, 0, 1, 1.0)}


def test_weighted_sum_with_shift(reg):
    x, y = core.iid(reg, mixture.dice(2), 2)
    z = arith.shift(arith.add(arith.scale(x, 2.0), arith.scale(y, -3.0)), 5.0)
    assert z.history is OpHistory.ADD
    assert z.cores[0].entry_set() == {(0, 0, 1, 2.0), (0, 1, 0, 1.0), (0, 0, 0, 5.0)}
    a, b = grid([1.0, 2.0], [1.0, 2.0])
    np.testing.assert_allclose(brute(z), 2 * a - 3 * b + 5)


def test_single_core_sum(reg):
    x = core.leaf(reg, mixture.dice(3))
    z = arith.shift(arith.scale(x, 4.0), -1.0)
    assert z.cores[0].entry_set() == {(0, 0, 1, 4.0), (0, 0, 0, -1.0)}
    np.testing.assert_allclose(brute(z), 4 * np.arange(1, 4) - 1)


def test_shared_ancestor_sum_merges_coefficients(reg):
    x = core.leaf(reg, mixture.dice(6))
    z = arith.add(x, x)
    assert z.d == 1 and z.history is OpHistory.ADD
    assert z.cores[0].entry_set() == {(0, 0, 1, 2.0)}


def test_product_canonical_and_powers(reg):
    x, y, w = core.iid(reg, mixture.dice(3), 3)
    p = arith.multiply(arith.multiply(x, y), arith.multiply(x, w))
    assert p.history is OpHistory.MULT
    assert p.ranks == [1, 1, 1, 1]
    assert [c.entries() for c in p.cores] == [[(0, 0, 2, 1.0)], [(0, 0, 1, 1.0)], [(0, 0, 1, 1.0)]]
    a, b, c = grid(*[np.arange(1.0, 4.0)] * 3)
    np.testing.assert_allclose(brute(p), a * a * b * c)


def test_scaled_product_stays_rank_one(reg):
    x, y = core.iid(reg, mixture.dice(3), 2)
    p = arith.scale(arith.multiply(x, y), 3.0)
    assert p.history is OpHistory.MULT and p.ranks == [1, 1, 1]
    q = arith.multiply(p, arith.scale(x, 2.0))
    assert q.history is OpHistory.MULT
    a, b = grid(np.arange(1.0, 4.0), np.arange(1.0, 4.0))
    np.testing.assert_allclose(brute(q), 6 * a * a * b)


def test_mixed_expression_values(reg):
    x = core.leaf(reg, mixture.from_gaussian(0, 1, 3))
    y = arith.subtract(arith.scale(x, 2.0), arith.multiply(x, x))
    assert y.history is OpHistory.MIXED
    s = reg.mixture(x.dists[0]).support
    np.testing.assert_allclose(brute(y), 2 * s - s * s, rtol=1e-15)


def test_general_add_and_mul_values(reg):
    x, y, z = core.iid(reg, mixture.from_uniform(0, 1, 2), 3)
    s = arith.add(x, y)
    p = arith.multiply(y, z)
    out = arith.multiply(s, p)
    a, b, c = grid(*[reg.mixture(x.dists[0]).support] * 3)
    np.testing.assert_allclose(brute(out), (a + b) * b * c, rtol=1e-14)
    out2 = arith.subtract(s, p)
    np.testing.assert_allclose(brute(out2), a + b - b * c, rtol=1e-14)


def test_shift_of_product_is_mixed(reg):
    x, y = core.iid(reg, mixture.dice(2), 2)
    p = arith.shift(arith.multiply(x, y), 1.5)
    assert p.history is OpHistory.MIXED
    a, b = grid([1.0, 2.0], [1.0, 2.0])
    np.testing.assert_allclose(brute(p), a * b + 1.5)


def test_scale_by_one_and_shift_by_zero_are_identity(reg):
    x = core.leaf(reg, mixture.dice(2))
    assert arith.scale(x, 1.0) is x
    assert arith.shift(x, 0.0) is x


def test_x_minus_x_is_zero(reg):
    x = core.leaf(reg, mixture.dice(6))
    z = arith.subtract(x, x)
    np.testing.assert_array_equal(brute(z), np.zeros(6))


def test_hadamard_power(reg):
    x, y = core.iid(reg, mixture.dice(3), 2)
    s = arith.add(x, y)
    s3 = arith.hadamard_power(s, 3)
    a, b = grid(np.arange(1.0, 4.0), np.arange(1.0, 4.0))
    np.testing.assert_allclose(brute(s3), (a + b) ** 3)
    p = arith.hadamard_power(arith.multiply(x, y), 4)
    assert p.history is OpHistory.MULT
    assert [c.entries() for c in p.cores] == [[(0, 0, 4, 1.0)], [(0, 0, 4, 1.0)]]
    with pytest.raises(ValueError):
        arith.hadamard_power(s, 0)


def test_power_overflow(reg):
    x = core.leaf(reg, mixture.dice(2))
    with pytest.raises(PowerOverflowError):
        arith.hadamard_power(x, core.MAX_POWER + 1)


def test_entry_cap_guard(reg):
    xs = core.iid(reg, mixture.dice(2), 8)
    s = arith.tt_sum(xs)
    old = arith.set_entry_cap(10)
    try:
        with pytest.raises(MemoryGuardError):
            arith.multiply(s, s)
    finally:
        arith.set_entry_cap(old)
    assert arith.get_entry_cap() == old


def test_different_registries_rejected():
    x = core.leaf(Registry(), mixture.dice(2))
    y = core.leaf(Registry(), mixture.dice(2))
    with pytest.raises(ValueError):
        arith.add(x, y)
    with pytest.raises(ValueError):
        arith.multiply(x, y)


def test_block_core_layouts():
    a = SparseCore.from_entries(2, 2, [(0, 0, 1, 1.0), (1, 1, 0, 2.0)])
    b = SparseCore.from_entries(1, 1, [(0, 0, 2, 3.0)])
    inner = block_core(a, b, "inner")
    assert (inner.r_left, inner.r_right) == (3, 3)
    assert inner.entry_set() == {(0, 0, 1, 1.0), (1, 1, 0, 2.0), (2, 2, 2, 3.0)}
    f1 = SparseCore.from_entries(1, 2, [(0, 1, 1, 1.0)])
    first = block_core(f1, b, "first")
    assert (first.r_left, first.r_right) == (1, 3)
    assert (0, 2, 2, 3.0) in first.entry_set()
    l1 = SparseCore.from_entries(2, 1, [(1, 0, 1, 1.0)])
    last = block_core(l1, b, "last")
    assert (last.r_left, last.r_right) == (3, 1)
    assert (2, 0, 2, 3.0) in last.entry_set()


def test_kron_core_is_left_major():
    a = SparseCore.from_entries(1, 2, [(0, 1, 1, 2.0)])
    b = SparseCore.from_entries(1, 2, [(0, 0, 1, 3.0), (0, 1, 0, 1.0)])
    k = kron_core(a, b, merge=False)
    assert (k.r_left, k.r_right) == (1, 4)
    assert k.entry_set() == {(0, 2, 2, 6.0), (0, 3, 1, 2.0)}


def test_merge_duplicates_sums_and_drops_zero():
    c = SparseCore.from_entries(1, 1, [(0, 0, 1, 2.0), (0, 0, 1, -2.0), (0, 0, 0, 1.0), (0, 0, 0, 0.5)])
    m = merge_duplicates(c)
    assert m.entry_set() == {(0, 0, 0, 1.5)}


def test_linear_combination(reg):
    xs = core.iid(reg, mixture.dice(2), 3)
    z = arith.linear_combination(xs, [1.0, -2.0, 0.5], const=3.0)
    assert z.history is OpHistory.ADD
    grids = grid(*[np.array([1.0, 2.0])] * 3)
    np.testing.assert_allclose(brute(z), grids[0] - 2 * grids[1] + 0.5 * grids[2] + 3)


def test_operator_sugar(reg):
    x, y = core.iid(reg, mixture.dice(3), 2)
    z = 2 * x - y * x + 1 - (-y) ** 2
    a, b = grid(np.arange(1.0, 4.0), np.arange(1.0, 4.0))
    np.testing.assert_allclose(brute(z), 2 * a - b * a + 1 - b ** 2)
    w = 5 - x
    np.testing.assert_allclose(brute(w), 5 - np.arange(1.0, 4.0))


def test_sum_rank_does_not_grow(reg):
    xs = core.iid(reg, mixture.from_gaussian(0, 1, 3), 50)
    z = arith.tt_sum(xs)
    assert max(z.ranks) == 2
    assert z.nnz_per_core[1:-1] == [3] * 48


@pytest.mark.parametrize("op", [arith.add, arith.multiply])
def test_associativity_of_values(reg, op):
    x, y, z = core.iid(reg, mixture.from_uniform(-1, 1, 1), 3)
    np.testing.assert_allclose(brute(op(op(x, y), z)), brute(op(x, op(y, z))), rtol=1e-15, atol=1e-15)
