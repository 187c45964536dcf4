import numpy as np
import pytest

from ttdist import mixture, oracle
from ttdist.errors import SizeLimitError
from ttdist.oracle import DenseTensorPair, dense_combine


def die(k):
    return DenseTensorPair.leaf(mixture.dice(6), k)


def test_two_dice_by_hand():
    z = dense_combine(die(0), die(1), "add")
    f = np.arange(1, 7)
    np.testing.assert_array_equal(z.support, f[:, None] + f[None, :])
    assert z.mass.shape == (6, 6)
    assert oracle.dense_moment(z, 1) == pytest.approx(7.0, rel=1e-15)
    assert oracle.dense_variance(z) == pytest.approx(35 / 6, rel=1e-14)


def test_shared_ancestor_is_one_axis():
    x = die(0)
    z = dense_combine(x, x, "mul")
    assert z.support.shape == (6,)
    np.testing.assert_array_equal(z.support, np.arange(1, 7) ** 2)


def test_axis_order_follows_ancestor_ids():
    a, b = die(5), DenseTensorPair.leaf(mixture.dice(2), 3)
    z = dense_combine(a, b, "sub")
    assert z.ancestors == (3, 5)
    assert z.support.shape == (2, 6)
    assert z.support[1, 0] == 1 - 2


def test_limit():
    with pytest.raises(SizeLimitError):
        dense_combine(die(0), die(1), "add", limit=35)


def test_operators_and_constants():
    x, y = die(0), die(1)
    z = 2 * x - y + 1
    assert oracle.dense_moment(z, 1) == pytest.approx(4.5)
    assert (-x).support[0] == -1
    c = DenseTensorPair.constant(3.0)
    assert oracle.dense_moment(c, 2) == 9.0


def test_covariance():
    x, y = die(0), die(1)
    assert oracle.dense_cov(x + y, x) == pytest.approx(35 / 12, rel=1e-13)
    assert oracle.dense_cov(x, y) == pytest.approx(0.0, abs=1e-14)


def test_inconsistent_ancestor_sizes():
    with pytest.raises(ValueError):
        dense_combine(die(0), DenseTensorPair.leaf(mixture.dice(2), 0), "add")


def test_mc_is_seeded_and_shard_invariant_in_expectation():
    samplers = [oracle.uniform_sampler(0, 1)] * 3
    f = lambda s: s.sum(axis=1)
    a = oracle.mc_estimate(f, samplers, 20_000, seed=7)
    b = oracle.mc_estimate(f, samplers, 20_000, seed=7)
    assert a == b
    assert abs(a.mean - 1.5) < 5 * a.stderr
    c = oracle.mc_estimate(f, samplers, 20_000, seed=7, shards=4, workers=2)
    d = oracle.mc_estimate(f, samplers, 20_000, seed=7, shards=4, workers=1)
    assert c.mean == d.mean and c.stderr == d.stderr
    assert abs(c.mean - 1.5) < 5 * c.stderr


def test_mc_constant_integrand_is_exact():
    r = oracle.mc_estimate(lambda s: np.full(len(s), 2.5), [oracle.normal_sampler(0, 1)], 1000, seed=1)
    assert r.mean == 2.5 and r.stderr == 0.0


def test_mc_rademacher_values():
    rng = oracle.make_rng(3)
    v = oracle.rademacher_sampler()(rng, 1000)
    assert set(np.unique(v)) == {-1.0, 1.0}


def test_mc_rejects_empty():
    with pytest.raises(ValueError):
        oracle.mc_estimate(lambda s: s[:, 0], [oracle.normal_sampler(0, 1)], 0, seed=0)
