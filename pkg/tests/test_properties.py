import math

import numpy as np
from hypothesis import given, settings, strategies as st

from ttdist import arith, core, mixture, oracle, stats
from ttdist.core import OpHistory, Registry

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


@st.composite
def mixtures(draw, max_n=6):
    n = draw(st.integers(1, max_n))
    pts = draw(st.lists(finite, min_size=n, max_size=n, unique=True))
    w = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n)))
    return mixture.from_discrete(pts, w / math.fsum(w))


@settings(max_examples=60, deadline=None)
@given(finite, st.floats(0.01, 20), st.integers(0, 8))
def test_gaussian_mean_and_mass(mu, sigma, level):
    g = mixture.from_gaussian(mu, sigma, level)
    assert abs(math.fsum(g.mass) - 1.0) <= 1e-12
    assert abs(g.mean() - mu) <= 1e-12 * max(1.0, abs(mu), sigma)
    assert len(g) == 2 ** level


@settings(max_examples=60, deadline=None)
@given(finite, st.floats(0.01, 20), st.integers(0, 8))
def test_uniform_mean_and_mass(a, width, level):
    u = mixture.from_uniform(a, a + width, level)
    assert abs(math.fsum(u.mass) - 1.0) <= 1e-12
    assert abs(u.mean() - (a + width / 2)) <= 1e-12 * max(1.0, abs(a) + width)


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=1, max_size=200), st.integers(0, 6))
def test_empirical_mean_and_mass(xs, level):
    m = mixture.from_samples(xs, level)
    assert abs(math.fsum(m.mass) - 1.0) <= 1e-12
    assert abs(m.mean() - math.fsum(xs) / len(xs)) <= 1e-12 * max(1.0, max(abs(x) for x in xs))


@settings(max_examples=40, deadline=None)
@given(st.lists(mixtures(), min_size=1, max_size=5), st.lists(finite, min_size=5, max_size=5), finite)
def test_weighted_sum_is_canonical_and_linear(ms, weights, const):
    reg = Registry()
    xs = [core.leaf(reg, m) for m in ms]
    z = arith.linear_combination(xs, weights[: len(xs)], const)
    if len(xs) > 1:
        assert z.history is OpHistory.ADD
        assert z.ranks == [1] + [2] * (len(xs) - 1) + [1]
        assert all(n == 3 for n in z.nnz_per_core[1:-1])
    want = const + sum(w * m.mean() for w, m in zip(weights, ms))
    scale = abs(const) + sum(abs(w) * float(np.abs(m.support).max()) for w, m in zip(weights, ms))
    assert abs(stats.mean(z) - want) <= 1e-12 * max(1.0, scale)


@settings(max_examples=40, deadline=None)
@given(st.lists(mixtures(), min_size=1, max_size=5))
def test_product_is_rank_one_and_mean_multiplies(ms):
    reg = Registry()
    p = arith.tt_prod([core.leaf(reg, m) for m in ms])
    assert p.ranks == [1] * (len(ms) + 1)
    assert p.nnz_per_core == [1] * len(ms)
    want = math.prod(m.mean() for m in ms)
    scale = math.prod(float(np.abs(m.support).max()) for m in ms)
    assert abs(stats.mean(p) - want) <= 1e-12 * max(scale, 1e-300)


@settings(max_examples=40, deadline=None)
@given(mixtures(4), mixtures(4), mixtures(4))
def test_add_and_multiply_commute(a, b, c):
    reg = Registry()
    x, y, z = core.leaf(reg, a), core.leaf(reg, b), core.leaf(reg, c)
    t1 = core.enumerate_tt(arith.multiply(arith.add(x, y), z)).support
    t2 = core.enumerate_tt(arith.multiply(z, arith.add(y, x))).support
    top = lambda m: float(np.abs(m.support).max())
    assert np.all(np.abs(t1 - t2) <= 1e-13 * (top(a) + top(b)) * top(c))


@settings(max_examples=40, deadline=None)
@given(mixtures(5), st.integers(1, 4))
def test_hadamard_power_matches_dense(m, k):
    reg = Registry()
    x = core.leaf(reg, m)
    s = arith.shift(arith.scale(x, 0.5), 1.0)
    tt = core.enumerate_tt(arith.hadamard_power(s, k)).support
    want = (0.5 * m.support + 1.0) ** k
    assert np.allclose(tt, want, rtol=1e-12, atol=1e-12 * float(np.abs(want).max()))


@settings(max_examples=30, deadline=None)
@given(mixtures(4), mixtures(4))
def test_covariance_symmetric_and_matches_dense(a, b):
    reg = Registry()
    x, y = core.leaf(reg, a), core.leaf(reg, b)
    u, v = arith.add(x, y), arith.multiply(x, y)
    c1, c2 = stats.covariance(u, v), stats.covariance(v, u)
    dense = oracle.dense_cov(core.enumerate_tt(u), core.enumerate_tt(v))
    scale = (float(np.abs(a.support).max()) + float(np.abs(b.support).max())) ** 3
    assert abs(c1 - c2) <= 1e-12 * max(scale, 1.0)
    assert abs(c1 - dense) <= 1e-12 * max(scale, 1.0)
