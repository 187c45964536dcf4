"""Reproducible desk-scale experiments returning :class:`RunRecord` lists.

Every record echoes the configuration that produced it.  Wall-clock times are
reported for information only.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import arith, core, mixture, oracle, stats
from .core import Registry, TTVariable
from .errors import SizeLimitError


@dataclass
class RunRecord:
    experiment: str
    method: str  # tt, dense, mc, analytic, direct
    values: dict
    wall_time_s: float = 0.0
    memory_doubles: int | None = None
    ranks: list | None = None
    nnz: list | None = None
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _plain(asdict(self))


def _plain(obj):
    """Numpy scalars and arrays to built-in types, recursively."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _tt_shape(*xs: TTVariable) -> dict:
    """Memory and the widest rank/nnz profile among the variables."""
    widest = max(xs, key=lambda x: max(x.ranks))
    return {"memory_doubles": core.memory_doubles(*xs), "ranks": widest.ranks, "nnz": widest.nnz_per_core}


def rel_err(value: float, exact: float) -> float:
    return abs(value - exact) / abs(exact) if exact != 0 else abs(value)


# ----------------------------------------------------------------------- dice


def experiment_dice(count: int = 1000, faces: int = 6, oracle_limit: int | None = None) -> list[RunRecord]:
    """Sum of ``count`` fair dice."""
    cfg = {"count": count, "faces": faces}
    t0 = time.perf_counter()
    reg = Registry()
    z = arith.tt_sum(core.iid(reg, mixture.dice(faces), count))
    mu, var = stats.mean(z), stats.variance(z)
    elapsed = time.perf_counter() - t0
    recs = [RunRecord("dice", "tt", {"mean": mu, "variance": var}, elapsed, config=cfg, **_tt_shape(z))]
    exact_var = count * (faces * faces - 1) / 12.0
    recs.append(RunRecord("dice", "analytic", {"mean": count * (faces + 1) / 2.0, "variance": exact_var}, config=cfg))
    if oracle_limit is not None:
        t0 = time.perf_counter()
        dz = dense_sum([mixture.dice(faces)] * count, oracle_limit)
        vals = {"mean": oracle.dense_moment(dz, 1), "variance": oracle.dense_variance(dz)}
        recs.append(RunRecord("dice", "dense", vals, time.perf_counter() - t0, config=cfg))
    return recs


def dense_sum(mixtures, limit: int = oracle.DENSE_LIMIT) -> oracle.DenseTensorPair:
    out = oracle.DenseTensorPair.leaf(mixtures[0], 0)
    for k, m in enumerate(mixtures[1:], start=1):
        out = oracle.dense_combine(out, oracle.DenseTensorPair.leaf(m, k), "add", limit)
    return out


def dense_prod(mixtures, limit: int = oracle.DENSE_LIMIT) -> oracle.DenseTensorPair:
    out = oracle.DenseTensorPair.leaf(mixtures[0], 0)
    for k, m in enumerate(mixtures[1:], start=1):
        out = oracle.dense_combine(out, oracle.DenseTensorPair.leaf(m, k), "mul", limit)
    return out


# ---------------------------------------------------------------- integration


def integrate_product(
    d: int = 5, n: int = 16, lower: float = 1.0, upper: float = 2.0, mc_samples: int = 100_000, seed: int = 0,
    oracle_limit: int | None = None,
) -> list[RunRecord]:
    """Integral of ``prod_k x_k`` over the cube ``[lower, upper]**d``.

    Written as ``(upper - lower)**d * E[prod X_k]`` with ``X_k`` uniform.
    """
    cfg = {"d": d, "n": n, "lower": lower, "upper": upper, "mc_samples": mc_samples, "seed": seed}
    volume = (upper - lower) ** d
    exact = ((upper * upper - lower * lower) / 2.0) ** d

    t0 = time.perf_counter()
    reg = Registry()
    x = core.iid(reg, mixture.from_uniform(lower, upper, mixture.level_for_points(n)), d)
    w = arith.tt_prod(x)
    tt = volume * stats.mean(w)
    recs = [
        RunRecord("integrate-product", "tt", {"integral": tt, "rel_err": rel_err(tt, exact)},
                  time.perf_counter() - t0, config=cfg, **_tt_shape(w)),
        RunRecord("integrate-product", "analytic", {"integral": exact}, config=cfg),
    ]
    if oracle_limit is not None:
        t0 = time.perf_counter()
        um = reg.mixture(x[0].dists[0])
        dv = volume * oracle.dense_moment(dense_prod([um] * d, oracle_limit), 1)
        recs.append(RunRecord("integrate-product", "dense", {"integral": dv, "rel_err": rel_err(dv, exact)},
                              time.perf_counter() - t0, config=cfg))
    if mc_samples > 0:
        t0 = time.perf_counter()
        res = oracle.mc_estimate(lambda s: s.prod(axis=1), [oracle.uniform_sampler(lower, upper)] * d, mc_samples, seed)
        mc = volume * res.mean
        recs.append(RunRecord("integrate-product", "mc",
                              {"integral": mc, "stderr": volume * res.stderr, "rel_err": rel_err(mc, exact)},
                              time.perf_counter() - t0, config=cfg))
    return recs


def orthogonal_matrix(d: int, seed: int) -> np.ndarray:
    """QR of a seeded Gaussian matrix with the diagonal of R made positive."""
    g = oracle.make_rng(seed).standard_normal((d, d))
    q, r = np.linalg.qr(g)
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def integrate_orthogonal(
    d: int = 40, n: int = 8, seed: int = 0, mc_samples: int = 10_000, matrix: np.ndarray | None = None,
    oracle_limit: int | None = None,
) -> list[RunRecord]:
    """Integral of ``sum_i y_i`` for ``y = A x`` over the image of the unit cube.

    By change of variables this is ``|det A| * E[sum_j (sum_i A_ij) X_j]``
    with ``X_j`` uniform on ``[0, 1]``, a pure weighted sum.
    """
    a = orthogonal_matrix(d, seed) if matrix is None else np.asarray(matrix, dtype=float)
    d = a.shape[0]
    cfg = {"d": d, "n": n, "seed": seed, "mc_samples": mc_samples}
    det = math.exp(np.linalg.slogdet(a)[1])
    weights = a.sum(axis=0)
    exact = det * math.fsum(a.ravel()) / 2.0

    t0 = time.perf_counter()
    reg = Registry()
    x = core.iid(reg, mixture.from_uniform(0.0, 1.0, mixture.level_for_points(n)), d)
    y = arith.linear_combination(x, weights)
    tt = det * stats.mean(y)
    recs = [
        RunRecord("integrate-orthogonal", "tt", {"integral": tt, "rel_err": rel_err(tt, exact)},
                  time.perf_counter() - t0, config=cfg, **_tt_shape(y)),
        RunRecord("integrate-orthogonal", "analytic", {"integral": exact, "abs_det": det}, config=cfg),
    ]
    if oracle_limit is not None:
        t0 = time.perf_counter()
        um = reg.mixture(x[0].dists[0])
        acc = oracle.DenseTensorPair.constant(0.0)
        for k, wk in enumerate(weights):
            term = oracle.dense_scale(oracle.DenseTensorPair.leaf(um, k), wk)
            acc = oracle.dense_combine(acc, term, "add", oracle_limit)
        dv = det * oracle.dense_moment(acc, 1)
        recs.append(RunRecord("integrate-orthogonal", "dense", {"integral": dv, "rel_err": rel_err(dv, exact)},
                              time.perf_counter() - t0, config=cfg))
    if mc_samples > 0:
        t0 = time.perf_counter()
        res = oracle.mc_estimate(lambda s: s @ weights, [oracle.uniform_sampler(0.0, 1.0)] * d, mc_samples, seed)
        mc = det * res.mean
        recs.append(RunRecord("integrate-orthogonal", "mc",
                              {"integral": mc, "stderr": det * res.stderr, "rel_err": rel_err(mc, exact)},
                              time.perf_counter() - t0, config=cfg))
    return recs


# -------------------------------------------------------- Brownian integrals


def ibm_variables(steps: int, n: int, horizon: float, registry: Registry | None = None):
    """``(W_T, I1, I2)`` on tensor trains for a left-point discretized path.

    ``I1 = sum_i W_{i-1} dt`` is rewritten as ``sum_j (steps - j) dt dW_j`` so
    it is a single weighted sum; ``I2 = sum_i W_{i-1} dW_i`` is built term by
    term and summed pairwise.
    """
    reg = registry if registry is not None else Registry()
    dt = horizon / steps
    dw = core.iid(reg, mixture.from_gaussian(0.0, math.sqrt(dt), mixture.level_for_points(n)), steps)
    w_t = arith.tt_sum(dw)
    # the last increment has weight zero in I1
    if steps > 1:
        i1 = arith.linear_combination(dw[:-1], [(steps - j) * dt for j in range(1, steps)])
    else:
        i1 = arith.scale(dw[0], 0.0)
    terms = []
    for i in range(1, steps):
        w_prev = arith.tt_sum(dw[:i])
        terms.append(arith.multiply(w_prev, dw[i]))
    i2 = arith.tt_sum(terms) if terms else arith.scale(dw[0], 0.0)
    return w_t, i1, i2


def ibm_dense(steps: int, n: int, horizon: float, limit: int = oracle.DENSE_LIMIT):
    """The same three quantities by enumeration, from their literal definitions."""
    dt = horizon / steps
    m = mixture.from_gaussian(0.0, math.sqrt(dt), mixture.level_for_points(n))
    dw = [oracle.DenseTensorPair.leaf(m, k) for k in range(steps)]
    zero = oracle.DenseTensorPair.constant(0.0)
    w = [zero]
    for inc in dw:
        w.append(oracle.dense_combine(w[-1], inc, "add", limit))
    i1 = zero
    for i in range(1, steps + 1):
        i1 = oracle.dense_combine(i1, oracle.dense_scale(w[i - 1], dt), "add", limit)
    i2 = zero
    for i in range(1, steps + 1):
        i2 = oracle.dense_combine(i2, oracle.dense_combine(w[i - 1], dw[i - 1], "mul", limit), "add", limit)
    return w[-1], i1, i2


def _ibm_mc(steps: int, horizon: float, samples: int, seed: int, chunk: int = 20_000) -> dict:
    rng = oracle.make_rng(seed)
    dt = horizon / steps
    weights = np.array([(steps - j) * dt for j in range(1, steps + 1)])
    sums = np.zeros(3)
    squares = np.zeros(3)
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        inc = rng.normal(0.0, math.sqrt(dt), size=(k, steps))
        w = np.cumsum(inc, axis=1)
        w_prev = w - inc
        vals = np.stack([w[:, -1], inc @ weights, (w_prev * inc).sum(axis=1)], axis=1)
        sums += vals.sum(axis=0)
        squares += (vals * vals).sum(axis=0)
        done += k
    mean = sums / samples
    var = np.maximum(squares / samples - mean * mean, 0.0)
    stderr = np.sqrt(var / samples)
    return {
        "mean_W_T": mean[0], "mean_I1": mean[1], "mean_I2": mean[2],
        "stderr_W_T": stderr[0], "stderr_I1": stderr[1], "stderr_I2": stderr[2],
    }


def ibm(
    steps: int = 126, n: int = 128, horizon: float | None = None, seed: int = 0,
    mc_samples: int = 100_000, second_moments: bool = False, oracle_limit: int | None = None,
) -> list[RunRecord]:
    """Brownian motion and its time and Ito integrals on ``[0, horizon]``.

    ``horizon`` defaults to ``steps`` (unit time step).
    """
    horizon = float(steps if horizon is None else horizon)
    cfg = {"steps": steps, "n": n, "T": horizon, "seed": seed, "mc_samples": mc_samples}
    t0 = time.perf_counter()
    reg = Registry()
    w_t, i1, i2 = ibm_variables(steps, n, horizon, reg)
    vals = {"mean_W_T": stats.mean(w_t), "mean_I1": stats.mean(i1), "mean_I2": stats.mean(i2)}
    if second_moments:
        vals.update({"m2_W_T": stats.moment(w_t, 2), "m2_I1": stats.moment(i1, 2), "m2_I2": stats.moment(i2, 2)})
    recs = [RunRecord("ibm", "tt", vals, time.perf_counter() - t0, config=cfg, **_tt_shape(w_t, i1, i2))]
    exact = {"mean_W_T": 0.0, "mean_I1": 0.0, "mean_I2": 0.0}
    if second_moments:
        exact.update({"m2_W_T": horizon, "m2_I1": None, "m2_I2": None})
    recs.append(RunRecord("ibm", "analytic", {k: v for k, v in exact.items() if v is not None}, config=cfg))
    if oracle_limit is not None:
        t0 = time.perf_counter()
        dense = dict(zip(("W_T", "I1", "I2"), ibm_dense(steps, n, horizon, oracle_limit)))
        dvals = {f"mean_{k}": oracle.dense_moment(v, 1) for k, v in dense.items()}
        if second_moments:
            dvals.update({f"m2_{k}": oracle.dense_moment(v, 2) for k, v in dense.items()})
        recs.append(RunRecord("ibm", "dense", dvals, time.perf_counter() - t0, config=cfg))
    if mc_samples > 0:
        t0 = time.perf_counter()
        recs.append(RunRecord("ibm", "mc", _ibm_mc(steps, horizon, mc_samples, seed), time.perf_counter() - t0, config=cfg))
    return recs


# ----------------------------------------------------------------- Hutchinson


def random_spd(d: int, seed: int, low: float = 0.1, high: float = 1.0) -> np.ndarray:
    """``Q diag(lam) Q^T`` with seeded eigenvalues uniform in ``[low, high]``."""
    rng = oracle.make_rng(seed)
    lam = rng.uniform(low, high, size=d)
    q = orthogonal_matrix(d, int(rng.integers(2 ** 63 - 1)))
    a = (q * lam) @ q.T
    return (a + a.T) / 2.0


def read_matrix(path: str | Path) -> np.ndarray:
    a = np.loadtxt(path, delimiter=",", ndmin=2)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix in {path} is {a.shape[0]}x{a.shape[1]}, not square")
    return a


def quadratic_form(a: np.ndarray, v: list[TTVariable]) -> TTVariable:
    """``v^T A v`` as ``sum_i v_i * (A_ii v_i + 2 sum_{j>i} A_ij v_j)``."""
    d = a.shape[0]
    rows = []
    for i in range(d):
        inner = arith.linear_combination(v[i:], [a[i, i]] + [2.0 * a[i, j] for j in range(i + 1, d)])
        rows.append(arith.multiply(v[i], inner))
    return arith.tt_sum(rows)


def hutchinson(
    d: int = 20, seed: int = 0, matrix: np.ndarray | None = None, mc_samples: int = 10_000,
    oracle_limit: int | None = None,
) -> list[RunRecord]:
    """Trace of an SPD matrix as ``E[v^T A v]`` over Rademacher ``v``."""
    a = random_spd(d, seed) if matrix is None else np.asarray(matrix, dtype=float)
    d = a.shape[0]
    cfg = {"d": d, "seed": seed, "mc_samples": mc_samples, "matrix": "given" if matrix is not None else "random"}
    t0 = time.perf_counter()
    trace = float(np.trace(a))
    recs = [RunRecord("hutchinson", "direct", {"trace": trace}, time.perf_counter() - t0, config=cfg)]
    t0 = time.perf_counter()
    reg = Registry()
    q = quadratic_form(a, core.iid(reg, mixture.rademacher(), d))
    est = stats.mean(q)
    recs.append(RunRecord("hutchinson", "tt", {"trace": est, "rel_err": rel_err(est, trace)},
                          time.perf_counter() - t0, config=cfg, **_tt_shape(q)))
    if oracle_limit is not None:
        t0 = time.perf_counter()
        v = [oracle.DenseTensorPair.leaf(mixture.rademacher(), k) for k in range(d)]
        acc = oracle.DenseTensorPair.constant(0.0)
        for i in range(d):
            for j in range(d):
                term = oracle.dense_scale(oracle.dense_combine(v[i], v[j], "mul", oracle_limit), a[i, j])
                acc = oracle.dense_combine(acc, term, "add", oracle_limit)
        dv = oracle.dense_moment(acc, 1)
        recs.append(RunRecord("hutchinson", "dense", {"trace": dv, "rel_err": rel_err(dv, trace)},
                              time.perf_counter() - t0, config=cfg))
    if mc_samples > 0:
        t0 = time.perf_counter()
        res = oracle.mc_estimate(lambda s: np.einsum("si,ij,sj->s", s, a, s), [oracle.rademacher_sampler()] * d,
                                 mc_samples, seed)
        recs.append(RunRecord("hutchinson", "mc", {"trace": res.mean, "stderr": res.stderr,
                                                   "rel_err": rel_err(res.mean, trace)},
                              time.perf_counter() - t0, config=cfg))
    return recs


# ------------------------------------------------------------ basic benchmark


def _time_tt(op: str, m: mixture.DiracMixture, d: int) -> tuple[float, float, float, TTVariable]:
    t0 = time.perf_counter()
    reg = Registry()
    x = core.iid(reg, m, d)
    z = arith.tt_sum(x) if op == "sum" else arith.tt_prod(x)
    mu, var = stats.mean(z), stats.variance(z)
    return time.perf_counter() - t0, mu, var, z


def _time_dense(op: str, m: mixture.DiracMixture, d: int, limit: int) -> tuple[float, float, float]:
    t0 = time.perf_counter()
    z = dense_sum([m] * d, limit) if op == "sum" else dense_prod([m] * d, limit)
    mu, var = oracle.dense_moment(z, 1), oracle.dense_variance(z)
    return time.perf_counter() - t0, mu, var


def bench_basic(max_d: int = 5, n: int = 32, dense_limit: int = 2 ** 26, repeats: int = 1) -> list[RunRecord]:
    """Sums and products of ``d`` standard Gaussians for ``d = 1..max_d``.

    Each cell records the best of ``repeats`` timings of construction plus
    mean and variance, for the tensor train and for dense enumeration.
    """
    m = mixture.from_gaussian(0.0, 1.0, mixture.level_for_points(n))
    recs = []
    for op in ("sum", "prod"):
        for d in range(1, max_d + 1):
            cfg = {"op": op, "d": d, "n": n, "repeats": repeats}
            runs = [_time_tt(op, m, d) for _ in range(repeats)]
            t_tt = min(r[0] for r in runs)
            _, mu, var, z = runs[-1]
            recs.append(RunRecord("bench-basic", "tt", {"mean": mu, "variance": var}, t_tt, config=cfg, **_tt_shape(z)))
            try:
                dense_runs = [_time_dense(op, m, d, dense_limit) for _ in range(repeats)]
            except SizeLimitError:
                continue
            t_dense = min(r[0] for r in dense_runs)
            _, dmu, dvar = dense_runs[-1]
            recs.append(RunRecord("bench-basic", "dense", {
                "mean": dmu, "variance": dvar, "abs_err_mean": abs(mu - dmu), "abs_err_variance": abs(var - dvar),
            }, t_dense, memory_doubles=2 * n ** d, config=cfg))
    return recs


# ------------------------------------------------------------------ histogram


def histogram(support: np.ndarray, mass: np.ndarray, bins: int) -> np.ndarray:
    """Total mass per bin; ``bins`` equal bins whose centres run from min to max.

    Returns rows ``(bin_left, bin_right, mass)``.
    """
    if bins < 1:
        raise ValueError("need at least one bin")
    support = np.asarray(support, dtype=float).ravel()
    mass = np.asarray(mass, dtype=float).ravel()
    lo, hi = float(support.min()), float(support.max())
    width = (hi - lo) / (bins - 1) if bins > 1 and hi > lo else 1.0
    idx = np.clip(np.floor((support - lo) / width + 0.5).astype(np.int64), 0, bins - 1)
    totals = np.bincount(idx, weights=mass, minlength=bins)
    left = lo - width / 2.0 + width * np.arange(bins)
    return np.column_stack([left, left + width, totals])


def histogram_of(x: TTVariable, bins: int, limit: int = core.DEFAULT_ENUMERATE_LIMIT) -> np.ndarray:
    t = core.enumerate_tt(x, limit)
    return histogram(t.flat_support, t.flat_mass, bins)
