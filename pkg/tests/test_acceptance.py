"""Acceptance criteria, numbered 1-12, each at its stated tolerance.

Independent oracles: criterion 2 re-derives the first-power bound from a
1-D grid over the symmetric distribution family with its own entropy brute
force; criterion 6 checks hand-derived closed forms; criterion 7 compares
the entropy solver against a kernel-grid search.
"""

import itertools
import json
import math
import os
import statistics
import subprocess
import sys
import time

import numpy as np
import pytest

from laserlab import construction_sim as cs
from laserlab.distributions import (
    SupportDistribution,
    entropy,
    marginals,
    ratio_drift_check,
    round_to_grid,
)
from laserlab.laser_engine import (
    EngineConfig,
    analyze_cw,
    classic_bound,
    omega_bound,
    refined_bound,
    schonhage_tau,
)
from laserlab.solver import (
    kernel_basis,
    max_entropy_with_marginals,
    solve_problem1,
)

TOY = tuple(sorted(itertools.permutations((0, 1, 2))))
CW_SUPPORT = tuple(sorted({
    (0, 0, 2), (0, 2, 0), (2, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0),
}))
FAST = EngineConfig(heuristics_small=(2, 4), heuristic_iter_cap=5000)


def _entropy_vec(w):
    return float(-sum(p * math.log(p) for p in w if p > 1e-300))


def _brute_max_entropy(support, alpha_weights, span=1.5):
    """Max entropy over the marginal class, by direct search along the kernel.

    Independent of the IPF solver: multi-scale coordinate grid over the
    nullspace of the marginal map (dimension <= 2 required).
    """
    basis = kernel_basis(support)
    dim = basis.shape[0]
    assert dim <= 2, f"kernel dimension {dim} too large for the brute oracle"
    w0 = np.array(alpha_weights, dtype=float)

    def value(coeffs):
        w = w0 + sum(c * basis[d] for d, c in enumerate(coeffs))
        if np.any(w < -1e-13):
            return -math.inf
        return _entropy_vec(np.maximum(w, 0.0))

    if dim == 0:
        return _entropy_vec(w0)
    center = [0.0] * dim
    width = span
    best = value(center)
    for _ in range(24):
        grid = np.linspace(-width, width, 17)
        if dim == 1:
            points = [[c] for c in grid]
        else:
            points = [[c1, c2] for c1 in grid for c2 in grid]
        for p in points:
            cand = [center[d] + p[d] for d in range(dim)]
            v = value(cand)
            if v > best:
                best, center = v, cand
        width *= 0.35
    return best


def test_criterion_1_schonhage_anchor():
    t0 = time.monotonic()
    tau = schonhage_tau([(2, 2, 2)], 7.0)
    elapsed = time.monotonic() - t0
    assert abs(3 * tau - 2.807355) < 1e-6
    assert elapsed < 1.0


def _cw_t1_log_values(q, tau):
    # Hand-derived leaf values: the (0,1,1)-type class is <1,1,q>, the
    # (0,0,2)-type class is <1,1,1>.
    return {t: (tau * math.log(q) if sorted(t) == [0, 1, 1] else 0.0)
            for t in CW_SUPPORT}


def _oracle_refined_at(q, tau, a, lv):
    b = (1.0 - 3 * a) / 3.0
    weights = [a if sorted(t) == [0, 0, 2] else b for t in CW_SUPPORT]
    log_v = sum(w * lv[t] for w, t in zip(weights, CW_SUPPORT))
    # Per-side marginal (same on each side by symmetry).
    marg = (2 * a + b, 2 * b, a)
    log_b = _entropy_vec(marg)
    h_alpha = _entropy_vec(weights)
    h_max = max(_brute_max_entropy(CW_SUPPORT, weights), h_alpha)
    return log_v + log_b + 0.5 * (h_alpha - h_max)


def _oracle_best_bound(q, tau):
    """Best refined bound over the symmetric family: coarse grid + refinement."""
    lv = _cw_t1_log_values(q, tau)
    lo, hi = 0.0, 1 / 3
    best_a, best_v = lo, -math.inf
    for _ in range(5):
        grid = np.linspace(lo, hi, 41)
        for a in grid:
            v = _oracle_refined_at(q, tau, float(a), lv)
            if v > best_v:
                best_v, best_a = v, float(a)
        step = (hi - lo) / 40
        lo = max(0.0, best_a - 2 * step)
        hi = min(1 / 3, best_a + 2 * step)
    return best_v


def test_criterion_2_first_power_with_grid_oracle():
    t0 = time.monotonic()
    result, _ = omega_bound(6, 1, config=FAST)
    elapsed = time.monotonic() - t0
    assert elapsed < 10.0
    assert abs(result.omega - 2.3872) < 2e-3
    assert result.certified

    # Independent confirmation: bisect tau against the symmetric-family
    # oracle and compare the resulting omega bound.
    threshold = math.log(8)
    lo, hi = 2 / 3, 1.0
    assert _oracle_best_bound(6, hi) >= threshold
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if _oracle_best_bound(6, mid) >= threshold:
            hi = mid
        else:
            lo = mid
    omega_oracle = 3 * hi
    assert abs(result.omega - omega_oracle) < 1e-4


def _rebuild_inner_values(table, key):
    from laserlab.laser_engine import class_is_realizable
    from laserlab.tensor_core import ClassKey, split_subtensor

    q, half = table.q, key.t // 2
    inner = {}
    for child, comp in split_subtensor(key):
        if class_is_realizable(q, half, *child) and class_is_realizable(q, half, *comp):
            v1 = table.entries[ClassKey.make(q, half, *child)].log_value
            v2 = table.entries[ClassKey.make(q, half, *comp)].log_value
            inner[child] = v1 + v2
    return inner


def test_criterion_3_second_power_kkt():
    t0 = time.monotonic()
    result, table = omega_bound(6, 2, config=FAST)
    elapsed = time.monotonic() - t0
    assert elapsed < 120.0
    assert abs(result.omega - 2.3755) < 1e-3
    assert result.certified

    # Re-solve both optimization problems on every recursion class (and
    # the top class) and demand KKT residuals at the target.
    checked = 0
    for key, entry in table.entries.items():
        if entry.method != "recursion" or entry.gamma is None:
            continue
        inner = _rebuild_inner_values(table, key)
        marg = marginals(entry.gamma)
        p1 = solve_problem1(sorted(inner), inner, table.tau, marg)
        p2 = max_entropy_with_marginals(sorted(inner), marg)
        assert p1.kkt_residual <= 1e-9, (key, p1.kkt_residual)
        assert p2.kkt_residual <= 1e-9, (key, p2.kkt_residual)
        checked += 1
    assert checked >= 1
    top = table.top
    assert top.gamma is not None
    lv = {t: table.entries[_key_for(table, t)].log_value for t in _top_support(table)}
    marg = marginals(top.gamma)
    p1 = solve_problem1(sorted(lv), lv, table.tau, marg)
    p2 = max_entropy_with_marginals(sorted(lv), marg)
    assert p1.kkt_residual <= 1e-9
    assert p2.kkt_residual <= 1e-9


def _top_support(table):
    from laserlab.tensor_core import grade_power

    return sorted(grade_power(table.q, table.t).support)


def _key_for(table, trip):
    from laserlab.tensor_core import ClassKey

    return ClassKey.make(table.q, table.t, *trip)


def test_criterion_4_fourth_power_two_seeds():
    t0 = time.monotonic()
    r1, _ = omega_bound(5, 4, config=EngineConfig(seed=0, heuristics_small=(2, 4),
                                                  heuristic_iter_cap=5000))
    r2, _ = omega_bound(5, 4, config=EngineConfig(seed=12345, heuristics_small=(2, 4),
                                                  heuristic_iter_cap=5000))
    elapsed = time.monotonic() - t0
    assert elapsed < 1800.0
    for r in (r1, r2):
        assert abs(r.omega - 2.3730) < 5e-4
        assert r.certified
    assert abs(r1.omega - r2.omega) < 1e-5


def test_criterion_5a_refined_ge_classic_fuzz():
    rng = np.random.default_rng(0)
    labels = range(4)
    violations = 0
    for _ in range(100_000):
        k = int(rng.integers(1, 7))
        support = set()
        while len(support) < k:
            support.add(tuple(int(v) for v in rng.integers(0, 4, size=3)))
        support = sorted(support)
        lv = {t: float(rng.normal()) for t in support}
        alpha = SupportDistribution(dict(zip(support, rng.dirichlet(np.ones(k)))))
        h = entropy(alpha.weights.values())
        max_bn = h + float(rng.exponential(0.5))
        r = refined_bound(support, lv, alpha, max_bn)
        c = classic_bound(support, lv, alpha, max_bn)
        if r < c - 1e-15:
            violations += 1
    assert violations == 0


def test_criterion_5b_supermultiplicativity():
    tau = 0.79
    tops = {t: analyze_cw(6, t, tau, config=FAST).top.log_value for t in (1, 2, 4)}
    assert tops[2] >= 2 * tops[1] - 1e-6
    assert tops[4] >= 2 * tops[2] - 1e-6


def test_criterion_5c_tau_monotonicity():
    values = [analyze_cw(6, 1, tau, config=FAST).top.log_value
              for tau in np.linspace(2 / 3, 1.0, 50)]
    for lo, hi in zip(values, values[1:]):
        assert hi >= lo - 1e-9


def test_criterion_6_toy_separation():
    even = ((0, 1, 2), (1, 2, 0), (2, 0, 1))
    alpha = SupportDistribution.uniform(even)
    lv = {t: 0.0 for t in TOY}
    # Brute Problem-2 oracle for the maximum entropy over D_alpha.
    weights = [alpha.weights.get(t, 0.0) for t in TOY]
    h_max = _brute_max_entropy(TOY, weights)
    assert abs(h_max - math.log(6)) < 1e-9
    refined = refined_bound(TOY, lv, alpha, h_max)
    classic = classic_bound(TOY, lv, alpha, h_max)
    assert abs(math.exp(refined) - 3 / math.sqrt(2)) < 1e-9
    assert abs(math.exp(classic) - 1.5) < 1e-9


def test_criterion_7_product_form_and_kernel_grid():
    rng = np.random.default_rng(42)
    kernel_checked = 0
    for _ in range(100):
        k = int(rng.integers(3, 13))
        support = set()
        while len(support) < k:
            support.add(tuple(int(v) for v in rng.integers(0, 3, size=3)))
        support = sorted(support)
        alpha = SupportDistribution(dict(zip(support, rng.dirichlet(np.ones(k)))))
        res = max_entropy_with_marginals(support, marginals(alpha))
        assert res.converged

        # Fit side factors by least squares in log domain and check the
        # optimum actually has product form, entrywise to 1e-7.
        pos = [(t, res.distribution[t]) for t in support if res.distribution[t] > 1e-11]
        xl = sorted({t[0] for t, _ in pos})
        yl = sorted({t[1] for t, _ in pos})
        zl = sorted({t[2] for t, _ in pos})
        cols = {("x", l): i for i, l in enumerate(xl)}
        cols.update({("y", l): len(xl) + i for i, l in enumerate(yl)})
        cols.update({("z", l): len(xl) + len(yl) + i for i, l in enumerate(zl)})
        a = np.zeros((len(pos), len(cols)))
        b = np.zeros(len(pos))
        for row, ((i, j, kk), p) in enumerate(pos):
            a[row, cols[("x", i)]] = 1.0
            a[row, cols[("y", j)]] = 1.0
            a[row, cols[("z", kk)]] = 1.0
            b[row] = math.log(p)
        sol, *_ = np.linalg.lstsq(a, b, rcond=None)
        recon = a @ sol
        for (trip, p), lr in zip(pos, recon):
            assert abs(p - math.exp(lr)) < 1e-7, (trip, p, math.exp(lr))

        if kernel_basis(support).shape[0] <= 2:
            brute = _brute_max_entropy(support, [alpha.weights.get(t, 0.0) for t in support])
            assert res.objective >= brute - 1e-6
            assert abs(res.objective - brute) < 1e-6
            kernel_checked += 1
    assert kernel_checked >= 10


def test_criterion_8_zero_out_statistics():
    t0 = time.monotonic()
    n, m, seeds = 300, 4, 200
    rng = np.random.default_rng(8)
    sizes = []
    for s in range(seeds):
        triples = set()
        while len(triples) < m * n:
            cand = rng.choice(n, size=3, replace=False)
            triples.add(tuple(int(v) for v in cand))
        bs = cs.BlockSupport(n, frozenset(triples))
        res = cs.random_zero_out(bs, trials=1, seed=1000 + s)  # validity scan inside
        sizes.append(len(res.kept))
    elapsed = time.monotonic() - t0
    assert elapsed < 60.0
    mean = statistics.mean(sizes)
    se = statistics.stdev(sizes) / math.sqrt(seeds)
    guarantee = 2 * n / (3 * math.sqrt(3 * m))
    assert abs(guarantee - 57.735) < 1e-2
    assert mean >= guarantee - 3 * se, (mean, se)


def test_criterion_9_salem_spencer():
    for M in list(range(1, 501)) + [1000, 10_000]:
        A = cs.behrend_set(M)
        assert A.is_valid(), M
        if M >= 100:
            assert A.size >= M ** 0.6, (M, A.size)
    for M in range(1, 61):
        opt = cs.max_progression_free_size(M)
        assert cs.behrend_set(M).size >= opt / 2, (M, opt)


def test_criterion_10_pipeline_statistics():
    t0 = time.monotonic()
    seeds = 500
    c1s, c3s = [], []
    st = None
    for s in range(seeds):
        st = cs.simulate_laser_pipeline(2, 12, seed=s)
        assert st.hash_linearity_ok, s
        assert st.block_disjoint_ok, s
        c1s.append(st.C1)
        c3s.append(st.C3)
    elapsed = time.monotonic() - t0
    assert elapsed < 300.0
    e_c1 = st.A_size * st.N_alpha / st.M ** 2
    e_c3 = st.A_size * st.N_T / st.M ** 2
    for vals, expect in ((c1s, e_c1), (c3s, e_c3)):
        mean = statistics.mean(vals)
        se = statistics.stdev(vals) / math.sqrt(seeds)
        assert abs(mean - expect) <= 3 * se, (mean, expect, se)


def test_criterion_11_round_to_grid_and_drift():
    rng = np.random.default_rng(11)
    for _ in range(10_000):
        k = int(rng.integers(1, 9))
        support = set()
        while len(support) < k:
            support.add(tuple(int(v) for v in rng.integers(0, 4, size=3)))
        support = sorted(support)
        alpha = SupportDistribution(dict(zip(support, rng.dirichlet(np.ones(k)))))
        n = int(rng.integers(k, 1000))
        r = round_to_grid(alpha, n)
        total = 0
        for t in support:
            scaled = r[t] * n
            assert abs(scaled - round(scaled)) < 1e-6
            total += round(scaled)
            assert abs(r[t] - alpha[t]) <= 1 / n + 1e-12
        assert total == n
        lv = {t: float(rng.normal()) for t in support}
        rep = ratio_drift_check(alpha, r, lv, 0.8, n)
        assert rep.within_threshold, rep


def test_criterion_12_determinism_and_cache_verify(tmp_path):
    env = dict(os.environ, LASERLAB_CACHE_DIR=str(tmp_path))
    cmd = [sys.executable, "-m", "laserlab.cli", "omega", "--q", "6", "--t", "1",
           "--format", "json"]
    out1 = subprocess.run(cmd, env=env, capture_output=True, check=True).stdout
    cache1 = (tmp_path / "omega_q6_t1.json").read_bytes()
    out2 = subprocess.run(cmd, env=env, capture_output=True, check=True).stdout
    cache2 = (tmp_path / "omega_q6_t1.json").read_bytes()
    assert out1 == out2
    assert cache1 == cache2
    payload = json.loads(out1)
    assert payload["certified"] is True
    verify = subprocess.run(
        [sys.executable, "-m", "laserlab.cli", "cache", "verify"],
        env=env, capture_output=True,
    )
    assert verify.returncode == 0, verify.stdout + verify.stderr
