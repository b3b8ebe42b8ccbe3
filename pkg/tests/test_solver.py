import itertools
import math

import numpy as np
import pytest

from laserlab.distributions import Marginals, SupportDistribution, entropy, marginals
from laserlab.solver import (
    InfeasibleMarginalsError,
    entropy_dual_bound,
    evaluate_gamma,
    full_pipeline_gamma,
    grid_scan_problem1,
    heuristic_gamma,
    kernel_basis,
    max_entropy_with_marginals,
    solve_problem1,
)

TOY = tuple(sorted(itertools.permutations((0, 1, 2))))
TOY_UNIFORM_MARG = marginals(SupportDistribution.uniform(TOY))


def test_problem2_toy_uniform():
    res = max_entropy_with_marginals(TOY, TOY_UNIFORM_MARG)
    assert res.converged
    assert math.isclose(res.objective, math.log(6), rel_tol=1e-12)
    for t in TOY:
        assert math.isclose(res.distribution[t], 1 / 6, rel_tol=1e-9)


def test_problem2_product_form():
    rng = np.random.default_rng(3)
    support = TOY
    alpha = SupportDistribution(dict(zip(support, rng.dirichlet(np.ones(6)))))
    res = max_entropy_with_marginals(support, marginals(alpha))
    mx, my, mz = res.multipliers
    for (i, j, k) in support:
        p = res.distribution[(i, j, k)]
        if p > 1e-12:
            assert math.isclose(p, math.exp(mx[i] + my[j] + mz[k]), rel_tol=1e-7)


def test_problem2_point_mass_marginals():
    pm = SupportDistribution.point_mass((0, 1, 2))
    res = max_entropy_with_marginals(TOY, marginals(pm))
    assert math.isclose(res.objective, 0.0, abs_tol=1e-10)
    assert math.isclose(res.distribution[(0, 1, 2)], 1.0, rel_tol=1e-10)


def test_infeasible_marginals_raise():
    bad = Marginals({0: 1.0}, {0: 1.0}, {0: 0.5, 5: 0.5})
    with pytest.raises((InfeasibleMarginalsError, KeyError)):
        max_entropy_with_marginals(TOY, bad)


def test_dual_bound_tight_at_optimum():
    res = max_entropy_with_marginals(TOY, TOY_UNIFORM_MARG)
    dual = entropy_dual_bound(TOY, TOY_UNIFORM_MARG, res.multipliers)
    assert dual >= res.objective - 1e-12
    assert math.isclose(dual, res.objective, abs_tol=1e-9)


def test_dual_bound_sound_for_arbitrary_multipliers():
    rng = np.random.default_rng(11)
    for _ in range(200):
        alpha = SupportDistribution(dict(zip(TOY, rng.dirichlet(np.ones(6) * 0.7))))
        marg = marginals(alpha)
        mults = tuple(
            {lab: float(rng.normal(scale=2.0)) for lab in side}
            for side in (marg.x_marg, marg.y_marg, marg.z_marg)
        )
        dual = entropy_dual_bound(TOY, marg, mults)
        # Any feasible distribution's entropy is below the dual value;
        # alpha itself is feasible.
        assert dual >= entropy(alpha.weights.values()) - 1e-12


def test_problem1_matches_grid_oracle_on_toy():
    rng = np.random.default_rng(7)
    lv = {t: float(rng.normal(scale=0.5)) for t in TOY}
    alpha = SupportDistribution(dict(zip(TOY, rng.dirichlet(np.ones(6)))))
    res = solve_problem1(TOY, lv, 0.8, marginals(alpha))
    assert res.converged
    oracle, _ = grid_scan_problem1(TOY, lv, res.distribution, steps=4001, span=0.5)
    assert res.objective >= oracle - 1e-9
    assert math.isclose(res.objective, oracle, abs_tol=1e-7)


def test_kernel_dimension_on_toy():
    assert kernel_basis(TOY).shape[0] == 1


@pytest.mark.parametrize("kind", [1, 2, 3, 4])
def test_heuristics_return_feasible_gamma(kind):
    rng = np.random.default_rng(1)
    lv = {t: float(rng.normal(scale=0.3)) for t in TOY}
    lam = 10.0 if kind == 3 else None
    res = heuristic_gamma(kind, TOY, lv, 0.8, lam=lam, seed=4, n_starts=4, max_iter=3000)
    w = [res.distribution[t] for t in TOY]
    assert math.isclose(sum(w), 1.0, abs_tol=1e-9)
    assert all(p >= -1e-15 for p in w)
    assert res.kkt_residual >= 0.0


def test_h2_converges_on_toy():
    lv = {t: 0.0 for t in TOY}
    res = heuristic_gamma(2, TOY, lv, 0.8, seed=0)
    assert res.kkt_residual <= 1e-9


def test_evaluate_gamma_uniform_toy():
    lv = {t: 0.0 for t in TOY}
    cand = evaluate_gamma(TOY, lv, 0.8, SupportDistribution.uniform(TOY), "uniform")
    # Problem 1 keeps alpha uniform (alpha_N = 6), the dual confirms
    # max beta_N = 6, so the penalty vanishes and the bound is alpha_B = 3.
    assert math.isclose(cand.bound_log, math.log(3), abs_tol=1e-9)


def test_full_pipeline_includes_point_mass_and_orders():
    rng = np.random.default_rng(2)
    lv = {t: float(rng.normal(scale=0.2)) for t in TOY}
    out = full_pipeline_gamma(TOY, lv, 0.8, heuristics=(2, 4), seed=1, max_iter=2000)
    names = {c.heuristic for c in out.candidates}
    assert "point-mass" in names
    point = next(c for c in out.candidates if c.heuristic == "point-mass")
    assert out.best.bound_log >= point.bound_log - 1e-12
    # The point-mass bound is the best single log-value (zeroing out).
    assert math.isclose(point.bound_log, max(lv.values()), abs_tol=1e-9)
